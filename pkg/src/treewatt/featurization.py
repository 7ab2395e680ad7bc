"""Feature vector definition, model/resource feature split, and z-score normalization.

Every tree node carries the same 12 features: four hardware-independent
model features (batch size, sequence length, FLOPs, memory traffic) and
eight runtime resource features (utilizations, clocks, latency, driver
energy). Regressors index weights by the canonical order defined here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

MODEL_FEATURES: tuple[str, ...] = ("batch_size", "seq_len", "flops", "mem_bytes")
RESOURCE_FEATURES: tuple[str, ...] = (
    "cpu_util",
    "mem_usg",
    "gpu_util",
    "gm_usg",
    "g_clk",
    "gm_clk",
    "latency",
    "gpu_energy",
)
FEATURE_NAMES: tuple[str, ...] = MODEL_FEATURES + RESOURCE_FEATURES

_PERCENT_FEATURES = ("cpu_util", "mem_usg", "gpu_util", "gm_usg")
_NONNEG_FEATURES = ("flops", "mem_bytes", "g_clk", "gm_clk", "latency", "gpu_energy")


class FeatureSubset(str, Enum):
    """Which slice of the feature vector a regressor sees."""

    ALL = "all"
    MODEL_ONLY = "model_only"
    RESOURCE_ONLY = "resource_only"

    @property
    def names(self) -> tuple[str, ...]:
        if self is FeatureSubset.MODEL_ONLY:
            return MODEL_FEATURES
        if self is FeatureSubset.RESOURCE_ONLY:
            return RESOURCE_FEATURES
        return FEATURE_NAMES

    @property
    def dim(self) -> int:
        return len(self.names)


@dataclass(frozen=True)
class FeatureVector:
    """One node's features, in physical units (counts, %, MHz, s, J)."""

    batch_size: float
    seq_len: float
    flops: float
    mem_bytes: float
    cpu_util: float
    mem_usg: float
    gpu_util: float
    gm_usg: float
    g_clk: float
    gm_clk: float
    latency: float
    gpu_energy: float

    def as_array(self, subset: FeatureSubset = FeatureSubset.ALL) -> np.ndarray:
        return np.array([getattr(self, name) for name in subset.names], dtype=np.float64)

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in FEATURE_NAMES}

    def violations(self, label: str = "features") -> list[str]:
        """Range checks; returns one message per violated constraint."""
        out = []
        for name in FEATURE_NAMES:
            v = getattr(self, name)
            if not math.isfinite(v):
                out.append(f"{label}: {name} is not finite ({v!r})")
        for name in ("batch_size", "seq_len"):
            v = getattr(self, name)
            if math.isfinite(v) and v < 1:
                out.append(f"{label}: {name} must be >= 1 (got {v})")
        for name in _PERCENT_FEATURES:
            v = getattr(self, name)
            if math.isfinite(v) and not (0.0 <= v <= 100.0):
                out.append(f"{label}: {name} must be in [0, 100] (got {v})")
        for name in _NONNEG_FEATURES:
            v = getattr(self, name)
            if math.isfinite(v) and v < 0:
                out.append(f"{label}: {name} must be >= 0 (got {v})")
        return out


@dataclass(frozen=True)
class Normalizer:
    """Per-feature mean/std learned on a training node set.

    Stored stds are strictly positive: zero-variance features store std 1
    so their normalized value is a constant 0 instead of a division blowup.
    """

    mean: np.ndarray
    std: np.ndarray
    subset: FeatureSubset

    def apply(self, features: FeatureVector) -> np.ndarray:
        return (features.as_array(self.subset) - self.mean) / self.std

    def apply_matrix(self, raw: np.ndarray) -> np.ndarray:
        return (raw - self.mean) / self.std

    def to_dict(self) -> dict:
        return {
            "subset": self.subset.value,
            "mean": [float(x) for x in self.mean],
            "std": [float(x) for x in self.std],
        }

    @staticmethod
    def from_dict(d: dict) -> "Normalizer":
        return Normalizer(
            mean=np.asarray(d["mean"], dtype=np.float64),
            std=np.asarray(d["std"], dtype=np.float64),
            subset=FeatureSubset(d["subset"]),
        )


def feature_matrix(nodes: Iterable, subset: FeatureSubset = FeatureSubset.ALL) -> np.ndarray:
    """Stack node features into an (n, d) float64 matrix in canonical order."""
    rows = [n.features.as_array(subset) for n in nodes]
    if not rows:
        return np.zeros((0, subset.dim), dtype=np.float64)
    return np.stack(rows)


def fit_normalizer(training_nodes: Sequence, subset: FeatureSubset = FeatureSubset.ALL) -> Normalizer:
    """Learn per-feature mean and population standard deviation.

    Population std keeps n=1 well defined; constant features get std 1.
    """
    if len(training_nodes) == 0:
        raise ValueError("cannot fit a normalizer on an empty node list")
    raw = feature_matrix(training_nodes, subset)
    mean = raw.mean(axis=0)
    std = raw.std(axis=0)  # population, ddof=0
    std = np.where(std == 0.0, 1.0, std)
    return Normalizer(mean=mean, std=std, subset=subset)


def apply_normalizer(norm: Normalizer, node) -> np.ndarray:
    """Normalized feature vector of a node, ordered per the fitted subset."""
    return norm.apply(node.features)
