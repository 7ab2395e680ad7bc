"""Per-primitive linear energy regressors for the ML-level leaves.

Each primitive type gets its own weight vector and bias, fitted by
closed-form least squares on z-scored features (minimum-norm solve, so
rank-deficient designs are handled). Prediction for an unseen primitive
is an error unless the pooled fallback regressor was requested.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .featurization import FeatureSubset, Normalizer, feature_matrix, fit_normalizer
from .model_tree import ModelTree, Node, NodeKind


class UnknownPrimitiveError(ValueError):
    """A leaf's primitive has no trained regressor and no fallback is enabled."""


@dataclass(frozen=True)
class PrimitiveRegressor:
    weights: np.ndarray
    bias: float
    normalizer: Normalizer

    def predict(self, node: Node) -> float:
        return float(self.weights @ self.normalizer.apply(node.features) + self.bias)

    def to_dict(self) -> dict:
        return {
            "weights": [float(x) for x in self.weights],
            "bias": float(self.bias),
            "normalizer": self.normalizer.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "PrimitiveRegressor":
        return PrimitiveRegressor(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            normalizer=Normalizer.from_dict(d["normalizer"]),
        )


@dataclass
class PrimitiveRegressorSet:
    subset: FeatureSubset
    regressors: dict[str, PrimitiveRegressor]
    fallback: PrimitiveRegressor | None = None

    @property
    def primitives(self) -> list[str]:
        return list(self.regressors)

    def to_dict(self) -> dict:
        return {
            "subset": self.subset.value,
            "primitives": {p: r.to_dict() for p, r in sorted(self.regressors.items())},
            "fallback": self.fallback.to_dict() if self.fallback else None,
        }

    @staticmethod
    def from_dict(d: dict) -> "PrimitiveRegressorSet":
        return PrimitiveRegressorSet(
            subset=FeatureSubset(d["subset"]),
            regressors={p: PrimitiveRegressor.from_dict(r) for p, r in d["primitives"].items()},
            fallback=PrimitiveRegressor.from_dict(d["fallback"]) if d.get("fallback") else None,
        )

    def save(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @staticmethod
    def load(path: str | Path) -> "PrimitiveRegressorSet":
        with open(path, "r", encoding="utf-8") as f:
            return PrimitiveRegressorSet.from_dict(json.load(f))


def _fit_one(leaves: Sequence[Node], subset: FeatureSubset) -> PrimitiveRegressor:
    norm = fit_normalizer(leaves, subset)
    x = norm.apply_matrix(feature_matrix(leaves, subset))
    y = np.array([n.ground_truth_energy for n in leaves], dtype=np.float64)
    design = np.hstack([x, np.ones((len(leaves), 1))])
    theta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return PrimitiveRegressor(weights=theta[:-1], bias=float(theta[-1]), normalizer=norm)


def train_leaf_regressors(
    training_trees: Sequence[ModelTree],
    subset: FeatureSubset = FeatureSubset.ALL,
    fallback_generic: bool = False,
) -> PrimitiveRegressorSet:
    """Fit one least-squares regressor per primitive over all training leaves.

    Every leaf must carry ground-truth energy. With ``fallback_generic``,
    an extra regressor pooled over all leaves is fitted for primitives
    unseen at prediction time.
    """
    by_primitive: dict[str, list[Node]] = {}
    all_leaves: list[Node] = []
    for tree in training_trees:
        for node in tree.root.walk():
            if node.kind is not NodeKind.ML:
                continue
            if node.ground_truth_energy is None:
                raise ValueError(f"training leaf '{node.name}' has no ground_truth_energy")
            by_primitive.setdefault(node.primitive, []).append(node)
            all_leaves.append(node)
    if not all_leaves:
        raise ValueError("training trees contain no leaves")

    regressors = {p: _fit_one(nodes, subset) for p, nodes in by_primitive.items()}
    fallback = _fit_one(all_leaves, subset) if fallback_generic else None
    return PrimitiveRegressorSet(subset=subset, regressors=regressors, fallback=fallback)


def predict_leaf(regs: PrimitiveRegressorSet, node: Node, floor: float | None = None) -> float:
    """Predicted joules for one ML leaf.

    Negative predictions are reported as-is by default; a ``floor`` clamps
    them, at the cost of masking fit problems.
    """
    if node.kind is not NodeKind.ML:
        raise ValueError(f"'{node.name}' is not an ml leaf")
    reg = regs.regressors.get(node.primitive)
    if reg is None:
        if regs.fallback is not None:
            reg = regs.fallback
        else:
            raise UnknownPrimitiveError(
                f"no regressor for primitive '{node.primitive}' (node '{node.name}'); "
                f"train with fallback_generic to allow unseen primitives")
    value = reg.predict(node)
    if floor is not None and value < floor:
        return floor
    return value


def predict_leaves(regs: PrimitiveRegressorSet, tree: ModelTree,
                   floor: float | None = None) -> dict[str, float]:
    """Leaf-prediction map for one tree, keyed by node name."""
    return {n.name: predict_leaf(regs, n, floor) for n in tree.root.walk() if n.is_leaf}
