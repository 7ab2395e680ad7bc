"""Downstream analyses: bottleneck breakdowns, power-log integration,
cost-per-query estimates, and energy/accuracy trade-off selection."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

from .model_tree import ModelTree, Node


@dataclass(frozen=True)
class PowerSample:
    timestamp: float  # seconds
    voltage: float    # volts
    current: float    # amperes


@dataclass(frozen=True)
class TradeoffCandidate:
    model_name: str
    accuracy: float
    predicted_energy: float
    ground_truth_energy: float | None = None

    def __post_init__(self):
        if not self.predicted_energy > 0:
            raise ValueError(f"{self.model_name}: energy must be > 0")


# ---------------------------------------------------------------------------
# Bottlenecks


def _leaf_parent_groups(tree: ModelTree) -> dict[str, list[Node]]:
    """Internal nodes all of whose children are leaves, grouped by type."""
    groups: dict[str, list[Node]] = {}
    for node in tree.root.walk():
        if node.is_leaf or not all(c.is_leaf for c in node.children):
            continue
        groups.setdefault(node.type_name, []).append(node)
    return groups


def bottleneck_breakdown(
    trees: ModelTree | Sequence[ModelTree],
    predictions: Mapping[str, float] | Sequence[Mapping[str, float]],
    renormalize: bool = False,
) -> dict[str, float]:
    """Share of model energy per module type, over the modules that directly
    parent ML leaves. With several trees (input sizes), per-type percentages
    are averaged across trees. Raw shares need not sum to 100 because parent
    calibration can move the root away from the plain sum; ``renormalize``
    rescales the shares to sum to 100.
    """
    if isinstance(trees, ModelTree):
        trees = [trees]
        predictions = [predictions]  # type: ignore[list-item]
    if len(trees) != len(predictions):
        raise ValueError("need one prediction map per tree")

    sums: dict[str, float] = {}
    counts: dict[str, int] = {}
    for tree, preds in zip(trees, predictions):
        missing = [n.name for n in tree.root.walk() if n.name not in preds]
        if missing:
            raise ValueError(f"predictions missing for nodes: {missing}")
        root_energy = float(preds[tree.root.name])
        for type_name, nodes in _leaf_parent_groups(tree).items():
            share = 100.0 * sum(float(preds[n.name]) for n in nodes) / root_energy
            sums[type_name] = sums.get(type_name, 0.0) + share
            counts[type_name] = counts.get(type_name, 0) + 1

    out = {t: sums[t] / counts[t] for t in sums}
    if renormalize:
        total = sum(out.values())
        if total > 0:
            out = {t: 100.0 * v / total for t, v in out.items()}
    return dict(sorted(out.items(), key=lambda kv: -kv[1]))


# ---------------------------------------------------------------------------
# Power integration


def integrate_power(samples: Sequence[PowerSample], interval: float = 0.17) -> float:
    """Joules from a fixed-rate power log: sum of V*I per sample times the
    sampling interval (the interval supplies the time dimension)."""
    if interval <= 0:
        raise ValueError(f"sampling interval must be > 0 (got {interval})")
    total = 0.0
    for s in samples:
        if s.voltage < 0 or s.current < 0:
            raise ValueError(f"negative reading at t={s.timestamp}")
        total += s.voltage * s.current
    return total * interval


def load_power_log(path: str | Path) -> list[PowerSample]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        need = ("timestamp_s", "voltage_v", "current_a")
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: power log is missing columns {missing}")
        samples = [PowerSample(timestamp=float(r["timestamp_s"]),
                               voltage=float(r["voltage_v"]),
                               current=float(r["current_a"])) for r in reader]
    for a, b in zip(samples, samples[1:]):
        if b.timestamp < a.timestamp:
            raise ValueError(f"{path}: timestamps must be non-decreasing")
    return samples


# ---------------------------------------------------------------------------
# Cost


def cost_of_queries(energy_per_query: float, n_queries: float,
                    usd_per_kwh: float) -> tuple[float, float]:
    """(kWh, USD) for serving n queries at the given joules per query."""
    if energy_per_query < 0 or n_queries < 0 or usd_per_kwh < 0:
        raise ValueError("energy, query count and rate must all be >= 0")
    kwh = energy_per_query * n_queries / 3.6e6
    return kwh, kwh * usd_per_kwh


# ---------------------------------------------------------------------------
# Trade-offs


def tradeoff_select(candidates: Sequence[TradeoffCandidate],
                    energy_budget: float) -> TradeoffCandidate:
    """Highest-accuracy candidate within the budget; ties break toward lower
    energy, then lexicographic model name."""
    if not candidates:
        raise ValueError("no candidates given")
    feasible = [c for c in candidates if c.predicted_energy <= energy_budget]
    if not feasible:
        raise ValueError(f"no candidate within energy budget {energy_budget} J")
    return min(feasible, key=lambda c: (-c.accuracy, c.predicted_energy, c.model_name))


def pareto_front(candidates: Sequence[TradeoffCandidate]) -> list[TradeoffCandidate]:
    """Candidates not dominated by any other (dominated: another candidate
    with <= energy and strictly higher accuracy). Sorted by energy."""
    front = [
        c for c in candidates
        if not any(o.predicted_energy <= c.predicted_energy and o.accuracy > c.accuracy
                   for o in candidates)
    ]
    return sorted(front, key=lambda c: (c.predicted_energy, -c.accuracy, c.model_name))


def load_candidates(path: str | Path) -> list[TradeoffCandidate]:
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        need = ("model_name", "accuracy", "predicted_energy_j")
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: candidates file is missing columns {missing}")
        out = []
        for r in reader:
            gt = r.get("ground_truth_energy_j")
            out.append(TradeoffCandidate(
                model_name=r["model_name"],
                accuracy=float(r["accuracy"]),
                predicted_energy=float(r["predicted_energy_j"]),
                ground_truth_energy=float(gt) if gt not in (None, "") else None,
            ))
    return out
