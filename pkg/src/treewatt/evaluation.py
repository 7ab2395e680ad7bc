"""Error metric, leave-one-model-out evaluation, per-level aggregation,
error CDFs, and the feature/regressor ablation studies.

Level conventions: ``ml`` = leaves, ``module`` = internal non-root nodes,
``model`` = roots. A model's level error is the unweighted mean over all
its test nodes at that level (across its input sizes); pooled numbers are
reported both as the mean over models and the mean over all nodes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .baseline import BaselineConfig, TraceSample, utilization_energy
from .featurization import FeatureSubset
from .leaf_regressors import train_leaf_regressors, predict_leaves
from .model_tree import ModelTree, tree_key
from .tree_regressors import (
    TrainingConfig,
    end2end_predict,
    predict_sum,
    train_end2end,
    train_stepwise,
    train_unstructured,
    unstructured_predict,
)

REGRESSOR_KINDS = ("end2end", "stepwise", "predicted_sum", "unstructured", "baseline")
LEVELS = ("ml", "module", "model")


def error_pct(predicted: float, ground_truth: float) -> float:
    """Energy error percentage: 100 * |predicted - truth| / truth."""
    if not ground_truth > 0:
        raise ValueError(f"ground truth must be > 0 (got {ground_truth})")
    return 100.0 * abs(predicted - ground_truth) / ground_truth


def error_cdf(errors: Sequence[float]) -> list[tuple[float, float]]:
    """Empirical CDF points (error, cumulative fraction), deduplicated so
    each distinct error appears once with its final fraction."""
    if len(errors) == 0:
        raise ValueError("cannot build a CDF from an empty error list")
    ordered = sorted(errors)
    n = len(ordered)
    points: list[tuple[float, float]] = []
    for i, e in enumerate(ordered):
        frac = (i + 1) / n
        if points and points[-1][0] == e:
            points[-1] = (e, frac)
        else:
            points.append((e, frac))
    return points


@dataclass(frozen=True)
class Fold:
    model_name: str
    train: tuple[ModelTree, ...]
    test: tuple[ModelTree, ...]


def loo_splits(dataset: Sequence[ModelTree]) -> list[Fold]:
    """One fold per model name; the held-out model's trees (all input sizes)
    appear only in that fold's test set. Order follows first appearance."""
    names: list[str] = []
    for t in dataset:
        if t.model_name not in names:
            names.append(t.model_name)
    if len(names) < 2:
        raise ValueError(
            f"leave-one-model-out needs >= 2 distinct model names (got {names})")
    folds = []
    for name in names:
        train = tuple(t for t in dataset if t.model_name != name)
        test = tuple(t for t in dataset if t.model_name == name)
        folds.append(Fold(model_name=name, train=train, test=test))
    return folds


@dataclass(frozen=True)
class NodeRecord:
    model_name: str
    tree: str
    node_name: str
    level: str
    predicted: float
    ground_truth: float
    error_pct: float


@dataclass
class EvalReport:
    regressor_kind: str
    subset: FeatureSubset
    per_model: dict[str, dict[str, float]]
    pooled_by_model: dict[str, float]
    pooled_by_node: dict[str, float]
    records: list[NodeRecord]
    cdf: dict[str, list[tuple[float, float]]]
    fingerprint: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "regressor_kind": self.regressor_kind,
            "subset": self.subset.value,
            "per_model": self.per_model,
            "pooled_by_model": self.pooled_by_model,
            "pooled_by_node": self.pooled_by_node,
            "n_records": len(self.records),
            "cdf": {lev: [[e, f] for e, f in pts] for lev, pts in self.cdf.items()},
            "fingerprint": self.fingerprint,
        }

    def write_records_csv(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["model_name", "tree", "node_name", "level",
                             "predicted_j", "ground_truth_j", "error_pct"])
            for r in self.records:
                writer.writerow([r.model_name, r.tree, r.node_name, r.level,
                                 repr(r.predicted), repr(r.ground_truth), repr(r.error_pct)])

    def write_cdf_csv(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["level", "error_pct", "cumulative_fraction"])
            for lev in LEVELS:
                for e, frac in self.cdf.get(lev, []):
                    writer.writerow([lev, repr(e), repr(frac)])


def _node_level(tree: ModelTree, node) -> str:
    if node is tree.root:
        return "model"
    return "ml" if node.is_leaf else "module"


def _check_labeled(dataset: Sequence[ModelTree]):
    for tree in dataset:
        for node in tree.root.walk():
            if node.ground_truth_energy is None:
                raise ValueError(
                    f"evaluation needs ground truth on every node; "
                    f"'{node.name}' in '{tree_key(tree)}' has none")


def _fold_records(kind: str, fold: Fold, subset: FeatureSubset, cfg: TrainingConfig,
                  traces: Mapping[str, Sequence[TraceSample]] | None,
                  fallback_generic: bool) -> list[NodeRecord]:
    assert fold.model_name not in {t.model_name for t in fold.train}, "LOO leak"

    if kind == "baseline":
        if traces is None:
            raise ValueError("baseline evaluation needs a tree-key -> trace mapping")
        records = []
        for tree in fold.test:
            key = tree_key(tree)
            if key not in traces:
                raise ValueError(f"no resource trace for tree '{key}'")
            pred = utilization_energy(traces[key], BaselineConfig())
            gt = tree.root.ground_truth_energy
            records.append(NodeRecord(tree.model_name, key, tree.root.name, "model",
                                      pred, gt, error_pct(pred, gt)))
        return records

    leaf_regs = train_leaf_regressors(fold.train, subset, fallback_generic=fallback_generic)
    params = None
    if kind == "end2end":
        params = train_end2end(fold.train, leaf_regs, cfg)
    elif kind == "stepwise":
        params = train_stepwise(fold.train, cfg)
    elif kind == "unstructured":
        params = train_unstructured(fold.train, cfg)

    records = []
    for tree in fold.test:
        leaf_preds = predict_leaves(leaf_regs, tree)
        if kind == "predicted_sum":
            preds = predict_sum(tree, leaf_preds)
        elif kind in ("end2end", "stepwise"):
            preds = end2end_predict(params, tree, leaf_preds)
        else:  # unstructured: leaves from their regressors, the rest direct
            preds = dict(leaf_preds)
            for node in tree.root.walk():
                if not node.is_leaf:
                    preds[node.name] = unstructured_predict(params, node)
        key = tree_key(tree)
        for node in tree.root.walk():
            gt = node.ground_truth_energy
            records.append(NodeRecord(tree.model_name, key, node.name,
                                      _node_level(tree, node), preds[node.name],
                                      gt, error_pct(preds[node.name], gt)))
    return records


def run_eval(
    dataset: Sequence[ModelTree],
    regressor_kind: str,
    subset: FeatureSubset = FeatureSubset.ALL,
    hyper: TrainingConfig | None = None,
    traces: Mapping[str, Sequence[TraceSample]] | None = None,
    fallback_generic: bool = False,
) -> EvalReport:
    """Leave-one-model-out evaluation of one regressor kind.

    Trains leaf regressors (plus the requested tree regressor) per fold,
    predicts the held-out model's trees, and aggregates error percentages
    per level. The baseline kind skips training and scores resource traces
    at model level only.
    """
    if regressor_kind not in REGRESSOR_KINDS:
        raise ValueError(f"unknown regressor kind '{regressor_kind}' "
                         f"(expected one of {REGRESSOR_KINDS})")
    _check_labeled(dataset)
    cfg = replace(hyper or TrainingConfig(), subset=subset)

    records: list[NodeRecord] = []
    fold_seeds: dict[str, int] = {}
    for i, fold in enumerate(loo_splits(dataset)):
        fold_cfg = replace(cfg, seed=cfg.seed * 100003 + i)
        fold_seeds[fold.model_name] = fold_cfg.seed
        records.extend(_fold_records(regressor_kind, fold, subset, fold_cfg,
                                     traces, fallback_generic))

    by_key: dict[tuple[str, str], list[float]] = {}
    for r in records:
        by_key.setdefault((r.model_name, r.level), []).append(r.error_pct)
    per_model: dict[str, dict[str, float]] = {}
    for (model, level), errs in by_key.items():
        per_model.setdefault(model, {})[level] = float(np.mean(errs))

    pooled_by_model = {}
    pooled_by_node = {}
    for level in LEVELS:
        model_means = [levels[level] for levels in per_model.values() if level in levels]
        node_errs = [r.error_pct for r in records if r.level == level]
        if model_means:
            pooled_by_model[level] = float(np.mean(model_means))
        if node_errs:
            pooled_by_node[level] = float(np.mean(node_errs))

    cdf = {}
    for level in LEVELS:
        errs = [r.error_pct for r in records if r.level == level]
        if errs:
            cdf[level] = error_cdf(errs)

    fingerprint = {
        "regressor_kind": regressor_kind,
        "subset": subset.value,
        "hyper": cfg.to_dict(),
        "fold_seeds": fold_seeds,
        "fallback_generic": fallback_generic,
        "backend": kernels.BACKEND,
        "n_trees": len(dataset),
        "models": sorted({t.model_name for t in dataset}),
    }
    return EvalReport(regressor_kind=regressor_kind, subset=subset, per_model=per_model,
                      pooled_by_model=pooled_by_model, pooled_by_node=pooled_by_node,
                      records=records, cdf=cdf, fingerprint=fingerprint)


def ablate_features(dataset: Sequence[ModelTree],
                    hyper: TrainingConfig | None = None) -> dict[str, EvalReport]:
    """Three end-to-end evaluations differing only in the feature subset."""
    return {
        subset.value: run_eval(dataset, "end2end", subset, hyper)
        for subset in (FeatureSubset.ALL, FeatureSubset.MODEL_ONLY, FeatureSubset.RESOURCE_ONLY)
    }


def ablate_regressors(dataset: Sequence[ModelTree],
                      hyper: TrainingConfig | None = None,
                      subset: FeatureSubset = FeatureSubset.ALL) -> dict[str, EvalReport]:
    """The four learned/structural aggregation schemes on one dataset."""
    return {
        kind: run_eval(dataset, kind, subset, hyper)
        for kind in ("end2end", "stepwise", "predicted_sum", "unstructured")
    }


def ablation_table(reports: Mapping[str, EvalReport], by: str = "model"
                   ) -> list[dict[str, object]]:
    """Rows of per-level pooled errors, one per ablation arm."""
    rows = []
    for name, report in reports.items():
        pooled = report.pooled_by_model if by == "model" else report.pooled_by_node
        rows.append({"arm": name, **{lev: pooled.get(lev) for lev in LEVELS}})
    return rows
