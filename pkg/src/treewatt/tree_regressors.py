"""Parent-energy aggregation over the model tree.

Four schemes:

* plain sum        -- a parent is the sum of its children's predictions
                      (no parameters);
* end-to-end       -- a single shared regressor scales each child by
                      alpha(c) = 1 + tanh(w.feat(c) + b)/tau before
                      summing, trained by backpropagating a relative
                      squared loss through the whole recursion;
* stepwise         -- same alpha form and loss, but trained per node
                      against the children's ground-truth energies, no
                      recursion at training time;
* unstructured     -- a direct linear fit from non-leaf node features to
                      energy, ignoring the tree.

Prediction for end-to-end and stepwise is the identical recursion; the
variants differ only in how the parameters were fitted.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import kernels
from .featurization import FeatureSubset, Normalizer, feature_matrix, fit_normalizer
from .leaf_regressors import PrimitiveRegressorSet, predict_leaves
from .model_tree import ModelTree, Node
from .packing import pack_forest

PredictionMap = dict[str, float]

DEFAULT_TAU = 10.0


class TrainingError(RuntimeError):
    """Training diverged or its inputs were unusable."""


@dataclass
class TrainingConfig:
    learning_rate: float = 0.001
    epochs: int = 500
    tau: float = DEFAULT_TAU
    seed: int = 0
    subset: FeatureSubset = FeatureSubset.ALL
    # stop when the best loss hasn't improved by tol for `patience` epochs
    tol: float = 1e-8
    patience: int = 20

    def to_dict(self) -> dict:
        return {
            "learning_rate": self.learning_rate,
            "epochs": self.epochs,
            "tau": self.tau,
            "seed": self.seed,
            "subset": self.subset.value,
            "tol": self.tol,
            "patience": self.patience,
        }

    @staticmethod
    def from_dict(d: dict) -> "TrainingConfig":
        d = dict(d)
        d["subset"] = FeatureSubset(d.get("subset", "all"))
        return TrainingConfig(**d)


@dataclass
class TreeRegressorParams:
    """Shared calibration regressor: one weight vector + bias for all
    non-leaf nodes of any type."""

    weights: np.ndarray
    bias: float
    tau: float
    normalizer: Normalizer
    kind: str  # "end2end" | "stepwise"
    hyper: dict = field(default_factory=dict)
    leaf_regs_sha256: str | None = None

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "weights": [float(x) for x in self.weights],
            "bias": float(self.bias),
            "tau": float(self.tau),
            "normalizer": self.normalizer.to_dict(),
            "hyper": self.hyper,
            "leaf_regressors_sha256": self.leaf_regs_sha256,
        }

    @staticmethod
    def from_dict(d: dict) -> "TreeRegressorParams":
        return TreeRegressorParams(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            tau=float(d["tau"]),
            normalizer=Normalizer.from_dict(d["normalizer"]),
            kind=d["kind"],
            hyper=d.get("hyper", {}),
            leaf_regs_sha256=d.get("leaf_regressors_sha256"),
        )

    def save(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @staticmethod
    def load(path: str | Path) -> "TreeRegressorParams":
        with open(path, "r", encoding="utf-8") as f:
            return TreeRegressorParams.from_dict(json.load(f))


@dataclass
class UnstructuredParams:
    """Single linear map from non-leaf node features straight to joules."""

    weights: np.ndarray
    bias: float
    normalizer: Normalizer

    def to_dict(self) -> dict:
        return {
            "kind": "unstructured",
            "weights": [float(x) for x in self.weights],
            "bias": float(self.bias),
            "normalizer": self.normalizer.to_dict(),
        }

    @staticmethod
    def from_dict(d: dict) -> "UnstructuredParams":
        return UnstructuredParams(
            weights=np.asarray(d["weights"], dtype=np.float64),
            bias=float(d["bias"]),
            normalizer=Normalizer.from_dict(d["normalizer"]),
        )


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


# ---------------------------------------------------------------------------
# Prediction


def alpha(params: TreeRegressorParams, child: Node) -> float:
    """Per-child calibration weight, bounded in [1 - 1/tau, 1 + 1/tau]."""
    z = float(params.weights @ params.normalizer.apply(child.features) + params.bias)
    return 1.0 + math.tanh(z) / params.tau


def predict_sum(tree: ModelTree, leaf_preds: Mapping[str, float]) -> PredictionMap:
    """Bottom-up plain sum: each internal node is the sum of its children."""
    pf = pack_forest([tree], None, [leaf_preds])
    pred = kernels.sum_forward(pf.parent, pf.is_leaf, pf.leaf_pred, pf.depth)
    return {name: float(p) for name, p in zip(pf.names, pred)}


def end2end_predict(params: TreeRegressorParams, tree: ModelTree,
                    leaf_preds: Mapping[str, float]) -> PredictionMap:
    """Bottom-up weighted sum with per-child alpha calibration."""
    pf = pack_forest([tree], params.normalizer, [leaf_preds])
    pred, _ = kernels.calibrated_forward(pf.feats, pf.parent, pf.is_leaf, pf.leaf_pred,
                                         params.weights, params.bias, params.tau, pf.depth)
    return {name: float(p) for name, p in zip(pf.names, pred)}


def stepwise_predict(params: TreeRegressorParams, tree: ModelTree,
                     leaf_preds: Mapping[str, float]) -> PredictionMap:
    # identical recursion; the variants differ only in training
    return end2end_predict(params, tree, leaf_preds)


def tree_loss(params: TreeRegressorParams, tree: ModelTree,
              leaf_preds: Mapping[str, float]) -> float:
    """Relative squared error summed over the supervised (non-leaf) nodes."""
    preds = end2end_predict(params, tree, leaf_preds)
    total = 0.0
    for node in tree.root.walk():
        if node.is_leaf:
            continue
        if node.ground_truth_energy is None:
            raise ValueError(f"non-leaf node '{node.name}' has no ground_truth_energy")
        r = (preds[node.name] - node.ground_truth_energy) / node.ground_truth_energy
        total += r * r
    return total


def unstructured_predict(params: UnstructuredParams, node: Node) -> float:
    return float(params.weights @ params.normalizer.apply(node.features) + params.bias)


# ---------------------------------------------------------------------------
# Training


def _require_ground_truth(trees: Sequence[ModelTree], include_leaves: bool):
    for tree in trees:
        for node in tree.root.walk():
            if node.is_leaf and not include_leaves:
                continue
            if node.ground_truth_energy is None:
                raise ValueError(
                    f"training node '{node.name}' in '{tree.model_name}' lacks ground truth")


def _non_root_nodes(trees: Sequence[ModelTree]) -> list[Node]:
    out = []
    for tree in trees:
        for node in tree.root.walk():
            if node is not tree.root:
                out.append(node)
    return out


def _adam(loss_grad, dim: int, cfg: TrainingConfig) -> tuple[np.ndarray, float]:
    """Adam from zero init (the plain-sum point). Deterministic: fixed data
    order, no minibatching."""
    w = np.zeros(dim)
    b = 0.0
    mw = np.zeros(dim)
    vw = np.zeros(dim)
    mb = vb = 0.0
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    best = math.inf
    stale = 0
    for step in range(1, cfg.epochs + 1):
        loss, gw, gb = loss_grad(w, b)
        if not (math.isfinite(loss) and np.all(np.isfinite(gw)) and math.isfinite(gb)):
            raise TrainingError(f"non-finite loss/gradient at epoch {step} (loss={loss!r})")
        if loss < best - cfg.tol:
            best = loss
            stale = 0
        else:
            stale += 1
            if stale >= cfg.patience:
                break
        mw = beta1 * mw + (1 - beta1) * gw
        vw = beta2 * vw + (1 - beta2) * gw * gw
        mb = beta1 * mb + (1 - beta1) * gb
        vb = beta2 * vb + (1 - beta2) * gb * gb
        corr1 = 1 - beta1 ** step
        corr2 = 1 - beta2 ** step
        w = w - cfg.learning_rate * (mw / corr1) / (np.sqrt(vw / corr2) + eps)
        b = b - cfg.learning_rate * (mb / corr1) / (math.sqrt(vb / corr2) + eps)
    return w, float(b)


def train_end2end(training_trees: Sequence[ModelTree], leaf_regs: PrimitiveRegressorSet,
                  hyper: TrainingConfig | None = None) -> TreeRegressorParams:
    """Fit the shared calibration regressor end to end: gradients of the
    relative squared loss at every internal node flow through the whole
    bottom-up recursion (children's predictions, not their ground truth)."""
    cfg = hyper or TrainingConfig()
    _require_ground_truth(training_trees, include_leaves=False)
    norm = fit_normalizer(_non_root_nodes(training_trees), cfg.subset)
    leaf_preds = [predict_leaves(leaf_regs, t) for t in training_trees]
    pf = pack_forest(training_trees, norm, leaf_preds)

    def loss_grad(w, b):
        return kernels.end2end_loss_grad(pf.feats, pf.parent, pf.is_leaf, pf.leaf_pred,
                                         pf.gt, w, b, cfg.tau, pf.depth)

    w, b = _adam(loss_grad, cfg.subset.dim, cfg)
    return TreeRegressorParams(weights=w, bias=b, tau=cfg.tau, normalizer=norm,
                               kind="end2end", hyper=cfg.to_dict())


def train_stepwise(training_trees: Sequence[ModelTree],
                   hyper: TrainingConfig | None = None) -> TreeRegressorParams:
    """Fit the same alpha form per node: a parent's training-time prediction
    is the weighted sum of its children's ground-truth energies, so errors
    never propagate between levels during training."""
    cfg = hyper or TrainingConfig()
    _require_ground_truth(training_trees, include_leaves=True)
    norm = fit_normalizer(_non_root_nodes(training_trees), cfg.subset)
    pf = pack_forest(training_trees, norm)

    def loss_grad(w, b):
        return kernels.stepwise_loss_grad(pf.feats, pf.parent, pf.is_leaf, pf.gt,
                                          w, b, cfg.tau)

    w, b = _adam(loss_grad, cfg.subset.dim, cfg)
    return TreeRegressorParams(weights=w, bias=b, tau=cfg.tau, normalizer=norm,
                               kind="stepwise", hyper=cfg.to_dict())


def train_unstructured(training_trees: Sequence[ModelTree],
                       hyper: TrainingConfig | None = None) -> UnstructuredParams:
    """Least-squares fit from non-leaf node features straight to joules,
    shared across module and model nodes, no tree structure."""
    cfg = hyper or TrainingConfig()
    _require_ground_truth(training_trees, include_leaves=False)
    nodes = [n for t in training_trees for n in t.root.walk() if not n.is_leaf]
    norm = fit_normalizer(nodes, cfg.subset)
    x = norm.apply_matrix(feature_matrix(nodes, cfg.subset))
    y = np.array([n.ground_truth_energy for n in nodes], dtype=np.float64)
    design = np.hstack([x, np.ones((len(nodes), 1))])
    theta, *_ = np.linalg.lstsq(design, y, rcond=None)
    return UnstructuredParams(weights=theta[:-1], bias=float(theta[-1]), normalizer=norm)
