"""Flattening of model trees into the arrays the kernels consume.

Packing happens once per training/prediction call; the kernels then run
entirely on contiguous arrays. Node order is depth-first preorder per
tree, trees concatenated, so parents always precede their children.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .featurization import Normalizer
from .model_tree import ModelTree, Node


@dataclass
class PackedForest:
    feats: np.ndarray      # (n, d) normalized features
    parent: np.ndarray     # (n,) int64, -1 at tree roots
    is_leaf: np.ndarray    # (n,) bool
    gt: np.ndarray         # (n,) float64, NaN where absent
    leaf_pred: np.ndarray  # (n,) float64, 0 at internal nodes
    depth: np.ndarray      # (n,) int64, 0 at tree roots
    tree_ptr: np.ndarray   # (n_trees + 1,) node-range offsets
    names: list[str]

    @property
    def n_nodes(self) -> int:
        return self.parent.shape[0]

    @property
    def n_trees(self) -> int:
        return self.tree_ptr.shape[0] - 1

    def tree_slice(self, i: int) -> slice:
        return slice(int(self.tree_ptr[i]), int(self.tree_ptr[i + 1]))


def pack_forest(
    trees: Sequence[ModelTree],
    normalizer: Normalizer | None,
    leaf_preds: Sequence[Mapping[str, float]] | None = None,
) -> PackedForest:
    """Flatten trees into kernel arrays, normalizing features on the way.

    ``leaf_preds`` supplies one name->joules map per tree covering its
    leaves. ``normalizer=None`` packs zero-width features, for plain-sum
    paths that never read them.
    """
    feats: list[np.ndarray] = []
    parent: list[int] = []
    is_leaf: list[bool] = []
    gt: list[float] = []
    leaf_pred: list[float] = []
    depth: list[int] = []
    names: list[str] = []
    tree_ptr = [0]

    for ti, tree in enumerate(trees):
        preds = leaf_preds[ti] if leaf_preds is not None else None

        def visit(node: Node, parent_idx: int, d: int):
            idx = len(parent)
            parent.append(parent_idx)
            depth.append(d)
            is_leaf.append(node.is_leaf)
            names.append(node.name)
            if normalizer is not None:
                feats.append(normalizer.apply(node.features))
            gt.append(node.ground_truth_energy if node.ground_truth_energy is not None else np.nan)
            if node.is_leaf and preds is not None:
                if node.name not in preds:
                    raise KeyError(f"missing leaf prediction for '{node.name}'")
                leaf_pred.append(float(preds[node.name]))
            else:
                leaf_pred.append(0.0)
            for c in node.children:
                visit(c, idx, d + 1)

        visit(tree.root, -1, 0)
        tree_ptr.append(len(parent))

    n = len(parent)
    if normalizer is None:
        feat_arr = np.zeros((n, 0), dtype=np.float64)
    else:
        feat_arr = np.stack(feats) if feats else np.zeros((0, normalizer.subset.dim))
    return PackedForest(
        feats=feat_arr,
        parent=np.asarray(parent, dtype=np.int64),
        is_leaf=np.asarray(is_leaf, dtype=bool),
        gt=np.asarray(gt, dtype=np.float64),
        leaf_pred=np.asarray(leaf_pred, dtype=np.float64),
        depth=np.asarray(depth, dtype=np.int64),
        tree_ptr=np.asarray(tree_ptr, dtype=np.int64),
        names=names,
    )
