"""Shared builders for hand-made and random test trees."""

import numpy as np

from treewatt.featurization import FeatureVector
from treewatt.model_tree import ModelTree, Node, NodeKind

_DEFAULTS = dict(
    flops=10.0, mem_bytes=5.0, cpu_util=20.0, mem_usg=30.0, gpu_util=50.0,
    gm_usg=40.0, g_clk=1400.0, gm_clk=4500.0, latency=0.01, gpu_energy=0.5,
)


def fv(b=8, s=32, **over) -> FeatureVector:
    vals = dict(_DEFAULTS)
    vals.update(over)
    return FeatureVector(batch_size=float(b), seq_len=float(s), **vals)


def leaf(name, primitive="Linear", gt=None, b=8, s=32, **feat_over) -> Node:
    return Node(name=name, kind=NodeKind.ML, primitive=primitive,
                features=fv(b, s, **feat_over), ground_truth_energy=gt)


def module(name, children, gt=None, b=8, s=32, **feat_over) -> Node:
    return Node(name=name, kind=NodeKind.MODULE, children=tuple(children),
                features=fv(b, s, **feat_over), ground_truth_energy=gt)


def model_root(name, children, gt=None, b=8, s=32, **feat_over) -> Node:
    return Node(name=name, kind=NodeKind.MODEL, children=tuple(children),
                features=fv(b, s, **feat_over), ground_truth_energy=gt)


def tree_of(root: Node, model_name=None, b=8, s=32) -> ModelTree:
    return ModelTree(model_name=model_name or root.type_name, batch_size=b,
                     seq_len=s, root=root)


def two_node_tree(leaf_gt=2.0, root_gt=2.0, primitive="Linear") -> ModelTree:
    root = model_root("Tiny:0", [leaf("Linear:0", primitive=primitive, gt=leaf_gt)],
                      gt=root_gt)
    return tree_of(root, "Tiny")


_PRIMS = ("Linear", "LayerNorm", "MatMul", "Softmax", "GELU")


def random_tree(rng: np.random.Generator, max_depth=4, max_breadth=4,
                model_name="Rand", b=8, s=32) -> ModelTree:
    """Random valid tree with positive ground truth on every node. Energies
    are arbitrary positives, not tied to features."""
    counter = [0]

    def rand_features():
        return fv(
            b, s,
            flops=float(rng.uniform(0.1, 100)),
            mem_bytes=float(rng.uniform(0.1, 50)),
            cpu_util=float(rng.uniform(0, 100)),
            mem_usg=float(rng.uniform(0, 100)),
            gpu_util=float(rng.uniform(0, 100)),
            gm_usg=float(rng.uniform(0, 100)),
            g_clk=float(rng.uniform(1000, 1800)),
            gm_clk=float(rng.uniform(4000, 5000)),
            latency=float(rng.uniform(1e-4, 0.1)),
            gpu_energy=float(rng.uniform(0.01, 5.0)),
        )

    def build(depth) -> Node:
        counter[0] += 1
        idx = counter[0]
        make_leaf = depth + 1 >= max_depth or (depth > 0 and rng.random() < 0.3)
        if make_leaf:
            prim = _PRIMS[int(rng.integers(len(_PRIMS)))]
            return Node(name=f"{prim}:{idx}", kind=NodeKind.ML, primitive=prim,
                        features=rand_features(),
                        ground_truth_energy=float(rng.uniform(0.5, 5.0)))
        n_children = int(rng.integers(1, max_breadth + 1))
        children = tuple(build(depth + 1) for _ in range(n_children))
        kind = NodeKind.MODEL if depth == 0 else NodeKind.MODULE
        return Node(name=f"Block:{idx}" if depth else f"{model_name}:{idx}", kind=kind,
                    features=rand_features(), children=children,
                    ground_truth_energy=float(rng.uniform(0.5, 5.0)))

    return ModelTree(model_name=model_name, batch_size=b, seq_len=s, root=build(0))


def random_leaf_preds(rng: np.random.Generator, tree: ModelTree) -> dict[str, float]:
    return {n.name: float(rng.uniform(0.5, 5.0)) for n in tree.root.walk() if n.is_leaf}
