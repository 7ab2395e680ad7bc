"""Synthetic transformer-like model trees with a known energy oracle.

The generator builds trees whose leaf energies are exactly linear in the
stored features and whose parent energies are a per-module-type bias
times the sum of child energies. That family is exactly what the tree
regressors can represent, so recovery and ordering experiments have a
known ground truth. All randomness is derived from stable hashes of
(seed, names), so equal seeds give byte-identical datasets regardless of
generation order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .featurization import FEATURE_NAMES, FeatureVector
from .model_tree import ModelTree, Node, NodeKind

# Primitive vocabulary the generator draws from (framework ops plus the
# custom matmul/softmax leaves emitted by trace exporters).
SUPPORTED_PRIMITIVES: tuple[str, ...] = (
    "Linear", "LayerNorm", "Embedding", "BatchNorm1d", "Conv1d", "MaxPool1d",
    "AvgPool1d", "LSTM", "Tanh", "Conv1D", "LogSigmoid", "ReLU", "Sigmoid",
    "GELU", "LeakyReLU", "MatMul", "Softmax",
)

_ATTENTION_PRIMS = ("MatMul", "Softmax")

DEFAULT_BATCH_SIZES: tuple[int, ...] = (8, 16, 24, 32)
DEFAULT_SEQ_LENS: tuple[int, ...] = (32, 64, 96, 128, 160, 192, 224)


@dataclass(frozen=True)
class SyntheticSpec:
    """One synthetic model architecture swept over a (batch, seq) grid."""

    model_name: str
    n_layers: int = 2
    primitives_per_block: tuple[str, ...] = ("Linear", "GELU")
    batch_sizes: tuple[int, ...] = DEFAULT_BATCH_SIZES
    seq_lens: tuple[int, ...] = DEFAULT_SEQ_LENS
    seed: int = 0
    module_bias_range: tuple[float, float] = (1.0, 1.0)
    include_pooler: bool = True
    tau: float = 10.0


@dataclass
class OracleParams:
    """Ground-truth generating parameters.

    leaf_weights: primitive -> (weight vector over the 12 canonical
    features, bias); leaf energy is weights . features + bias.
    module_bias: module type_name -> multiplicative factor applied to the
    sum of child energies (model roots and unlisted types are unbiased).
    """

    leaf_weights: dict[str, tuple[np.ndarray, float]] = field(default_factory=dict)
    module_bias: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "feature_order": list(FEATURE_NAMES),
            "leaf_weights": {
                prim: {"weights": [float(x) for x in w], "bias": float(b)}
                for prim, (w, b) in sorted(self.leaf_weights.items())
            },
            "module_bias": {k: float(v) for k, v in sorted(self.module_bias.items())},
        }

    @staticmethod
    def from_dict(d: dict) -> "OracleParams":
        return OracleParams(
            leaf_weights={
                prim: (np.asarray(v["weights"], dtype=np.float64), float(v["bias"]))
                for prim, v in d["leaf_weights"].items()
            },
            module_bias={k: float(v) for k, v in d["module_bias"].items()},
        )

    def save(self, path: str | Path):
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=1)
            f.write("\n")

    @staticmethod
    def load(path: str | Path) -> "OracleParams":
        with open(path, "r", encoding="utf-8") as f:
            return OracleParams.from_dict(json.load(f))

    def merge(self, other: "OracleParams") -> "OracleParams":
        merged = OracleParams(dict(self.leaf_weights), dict(self.module_bias))
        merged.leaf_weights.update(other.leaf_weights)
        merged.module_bias.update(other.module_bias)
        return merged


def _rng(*parts) -> np.random.Generator:
    """Generator keyed by a stable hash of the parts (process-independent)."""
    digest = hashlib.blake2b("|".join(str(p) for p in parts).encode(), digest_size=16).digest()
    words = [int.from_bytes(digest[i:i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(words))


# ---------------------------------------------------------------------------
# Architecture template


def _template(spec: SyntheticSpec) -> tuple:
    """Nested (module type, children) structure; strings are leaf primitives."""
    attention = ("Attention", [
        ("SelfAttention", ["Linear", "Linear", "Linear", "MatMul", "Softmax", "MatMul"]),
        ("SelfOutput", ["Linear", "LayerNorm"]),
    ])
    layer = ("Layer", [
        attention,
        ("Intermediate", list(spec.primitives_per_block)),
        ("Output", ["Linear", "LayerNorm"]),
    ])
    blocks: list = [("Embeddings", ["Embedding", "LayerNorm"])]
    blocks.append(("Encoder", [layer] * spec.n_layers))
    if spec.include_pooler:
        blocks.append(("Pooler", ["Linear", "Tanh"]))
    return (spec.model_name, blocks)


def _template_primitives(spec: SyntheticSpec) -> list[str]:
    prims: list[str] = []

    def rec(entry):
        if isinstance(entry, str):
            if entry not in prims:
                prims.append(entry)
            return
        _, children = entry
        for c in children:
            rec(c)

    rec(_template(spec))
    return prims


def _template_module_types(spec: SyntheticSpec) -> list[str]:
    types: list[str] = []

    def rec(entry, is_root):
        if isinstance(entry, str):
            return
        t, children = entry
        if not is_root and t not in types:
            types.append(t)
        for c in children:
            rec(c, False)

    rec(_template(spec), True)
    return types


# ---------------------------------------------------------------------------
# Oracle derivation

_WEIGHT_RANGES = {
    "batch_size": (0.0, 0.0),
    "seq_len": (0.0, 0.0),
    "flops": (1e-4, 6e-3),
    "mem_bytes": (5e-5, 1e-3),
    "cpu_util": (0.0, 5e-4),
    "mem_usg": (0.0, 5e-4),
    "gpu_util": (0.0, 1e-3),
    "gm_usg": (0.0, 5e-4),
    "g_clk": (0.0, 1e-5),
    "gm_clk": (0.0, 1e-5),
    "latency": (0.5, 12.0),
    "gpu_energy": (0.05, 1.2),
}


def derive_oracle(spec: SyntheticSpec) -> OracleParams:
    """Materialize oracle parameters for every primitive and module type the
    spec's architecture uses. Keyed by (seed, name) only, so specs sharing a
    seed share ground-truth physics and differ only in architecture."""
    lo, hi = spec.module_bias_range
    params = OracleParams()
    for prim in _template_primitives(spec):
        rng = _rng(spec.seed, "leaf-weights", prim)
        w = np.array([rng.uniform(*_WEIGHT_RANGES[name]) for name in FEATURE_NAMES])
        bias = rng.uniform(0.01, 0.05)
        params.leaf_weights[prim] = (w, bias)
    for mtype in _template_module_types(spec):
        u = _rng(spec.seed, "module-bias", mtype).random()
        params.module_bias[mtype] = lo + u * (hi - lo)
    return params


# ---------------------------------------------------------------------------
# Feature generation


def _scales(seed: int, prim: str, ctx: str) -> dict[str, float]:
    rng = _rng(seed, "feature-scales", prim, ctx)
    return {
        "flops": rng.uniform(0.5, 3.0),
        "mem": rng.uniform(0.3, 2.0),
        "lat": rng.uniform(0.5, 2.0),
        "ge": rng.uniform(0.5, 2.0),
        "a_cpu": rng.uniform(20.0, 60.0),
        "a_mem": rng.uniform(10.0, 50.0),
        "a_gpu": rng.uniform(40.0, 95.0),
        "a_gm": rng.uniform(10.0, 70.0),
        "k_cpu": rng.uniform(500.0, 4000.0),
        "k_mem": rng.uniform(500.0, 4000.0),
        "k_gpu": rng.uniform(500.0, 4000.0),
        "k_gm": rng.uniform(500.0, 4000.0),
        "g_base": rng.uniform(1200.0, 1600.0),
        "gm_base": rng.uniform(4000.0, 4800.0),
    }


def _leaf_features(seed: int, model_name: str, prim: str, ctx: str, b: int, s: int,
                   rng: np.random.Generator) -> FeatureVector:
    sc = _scales(seed, prim, ctx)
    # Pooler-style blocks touch one position per sample, not the whole sequence.
    load = float(b * 16) if ctx == "Pooler" else float(b * s)
    sfac = s / 64.0 if prim in _ATTENTION_PRIMS else 1.0
    # Architectures differ in how wide each block is, so the compute-bound
    # features carry a per-(model, block) width factor; the saturation-shaped
    # utilization/clock features keep their block-level signature. Log-uniform
    # widths let a block dominate a model's energy mix, as real wide-FFN or
    # wide-attention variants do.
    width = float(np.exp(_rng(seed, "block-width", model_name, ctx).uniform(np.log(0.2), np.log(5.0))))

    def nz() -> float:
        return 1.0 + 0.01 * rng.uniform(-1.0, 1.0)

    return FeatureVector(
        batch_size=float(b),
        seq_len=float(s),
        flops=sc["flops"] * width * (load / 256.0) * sfac * nz(),
        mem_bytes=sc["mem"] * width * (load / 256.0) * sfac * nz(),
        cpu_util=sc["a_cpu"] * load / (load + sc["k_cpu"]) * nz(),
        mem_usg=sc["a_mem"] * load / (load + sc["k_mem"]) * nz(),
        gpu_util=sc["a_gpu"] * load / (load + sc["k_gpu"]) * nz(),
        gm_usg=sc["a_gm"] * load / (load + sc["k_gm"]) * nz(),
        g_clk=sc["g_base"] + 200.0 * load / (load + sc["k_gpu"]) * nz(),
        gm_clk=sc["gm_base"] + 150.0 * load / (load + sc["k_gm"]) * nz(),
        latency=0.002 * sc["lat"] * width * (load / 256.0) * sfac * nz(),
        gpu_energy=0.15 * sc["ge"] * width * (load / 256.0) * sfac * nz(),
    )


# Measured spans at a parent overlap setup/teardown of its children, so the
# measured resource totals come out shy of the plain child sums.
_MEASUREMENT_OVERLAP = 0.93


def _aggregate_features(b: int, s: int, children: list[Node]) -> FeatureVector:
    """Parent features: analytic quantities (flops, bytes) sum exactly over
    children; measured ones (latency, driver energy) are sub-additive; rates
    and clocks are latency-weighted means (time-share weighting)."""
    lat = np.array([c.features.latency for c in children])
    weights = lat / lat.sum() if lat.sum() > 0 else np.full(len(children), 1.0 / len(children))

    def total(name):
        return float(sum(getattr(c.features, name) for c in children))

    def wmean(name):
        return float(sum(w * getattr(c.features, name) for w, c in zip(weights, children)))

    return FeatureVector(
        batch_size=float(b),
        seq_len=float(s),
        flops=total("flops"),
        mem_bytes=total("mem_bytes"),
        cpu_util=wmean("cpu_util"),
        mem_usg=wmean("mem_usg"),
        gpu_util=wmean("gpu_util"),
        gm_usg=wmean("gm_usg"),
        g_clk=wmean("g_clk"),
        gm_clk=wmean("gm_clk"),
        latency=_MEASUREMENT_OVERLAP * total("latency"),
        gpu_energy=_MEASUREMENT_OVERLAP * total("gpu_energy"),
    )


# ---------------------------------------------------------------------------
# Generation


def _check_spec(spec: SyntheticSpec):
    if not spec.batch_sizes or not spec.seq_lens:
        raise ValueError("batch/seq grids must be non-empty")
    if any(b < 1 for b in spec.batch_sizes) or any(s < 1 for s in spec.seq_lens):
        raise ValueError("batch sizes and sequence lengths must be >= 1")
    if spec.n_layers < 1:
        raise ValueError("n_layers must be >= 1")
    lo, hi = spec.module_bias_range
    if not (lo <= hi):
        raise ValueError("module_bias_range must be (lo, hi) with lo <= hi")
    if lo < 1.0 - 1.0 / spec.tau or hi > 1.0 + 1.0 / spec.tau:
        raise ValueError(
            f"module_bias_range {spec.module_bias_range} outside the representable "
            f"band [{1 - 1/spec.tau}, {1 + 1/spec.tau}] at tau={spec.tau}")
    unknown = [p for p in spec.primitives_per_block if p not in SUPPORTED_PRIMITIVES]
    if unknown:
        raise ValueError(f"unknown primitives in spec: {unknown}")


def _build_tree(spec: SyntheticSpec, b: int, s: int) -> ModelTree:
    rng = _rng(spec.seed, "tree", spec.model_name, b, s)
    counters: dict[str, int] = {}

    def fresh_name(type_name: str) -> str:
        idx = counters.get(type_name, 0)
        counters[type_name] = idx + 1
        return f"{type_name}:{idx}"

    def build(entry, ctx: str, is_root: bool) -> Node:
        if isinstance(entry, str):
            return Node(
                name=fresh_name(entry),
                kind=NodeKind.ML,
                primitive=entry,
                features=_leaf_features(spec.seed, spec.model_name, entry, ctx, b, s, rng),
            )
        type_name, child_entries = entry
        children = tuple(build(c, type_name, False) for c in child_entries)
        return Node(
            name=fresh_name(type_name),
            kind=NodeKind.MODEL if is_root else NodeKind.MODULE,
            features=_aggregate_features(b, s, list(children)),
            children=children,
        )

    root = build(_template(spec), spec.model_name, True)
    return ModelTree(model_name=spec.model_name, batch_size=b, seq_len=s, root=root)


def oracle_energy(params: OracleParams, tree: ModelTree) -> dict[str, float]:
    """True energy of every node: leaves from the linear rule, parents as the
    module-type bias times the sum of child energies (roots unbiased)."""
    out: dict[str, float] = {}

    def rec(node: Node) -> float:
        if node.is_leaf:
            if node.primitive not in params.leaf_weights:
                raise ValueError(f"oracle has no weights for primitive '{node.primitive}'")
            w, bias = params.leaf_weights[node.primitive]
            e = float(w @ node.features.as_array() + bias)
        else:
            total = 0.0
            for c in node.children:
                total += rec(c)
            beta = params.module_bias.get(node.type_name, 1.0) if node.kind is NodeKind.MODULE else 1.0
            e = beta * total
        out[node.name] = e
        return e

    rec(tree.root)
    return out


def _with_ground_truth(node: Node, energies: dict[str, float]) -> Node:
    children = tuple(_with_ground_truth(c, energies) for c in node.children)
    return Node(name=node.name, kind=node.kind, features=node.features,
                type_name=node.type_name, primitive=node.primitive,
                ground_truth_energy=energies[node.name], children=children)


def generate_dataset(spec: SyntheticSpec) -> tuple[list[ModelTree], OracleParams]:
    """One fully labeled tree per (batch, seq) grid point, plus the oracle
    parameters that produced the labels. Deterministic for a fixed seed."""
    _check_spec(spec)
    oracle = derive_oracle(spec)
    trees = []
    for b in spec.batch_sizes:
        for s in spec.seq_lens:
            bare = _build_tree(spec, b, s)
            energies = oracle_energy(oracle, bare)
            trees.append(ModelTree(model_name=spec.model_name, batch_size=b, seq_len=s,
                                   root=_with_ground_truth(bare.root, energies)))
    return trees, oracle


# ---------------------------------------------------------------------------
# Bundled scenarios

DEFAULT_SCENARIO_SEED = 7


def scenario_specs(kind: str, seed: int = DEFAULT_SCENARIO_SEED) -> list[SyntheticSpec]:
    """Four architectures sharing one oracle. 'linear' keeps every module
    bias at exactly 1 (parents are plain sums); 'biased' draws per-type
    biases in [0.95, 1.05]."""
    if kind == "linear":
        bias = (1.0, 1.0)
    elif kind == "biased":
        bias = (0.95, 1.05)
    else:
        raise ValueError(f"unknown scenario '{kind}' (expected 'linear' or 'biased')")
    common = dict(seed=seed, module_bias_range=bias)
    return [
        SyntheticSpec("TinyFormerA", n_layers=2, include_pooler=True,
                      primitives_per_block=("Linear", "GELU"), **common),
        SyntheticSpec("TinyFormerB", n_layers=3, include_pooler=False,
                      primitives_per_block=("Linear", "ReLU"), **common),
        SyntheticSpec("TinyFormerC", n_layers=4, include_pooler=True,
                      primitives_per_block=("Linear", "GELU"), **common),
        SyntheticSpec("TinyFormerD", n_layers=2, include_pooler=False,
                      primitives_per_block=("Linear", "ReLU"), **common),
    ]


def generate_scenario(kind: str, seed: int = DEFAULT_SCENARIO_SEED
                      ) -> tuple[list[ModelTree], OracleParams]:
    trees: list[ModelTree] = []
    oracle = OracleParams()
    for spec in scenario_specs(kind, seed):
        spec_trees, spec_oracle = generate_dataset(spec)
        trees.extend(spec_trees)
        oracle = oracle.merge(spec_oracle)
    return trees, oracle
