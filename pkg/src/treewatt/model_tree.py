"""The three-level model tree: model root, module internals, ML-primitive leaves.

A tree file is a JSON object: ``model_name``, ``batch_size``, ``seq_len``
and a nested ``root`` node. Each node carries a name ("TypeName:index"),
a kind, the 12 features, optional ground-truth joules, and children.
Parsed trees are immutable; every operation here is read-only.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Iterator, Mapping

from .featurization import FEATURE_NAMES, FeatureVector


class TreeFormatError(ValueError):
    """Raised when a tree document violates the file schema."""


class NodeKind(str, Enum):
    MODEL = "model"
    MODULE = "module"
    ML = "ml"


_INDEX_SUFFIX = re.compile(r":\d+$")


def strip_instance_index(name: str) -> str:
    """``"BertLayer:0"`` -> ``"BertLayer"``; names without an index pass through."""
    return _INDEX_SUFFIX.sub("", name)


@dataclass(frozen=True)
class Node:
    name: str
    kind: NodeKind
    features: FeatureVector
    type_name: str = ""
    primitive: str | None = None
    ground_truth_energy: float | None = None
    children: tuple["Node", ...] = ()

    def __post_init__(self):
        if not self.type_name:
            object.__setattr__(self, "type_name", strip_instance_index(self.name))

    @property
    def is_leaf(self) -> bool:
        return len(self.children) == 0

    def walk(self) -> Iterator["Node"]:
        """Depth-first preorder over this subtree, children in stored order."""
        yield self
        for child in self.children:
            yield from child.walk()


@dataclass(frozen=True)
class ModelTree:
    model_name: str
    batch_size: int
    seq_len: int
    root: Node

    @property
    def input_size(self) -> tuple[int, int]:
        return (self.batch_size, self.seq_len)

    def nodes(self) -> list[Node]:
        return list(self.root.walk())

    def node_map(self) -> dict[str, Node]:
        return {n.name: n for n in self.root.walk()}

    def depth(self) -> int:
        def rec(node: Node) -> int:
            if node.is_leaf:
                return 1
            return 1 + max(rec(c) for c in node.children)

        return rec(self.root)


def tree_key(tree: ModelTree) -> str:
    """Stable identifier for one (model, input size) tree."""
    return f"{tree.model_name}_b{tree.batch_size}_s{tree.seq_len}"


# ---------------------------------------------------------------------------
# Parsing / serialization


def _require(cond: bool, msg: str):
    if not cond:
        raise TreeFormatError(msg)


def _parse_features(obj, where: str) -> FeatureVector:
    _require(isinstance(obj, Mapping), f"{where}: 'features' must be an object")
    missing = [k for k in FEATURE_NAMES if k not in obj]
    _require(not missing, f"{where}: missing feature fields {missing}")
    unknown = [k for k in obj if k not in FEATURE_NAMES]
    _require(not unknown, f"{where}: unknown feature fields {unknown}")
    vals = {}
    for k in FEATURE_NAMES:
        v = obj[k]
        _require(isinstance(v, (int, float)) and not isinstance(v, bool),
                 f"{where}: feature '{k}' must be numeric (got {v!r})")
        vals[k] = float(v)
    return FeatureVector(**vals)


def _parse_node(obj, seen_names: set[str]) -> Node:
    _require(isinstance(obj, Mapping), "node must be an object")
    _require("name" in obj and isinstance(obj["name"], str) and obj["name"],
             "node is missing a non-empty string 'name'")
    name = obj["name"]
    where = f"node '{name}'"
    _require(name not in seen_names, f"duplicate node name '{name}'")
    seen_names.add(name)

    allowed = {"name", "kind", "primitive", "features", "ground_truth_energy", "children"}
    unknown = [k for k in obj if k not in allowed]
    _require(not unknown, f"{where}: unknown fields {unknown}")

    _require("kind" in obj, f"{where}: missing 'kind'")
    try:
        kind = NodeKind(obj["kind"])
    except ValueError:
        raise TreeFormatError(f"{where}: kind must be one of model/module/ml (got {obj['kind']!r})")

    _require("features" in obj, f"{where}: missing 'features'")
    features = _parse_features(obj["features"], where)

    gt = obj.get("ground_truth_energy")
    if gt is not None:
        _require(isinstance(gt, (int, float)) and not isinstance(gt, bool),
                 f"{where}: ground_truth_energy must be numeric")
        gt = float(gt)

    raw_children = obj.get("children") or []
    _require(isinstance(raw_children, list), f"{where}: 'children' must be an array")

    primitive = obj.get("primitive")
    if kind is NodeKind.ML:
        _require(isinstance(primitive, str) and primitive,
                 f"{where}: ml leaf requires a 'primitive' name")
        _require(not raw_children, f"{where}: ml leaf must not have children")
    else:
        _require(primitive is None, f"{where}: 'primitive' is only valid on ml leaves")
        _require(raw_children, f"{where}: internal node must have children")

    children = tuple(_parse_node(c, seen_names) for c in raw_children)
    return Node(name=name, kind=kind, features=features, primitive=primitive,
                ground_truth_energy=gt, children=children)


def parse_tree(document: Mapping) -> ModelTree:
    """Parse a tree document (already-decoded JSON object) into a ModelTree.

    Structural problems raise TreeFormatError; value-level invariant
    violations (energy signs, feature ranges, input-size mismatches) are
    reported by :func:`validate` instead.
    """
    _require(isinstance(document, Mapping), "tree document must be a JSON object")
    allowed = {"model_name", "batch_size", "seq_len", "root"}
    unknown = [k for k in document if k not in allowed]
    _require(not unknown, f"unknown top-level fields {unknown}")
    for key in ("model_name", "batch_size", "seq_len", "root"):
        _require(key in document, f"missing top-level field '{key}'")
    model_name = document["model_name"]
    _require(isinstance(model_name, str) and model_name, "'model_name' must be a non-empty string")
    for key in ("batch_size", "seq_len"):
        v = document[key]
        _require(isinstance(v, int) and not isinstance(v, bool), f"'{key}' must be an integer")
        _require(v > 0, f"'{key}' must be positive (got {v})")

    root = _parse_node(document["root"], set())
    _require(root.kind is NodeKind.MODEL, f"root node must have kind 'model' (got '{root.kind.value}')")
    return ModelTree(model_name=model_name, batch_size=document["batch_size"],
                     seq_len=document["seq_len"], root=root)


def _node_to_dict(node: Node) -> dict:
    out: dict = {"name": node.name, "kind": node.kind.value}
    if node.primitive is not None:
        out["primitive"] = node.primitive
    out["features"] = node.features.as_dict()
    if node.ground_truth_energy is not None:
        out["ground_truth_energy"] = node.ground_truth_energy
    if node.children:
        out["children"] = [_node_to_dict(c) for c in node.children]
    return out


def serialize_tree(tree: ModelTree) -> dict:
    return {
        "model_name": tree.model_name,
        "batch_size": tree.batch_size,
        "seq_len": tree.seq_len,
        "root": _node_to_dict(tree.root),
    }


def load_tree(path: str | Path) -> ModelTree:
    with open(path, "r", encoding="utf-8") as f:
        try:
            doc = json.load(f)
        except json.JSONDecodeError as e:
            raise TreeFormatError(f"{path}: not valid JSON ({e})") from e
    return parse_tree(doc)


def save_tree(tree: ModelTree, path: str | Path):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(serialize_tree(tree), f, indent=1)
        f.write("\n")


# ---------------------------------------------------------------------------
# Validation


def validate(tree: ModelTree) -> list[str]:
    """Report every invariant violation; an empty list means the tree is valid.

    Violations are data, not exceptions: prediction-only trees (no ground
    truth) are valid, but e.g. non-positive energies, feature-range breaks
    and input-size mismatches are all reported, each naming its node.
    """
    violations: list[str] = []
    nodes = tree.nodes()

    seen: set[str] = set()
    for n in nodes:
        if n.name in seen:
            violations.append(f"{n.name}: duplicate node name")
        seen.add(n.name)

    if tree.root.kind is not NodeKind.MODEL:
        violations.append(f"{tree.root.name}: root must have kind 'model'")
    for n in nodes:
        if n.kind is NodeKind.MODEL and n is not tree.root:
            violations.append(f"{n.name}: kind 'model' is only valid at the root")
        if n.kind is NodeKind.ML:
            if n.children:
                violations.append(f"{n.name}: ml node must be a leaf")
            if not n.primitive:
                violations.append(f"{n.name}: ml leaf is missing its primitive")
        else:
            if not n.children:
                violations.append(f"{n.name}: internal node has no children")
            if n.primitive:
                violations.append(f"{n.name}: primitive set on a non-ml node")
        if n.ground_truth_energy is not None and not n.ground_truth_energy > 0:
            violations.append(
                f"{n.name}: ground_truth_energy must be strictly positive "
                f"(got {n.ground_truth_energy})")
        violations.extend(n.features.violations(label=n.name))
        if n.features.batch_size != tree.batch_size:
            violations.append(
                f"{n.name}: batch_size feature {n.features.batch_size} != tree input size "
                f"{tree.batch_size}")
        if n.features.seq_len != tree.seq_len:
            violations.append(
                f"{n.name}: seq_len feature {n.features.seq_len} != tree input size "
                f"{tree.seq_len}")

    if tree.root.is_leaf:
        violations.append(f"{tree.root.name}: tree depth must be >= 2")
    return violations


# ---------------------------------------------------------------------------
# Traversal / rendering


def nodes_at_level(tree: ModelTree, level: NodeKind | str) -> list[Node]:
    """All nodes of one level, depth-first, children in stored order.

    ml -> leaves, module -> internal non-root nodes, model -> the root.
    """
    level = NodeKind(level)
    if level is NodeKind.MODEL:
        return [tree.root]
    if level is NodeKind.ML:
        return [n for n in tree.root.walk() if n.is_leaf]
    return [n for n in tree.root.walk() if not n.is_leaf and n is not tree.root]


def render_annotated(tree: ModelTree, predictions: Mapping[str, float]) -> str:
    """Text rendering: root shows absolute joules, every other node its
    percentage share of the root energy. One line per node, indented by depth.

    Shares are raw ``100 * node / root`` values; siblings need not sum to
    100 because parent predictions are calibrated, not constrained.
    """
    missing = [n.name for n in tree.root.walk() if n.name not in predictions]
    if missing:
        raise ValueError(f"predictions missing for nodes: {missing}")
    root_energy = float(predictions[tree.root.name])
    lines = []

    def rec(node: Node, depth: int):
        indent = "  " * depth
        tag = node.primitive if node.primitive else node.kind.value
        if node is tree.root:
            lines.append(f"{indent}{node.name} [{tag}]  {root_energy:.4f} J")
        else:
            pct = 100.0 * float(predictions[node.name]) / root_energy
            lines.append(f"{indent}{node.name} [{tag}]  {pct:.1f}%")
        for c in node.children:
            rec(c, depth + 1)

    rec(tree.root, 0)
    return "\n".join(lines) + "\n"
