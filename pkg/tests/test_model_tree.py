import json
from pathlib import Path

import numpy as np
import pytest

from treewatt.featurization import FEATURE_NAMES
from treewatt.model_tree import (
    ModelTree,
    NodeKind,
    TreeFormatError,
    load_tree,
    nodes_at_level,
    parse_tree,
    render_annotated,
    save_tree,
    serialize_tree,
    strip_instance_index,
    validate,
)

from helpers import fv, leaf, model_root, module, random_tree, tree_of, two_node_tree

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def _feat_dict(**over):
    d = fv(**over).as_dict()
    return d


def _minimal_doc():
    return {
        "model_name": "Tiny",
        "batch_size": 8,
        "seq_len": 32,
        "root": {
            "name": "Tiny:0",
            "kind": "model",
            "features": _feat_dict(),
            "children": [
                {"name": "Linear:0", "kind": "ml", "primitive": "Linear",
                 "features": _feat_dict()},
            ],
        },
    }


def test_parse_minimal_tree():
    tree = parse_tree(_minimal_doc())
    assert tree.depth() == 2
    assert len(tree.nodes()) == 2
    assert tree.root.kind is NodeKind.MODEL
    assert tree.root.children[0].primitive == "Linear"
    assert tree.root.children[0].type_name == "Linear"


def test_duplicate_node_name_rejected():
    doc = _minimal_doc()
    doc["root"]["children"].append(
        {"name": "Linear:0", "kind": "ml", "primitive": "Linear", "features": _feat_dict()})
    with pytest.raises(TreeFormatError, match="duplicate"):
        parse_tree(doc)


@pytest.mark.parametrize("mutate, match", [
    (lambda d: d["root"]["children"][0].pop("primitive"), "primitive"),
    (lambda d: d["root"].pop("children"), "children"),
    (lambda d: d.update(batch_size=0), "positive"),
    (lambda d: d.update(seq_len=-3), "positive"),
    (lambda d: d["root"]["features"].pop("flops"), "missing feature"),
    (lambda d: d["root"]["features"].update(extra=1.0), "unknown feature"),
    (lambda d: d.update(extra_top=1), "unknown top-level"),
    (lambda d: d.pop("model_name"), "model_name"),
    (lambda d: d["root"].update(kind="math"), "kind"),
    (lambda d: d["root"]["children"][0]["features"].update(flops="fast"), "numeric"),
    (lambda d: d["root"].update(primitive="Linear"), "only valid on ml"),
])
def test_parse_errors(mutate, match):
    doc = _minimal_doc()
    mutate(doc)
    with pytest.raises(TreeFormatError, match=match):
        parse_tree(doc)


def test_ml_node_with_children_rejected():
    doc = _minimal_doc()
    doc["root"]["children"][0]["children"] = [
        {"name": "Linear:1", "kind": "ml", "primitive": "Linear", "features": _feat_dict()}]
    with pytest.raises(TreeFormatError, match="must not have children"):
        parse_tree(doc)


def test_non_model_root_rejected():
    doc = _minimal_doc()
    doc["root"]["kind"] = "module"
    with pytest.raises(TreeFormatError, match="root"):
        parse_tree(doc)


def test_bundled_example_tree():
    tree = load_tree(DATA_DIR / "bert_like_small.json")
    assert tree.depth() == 6
    assert validate(tree) == []
    # round-trip: parse(serialize(tree)) is field-for-field identical
    assert parse_tree(serialize_tree(tree)) == tree


def test_round_trip_random_trees(tmp_path):
    rng = np.random.default_rng(11)
    for i in range(10):
        tree = random_tree(rng)
        assert parse_tree(serialize_tree(tree)) == tree
        path = tmp_path / f"t{i}.json"
        save_tree(tree, path)
        assert load_tree(path) == tree


def test_ground_truth_optional_in_files(tmp_path):
    tree = tree_of(model_root("M:0", [leaf("Linear:0")]))
    doc = serialize_tree(tree)
    assert "ground_truth_energy" not in doc["root"]
    assert parse_tree(doc) == tree


def test_validate_ok_and_violations():
    assert validate(two_node_tree()) == []

    zero_gt = tree_of(model_root("M:0", [leaf("Linear:0", gt=0.0)]))
    report = validate(zero_gt)
    assert len(report) == 1 and "Linear:0" in report[0]

    mismatched = ModelTree(model_name="M", batch_size=8, seq_len=64,
                           root=model_root("M:0", [leaf("Linear:0")], s=32), )
    report = validate(mismatched)
    assert any("seq_len" in v for v in report)


def test_validate_structure_violations():
    # programmatically built trees can violate what the parser rejects
    bad_root = leaf("M:0")  # a leaf root: wrong kind and depth < 2
    report = validate(ModelTree("M", 8, 32, root=bad_root))
    assert any("kind 'model'" in v for v in report)
    assert any("depth" in v for v in report)

    dup = model_root("M:0", [leaf("Linear:0"), leaf("Linear:0")])
    assert any("duplicate" in v for v in validate(tree_of(dup)))

    nested_model = model_root("M:0", [model_root("M2:0", [leaf("Linear:0")])])
    assert any("only valid at the root" in v for v in validate(tree_of(nested_model)))


def test_nodes_at_level_minimal():
    tree = two_node_tree()
    assert [n.name for n in nodes_at_level(tree, "ml")] == ["Linear:0"]
    assert nodes_at_level(tree, "module") == []
    assert [n.name for n in nodes_at_level(tree, "model")] == ["Tiny:0"]


def test_levels_partition_all_nodes():
    rng = np.random.default_rng(5)
    for _ in range(10):
        tree = random_tree(rng)
        ml = nodes_at_level(tree, NodeKind.ML)
        mod = nodes_at_level(tree, NodeKind.MODULE)
        mdl = nodes_at_level(tree, NodeKind.MODEL)
        names = [n.name for n in ml] + [n.name for n in mod] + [n.name for n in mdl]
        assert sorted(names) == sorted(n.name for n in tree.nodes())
        assert len(names) == len(set(names))
        assert mdl == [tree.root]
        assert all(n.is_leaf for n in ml)
        assert all(not n.is_leaf and n is not tree.root for n in mod)


def test_bundled_tree_level_counts():
    tree = load_tree(DATA_DIR / "bert_like_small.json")
    ml = nodes_at_level(tree, "ml")
    mod = nodes_at_level(tree, "module")
    mdl = nodes_at_level(tree, "model")
    assert len(ml) + len(mod) + len(mdl) == len(tree.nodes())
    assert len(mdl) == 1
    assert len(ml) == sum(1 for n in tree.nodes() if n.is_leaf)


def test_render_percentages():
    tree = tree_of(model_root("M:0", [leaf("Linear:0")]))
    out = render_annotated(tree, {"M:0": 10.0, "Linear:0": 10.0})
    assert "100.0%" in out

    two = tree_of(model_root("M:0", [leaf("Linear:0"), leaf("Tanh:0", primitive="Tanh")]))
    out = render_annotated(two, {"M:0": 10.0, "Linear:0": 6.0, "Tanh:0": 3.0})
    assert "60.0%" in out and "30.0%" in out
    assert "10.0000 J" in out


def test_render_line_count_and_missing():
    tree = load_tree(DATA_DIR / "bert_like_small.json")
    preds = {n.name: 1.0 for n in tree.nodes()}
    out = render_annotated(tree, preds)
    assert len(out.strip().split("\n")) == len(tree.nodes())

    preds.pop("Linear:0")
    with pytest.raises(ValueError, match="Linear:0"):
        render_annotated(tree, preds)


def test_strip_instance_index():
    assert strip_instance_index("BertLayer:0") == "BertLayer"
    assert strip_instance_index("Pooler") == "Pooler"
    assert strip_instance_index("Layer:12") == "Layer"


def test_feature_names_match_schema():
    doc = serialize_tree(two_node_tree())
    assert tuple(doc["root"]["features"].keys()) == FEATURE_NAMES
