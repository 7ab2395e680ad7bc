import json
import shutil
import subprocess
import sys

import pytest

from treewatt_exporter import (
    CUSTOM_PRIMITIVES,
    PRIMITIVE_CLASSES,
    ExportError,
    ExportRequest,
    export_tree,
)


def _validate_cmd():
    exe = shutil.which("treewatt")
    return [exe] if exe else [sys.executable, "-m", "treewatt.cli"]


def _export(tmp_path, model="tiny-encoder", batch=1, seq=8, profile=None, name="tree.json"):
    out = tmp_path / name
    doc = export_tree(ExportRequest(model=model, batch_size=batch, seq_len=seq,
                                    output=out, profile=profile))
    return out, doc


def _walk(node):
    yield node
    for c in node.get("children", []):
        yield from _walk(c)


def test_exported_encoder_passes_primary_validation(tmp_path):
    out, doc = _export(tmp_path)
    proc = subprocess.run([*_validate_cmd(), "validate", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr

    allowed = PRIMITIVE_CLASSES | CUSTOM_PRIMITIVES
    leaves = [n for n in _walk(doc["root"]) if "children" not in n]
    assert leaves and all(n["primitive"] in allowed for n in leaves)
    print("[acceptance] criterion 10 (exporter validity): PASS")


def test_structure_is_deterministic(tmp_path):
    _, doc1 = _export(tmp_path, name="a.json")
    _, doc2 = _export(tmp_path, name="b.json")

    def structure(node):
        return (node["name"], node["kind"], node.get("primitive"),
                tuple(structure(c) for c in node.get("children", [])))

    assert structure(doc1["root"]) == structure(doc2["root"])


def test_tree_shape_and_features(tmp_path):
    _, doc = _export(tmp_path, batch=2, seq=8)
    root = doc["root"]
    assert root["kind"] == "model"
    assert doc["batch_size"] == 2 and doc["seq_len"] == 8

    nodes = list(_walk(root))
    names = [n["name"] for n in nodes]
    assert len(names) == len(set(names))
    prims = {n.get("primitive") for n in nodes}
    # attention uses patched functional ops; hierarchy keeps the block modules
    assert {"MatMul", "Softmax", "Linear", "LayerNorm", "Embedding", "Tanh"} <= prims
    for n in nodes:
        feats = n["features"]
        assert feats["batch_size"] == 2.0 and feats["seq_len"] == 8.0
        assert feats["flops"] >= 0 and feats["mem_bytes"] >= 0
        assert "ground_truth_energy" not in n
    # parent model features cover their children
    for n in nodes:
        for c in n.get("children", []):
            assert n["features"]["flops"] >= c["features"]["flops"]


def test_flops_scale_with_input(tmp_path):
    _, small = _export(tmp_path, batch=1, seq=8, name="s.json")
    _, big = _export(tmp_path, batch=2, seq=16, name="b.json")
    assert big["root"]["features"]["flops"] > small["root"]["features"]["flops"]


def test_unmeasured_resources_are_zero_with_meta_flag(tmp_path):
    out, doc = _export(tmp_path)
    for n in _walk(doc["root"]):
        assert all(n["features"][k] == 0.0 for k in
                   ("cpu_util", "gpu_util", "latency", "gpu_energy"))
    meta = json.loads((tmp_path / "tree.json.meta.json").read_text())
    assert meta["resource_features_measured"] is False


def test_profile_log_populates_resources(tmp_path):
    header = ("node_name,cpu_util,mem_usg,gpu_util,gm_usg,"
              "g_clk,gm_clk,latency,gpu_energy\n")
    profile = tmp_path / "profile.csv"
    profile.write_text(header + "Linear:0,10,20,30,40,1400,4500,0.01,0.5\n")
    out, doc = _export(tmp_path, profile=profile)
    by_name = {n["name"]: n for n in _walk(doc["root"])}
    assert by_name["Linear:0"]["features"]["gpu_util"] == 30.0
    meta = json.loads((tmp_path / "tree.json.meta.json").read_text())
    assert meta["resource_features_measured"] is True
    assert meta["nodes_with_resource_features"] == 1

    proc = subprocess.run([*_validate_cmd(), "validate", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr


def test_lstm_model_exports(tmp_path):
    out, doc = _export(tmp_path, model="tiny-lstm")
    prims = {n.get("primitive") for n in _walk(doc["root"])}
    assert "LSTM" in prims
    proc = subprocess.run([*_validate_cmd(), "validate", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0


def test_request_validation_and_unknown_model(tmp_path):
    with pytest.raises(ValueError, match=">= 1"):
        ExportRequest(model="tiny-encoder", batch_size=0, seq_len=8, output="x.json")
    with pytest.raises(ValueError, match="unsupported model"):
        export_tree(ExportRequest(model="nope", batch_size=1, seq_len=8,
                                  output=tmp_path / "x.json"))


@pytest.mark.parametrize("preset, marker", [("bert", "BertLayer"), ("gpt2", "Conv1D")])
def test_hf_config_models(tmp_path, preset, marker):
    pytest.importorskip("transformers")
    out, doc = _export(tmp_path, model=f"hf-config:{preset}", batch=1, seq=8,
                       name=f"{preset}.json")
    types = {n["name"].split(":")[0] for n in _walk(doc["root"])}
    assert marker in types
    proc = subprocess.run([*_validate_cmd(), "validate", str(out)],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stdout + proc.stderr


def test_cli_roundtrip(tmp_path):
    from treewatt_exporter.cli import main
    out = tmp_path / "cli.json"
    assert main(["--model", "tiny-encoder", "--batch-size", "1", "--seq-len", "8",
                 "-o", str(out)]) == 0
    assert out.exists()
    assert main(["--model", "nope", "-o", str(tmp_path / "y.json")]) == 1
