"""Build and write tree files in the treewatt model-tree schema.

The 12-feature layout and node shape here mirror the primary toolkit's
documented file format; that JSON file (plus the `treewatt validate`
subcommand) is the only interface between the two packages. Model
features (flops in millions, memory in MiB) come from the trace;
resource features come from an optional profiler CSV keyed by node name,
otherwise they are written as zeros and flagged unmeasured in a sidecar
meta file. Ground-truth energy is never fabricated.
"""

from __future__ import annotations

import csv
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import torch

from .registry import build_model
from .tracing import ExportError, TraceNode, trace_model

RESOURCE_FEATURES = ("cpu_util", "mem_usg", "gpu_util", "gm_usg",
                     "g_clk", "gm_clk", "latency", "gpu_energy")


@dataclass(frozen=True)
class ExportRequest:
    model: str
    batch_size: int
    seq_len: int
    output: str | Path
    device: str = "cpu"
    profile: str | Path | None = None

    def __post_init__(self):
        if self.batch_size < 1 or self.seq_len < 1:
            raise ValueError("batch_size and seq_len must be >= 1")


def load_profile(path: str | Path) -> dict[str, dict[str, float]]:
    """Profiler log: CSV with node_name plus the 8 resource feature columns."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        reader = csv.DictReader(f)
        need = ("node_name",) + RESOURCE_FEATURES
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: profiler log is missing columns {missing}")
        return {row["node_name"]: {k: float(row[k]) for k in RESOURCE_FEATURES}
                for row in reader}


def _node_dict(node: TraceNode, batch_size: int, seq_len: int,
               resources: dict[str, dict[str, float]]) -> dict:
    feats = {
        "batch_size": float(batch_size),
        "seq_len": float(seq_len),
        "flops": node.flops / 1e6,
        "mem_bytes": node.mem_bytes / 2**20,
    }
    row = resources.get(node.name)
    for name in RESOURCE_FEATURES:
        feats[name] = row[name] if row else 0.0
    out = {"name": node.name, "kind": node.kind}
    if node.primitive is not None:
        out["primitive"] = node.primitive
    out["features"] = feats
    if node.children:
        out["children"] = [_node_dict(c, batch_size, seq_len, resources)
                           for c in node.children]
    return out


def export_tree(req: ExportRequest) -> dict:
    """Trace the requested model once and write a schema-exact tree file.

    Returns the written document. A sidecar ``<output>.meta.json`` records
    whether resource features were measured and how many nodes the
    profiler log covered.
    """
    model, input_builder = build_model(req.model)
    try:
        device = torch.device(req.device)
        model = model.to(device)
        args = input_builder(req.batch_size, req.seq_len, device)
    except (RuntimeError, AssertionError) as e:
        raise ExportError(f"cannot prepare model on device '{req.device}': {e}") from e

    root = trace_model(model, args)
    resources = load_profile(req.profile) if req.profile else {}
    doc = {
        "model_name": req.model,
        "batch_size": req.batch_size,
        "seq_len": req.seq_len,
        "root": _node_dict(root, req.batch_size, req.seq_len, resources),
    }

    out_path = Path(req.output)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as f:
        json.dump(doc, f, indent=1)
        f.write("\n")

    node_names = _collect_names(root)
    covered = sum(1 for n in node_names if n in resources)
    meta = {
        "model": req.model,
        "device": req.device,
        "resource_features_measured": bool(req.profile),
        "nodes": len(node_names),
        "nodes_with_resource_features": covered,
    }
    with open(f"{out_path}.meta.json", "w", encoding="utf-8") as f:
        json.dump(meta, f, indent=1)
        f.write("\n")
    if not req.profile:
        print(f"note: resource features unmeasured, written as zeros "
              f"(see {out_path}.meta.json)", file=sys.stderr)
    return doc


def _collect_names(root: TraceNode) -> list[str]:
    out = []

    def rec(n):
        out.append(n.name)
        for c in n.children:
            rec(c)

    rec(root)
    return out
