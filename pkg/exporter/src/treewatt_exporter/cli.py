"""CLI: export a model tree file from a PyTorch model."""

from __future__ import annotations

import argparse
import json
import sys

from .export import ExportRequest, export_tree
from .tracing import ExportError


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="treewatt-export",
        description="Export a treewatt model-tree JSON file from a PyTorch model")
    parser.add_argument("--model", required=True,
                        help="tiny-encoder | tiny-lstm | hf-config:<bert|gpt2>")
    parser.add_argument("--batch-size", type=int, default=1)
    parser.add_argument("--seq-len", type=int, default=8)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--profile", default=None,
                        help="profiler CSV (node_name + resource feature columns)")
    parser.add_argument("-o", "--output", required=True)
    args = parser.parse_args(argv)

    try:
        doc = export_tree(ExportRequest(
            model=args.model, batch_size=args.batch_size, seq_len=args.seq_len,
            output=args.output, device=args.device, profile=args.profile))
    except (ExportError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1

    def count(node):
        return 1 + sum(count(c) for c in node.get("children", []))

    print(json.dumps({"command": "export", "model": args.model,
                      "output": args.output, "nodes": count(doc["root"])},
                     sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
