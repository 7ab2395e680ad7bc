"""Command-line entry point.

Every subcommand writes its outputs under one directory (``-o``, or the
``TREEWATT_OUT`` environment variable, default ``./out``), never mutates
its inputs, and ends by printing a single machine-readable JSON summary
line. Exit codes: 0 success, 1 usage error, 2 validation failure,
3 training failure.
"""

from __future__ import annotations

import argparse
import glob
import json
import os
import sys
from pathlib import Path

from . import analysis, baseline, evaluation, synthetic
from .featurization import FeatureSubset
from .leaf_regressors import PrimitiveRegressorSet, predict_leaves, train_leaf_regressors
from .model_tree import ModelTree, TreeFormatError, load_tree, render_annotated, save_tree, tree_key, validate
from .tree_regressors import (
    TrainingConfig,
    TrainingError,
    TreeRegressorParams,
    UnstructuredParams,
    end2end_predict,
    file_sha256,
    predict_sum,
    train_end2end,
    train_stepwise,
    train_unstructured,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_TRAINING = 3


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _summary(payload: dict):
    print(json.dumps(payload, sort_keys=True))


def _out_dir(args) -> Path:
    out = Path(args.out or os.environ.get("TREEWATT_OUT", "out"))
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_json(path: Path, payload):
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)
        f.write("\n")


def _expand_tree_paths(specs: list[str]) -> list[Path]:
    paths: list[Path] = []
    for spec in specs:
        p = Path(spec)
        if p.is_dir():
            paths.extend(sorted(p.glob("*.json")))
        elif p.exists():
            paths.append(p)
        else:
            matches = sorted(glob.glob(spec))
            if not matches:
                raise ValueError(f"no tree files match '{spec}'")
            paths.extend(Path(m) for m in matches)
    if not paths:
        raise ValueError("no input tree files")
    return paths


def _load_trees(specs: list[str]) -> tuple[list[ModelTree], list[Path]]:
    paths = _expand_tree_paths(specs)
    return [load_tree(p) for p in paths], paths


def _int_list(text: str) -> tuple[int, ...]:
    return tuple(int(x) for x in text.split(",") if x.strip())


def _hyper_from_args(args) -> TrainingConfig:
    return TrainingConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        tau=args.tau,
        seed=args.seed,
        subset=FeatureSubset(args.subset),
    )


def _add_hyper_flags(p: argparse.ArgumentParser):
    p.add_argument("--subset", choices=[s.value for s in FeatureSubset], default="all")
    p.add_argument("--lr", type=float, default=0.001)
    p.add_argument("--epochs", type=int, default=500)
    p.add_argument("--tau", type=float, default=10.0)
    p.add_argument("--seed", type=int, default=0)


# ---------------------------------------------------------------------------
# Subcommands


def cmd_synth(args) -> int:
    out = _out_dir(args)
    if args.scenario:
        trees, oracle = synthetic.generate_scenario(args.scenario, seed=args.seed)
    else:
        spec = synthetic.SyntheticSpec(
            model_name=args.model_name,
            n_layers=args.layers,
            primitives_per_block=tuple(args.block_primitives.split(",")),
            batch_sizes=_int_list(args.batch_sizes),
            seq_lens=_int_list(args.seq_lens),
            seed=args.seed,
            module_bias_range=(args.bias_lo, args.bias_hi),
            include_pooler=not args.no_pooler,
        )
        trees, oracle = synthetic.generate_dataset(spec)
    tree_dir = out / "trees"
    for tree in trees:
        save_tree(tree, tree_dir / f"{tree_key(tree)}.json")
    oracle.save(out / "oracle.json")
    _summary({"command": "synth", "trees": len(trees),
              "models": sorted({t.model_name for t in trees}), "out": str(out)})
    return EXIT_OK


def cmd_train(args) -> int:
    out = _out_dir(args)
    trees, _ = _load_trees(args.trees)
    cfg = _hyper_from_args(args)
    subset = cfg.subset

    leaf_regs = train_leaf_regressors(trees, subset, fallback_generic=args.fallback_generic)
    leaf_path = out / "leaf_regressors.json"
    leaf_regs.save(leaf_path)

    written = [str(leaf_path)]
    if args.regressor in ("end2end", "stepwise"):
        if args.regressor == "end2end":
            params = train_end2end(trees, leaf_regs, cfg)
        else:
            params = train_stepwise(trees, cfg)
        params.leaf_regs_sha256 = file_sha256(leaf_path)
        tree_path = out / "tree_regressor.json"
        params.save(tree_path)
        written.append(str(tree_path))
    elif args.regressor == "unstructured":
        params = train_unstructured(trees, cfg)
        upath = out / "unstructured.json"
        _write_json(upath, params.to_dict())
        written.append(str(upath))
    # predicted_sum has no parameters to train

    _summary({"command": "train", "regressor": args.regressor,
              "trees": len(trees), "files": written})
    return EXIT_OK


def cmd_predict(args) -> int:
    out = _out_dir(args)
    tree = load_tree(args.tree)
    violations = validate(tree)
    if violations:
        for v in violations:
            print(v, file=sys.stderr)
        raise ValueError(f"input tree has {len(violations)} validation violations")

    leaf_regs = PrimitiveRegressorSet.load(args.leaf_regs)
    leaf_preds = predict_leaves(leaf_regs, tree)
    if args.tree_regs:
        params = TreeRegressorParams.load(args.tree_regs)
        preds = end2end_predict(params, tree, leaf_preds)
        kind = params.kind
    else:
        preds = predict_sum(tree, leaf_preds)
        kind = "predicted_sum"

    _write_json(out / "predictions.json", {k: preds[k] for k in preds})
    with open(out / "predictions.csv", "w", encoding="utf-8", newline="") as f:
        f.write("node_name,predicted_j\n")
        for name, val in preds.items():
            f.write(f"{name},{val!r}\n")
    rendering = render_annotated(tree, preds)
    (out / "render.txt").write_text(rendering, encoding="utf-8")
    print(rendering, end="")
    _summary({"command": "predict", "regressor": kind, "tree": tree_key(tree),
              "root_joules": preds[tree.root.name], "out": str(out)})
    return EXIT_OK


def _trace_map(tree_paths: list[Path], trees: list[ModelTree], trace_dir: str | None):
    traces = {}
    for path, tree in zip(tree_paths, trees):
        base = Path(trace_dir) if trace_dir else path.parent
        trace_path = base / f"{path.stem}.trace.csv"
        if trace_path.exists():
            traces[tree_key(tree)] = baseline.load_trace(trace_path)
    return traces


def cmd_eval(args) -> int:
    out = _out_dir(args)
    trees, paths = _load_trees(args.trees)
    cfg = _hyper_from_args(args)
    traces = _trace_map(paths, trees, args.traces) if args.regressor == "baseline" else None
    report = evaluation.run_eval(trees, args.regressor, cfg.subset, cfg,
                                 traces=traces, fallback_generic=args.fallback_generic)
    _write_json(out / "report.json", report.to_dict())
    report.write_records_csv(out / "records.csv")
    report.write_cdf_csv(out / "cdf.csv")
    _summary({"command": "eval", "regressor": args.regressor,
              "pooled_by_model": report.pooled_by_model, "out": str(out)})
    return EXIT_OK


def cmd_ablate_features(args) -> int:
    out = _out_dir(args)
    trees, _ = _load_trees(args.trees)
    cfg = _hyper_from_args(args)
    reports = evaluation.ablate_features(trees, cfg)
    table = evaluation.ablation_table(reports)
    _write_json(out / "ablation_features.json",
                {arm: r.to_dict() for arm, r in reports.items()})
    _write_table_csv(out / "ablation_features.csv", table)
    _summary({"command": "ablate-features",
              "model_level": {row["arm"]: row["model"] for row in table}})
    return EXIT_OK


def cmd_ablate_regressors(args) -> int:
    out = _out_dir(args)
    trees, _ = _load_trees(args.trees)
    cfg = _hyper_from_args(args)
    reports = evaluation.ablate_regressors(trees, cfg, cfg.subset)
    table = evaluation.ablation_table(reports)
    _write_json(out / "ablation_regressors.json",
                {arm: r.to_dict() for arm, r in reports.items()})
    _write_table_csv(out / "ablation_regressors.csv", table)
    _summary({"command": "ablate-regressors",
              "model_level": {row["arm"]: row["model"] for row in table}})
    return EXIT_OK


def _write_table_csv(path: Path, table: list[dict]):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write("arm," + ",".join(evaluation.LEVELS) + "\n")
        for row in table:
            cells = [row["arm"]] + [
                "" if row[lev] is None else repr(row[lev]) for lev in evaluation.LEVELS]
            f.write(",".join(cells) + "\n")


def cmd_bottleneck(args) -> int:
    out = _out_dir(args)
    trees, _ = _load_trees(args.trees)
    leaf_regs = PrimitiveRegressorSet.load(args.leaf_regs)
    params = TreeRegressorParams.load(args.tree_regs) if args.tree_regs else None

    by_model: dict[str, list[ModelTree]] = {}
    for t in trees:
        by_model.setdefault(t.model_name, []).append(t)

    rows = []
    for model, group in by_model.items():
        preds = []
        for tree in group:
            leaf_preds = predict_leaves(leaf_regs, tree)
            preds.append(end2end_predict(params, tree, leaf_preds) if params
                         else predict_sum(tree, leaf_preds))
        shares = analysis.bottleneck_breakdown(group, preds,
                                               renormalize=args.renormalize_bottlenecks)
        rows.extend((model, t, pct) for t, pct in shares.items())

    with open(out / "bottlenecks.csv", "w", encoding="utf-8", newline="") as f:
        f.write("model_name,module_type,energy_pct\n")
        for model, t, pct in rows:
            f.write(f"{model},{t},{pct!r}\n")
    _summary({"command": "bottleneck", "models": sorted(by_model),
              "rows": len(rows), "out": str(out)})
    return EXIT_OK


def cmd_tradeoff(args) -> int:
    out = _out_dir(args)
    candidates = analysis.load_candidates(args.candidates)
    front = analysis.pareto_front(candidates)
    with open(out / "pareto.csv", "w", encoding="utf-8", newline="") as f:
        f.write("model_name,accuracy,predicted_energy_j\n")
        for c in front:
            f.write(f"{c.model_name},{c.accuracy!r},{c.predicted_energy!r}\n")
    payload = {"command": "tradeoff", "pareto": [c.model_name for c in front]}
    if args.budget is not None:
        best = analysis.tradeoff_select(candidates, args.budget)
        payload["selected"] = best.model_name
        payload["accuracy"] = best.accuracy
        payload["predicted_energy_j"] = best.predicted_energy
    _summary(payload)
    return EXIT_OK


def cmd_cost(args) -> int:
    kwh, usd = analysis.cost_of_queries(args.energy_per_query, args.queries, args.usd_per_kwh)
    if args.out:
        out = _out_dir(args)
        (out / "cost.csv").write_text(
            "energy_per_query_j,queries,usd_per_kwh,kwh,usd\n"
            f"{args.energy_per_query!r},{args.queries!r},{args.usd_per_kwh!r},"
            f"{kwh!r},{usd!r}\n", encoding="utf-8")
    _summary({"command": "cost", "kwh": kwh, "usd": usd,
              "queries": args.queries, "energy_per_query_j": args.energy_per_query})
    return EXIT_OK


def cmd_integrate_power(args) -> int:
    samples = analysis.load_power_log(args.log)
    joules = analysis.integrate_power(samples, interval=args.interval)
    if args.out:
        out = _out_dir(args)
        (out / "energy.csv").write_text(
            f"samples,interval_s,joules\n{len(samples)},{args.interval!r},{joules!r}\n",
            encoding="utf-8")
    _summary({"command": "integrate-power", "samples": len(samples),
              "interval_s": args.interval, "joules": joules})
    return EXIT_OK


def cmd_validate(args) -> int:
    trees, paths = _load_trees(args.trees)
    total = 0
    for path, tree in zip(paths, trees):
        for violation in validate(tree):
            print(f"{path}: {violation}")
            total += 1
    _summary({"command": "validate", "files": len(trees), "violations": total})
    return EXIT_OK if total == 0 else EXIT_VALIDATION


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="treewatt",
                     description="Interpretable inference-energy prediction over model trees")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("--scenario", choices=["linear", "biased"], default=None)
    p.add_argument("--model-name", default="SynthFormer")
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--block-primitives", default="Linear,GELU")
    p.add_argument("--batch-sizes", default="8,16,24,32")
    p.add_argument("--seq-lens", default="32,64,96,128,160,192,224")
    p.add_argument("--bias-lo", type=float, default=1.0)
    p.add_argument("--bias-hi", type=float, default=1.0)
    p.add_argument("--no-pooler", action="store_true")
    p.add_argument("--seed", type=int, default=synthetic.DEFAULT_SCENARIO_SEED)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train leaf + tree regressors on labeled trees")
    p.add_argument("--trees", nargs="+", required=True)
    p.add_argument("--regressor", choices=["end2end", "stepwise", "unstructured", "predicted_sum"],
                   default="end2end")
    p.add_argument("--fallback-generic", action="store_true")
    _add_hyper_flags(p)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", help="predict and render one tree")
    p.add_argument("--tree", required=True)
    p.add_argument("--leaf-regs", required=True)
    p.add_argument("--tree-regs", default=None,
                   help="calibrated tree regressor; omit for plain predicted sum")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("eval", help="leave-one-model-out evaluation")
    p.add_argument("--trees", nargs="+", required=True)
    p.add_argument("--regressor", choices=list(evaluation.REGRESSOR_KINDS), default="end2end")
    p.add_argument("--traces", default=None,
                   help="directory of <tree-stem>.trace.csv files for the baseline")
    p.add_argument("--fallback-generic", action="store_true")
    _add_hyper_flags(p)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate-features", help="all vs model-only vs resource-only features")
    p.add_argument("--trees", nargs="+", required=True)
    _add_hyper_flags(p)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_ablate_features)

    p = sub.add_parser("ablate-regressors", help="compare the four aggregation schemes")
    p.add_argument("--trees", nargs="+", required=True)
    _add_hyper_flags(p)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_ablate_regressors)

    p = sub.add_parser("bottleneck", help="module-type energy breakdown")
    p.add_argument("--trees", nargs="+", required=True)
    p.add_argument("--leaf-regs", required=True)
    p.add_argument("--tree-regs", default=None)
    p.add_argument("--renormalize-bottlenecks", action="store_true")
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_bottleneck)

    p = sub.add_parser("tradeoff", help="energy/accuracy selection from a candidates file")
    p.add_argument("--candidates", required=True)
    p.add_argument("--budget", type=float, default=None)
    p.add_argument("-o", "--out", default=None)
    p.set_defaults(func=cmd_tradeoff)

    p = sub.add_parser("cost", help="kWh and USD for a query volume")
    p.add_argument("--energy-per-query", type=float, required=True, help="joules per query")
    p.add_argument("--queries", type=float, required=True)
    p.add_argument("--usd-per-kwh", type=float, default=0.1319)
    p.add_argument("-o", "--out", default=None, help="also write cost.csv here")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("integrate-power", help="joules from a V/I power log")
    p.add_argument("--log", required=True)
    p.add_argument("--interval", type=float, default=0.17)
    p.add_argument("-o", "--out", default=None, help="also write energy.csv here")
    p.set_defaults(func=cmd_integrate_power)

    p = sub.add_parser("validate", help="report tree invariant violations")
    p.add_argument("trees", nargs="+")
    p.set_defaults(func=cmd_validate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except TrainingError as e:
        print(f"training failed: {e}", file=sys.stderr)
        return EXIT_TRAINING
    except (TreeFormatError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
