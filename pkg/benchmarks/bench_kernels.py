#!/usr/bin/env python3
"""Benchmark the jitted kernels against the pure-numpy fallback.

Builds a packed synthetic forest, times the hot training kernel
(loss + gradient over the whole forest, i.e. one optimizer epoch) and the
prediction kernel on both backends, and checks the outputs agree.

Usage: python benchmarks/bench_kernels.py [--repeats 200] [--scale 4]
"""

import argparse
import time

import numpy as np

from treewatt.featurization import FeatureSubset, fit_normalizer
from treewatt.kernels import _numba, _numpy
from treewatt.leaf_regressors import predict_leaves, train_leaf_regressors
from treewatt.packing import pack_forest
from treewatt.synthetic import generate_scenario


def _build_forest(scale: int):
    trees, _ = generate_scenario("biased")
    trees = trees * scale
    leaf_regs = train_leaf_regressors(trees)
    nodes = [n for t in trees for n in t.root.walk() if n is not t.root]
    norm = fit_normalizer(nodes, FeatureSubset.ALL)
    leaf_preds = [predict_leaves(leaf_regs, t) for t in trees]
    return pack_forest(trees, norm, leaf_preds)


def _time(fn, repeats):
    fn()  # warmup (includes JIT compilation for the numba path)
    start = time.perf_counter()
    for _ in range(repeats):
        result = fn()
    return (time.perf_counter() - start) / repeats, result


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=200)
    parser.add_argument("--scale", type=int, default=4,
                        help="replicate the scenario forest this many times")
    args = parser.parse_args()

    pf = _build_forest(args.scale)
    rng = np.random.default_rng(0)
    w = rng.normal(0, 0.3, size=pf.feats.shape[1])
    b = 0.1
    tau = 10.0
    print(f"forest: {pf.n_trees} trees, {pf.n_nodes} nodes, "
          f"depth {int(pf.depth.max())}, {pf.feats.shape[1]} features")

    rows = []

    t_nb, grad_nb = _time(lambda: _numba.end2end_loss_grad(
        pf.feats, pf.parent, pf.is_leaf, pf.leaf_pred, pf.gt, w, b, tau), args.repeats)
    t_np, grad_np = _time(lambda: _numpy.end2end_loss_grad(
        pf.feats, pf.parent, pf.is_leaf, pf.leaf_pred, pf.gt, w, b, tau, pf.depth),
        args.repeats)
    assert np.isclose(grad_nb[0], grad_np[0], rtol=1e-10)
    assert np.allclose(grad_nb[1], grad_np[1], rtol=1e-9, atol=1e-12)
    rows.append(("end2end loss+grad (1 epoch)", t_nb, t_np))

    t_nb, (pred_nb, _) = _time(lambda: _numba.calibrated_forward(
        pf.feats, pf.parent, pf.is_leaf, pf.leaf_pred, w, b, tau), args.repeats)
    t_np, (pred_np, _) = _time(lambda: _numpy.calibrated_forward(
        pf.feats, pf.parent, pf.is_leaf, pf.leaf_pred, w, b, tau, pf.depth), args.repeats)
    assert np.allclose(pred_nb, pred_np, rtol=1e-10)
    rows.append(("calibrated forward", t_nb, t_np))

    t_nb, g_nb = _time(lambda: _numba.stepwise_loss_grad(
        pf.feats, pf.parent, pf.is_leaf, pf.gt, w, b, tau), args.repeats)
    t_np, g_np = _time(lambda: _numpy.stepwise_loss_grad(
        pf.feats, pf.parent, pf.is_leaf, pf.gt, w, b, tau), args.repeats)
    assert np.isclose(g_nb[0], g_np[0], rtol=1e-10)
    rows.append(("stepwise loss+grad", t_nb, t_np))

    print(f"\n{'kernel':32s} {'numba':>12s} {'numpy':>12s} {'speedup':>9s}")
    for name, t_nb, t_np in rows:
        print(f"{name:32s} {t_nb * 1e6:10.1f}us {t_np * 1e6:10.1f}us {t_np / t_nb:8.1f}x")
    print("\nbackend outputs agree within 1e-10 relative tolerance")


if __name__ == "__main__":
    main()
