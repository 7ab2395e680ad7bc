"""Pure-numpy fallback kernels, vectorized level by level.

Same contracts as the jitted versions; the extra ``depth`` argument
(precomputed at pack time) drives the per-level vectorization. Trees are
at most a handful of levels deep, so the python-level loop is short.
"""

import numpy as np


def _levels(depth):
    return range(int(depth.max()), 0, -1) if depth.size else range(0)


def sum_forward(parent, is_leaf, leaf_pred, depth):
    n = parent.shape[0]
    pred = np.where(is_leaf, leaf_pred, 0.0)
    for lev in _levels(depth):
        sel = np.nonzero(depth == lev)[0]
        pred = pred + np.bincount(parent[sel], weights=pred[sel], minlength=n)
    return pred


def calibrated_forward(feats, parent, is_leaf, leaf_pred, w, b, tau, depth):
    n = parent.shape[0]
    t = np.tanh(feats @ w + b)
    a = 1.0 + t / tau
    pred = np.where(is_leaf, leaf_pred, 0.0)
    for lev in _levels(depth):
        sel = np.nonzero(depth == lev)[0]
        pred = pred + np.bincount(parent[sel], weights=a[sel] * pred[sel], minlength=n)
    return pred, t


def end2end_loss_grad(feats, parent, is_leaf, leaf_pred, gt, w, b, tau, depth):
    n = parent.shape[0]
    pred, t = calibrated_forward(feats, parent, is_leaf, leaf_pred, w, b, tau, depth)
    a = 1.0 + t / tau

    internal = ~is_leaf
    r = (pred[internal] - gt[internal]) / gt[internal]
    loss = float(r @ r)

    adj = np.zeros(n)
    adj[internal] = 2.0 * r / gt[internal]
    maxlev = int(depth.max()) if depth.size else 0
    for lev in range(1, maxlev + 1):
        sel = np.nonzero(depth == lev)[0]
        adj[sel] += adj[parent[sel]] * a[sel]

    nonroot = parent >= 0
    c = adj[parent[nonroot]] * pred[nonroot] * (1.0 - t[nonroot] ** 2) / tau
    gw = feats[nonroot].T @ c
    gb = float(c.sum())
    return loss, gw, gb


def stepwise_loss_grad(feats, parent, is_leaf, gt, w, b, tau):
    n = parent.shape[0]
    t = np.tanh(feats @ w + b)
    a = 1.0 + t / tau

    nonroot = parent >= 0
    s = np.bincount(parent[nonroot], weights=a[nonroot] * gt[nonroot], minlength=n)

    internal = ~is_leaf
    r = (s[internal] - gt[internal]) / gt[internal]
    loss = float(r @ r)

    coef = np.zeros(n)
    coef[internal] = 2.0 * r / gt[internal]
    c = coef[parent[nonroot]] * gt[nonroot] * (1.0 - t[nonroot] ** 2) / tau
    gw = feats[nonroot].T @ c
    gb = float(c.sum())
    return loss, gw, gb
