"""JIT-compiled kernels over flattened tree arrays.

Nodes are stored in depth-first preorder, so a parent's index is always
smaller than its children's: iterating indices downward visits children
before parents (bottom-up), iterating upward visits parents first.
All kernels are serial so results are reproducible run to run.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def sum_forward(parent, is_leaf, leaf_pred):
    n = parent.shape[0]
    pred = np.zeros(n, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        if is_leaf[i]:
            pred[i] = leaf_pred[i]
        p = parent[i]
        if p >= 0:
            pred[p] += pred[i]
    return pred


@njit(cache=True)
def calibrated_forward(feats, parent, is_leaf, leaf_pred, w, b, tau):
    """Weighted-sum recursion: parent = sum over children of alpha(child)*pred(child),
    alpha = 1 + tanh(w.x + b)/tau. Returns (pred, tanh values per node)."""
    n, d = feats.shape
    pred = np.zeros(n, dtype=np.float64)
    t = np.zeros(n, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        if is_leaf[i]:
            pred[i] = leaf_pred[i]
        z = b
        for k in range(d):
            z += w[k] * feats[i, k]
        t[i] = math.tanh(z)
        p = parent[i]
        if p >= 0:
            pred[p] += (1.0 + t[i] / tau) * pred[i]
    return pred, t


@njit(cache=True)
def end2end_loss_grad(feats, parent, is_leaf, leaf_pred, gt, w, b, tau):
    """Relative-squared loss over internal nodes and its exact gradient.

    loss = sum_internal ((pred - gt)/gt)^2 with pred from calibrated_forward.
    The adjoint A[i] = dloss/dpred[i] accumulates top-down; parameters then
    collect contributions from every node that has a parent.
    """
    n, d = feats.shape
    pred = np.zeros(n, dtype=np.float64)
    t = np.zeros(n, dtype=np.float64)
    for i in range(n - 1, -1, -1):
        if is_leaf[i]:
            pred[i] = leaf_pred[i]
        z = b
        for k in range(d):
            z += w[k] * feats[i, k]
        t[i] = math.tanh(z)
        p = parent[i]
        if p >= 0:
            pred[p] += (1.0 + t[i] / tau) * pred[i]

    loss = 0.0
    adj = np.zeros(n, dtype=np.float64)
    for i in range(n):
        if not is_leaf[i]:
            r = (pred[i] - gt[i]) / gt[i]
            loss += r * r
            adj[i] = 2.0 * r / gt[i]
        p = parent[i]
        if p >= 0:
            adj[i] += adj[p] * (1.0 + t[i] / tau)

    gw = np.zeros(d, dtype=np.float64)
    gb = 0.0
    for i in range(n):
        p = parent[i]
        if p < 0:
            continue
        c = adj[p] * pred[i] * (1.0 - t[i] * t[i]) / tau
        gb += c
        for k in range(d):
            gw[k] += c * feats[i, k]
    return loss, gw, gb


@njit(cache=True)
def stepwise_loss_grad(feats, parent, is_leaf, gt, w, b, tau):
    """Per-node loss where a parent's training-time prediction is the
    alpha-weighted sum of its children's ground-truth energies (no recursion)."""
    n, d = feats.shape
    t = np.zeros(n, dtype=np.float64)
    s = np.zeros(n, dtype=np.float64)
    for i in range(n):
        z = b
        for k in range(d):
            z += w[k] * feats[i, k]
        t[i] = math.tanh(z)
        p = parent[i]
        if p >= 0:
            s[p] += (1.0 + t[i] / tau) * gt[i]

    loss = 0.0
    gw = np.zeros(d, dtype=np.float64)
    gb = 0.0
    for i in range(n):
        if is_leaf[i]:
            continue
        r = (s[i] - gt[i]) / gt[i]
        loss += r * r
    for i in range(n):
        p = parent[i]
        if p < 0:
            continue
        c = 2.0 * (s[p] - gt[p]) / (gt[p] * gt[p]) * gt[i] * (1.0 - t[i] * t[i]) / tau
        gb += c
        for k in range(d):
            gw[k] += c * feats[i, k]
    return loss, gw, gb
