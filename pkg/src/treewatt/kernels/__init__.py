"""Backend dispatch for the tree-recursion kernels.

Set ``TREEWATT_BACKEND=numpy`` to force the pure-numpy path; the default
is the numba-jitted path when numba imports cleanly. Both backends are
deterministic; they may differ from each other in the last few ulps
because their summation orders differ (see benchmarks/bench_kernels.py).
"""

import os

from . import _numpy

_ENV_VAR = "TREEWATT_BACKEND"


def _pick_backend() -> str:
    choice = os.environ.get(_ENV_VAR, "").strip().lower()
    if choice == "numpy":
        return "numpy"
    if choice not in ("", "numba"):
        raise ValueError(f"{_ENV_VAR} must be 'numba' or 'numpy' (got {choice!r})")
    try:
        from . import _numba  # noqa: F401
    except ImportError:
        if choice == "numba":
            raise
        return "numpy"
    return "numba"


BACKEND = _pick_backend()

if BACKEND == "numba":
    from . import _numba

    def sum_forward(parent, is_leaf, leaf_pred, depth):
        return _numba.sum_forward(parent, is_leaf, leaf_pred)

    def calibrated_forward(feats, parent, is_leaf, leaf_pred, w, b, tau, depth):
        return _numba.calibrated_forward(feats, parent, is_leaf, leaf_pred, w, b, tau)

    def end2end_loss_grad(feats, parent, is_leaf, leaf_pred, gt, w, b, tau, depth):
        return _numba.end2end_loss_grad(feats, parent, is_leaf, leaf_pred, gt, w, b, tau)

    def stepwise_loss_grad(feats, parent, is_leaf, gt, w, b, tau):
        return _numba.stepwise_loss_grad(feats, parent, is_leaf, gt, w, b, tau)

else:
    sum_forward = _numpy.sum_forward
    calibrated_forward = _numpy.calibrated_forward
    end2end_loss_grad = _numpy.end2end_loss_grad
    stepwise_loss_grad = _numpy.stepwise_loss_grad
