"""Central finite-difference verification of reverse-mode gradients.

The checker and the autodiff engine share no code beyond numpy arithmetic, so
they act as independent routes to the same derivative. All checking runs in
verification precision (float64); training precision is far too coarse for
second-order-accurate differences.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .errors import InputError, NumericError
from .tensor import Tensor


def grad_check(
    f: Callable[[], Tensor],
    params: Sequence[Tensor],
    eps: float = 1e-5,
) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    ``f`` must be a pure function of ``params`` returning a scalar Tensor; it is
    re-evaluated with each coordinate of each parameter displaced by +/- eps.
    The relative error for a coordinate is |ad - fd| / max(1, |ad|, |fd|), and
    the maximum over every coordinate of every parameter is returned.
    """
    if not (1e-6 <= eps <= 1e-4):
        raise InputError(f"eps must lie in [1e-6, 1e-4], got {eps}")
    params = list(params)
    for p in params:
        if p.dtype != np.float64:
            raise InputError("grad_check requires verification precision (float64) parameters")
        if not p.requires_grad:
            raise InputError("grad_check parameters must have requires_grad=True")

    for p in params:
        p.grad = None
    out = f()
    if out.size != 1:
        raise InputError(f"f must return a scalar, got shape {out.shape}")
    if not np.isfinite(out.data).all():
        raise NumericError("f is non-finite at the base point")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else np.array(p.grad, copy=True) for p in params]

    # Probe without graph construction: flip tracking off, nudge, evaluate.
    flags = [p.requires_grad for p in params]
    for p in params:
        p.requires_grad = False
    worst = 0.0
    try:
        for p, ad in zip(params, analytic):
            if not p.data.flags["C_CONTIGUOUS"]:
                p.data = np.ascontiguousarray(p.data)
            flat = p.data.reshape(-1)
            ad_flat = ad.reshape(-1)
            for i in range(flat.size):
                orig = flat[i]
                flat[i] = orig + eps
                hi = f().item()
                flat[i] = orig - eps
                lo = f().item()
                flat[i] = orig
                if not (np.isfinite(hi) and np.isfinite(lo)):
                    raise NumericError(f"f is non-finite at a probe point (coordinate {i})")
                fd = (hi - lo) / (2.0 * eps)
                err = abs(ad_flat[i] - fd) / max(1.0, abs(ad_flat[i]), abs(fd))
                if err > worst:
                    worst = err
    finally:
        for p, flag in zip(params, flags):
            p.requires_grad = flag
    return worst
