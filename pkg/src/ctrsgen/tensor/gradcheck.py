"""Finite-difference gradient verification."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .core import Tensor, backward


def grad_check(
    fn: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    eps: float = 1e-6,
    coords: dict[int, np.ndarray] | None = None,
) -> float:
    """Max over checked coordinates of |analytic - central difference| /
    max(1, |analytic|).

    ``inputs`` are converted to float64 leaves.  ``coords`` optionally maps an
    input position to the flat indices to check; all coordinates otherwise.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    xs = [Tensor(np.array(t.data if isinstance(t, Tensor) else t, dtype=np.float64), requires_grad=True) for t in inputs]
    out = fn(*xs)
    if not np.all(np.isfinite(out.data)):
        raise FloatingPointError("grad_check: non-finite function value")
    backward(out)
    worst = 0.0
    for k, x in enumerate(xs):
        analytic = x.grad.reshape(-1)
        flat = x.data.reshape(-1)
        idx = range(flat.size) if coords is None or k not in coords else coords[k]
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = float(fn(*xs).data)
            flat[i] = orig - eps
            fm = float(fn(*xs).data)
            flat[i] = orig
            if not (np.isfinite(fp) and np.isfinite(fm)):
                raise FloatingPointError(f"grad_check: non-finite value at input {k}, coordinate {i}")
            numeric = (fp - fm) / (2 * eps)
            err = abs(analytic[i] - numeric) / max(1.0, abs(analytic[i]))
            worst = max(worst, err)
    return worst
