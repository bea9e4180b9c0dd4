"""Adaptive Simpson quadrature for integrands given through their logarithm.

The integrand is rescaled by its largest sampled value before
exponentiation, so integrals far below the double-precision range are
returned accurately as logarithms. Intervals are refined breadth-first,
one vectorised integrand call per level.
"""

from __future__ import annotations

import math
from typing import Callable

import numpy as np

from .errors import ConvergenceError


def log_integrate(
    logf: Callable[[np.ndarray], np.ndarray],
    a: float,
    b: float,
    rtol: float = 1e-10,
    n_init: int = 64,
    max_depth: int = 50,
    max_intervals: int = 200_000,
) -> float:
    """ln of the integral of exp(logf) over [a, b]; -inf for an empty integral."""
    if not b > a:
        return -math.inf
    x = np.linspace(a, b, 2 * n_init + 1)
    L = np.asarray(logf(x), dtype=float)
    finite = L[np.isfinite(L)]
    if finite.size == 0:
        # the integrand may still be supported between samples
        x = np.linspace(a, b, 64 * n_init + 1)
        L = np.asarray(logf(x), dtype=float)
        finite = L[np.isfinite(L)]
        if finite.size == 0:
            return -math.inf
    shift = float(finite.max())

    def f(t):
        with np.errstate(invalid="ignore"):
            v = np.exp(np.asarray(logf(t), dtype=float) - shift)
        return np.where(np.isnan(v), 0.0, v)

    fx = np.exp(L - shift)
    fx = np.where(np.isnan(fx), 0.0, fx)
    left, right = x[:-2:2], x[2::2]
    fl, fm, fr = fx[:-2:2], fx[1:-1:2], fx[2::2]
    whole = (right - left) / 6 * (fl + 4 * fm + fr)
    width = b - a

    done = 0.0
    for _ in range(max_depth):
        mid = 0.5 * (left + right)
        flm = f(0.5 * (left + mid))
        frm = f(0.5 * (mid + right))
        sl = (mid - left) / 6 * (fl + 4 * flm + fm)
        sr = (right - mid) / 6 * (fm + 4 * frm + fr)
        err = sl + sr - whole
        total = done + float(np.sum(sl + sr))
        # either criterion bounds the summed error by rtol * total; the local one
        # keeps sharply peaked integrands from demanding sub-roundoff accuracy
        tol = 15 * rtol * np.maximum(max(total, 1e-300) * (right - left) / width, sl + sr)
        ok = np.abs(err) <= tol
        done += float(np.sum((sl + sr + err / 15)[ok]))
        keep = ~ok
        if not np.any(keep):
            return math.log(done) + shift if done > 0 else -math.inf
        if 2 * int(keep.sum()) > max_intervals:
            break
        left, mid, right = left[keep], mid[keep], right[keep]
        fl, fm, fr, flm, frm = fl[keep], fm[keep], fr[keep], flm[keep], frm[keep]
        sl, sr = sl[keep], sr[keep]
        left = np.concatenate([left, mid])
        right = np.concatenate([mid, right])
        whole = np.concatenate([sl, sr])
        fl, fm, fr = np.concatenate([fl, fm]), np.concatenate([flm, frm]), np.concatenate([fm, fr])
    raise ConvergenceError(
        f"adaptive quadrature on [{a:.6g}, {b:.6g}] did not reach rtol={rtol:g}",
        residual=float(np.max(np.abs(err))),
    )


def log_integrate_pieces(logf, breaks, rtol: float = 1e-10) -> float:
    """Sum of :func:`log_integrate` over consecutive break points, as a log."""
    logs = [log_integrate(logf, lo, hi, rtol) for lo, hi in zip(breaks[:-1], breaks[1:]) if hi > lo]
    logs = [v for v in logs if v > -math.inf]
    if not logs:
        return -math.inf
    top = max(logs)
    return top + math.log(sum(math.exp(v - top) for v in logs))
