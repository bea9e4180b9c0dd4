"""Spherical caps on S^{n-1}: exact measures, intersections and Monte Carlo.

Caps are measured with the normalised surface measure. Angles are geodesic
(radians). Measures that underflow doubles at large n are available as
logarithms through the ``log_*`` functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.optimize import brentq
from scipy.special import betainc, betaln, log_ndtr, ndtr

from ._quad import log_integrate, log_integrate_pieces
from .errors import InputError

RTOL = 1e-10
_CHUNK = 4096


def _check_n(n: int):
    if int(n) != n or n < 3:
        raise InputError("dimension n must be an integer >= 3")


def _log_sin_power(n: int):
    k = n - 2

    def logf(t):
        with np.errstate(divide="ignore"):
            return k * np.log(np.sin(t))

    return logf


@lru_cache(maxsize=None)
def _log_sphere_norm(n: int) -> float:
    return log_integrate(_log_sin_power(n), 0.0, math.pi, RTOL, n_init=128)


def log_cap_measure(theta: float, n: int) -> float:
    """ln mu(Cap(., theta)) by quadrature of sin^{n-2}."""
    _check_n(n)
    if not 0 <= theta <= math.pi:
        raise InputError("theta must lie in [0, pi]")
    if theta == 0:
        return -math.inf
    if theta >= math.pi:
        return 0.0
    if theta <= math.pi / 2:
        return log_integrate(_log_sin_power(n), 0.0, theta, RTOL) - _log_sphere_norm(n)
    return math.log1p(-math.exp(log_cap_measure(math.pi - theta, n)))


def cap_measure(theta: float, n: int) -> float:
    """Normalised area of a geodesic cap of angular radius ``theta``."""
    return math.exp(log_cap_measure(theta, n))


def effective_angle(measure: float, n: int) -> float:
    """Angular radius of the cap with the given measure, by bisection."""
    _check_n(n)
    if not 0 < measure < 1:
        raise InputError("measure must lie strictly between 0 and 1")
    lo, hi = 0.0, math.pi
    target = math.log(measure)
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid in (lo, hi):
            break
        if log_cap_measure(mid, n) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def cap_exponent_check(theta: float, n_list) -> list[tuple[int, float]]:
    """Rows (n, |ln mu(Cap)/n - ln sin theta|)."""
    ns = list(n_list)
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise InputError("n_list must be increasing")
    ref = math.log(math.sin(theta))
    return [(n, abs(log_cap_measure(theta, n) / n - ref)) for n in ns]


def _log_slice_fraction(one_minus: np.ndarray, one_plus: np.ndarray, n: int) -> np.ndarray:
    """ln of the fraction of S^{n-2} whose first coordinate is >= c.

    c enters through 1 - c and 1 + c, which callers supply without
    cancellation. Close to the equator the fraction is computed from
    I_{c^2}(1/2, a), towards the poles from I_{1-c^2}(a, 1/2); each form keeps
    full relative accuracy in its own range.
    """
    a = 0.5 * (n - 2)
    one_minus = np.clip(one_minus, 0.0, 2.0)
    one_plus = np.clip(one_plus, 0.0, 2.0)
    c = 0.5 * (one_plus - one_minus)
    c2 = c * c
    x = np.minimum(one_minus * one_plus, 1.0)
    tail = _log_half_betainc(a, x)  # fraction above |c|, accurate when small
    mid = 0.5 * betainc(0.5, a, c2)  # fraction between 0 and |c|
    with np.errstate(divide="ignore"):
        pos = np.where(mid <= 0.25, np.log(0.5 - mid), tail)
        neg = np.where(c2 < 0.5, np.log(0.5 + mid), np.log1p(-np.exp(tail)))
    return np.where(c >= 0, pos, neg)


def _log_half_betainc(a: float, x: np.ndarray) -> np.ndarray:
    """ln(I_x(a, 1/2) / 2), switching to a series where betainc underflows."""
    b = 0.5
    val = betainc(a, b, x)
    with np.errstate(divide="ignore"):
        out = np.log(val)
    small = (val < 1e-250) & (x > 0)
    if np.any(small):
        xs = x[small]
        # I_x(a,b) = x^a (1-x)^b / (a B(a,b)) * 2F1(a+b, 1; a+1; x)
        term = np.ones_like(xs)
        total = np.ones_like(xs)
        for k in range(100_000):
            term = term * (a + b + k) / (a + 1 + k) * xs
            total += term
            if np.all(term <= 1e-17 * total):
                break
        out[small] = a * np.log(xs) + b * np.log1p(-xs) - math.log(a) - betaln(a, b) + np.log(total)
    return out - math.log(2.0)


def log_cap_intersection(theta: float, omega: float, n: int, beta: float = math.pi / 2) -> float:
    """ln mu(Cap(z0, theta) ∩ Cap(y0, omega)) with angle(z0, y0) = beta.

    Integrates over the angle t to z0; each slice {angle = t} is an
    (n-2)-sphere whose part inside the second cap is given by an incomplete
    beta function.
    """
    _check_n(n)
    for name, v in (("theta", theta), ("omega", omega), ("beta", beta)):
        if not 0 <= v <= math.pi:
            raise InputError(f"{name} must lie in [0, pi]")
    if theta == 0 or omega == 0 or beta >= theta + omega:
        return -math.inf
    if omega >= math.pi or beta + theta <= omega:
        return log_cap_measure(theta, n)
    if theta >= math.pi or beta + omega <= theta:
        return log_cap_measure(omega, n)
    if beta == math.pi:
        lo = math.pi - omega
        if theta <= lo:
            return -math.inf
        return _log_diff(log_cap_measure(theta, n), log_cap_measure(lo, n))

    sin_b = math.sin(beta)
    logsin = _log_sin_power(n)

    def logf(t):
        with np.errstate(divide="ignore", invalid="ignore"):
            denom = np.sin(t) * sin_b
            # 1 - c and 1 + c for c = (cos w - cos t cos b) / (sin t sin b)
            one_minus = 2 * np.sin(0.5 * (omega + t - beta)) * np.sin(0.5 * (omega - t + beta)) / denom
            one_plus = 2 * np.sin(0.5 * (t + beta + omega)) * np.sin(0.5 * (t + beta - omega)) / denom
            one_minus = np.nan_to_num(one_minus, nan=1.0, posinf=2.0, neginf=0.0)
            one_plus = np.nan_to_num(one_plus, nan=1.0, posinf=2.0, neginf=0.0)
            lf = _log_slice_fraction(one_minus, one_plus, n)
        return logsin(t) + lf

    lo = max(0.0, beta - omega)
    hi = min(theta, beta + omega)
    breaks = [lo, hi]
    for kink in (omega - beta, 2 * math.pi - omega - beta):
        if lo < kink < hi:
            breaks.append(kink)
    breaks.sort()
    return log_integrate_pieces(logf, breaks, RTOL) - _log_sphere_norm(n)


def cap_intersection_measure(theta: float, omega: float, n: int, beta: float = math.pi / 2) -> float:
    """V(theta, omega): measure of two intersecting caps, poles perpendicular by default."""
    return math.exp(log_cap_intersection(theta, omega, n, beta))


def intersection_exponent_limit(theta: float, omega: float) -> float:
    """Large-n limit of ln V(theta, omega) / n for perpendicular poles."""
    d = math.sin(theta) ** 2 - math.cos(omega) ** 2
    if d <= 0:
        raise InputError("limit defined only when sin^2 theta > cos^2 omega")
    return 0.5 * math.log(d)


def _log_diff(la: float, lb: float) -> float:
    """ln(e^la - e^lb) for la >= lb."""
    if lb == -math.inf:
        return la
    if la <= lb:
        return -math.inf
    return la + math.log1p(-math.exp(lb - la))


# ---------------------------------------------------------------------------
# Sets on the sphere


def _unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        raise InputError("pole must be nonzero")
    return v / nrm


def _angle(u: np.ndarray, v: np.ndarray) -> float:
    return float(np.arccos(np.clip(u @ v, -1.0, 1.0)))


@dataclass(frozen=True)
class SphericalSet:
    """Cap, union of disjoint caps, or band {|angle to pole - pi/2| <= width}."""

    kind: str
    poles: np.ndarray
    angles: np.ndarray

    def __post_init__(self):
        if self.kind not in ("cap", "capUnion", "band"):
            raise InputError(f"unknown set kind {self.kind!r}")
        P = np.atleast_2d(np.asarray(self.poles, dtype=float))
        P = P / np.linalg.norm(P, axis=1, keepdims=True)
        ang = np.atleast_1d(np.asarray(self.angles, dtype=float))
        if P.shape[0] != ang.shape[0]:
            raise InputError("one angle per pole required")
        _check_n(P.shape[1])
        if self.kind in ("cap", "band") and P.shape[0] != 1:
            raise InputError(f"a {self.kind} has exactly one pole")
        if self.kind == "band":
            if not 0 < ang[0] <= math.pi / 2:
                raise InputError("band half-width must lie in (0, pi/2]")
        elif np.any(ang <= 0) or np.any(ang > math.pi):
            raise InputError("cap angles must lie in (0, pi]")
        if self.kind == "capUnion":
            for i in range(len(ang)):
                for j in range(i):
                    if _angle(P[i], P[j]) < ang[i] + ang[j] - 1e-12:
                        raise InputError("caps in a union must be disjoint")
        object.__setattr__(self, "poles", P)
        object.__setattr__(self, "angles", ang)

    @classmethod
    def cap(cls, theta: float, n: int, pole=None) -> "SphericalSet":
        return cls("cap", _default_pole(n) if pole is None else _unit(pole), [theta])

    @classmethod
    def cap_union(cls, thetas, poles) -> "SphericalSet":
        return cls("capUnion", np.asarray(poles, dtype=float), thetas)

    @classmethod
    def band(cls, half_width: float, n: int, pole=None) -> "SphericalSet":
        return cls("band", _default_pole(n) if pole is None else _unit(pole), [half_width])

    @property
    def n(self) -> int:
        return self.poles.shape[1]

    @property
    def cap_structured(self) -> bool:
        return self.kind in ("cap", "capUnion")

    def log_measure(self) -> float:
        if self.kind == "band":
            return math.log1p(-2 * cap_measure(math.pi / 2 - self.angles[0], self.n))
        return _logsumexp([log_cap_measure(t, self.n) for t in self.angles])

    def measure(self) -> float:
        return math.exp(self.log_measure())

    def distance(self, x: np.ndarray) -> np.ndarray:
        """Geodesic distance from unit rows of ``x`` to the set."""
        psi = np.arccos(np.clip(x @ self.poles.T, -1.0, 1.0))
        if self.kind == "band":
            return np.maximum(0.0, np.abs(psi[:, 0] - math.pi / 2) - self.angles[0])
        return np.min(np.maximum(0.0, psi - self.angles[None, :]), axis=1)

    def contains(self, x: np.ndarray) -> np.ndarray:
        return self.distance(x) <= 0

    def blowup_measure(self, omega: float) -> float | None:
        """Exact mu(A_omega) when the blown-up parts stay disjoint, else None."""
        if self.kind == "band":
            w = self.angles[0] + omega
            return 1.0 if w >= math.pi / 2 else 1 - 2 * cap_measure(math.pi / 2 - w, self.n)
        grown = np.minimum(self.angles + omega, math.pi)
        if len(grown) == 1:
            return cap_measure(grown[0], self.n)
        for i in range(len(grown)):
            for j in range(i):
                if _angle(self.poles[i], self.poles[j]) < grown[i] + grown[j]:
                    return None
        return math.exp(_logsumexp([log_cap_measure(t, self.n) for t in grown]))

    def log_intersection_with_cap(self, y: np.ndarray, omega: float) -> float:
        """ln mu(A ∩ Cap(y, omega)) for cap-structured A (parts are disjoint)."""
        if not self.cap_structured:
            raise InputError("exact intersections need a cap-structured set")
        y = _unit(y)
        return _logsumexp(
            [log_cap_intersection(t, omega, self.n, _angle(p, y)) for p, t in zip(self.poles, self.angles)]
        )


def _default_pole(n: int) -> np.ndarray:
    e = np.zeros(n)
    e[0] = 1.0
    return e


def _logsumexp(vals) -> float:
    vals = [v for v in vals if v > -math.inf]
    if not vals:
        return -math.inf
    top = max(vals)
    return top + math.log(sum(math.exp(v - top) for v in vals))


def sample_sphere(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    """Uniform points on S^{n-1} via normalised Gaussian vectors."""
    g = rng.standard_normal((count, n))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def _binomial_stderr(k: int, N: int) -> float:
    # continuity-corrected so a 0 or N count still reports sampling error
    p = (k + 0.5) / (N + 1)
    return math.sqrt(p * (1 - p) / N)


class BlowupEstimate(NamedTuple):
    estimate: float
    stderr: float


def mc_blowup(A: SphericalSet, omega: float, n: int, n_samples: int, seed: int) -> BlowupEstimate:
    """Monte Carlo estimate of mu(A_omega) = mu{y: dist(y, A) <= omega}."""
    if n != A.n:
        raise InputError(f"set lives on S^{A.n - 1}, not S^{n - 1}")
    if not 0 <= omega <= math.pi:
        raise InputError("omega must lie in [0, pi]")
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    hits = 0
    left = n_samples
    while left > 0:
        m = min(left, _CHUNK)
        hits += int(np.sum(A.distance(sample_sphere(rng, m, n)) <= omega))
        left -= m
    return BlowupEstimate(hits / n_samples, _binomial_stderr(hits, n_samples))


class ConcentrationEstimate(NamedTuple):
    fraction: float
    stderr: float
    resolution_limited: bool
    log_v: float


def mc_intersection_concentration(
    A: SphericalSet,
    omega: float,
    epsilon: float,
    n: int,
    n_outer: int,
    seed: int,
    n_inner: int = 0,
) -> ConcentrationEstimate:
    """Fraction of uniform y with ln mu(A ∩ Cap(y, omega)) > ln V(theta, omega) - n epsilon.

    theta is the effective angle of A. Cap-structured sets use the exact
    two-cap formula for the inner measure; ``n_inner > 0`` switches to nested
    sampling (meant as a cross-check in low dimension). The estimate is marked
    resolution-limited when some inner sample came back empty while the
    threshold corresponds to fewer than three expected hits.
    """
    if n != A.n:
        raise InputError(f"set lives on S^{A.n - 1}, not S^{n - 1}")
    if not epsilon > 0:
        raise InputError("epsilon must be positive")
    theta = effective_angle(A.measure(), n)
    if not 0 < theta <= math.pi / 2 + 1e-12:
        raise InputError("the effective angle must lie in (0, pi/2]")
    if not math.pi / 2 - theta < omega <= math.pi / 2:
        raise InputError("omega must lie in (pi/2 - theta, pi/2]")
    log_v = log_cap_intersection(theta, omega, n)
    threshold = log_v - n * epsilon
    rng = np.random.default_rng(seed)
    ys = sample_sphere(rng, n_outer, n)
    limited = False
    if n_inner > 0:
        vals = np.empty(n_outer)
        cos_w = math.cos(omega)
        for k, y in enumerate(ys):
            xs = sample_sphere(rng, n_inner, n)
            hit = int(np.sum(A.contains(xs) & (xs @ y >= cos_w)))
            limited |= hit == 0 and threshold < math.log(3 / n_inner)
            vals[k] = math.log(hit / n_inner) if hit else -math.inf
    else:
        if not A.cap_structured:
            raise InputError("exact inner measures need a cap-structured set; pass n_inner")
        vals = np.array([A.log_intersection_with_cap(y, omega) for y in ys])
    hits = int(np.sum(vals > threshold))
    return ConcentrationEstimate(hits / n_outer, _binomial_stderr(hits, n_outer), limited, log_v)


def concentration_fraction_exact(theta: float, omega: float, epsilon: float, n: int) -> float:
    """Exact value of the concentration fraction when A is a single cap.

    The intersection measure decreases in the angle beta between y and A's
    pole, so the fraction is the measure of {beta <= beta*} where beta*
    solves ln V(theta, omega, beta*) = ln V(theta, omega) - n epsilon.
    """
    log_v = log_cap_intersection(theta, omega, n)
    threshold = log_v - n * epsilon

    def gap(beta):
        return log_cap_intersection(theta, omega, n, beta) - threshold

    hi = min(math.pi, theta + omega)
    if gap(hi) > 0:
        return cap_measure(hi, n)
    # gap is -inf where the caps stop meeting; clipping keeps brentq's bracket finite
    beta = brentq(lambda b: max(gap(b), -1e3), math.pi / 2, hi, xtol=1e-13)
    return cap_measure(beta, n)


def _require_cap(S: SphericalSet, name: str):
    if S.kind != "cap":
        raise InputError(f"{name} must be a single cap")


def alpha_eta(A: SphericalSet, B: SphericalSet, R: float, eta: float, n: int) -> float:
    """(1/n)(ln mu(A) - R - sup_{y in B} ln mu(Cap(y, eta) ∩ A)).

    For caps the supremum is attained at the point of B nearest to A's pole.
    Returns ``math.inf`` when every such intersection is empty.
    """
    _require_cap(A, "A")
    _require_cap(B, "B")
    if A.n != n or B.n != n:
        raise InputError("sets and n disagree on the dimension")
    if not 0 < eta <= math.pi:
        raise InputError("eta must lie in (0, pi]")
    beta = max(0.0, _angle(A.poles[0], B.poles[0]) - B.angles[0])
    sup = log_cap_intersection(A.angles[0], eta, n, beta)
    if sup == -math.inf:
        return math.inf
    return (A.log_measure() - R - sup) / n


def eta_star(A: SphericalSet, B: SphericalSet, R: float, epsilon: float, n: int, xtol: float = 1e-10) -> float:
    """sup{eta: alpha(eta) >= epsilon}, by bisection on the nonincreasing alpha."""
    if alpha_eta(A, B, R, math.pi, n) >= epsilon:
        return math.pi
    lo, hi = 0.0, math.pi
    while hi - lo > xtol:
        mid = 0.5 * (lo + hi)
        if alpha_eta(A, B, R, mid, n) >= epsilon:
            lo = mid
        else:
            hi = mid
    return lo


class HalfspaceBlowup(NamedTuple):
    gamma_a: float
    gamma_at: float
    exponent: float


def gaussian_blowup_halfspace(a: float, t: float, n: int = 1) -> HalfspaceBlowup:
    """Gaussian measures of {x1 <= a} and its t-blowup {x1 <= a + t}.

    ``exponent`` is a' with gamma(A) = e^{-n a'}.
    """
    if t < 0:
        raise InputError("t must be nonnegative")
    if n < 1:
        raise InputError("n must be >= 1")
    return HalfspaceBlowup(float(ndtr(a)), float(ndtr(a + t)), float(-log_ndtr(a) / n))


__all__ = [
    "SphericalSet",
    "BlowupEstimate",
    "ConcentrationEstimate",
    "HalfspaceBlowup",
    "cap_measure",
    "log_cap_measure",
    "effective_angle",
    "cap_exponent_check",
    "cap_intersection_measure",
    "log_cap_intersection",
    "intersection_exponent_limit",
    "sample_sphere",
    "mc_blowup",
    "mc_intersection_concentration",
    "concentration_fraction_exact",
    "alpha_eta",
    "eta_star",
    "gaussian_blowup_halfspace",
]
