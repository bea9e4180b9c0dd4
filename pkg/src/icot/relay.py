"""Converse bounds for the Gaussian primitive relay channel.

Per-letter quantities in nats. The inner minimisation over r > 0 is carried
out in s = sqrt(1 - e^{-2r}) in (0, 1); with q = e^{-C'} the common numerator

    Q = P (N + 1 - 2 q sqrt(N) s) + N (1 - q^2 s^2)
      = P (sqrt(N) - q s)^2 + (P + N)(1 - q^2 + q^2 u),    u = e^{-2r} = 1 - s^2,

is evaluated in the second, cancellation-free form.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import CertificationError, ConvergenceError, InputError, NumericRangeError

GOLDEN = (math.sqrt(5) - 1) / 2
T_INSET = 1e-15
PRESCAN = 2000


@dataclass(frozen=True)
class RelayParams:
    P: float
    N: float
    C0: float = 0.0

    def __post_init__(self):
        if not (self.P > 0 and math.isfinite(self.P)):
            raise InputError("P must be positive and finite")
        if not (self.N > 0 and math.isfinite(self.N)):
            raise InputError("N must be positive and finite")
        if not self.C0 >= 0:
            raise InputError("C0 must be nonnegative (math.inf allowed)")


def _numerator(P, N, q, s, u=None):
    """Q and u = 1 - s^2; pass ``u`` when it is known more accurately than s."""
    if u is None:
        u = (1 - s) * (1 + s)
    one_minus_s = u / (1 + s)
    lead = (math.sqrt(N) - q) + q * one_minus_s
    return P * lead**2 + (P + N) * (1 - q * q + q * q * u), u


def _check_inner_args(P, N, c_prime, r):
    if not (P > 0 and N > 0):
        raise InputError("P and N must be positive")
    if not c_prime >= 0:
        raise InputError("C' must be nonnegative")
    if not r > 0:
        raise InputError("r must be positive")


def sdpi_inner(P: float, N: float, c_prime: float, r: float) -> float:
    """1/2 ln(Q / ((P+1) N e^{-2r})) at s = sqrt(1 - e^{-2r}), q = e^{-C'}."""
    _check_inner_args(P, N, c_prime, r)
    s = math.sqrt(-math.expm1(-2 * r))
    q = math.exp(-c_prime)
    u = math.exp(-2 * r)
    Q, _ = _numerator(P, N, q, s, u)
    if not (Q > 0 and u > 0):
        raise NumericRangeError(f"nonpositive log argument (Q={Q:.3g}, e^-2r={u:.3g})")
    return 0.5 * (math.log(Q) - math.log(P + 1) - math.log(N) + 2 * r)


def capacity_inner(P: float, N: float, c_prime: float, r: float) -> float:
    """The capacity-bound integrand; differs from :func:`sdpi_inner` by 1/2 ln(1+P)."""
    return sdpi_inner(P, N, c_prime, r) + 0.5 * math.log1p(P)


@dataclass
class InnerMin:
    s: float
    value: float  # min over s of ln Q - ln((P+1) N u), i.e. twice the sdpi integrand
    bracket: tuple[float, float]
    spread: float  # gap variation across the final golden-section bracket
    fallback: bool


def _gap(P, N, q, s):
    """C(inf) minus the capacity integrand at (q, s), computed without cancellation.

    Maximising this over s is the inner minimisation; unlike the integrand
    itself it keeps full relative precision when C' is large and the gap is
    far below double-precision resolution of the integrand.
    """
    A = P * (N + 1) + N
    Q, _ = _numerator(P, N, q, s)
    # s (2 P q sqrt(N) - (A - N q^2) s); near s = 1 regroup around 1 - s, which is exact there
    lead = math.sqrt(N) - q
    s = np.asarray(s, dtype=float)
    num = np.where(
        s < 0.5,
        s * (2 * P * q * math.sqrt(N) - (A - N * q * q) * s),
        s * ((A - N * q * q) * (1 - s) - P * lead * lead - (P + N) * (1 - q * q)),
    )
    return 0.5 * np.log1p(num / Q)


def _log_ratio(P, N, q, s):
    """Twice the sdpi integrand, ln(Q / ((P+1) N u))."""
    A = P * (N + 1) + N
    return math.log(A / ((P + 1) * N)) - 2 * _gap(P, N, q, s)


def _sublevel_end(P, N, q) -> float:
    """Largest s with objective below its s -> 0 limit; the minimiser lies in (0, this)."""
    A = P * (N + 1) + N
    return 2 * P * q * math.sqrt(N) / (A - N * q * q)


def _golden(f, a, b, xtol):
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(400):
        if b - a <= xtol:
            break
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    else:
        raise ConvergenceError("golden-section search did not converge", trace=(a, b))
    return (a, b), (c, fc) if fc <= fd else (d, fd)


def inner_minimum(P: float, N: float, q: float, xtol: float = 1e-13) -> InnerMin:
    """min over r > 0 at fixed q = e^{-C'}, returned on the s = sqrt(t) scale.

    A pre-scan of the scaled interval checks unimodality and brackets the
    search; several local minima trigger a fine-grid fallback.
    """
    if q == 0:
        # the objective increases in s; the infimum is the s -> 0 limit
        return InnerMin(0.0, float(_log_ratio(P, N, 0.0, 0.0)), (0.0, 0.0), 0.0, False)
    s_lo = math.sqrt(T_INSET)
    s_hi = min(math.sqrt(1 - T_INSET), _sublevel_end(P, N, q))
    s_lo = min(s_lo, 0.25 * s_hi)
    grid = np.linspace(s_lo, s_hi, PRESCAN)
    vals = -_gap(P, N, q, grid)
    k = int(np.argmin(vals))
    d = np.diff(vals)
    turns = int(np.sum((d[:-1] < 0) & (d[1:] > 0)))
    if turns > 1:
        fine = np.linspace(grid[max(k - 1, 0)], grid[min(k + 1, PRESCAN - 1)], 20001)
        j = int(np.argmin(-_gap(P, N, q, fine)))
        s = float(fine[j])
        return InnerMin(s, float(_log_ratio(P, N, q, s)), (float(fine[0]), float(fine[-1])), 0.0, True)
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, PRESCAN - 1)]
    (a, b), (s, _) = _golden(lambda x: -float(_gap(P, N, q, x)), a, b, xtol * s_hi)
    spread = abs(float(_gap(P, N, q, a)) - float(_gap(P, N, q, b)))
    return InnerMin(s, float(_log_ratio(P, N, q, s)), (a, b), spread, False)


def _r_of_s(s: float) -> float:
    return -0.5 * math.log1p(-s * s) if s > 0 else 0.0


@dataclass
class OuterMax:
    value: float  # per-letter sdpi value
    c_prime: float
    inner: InnerMin


def _outer(params: RelayParams) -> OuterMax:
    """max over C' in [0, C0] of the inner minimum: scan, golden refinement, endpoints."""
    P, N, C0 = params.P, params.N, params.C0
    if math.isinf(C0):
        inner = inner_minimum(P, N, 0.0)
        return OuterMax(0.5 * inner.value, math.inf, inner)

    def g(c):
        return inner_minimum(P, N, math.exp(-c)).value

    if C0 == 0:
        inner = inner_minimum(P, N, 1.0)
        return OuterMax(0.5 * inner.value, 0.0, inner)
    cs = np.linspace(0.0, C0, 17)
    vs = [g(c) for c in cs]
    k = int(np.argmax(vs))
    candidates = {float(cs[k]): vs[k], 0.0: vs[0], float(C0): vs[-1]}
    if 0 < k < len(cs) - 1:
        (a, b), (c, v) = _golden(lambda x: -g(x), cs[k - 1], cs[k + 1], 1e-10 * max(C0, 1))
        candidates[float(c)] = -v
    c_best = max(candidates, key=lambda c: (candidates[c], c))
    inner = inner_minimum(P, N, math.exp(-c_best))
    return OuterMax(0.5 * inner.value, c_best, inner)


def sdpi_bound(params: RelayParams) -> tuple[float, float, float]:
    """(value, argmax C', argmin r) of max_{C' <= C0} min_{r > 0} sdpi_inner."""
    out = _outer(params)
    return out.value, out.c_prime, _r_of_s(out.inner.s)


def capacity_upper(params: RelayParams) -> float:
    """Per-letter upper bound on the relay capacity."""
    return sdpi_bound(params)[0] + 0.5 * math.log1p(params.P)


def full_cooperation_capacity(params: RelayParams) -> float:
    """C(inf) = 1/2 ln(1 + P + P/N)."""
    return 0.5 * math.log1p(params.P + params.P / params.N)


def cutset_bound(params: RelayParams) -> float:
    return min(full_cooperation_capacity(params), 0.5 * math.log1p(params.P) + params.C0)


def certified_gap(P: float, N: float, q: float, s: float) -> float:
    """C(inf) minus the capacity integrand at (q, s).

    Positive for every s strictly between 0 and the sublevel end point.
    """
    return float(_gap(P, N, q, s))


@dataclass
class BoundReport:
    P: float
    N: float
    C0: float
    sdpi: float
    upper: float
    cutset: float
    c_infty: float
    gap: float
    arg_c_prime: float
    arg_r: float
    tolerance: float
    certified: bool

    def to_dict(self) -> dict:
        d = asdict(self)
        return {
            "P": d["P"],
            "N": d["N"],
            "C0": d["C0"],
            "sdpi": d["sdpi"],
            "upper": d["upper"],
            "cutset": d["cutset"],
            "cInfty": d["c_infty"],
            "gap": d["gap"],
            "argCprime": d["arg_c_prime"],
            "argR": d["arg_r"],
            "tolerance": d["tolerance"],
            "certified": d["certified"],
        }


def bound_report(params: RelayParams) -> BoundReport:
    """All relay quantities at one parameter point; ``gap`` is the certified gap."""
    out = _outer(params)
    P, N = params.P, params.N
    sdpi = out.value
    upper = sdpi + 0.5 * math.log1p(P)
    c_inf = full_cooperation_capacity(params)
    if math.isinf(params.C0):
        gap, tol = 0.0, 0.0
    else:
        q = math.exp(-out.c_prime)
        gap = certified_gap(P, N, q, out.inner.s)
        a, b = out.inner.bracket
        # the gap varies by at most this much across the final bracket
        tol = max(abs(certified_gap(P, N, q, x) - gap) for x in (a, b)) if b > a else 0.0
    return BoundReport(
        P, N, params.C0, sdpi, upper, cutset_bound(params), c_inf, gap,
        out.c_prime, _r_of_s(out.inner.s), tol, gap > 0 and gap >= 10 * tol,
    )


def cover_gap_certificate(params: RelayParams) -> BoundReport:
    """Certify C(inf) - capacity_upper > 0 for finite C0.

    The certified gap is evaluated at the optimiser's s, which can only
    overestimate the inner minimum, so it is a lower bound on the true gap.
    It must also exceed ten times its variation across the final search
    bracket.
    """
    if math.isinf(params.C0):
        raise InputError("the certificate needs a finite C0")
    rep = bound_report(params)
    if not rep.certified:
        raise CertificationError(
            f"gap {rep.gap:.3e} not certified against tolerance {rep.tolerance:.3e} at {params}"
        )
    return rep


@dataclass
class AssemblyReport:
    direct: float
    entropy_terms: float
    moment_route: float
    deviation: float
    second_moment: float
    correlation: float


def assembly_check(P: float, N: float, c_prime: float, r: float, atol: float = 1e-12) -> AssemblyReport:
    """Rebuild the sdpi integrand from its entropy and second-moment pieces.

    entropy_terms: 1/2 ln(2 pi e Q/(P+1)) - 1/2 ln(2 pi N e^{1 - 2(C'+r)}) - C'
    moment_route:  Q recomputed as (P+1) E|Zb|^2 - E[Zb.Y]^2 with E|Zb|^2 = P + N,
                   E[Zb.Y] = P + sqrt(N(1-e^{-2r})) e^{-C'}, E|Y|^2 = P + 1.
    """
    _check_inner_args(P, N, c_prime, r)
    direct = sdpi_inner(P, N, c_prime, r)
    t = -math.expm1(-2 * r)
    q = math.exp(-c_prime)
    Q_plain = P * (N + 1 - 2 * q * math.sqrt(N * t)) + N * (1 - q * q * t)
    two_pi = 2 * math.pi
    first = 0.5 * math.log(two_pi * math.e * Q_plain / (P + 1))
    second = 0.5 * (math.log(two_pi * N) + 1 - 2 * (c_prime + r))
    entropy_terms = first - second - c_prime

    second_moment = P + N
    correlation = P + math.sqrt(N * t) * q
    y_power = P + 1
    residual_power = second_moment - correlation**2 / y_power
    moment_route = 0.5 * math.log(residual_power / (N * math.exp(-2 * r)))

    deviation = max(abs(entropy_terms - direct), abs(moment_route - direct))
    if deviation > atol:
        raise CertificationError(f"assembly mismatch {deviation:.3e} at P={P}, N={N}, C'={c_prime}, r={r}")
    return AssemblyReport(direct, entropy_terms, moment_route, deviation, second_moment, correlation)


def inner_minimizer_closed_form(P: float, N: float, q: float) -> float:
    """Stationary point in s: the smaller root of P q sqrt(N) s^2 - (A - N q^2) s + P q sqrt(N)."""
    A = P * (N + 1) + N
    b = A - N * q * q
    c = P * q * math.sqrt(N)
    # b - 2c = P (sqrt(N) - q)^2 + (P + N)(1 - q^2) >= 0, without cancellation
    lead = math.sqrt(N) - q
    b_minus = P * lead * lead + (P + N) * (1 - q * q)
    return 2 * c / (b + math.sqrt(b_minus * (b + 2 * c)))


__all__ = [
    "RelayParams",
    "BoundReport",
    "AssemblyReport",
    "sdpi_inner",
    "capacity_inner",
    "sdpi_bound",
    "capacity_upper",
    "full_cooperation_capacity",
    "cutset_bound",
    "certified_gap",
    "bound_report",
    "cover_gap_certificate",
    "assembly_check",
    "inner_minimum",
    "inner_minimizer_closed_form",
]
