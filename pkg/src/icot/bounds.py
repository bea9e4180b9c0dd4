"""Gaussian transportation inequalities and the information-constrained coupling.

All quantities are in nats. A :class:`MomentSummary` carries the pair
(E||Z||^2, h(Z)) that the moment-entropy bounds consume; the reference
measure is always the standard Gaussian N(0, I_n).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import logsumexp, ndtr, ndtri

from .errors import InputError, NumericRangeError
from .ot import DiscreteDistribution

LOG_2PI = math.log(2 * math.pi)
LOG_2PIE = LOG_2PI + 1.0
ADMISSIBLE_TOL = 1e-9


@dataclass(frozen=True)
class GaussianSpec:
    """Isotropic Gaussian N(mean, sigma^2 I_n); a scalar mean is broadcast."""

    mean: np.ndarray
    sigma: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InputError("dimension n must be >= 1")
        if not self.sigma > 0:
            raise InputError("sigma must be positive")
        mu = np.broadcast_to(np.asarray(self.mean, dtype=float), (self.n,)).copy()
        mu.setflags(write=False)
        object.__setattr__(self, "mean", mu)

    def summary(self) -> "MomentSummary":
        E = float(mu_sq(self.mean)) + self.n * self.sigma**2
        h = 0.5 * self.n * (LOG_2PIE + 2 * math.log(self.sigma))
        return MomentSummary(E, h, self.n)

    # 1-D marginal interface used by the coupling construction
    def quantile(self, u: np.ndarray, coord: int = 0) -> np.ndarray:
        return self.mean[coord] + self.sigma * ndtri(u)

    def cdf(self, z: np.ndarray, coord: int = 0) -> np.ndarray:
        return ndtr((z - self.mean[coord]) / self.sigma)


def mu_sq(mu) -> float:
    return float(np.dot(mu, mu))


@dataclass(frozen=True)
class MomentSummary:
    """(E||Z^n||^2, h(Z^n), n). Entropy may not exceed the Gaussian maximum."""

    second_moment: float
    entropy: float
    n: int

    def __post_init__(self):
        if self.n < 1:
            raise InputError("n must be >= 1")
        if not self.second_moment >= 0:
            raise InputError("second moment must be nonnegative")
        if self.entropy > max_entropy(self.second_moment, self.n) + ADMISSIBLE_TOL * max(1.0, abs(self.entropy)):
            raise InputError(
                f"entropy {self.entropy:.6g} exceeds the Gaussian maximum "
                f"{max_entropy(self.second_moment, self.n):.6g} for this second moment"
            )

    def log_power(self) -> float:
        """ln of the normalised entropy power e^{2h/n} / (2 pi e)."""
        return 2.0 * self.entropy / self.n - LOG_2PIE


def max_entropy(second_moment: float, n: int) -> float:
    if second_moment == 0:
        return -math.inf
    return 0.5 * n * (LOG_2PIE + math.log(second_moment / n))


@dataclass(frozen=True)
class ConditionalEnsemble:
    """Finite conditioning variable T with per-value moment summaries."""

    weights: np.ndarray
    members: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or len(w) != len(self.members) or len(w) == 0:
            raise InputError("one weight per member required")
        if np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
            raise InputError("weights must be a probability vector")
        if len({m.n for m in self.members}) != 1:
            raise InputError("members must share the dimension n")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "members", tuple(self.members))

    @property
    def n(self) -> int:
        return self.members[0].n

    def second_moment(self) -> float:
        return float(self.weights @ [m.second_moment for m in self.members])

    def conditional_entropy(self) -> float:
        return float(self.weights @ [m.entropy for m in self.members])


def talagrand_rhs(spec: GaussianSpec) -> float:
    """2 D(N(mu, sigma^2 I) || N(0, I))."""
    s = spec.sigma
    return spec.n * (s * s - 1 - 2 * math.log(s)) + mu_sq(spec.mean)


def _rho(R: float, n: int) -> float:
    """sqrt(1 - e^{-2R/n}); R = inf gives 1."""
    if R < 0:
        raise InputError("R must be nonnegative")
    if math.isinf(R):
        return 1.0
    return math.sqrt(-math.expm1(-2.0 * R / n))


def _moment_bound(E: float, log_power: float, n: int, rho: float) -> float:
    return E + n - 2 * n * rho * math.exp(0.5 * log_power)


def new_rhs(m: MomentSummary) -> float:
    """E||Z||^2 + n - 2n sqrt(e^{2h/n} / (2 pi e))."""
    return _moment_bound(m.second_moment, m.log_power(), m.n, 1.0)


def info_rhs(m: MomentSummary, R: float) -> float:
    """Upper bound on W_2^2(P_Z, N(0, I_n); R); ``R = math.inf`` gives :func:`new_rhs`."""
    return _moment_bound(m.second_moment, m.log_power(), m.n, _rho(R, m.n))


def conditional_info_rhs(ens: ConditionalEnsemble, R: float) -> float:
    """The information-constrained bound with h(Z|T) in place of h(Z)."""
    n = ens.n
    log_power = 2.0 * ens.conditional_entropy() / n - LOG_2PIE
    return _moment_bound(ens.second_moment(), log_power, n, _rho(R, n))


def gaussian_optimum_1d(mu: float, sigma: float, R: float) -> float:
    """Best E(Z-Y)^2 over jointly Gaussian couplings of N(mu, sigma^2), N(0,1) with I <= R."""
    return mu * mu + sigma * sigma + 1 - 2 * sigma * _rho(R, 1)


@dataclass(frozen=True)
class DominanceResult:
    talagrand_like: float
    new_bound: float
    slack: float

    def __iter__(self):
        return iter((self.talagrand_like, self.new_bound, self.slack))


def dominance_compare(m: MomentSummary) -> DominanceResult:
    """Compare -2h + n ln 2pi + E (Talagrand's side) against :func:`new_rhs`.

    The slack equals 2n(sqrt(x) - 1 - ln sqrt(x)) with x the normalised
    entropy power; it is evaluated in that form to avoid cancellation.
    """
    talagrand_like = -2 * m.entropy + m.n * LOG_2PI + m.second_moment
    half_log = 0.5 * m.log_power()
    slack = 2 * m.n * (math.expm1(half_log) - half_log)
    return DominanceResult(talagrand_like, new_rhs(m), slack)


def mixture_entropy_1d(weights, means, sigmas) -> float:
    """Differential entropy of a 1-D Gaussian mixture by adaptive quadrature."""
    w = np.asarray(weights, float)
    mu = np.asarray(means, float)
    sd = np.asarray(sigmas, float)
    logw = np.log(w)

    def log_density(x):
        return logsumexp(logw - 0.5 * ((x - mu) / sd) ** 2 - np.log(sd) - 0.5 * LOG_2PI)

    def integrand(x):
        ld = log_density(x)
        return -math.exp(ld) * ld

    lo = float(np.min(mu - 12 * sd))
    hi = float(np.max(mu + 12 * sd))
    breaks = sorted(set(np.concatenate([mu, [lo, hi]]).tolist()))
    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.quad(integrand, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)
        total += val
    return total


def discretize_gaussian(k: int, sigma: float = 1.0, mean: float = 0.0) -> DiscreteDistribution:
    """k equal-probability bins of N(mean, sigma^2), each placed at its conditional mean."""
    if k < 1:
        raise InputError("k must be >= 1")
    if not sigma > 0:
        raise InputError("sigma must be positive")
    edges = ndtri(np.linspace(0.0, 1.0, k + 1))
    pdf = np.exp(-0.5 * edges**2) / math.sqrt(2 * math.pi)
    pts = mean + sigma * k * (pdf[:-1] - pdf[1:])
    return DiscreteDistribution(pts, np.full(k, 1.0 / k))


# ---------------------------------------------------------------------------
# Coupling construction


@dataclass(frozen=True)
class QuantileTable:
    """Piecewise-linear quantile function through (probability, quantile) rows.

    Probabilities must increase strictly inside [0, 1] and quantiles must
    increase strictly, so the map is invertible on its range. Requests outside
    the tabulated probability range are clipped to the end values.
    """

    probs: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        q = np.asarray(self.values, dtype=float)
        if p.ndim != 1 or p.shape != q.shape or len(p) < 2:
            raise InputError("quantile table needs at least two (probability, quantile) rows")
        if not (np.all(np.isfinite(p)) and np.all(np.isfinite(q))):
            raise InputError("quantile table entries must be finite")
        if p[0] < 0 or p[-1] > 1 or np.any(np.diff(p) <= 0):
            raise InputError("probabilities must increase strictly within [0, 1]")
        if np.any(np.diff(q) <= 0):
            raise InputError("quantiles must increase strictly")
        object.__setattr__(self, "probs", p)
        object.__setattr__(self, "values", q)

    @property
    def complete(self) -> bool:
        return self.probs[0] == 0 and self.probs[-1] == 1

    def quantile(self, u, coord: int = 0):
        return np.interp(u, self.probs, self.values)

    def cdf(self, z, coord: int = 0):
        return np.interp(z, self.values, self.probs)

    def clipped(self, u) -> np.ndarray:
        u = np.asarray(u)
        return (u < self.probs[0]) | (u > self.probs[-1])

    def summary(self, n: int = 1) -> MomentSummary:
        """Moments of the piecewise-uniform law the table describes, per n i.i.d. coordinates."""
        if not self.complete:
            raise InputError("moments need a table spanning probabilities 0 to 1")
        dp = np.diff(self.probs)
        q0, q1 = self.values[:-1], self.values[1:]
        E1 = float(np.sum(dp * (q0 * q0 + q0 * q1 + q1 * q1) / 3))
        h1 = float(np.sum(dp * np.log(np.diff(self.values) / dp)))
        return MomentSummary(n * E1, n * h1, n)


@dataclass(frozen=True)
class CouplingSampleSet:
    """Pairs (z, y) from Y = rho Y1 + s Y2, Z = g(Y1), coordinatewise i.i.d."""

    z: np.ndarray
    y: np.ndarray
    y1: np.ndarray
    R: float
    seed: int
    target: object
    clipped: int = 0
    rho: float = field(init=False)
    s: float = field(init=False)

    def __post_init__(self):
        n = self.z.shape[1]
        object.__setattr__(self, "rho", _rho(self.R, n))
        object.__setattr__(self, "s", 0.0 if math.isinf(self.R) else math.exp(-self.R / n))

    @property
    def n(self) -> int:
        return self.z.shape[1]

    @property
    def n_samples(self) -> int:
        return self.z.shape[0]


def _target_map(target, y1: np.ndarray) -> tuple[np.ndarray, int]:
    u = ndtr(y1)
    z = np.empty_like(y1)
    for k in range(y1.shape[1]):
        z[:, k] = target.quantile(u[:, k], k)
    clipped = int(np.sum(target.clipped(u))) if hasattr(target, "clipped") else 0
    return z, clipped


def construct_coupling(target, R: float, n_samples: int, seed: int, n: int | None = None) -> CouplingSampleSet:
    """Sample the coupling that meets I(Y1; Y) = R with Z = F_Z^{-1}(Phi(Y1)).

    ``target`` is a :class:`GaussianSpec` (its dimension is used) or a
    :class:`QuantileTable` applied to each of ``n`` coordinates.
    """
    if R < 0:
        raise InputError("R must be nonnegative")
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    if n is None:
        n = target.n if isinstance(target, GaussianSpec) else 1
    if isinstance(target, GaussianSpec) and n != target.n:
        raise InputError("n disagrees with the Gaussian target's dimension")
    rng = np.random.default_rng(seed)
    y1 = rng.standard_normal((n_samples, n))
    y2 = rng.standard_normal((n_samples, n))
    rho = _rho(R, n)
    s = 0.0 if math.isinf(R) else math.exp(-R / n)
    y = rho * y1 + s * y2
    z, clipped = _target_map(target, y1)
    return CouplingSampleSet(z, y, y1, R, seed, target, clipped)


def _recover_y1(samples: CouplingSampleSet) -> np.ndarray:
    """g^{-1}(z) = Phi^{-1}(F_Z(z)); fails where g is flat (clipped table ends)."""
    target = samples.target
    u = np.empty_like(samples.z)
    for k in range(samples.n):
        u[:, k] = target.cdf(samples.z[:, k], k)
    with np.errstate(divide="ignore"):
        y1 = ndtri(u)
    bad = ~np.isfinite(y1) | (np.abs(y1 - samples.y1) > 1e-6 * (1 + np.abs(samples.y1)))
    if np.any(bad):
        raise NumericRangeError(f"the monotone map is not invertible at {int(bad.sum())} sampled points")
    return y1


def information_density_samples(samples: CouplingSampleSet) -> np.ndarray:
    """ln f_{Y|Z}(y|z) - ln f_Y(y), summed over coordinates."""
    if math.isinf(samples.R):
        raise InputError("the information density is infinite when R is infinite")
    y1 = _recover_y1(samples)
    s, y = samples.s, samples.y
    resid = (y - samples.rho * y1) / s
    per = -math.log(s) - 0.5 * resid**2 + 0.5 * y**2
    return per.sum(axis=1)


def _binomial_stderr(k: int, N: int) -> float:
    p = (k + 0.5) / (N + 1)
    return math.sqrt(p * (1 - p) / N)


@dataclass
class CheckResult:
    lhs_estimate: float
    rhs_value: float
    slack: float
    stderr: float
    n_samples: int
    seed: int
    passed: bool

    def to_dict(self) -> dict:
        return {
            "lhsEstimate": self.lhs_estimate,
            "rhsValue": self.rhs_value,
            "slack": self.slack,
            "stderr": self.stderr,
            "nSamples": self.n_samples,
            "seed": self.seed,
            "passed": self.passed,
        }


@dataclass
class CouplingCheckReport:
    cost: CheckResult
    density: CheckResult
    correlation: CheckResult
    tau: float
    clipped: int

    @property
    def passed(self) -> bool:
        return self.cost.passed and self.density.passed and self.correlation.passed

    def to_dict(self) -> dict:
        return {
            "tau": self.tau,
            "clipped": self.clipped,
            "passed": self.passed,
            "cost": self.cost.to_dict(),
            "density": self.density.to_dict(),
            "correlation": self.correlation.to_dict(),
        }


def verify_constructed_coupling(samples: CouplingSampleSet, m: MomentSummary, tau: float, z_score: float = 4.0) -> CouplingCheckReport:
    """Check the sampled coupling against the density-constrained cost bound.

    (cost)        mean ||Z - Y||^2 <= info_rhs(m, R) + z * stderr
    (density)     P(|i - R| <= tau) >= 1 - 6n / tau^2 - z * stderr
    (correlation) mean Z.Y >= n rho sqrt(e^{2h/n} / 2 pi e) - z * stderr
    """
    if not tau > 0:
        raise InputError("tau must be positive")
    if m.n != samples.n:
        raise InputError("moment summary and samples disagree on n")
    N, n, R, seed = samples.n_samples, samples.n, samples.R, samples.seed

    sq = np.sum((samples.z - samples.y) ** 2, axis=1)
    se = float(sq.std(ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    rhs = info_rhs(m, R)
    lhs = float(sq.mean())
    cost = CheckResult(lhs, rhs, rhs - lhs, se, N, seed, lhs <= rhs + z_score * se)

    dens = information_density_samples(samples)
    inside = int(np.sum(np.abs(dens - R) <= tau))
    frac = inside / N
    se = _binomial_stderr(inside, N)
    rhs = 1 - 6 * n / tau**2
    density = CheckResult(frac, rhs, frac - rhs, se, N, seed, frac >= rhs - z_score * se)

    dot = np.sum(samples.z * samples.y, axis=1)
    se = float(dot.std(ddof=1) / math.sqrt(N)) if N > 1 else math.inf
    rhs = n * samples.rho * math.exp(0.5 * m.log_power())
    lhs = float(dot.mean())
    correlation = CheckResult(lhs, rhs, lhs - rhs, se, N, seed, lhs >= rhs - z_score * se)

    return CouplingCheckReport(cost, density, correlation, tau, samples.clipped)


def gaussian_channel_mi(R: float) -> float:
    """I(Y1; Y) for the scalar construction, -1/2 ln(1 - rho^2)."""
    rho2 = -math.expm1(-2 * R)
    return -0.5 * math.log1p(-rho2)


__all__ = [
    "GaussianSpec",
    "MomentSummary",
    "ConditionalEnsemble",
    "QuantileTable",
    "CouplingSampleSet",
    "CouplingCheckReport",
    "talagrand_rhs",
    "new_rhs",
    "info_rhs",
    "conditional_info_rhs",
    "dominance_compare",
    "mixture_entropy_1d",
    "gaussian_optimum_1d",
    "construct_coupling",
    "verify_constructed_coupling",
    "information_density_samples",
    "gaussian_channel_mi",
    "max_entropy",
    "discretize_gaussian",
]
