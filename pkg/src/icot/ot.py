"""Discrete optimal transport with and without a mutual-information budget.

The information-constrained problem

    min <C, P>  subject to  P in Pi(a, b),  I_P(Z;Y) <= R

is solved through its Lagrangian  <C, P> + lam * I_P(Z;Y).  On the coupling
polytope I_P equals KL(P || a b^T), so the Lagrangian minimiser is the
entropic (Sinkhorn) coupling at regularisation ``lam``; the budget is met by
root-finding on ``lam``.

Small brute-force oracles enumerate the coupling polytope directly and are
meant for instances with at most nine cells.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog, minimize
from scipy.special import logsumexp

from .errors import ConvergenceError, InputError, NumericRangeError

WEIGHT_TOL = 1e-12
MASS_TOL = 1e-10
# switch to the stabilised log-domain iteration below this fraction of max cost
LOG_DOMAIN_RATIO = 0.05


def _readonly(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class DiscreteDistribution:
    """Finitely supported probability measure on R^d.

    ``points`` may be given as a flat sequence of scalars (d = 1) or as a
    (k, d) array.
    """

    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        w = np.array(self.weights, dtype=float).ravel()
        if pts.ndim != 2 or pts.shape[0] == 0:
            raise InputError("points must be a non-empty (k, d) array")
        if pts.shape[0] != w.shape[0]:
            raise InputError(f"{pts.shape[0]} points but {w.shape[0]} weights")
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(w)):
            raise InputError("points and weights must be finite")
        if np.any(w < 0):
            raise InputError("weights must be nonnegative")
        if abs(w.sum() - 1.0) > WEIGHT_TOL:
            raise InputError(f"weights sum to {w.sum():.15g}, not 1")
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise InputError("support points must be pairwise distinct")
        object.__setattr__(self, "points", _readonly(pts))
        object.__setattr__(self, "weights", _readonly(w))

    @property
    def size(self) -> int:
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def second_moment(self) -> float:
        return float(self.weights @ np.sum(self.points**2, axis=1))

    @classmethod
    def uniform(cls, points) -> "DiscreteDistribution":
        pts = np.asarray(points, dtype=float)
        k = pts.shape[0]
        return cls(pts, np.full(k, 1.0 / k))


@dataclass(frozen=True)
class CostMatrix:
    entries: np.ndarray
    p: float

    def __post_init__(self):
        c = np.array(self.entries, dtype=float)
        if c.ndim != 2 or np.any(c < 0) or not np.all(np.isfinite(c)):
            raise InputError("cost entries must form a finite nonnegative matrix")
        if self.p < 1:
            raise InputError("cost order p must be >= 1")
        object.__setattr__(self, "entries", _readonly(c))

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape


@dataclass(frozen=True)
class Coupling:
    """Joint probability matrix; marginals are cached row and column sums."""

    joint: np.ndarray
    marginal_z: np.ndarray = field(init=False)
    marginal_y: np.ndarray = field(init=False)

    def __post_init__(self):
        P = np.array(self.joint, dtype=float)
        if P.ndim != 2:
            raise InputError("joint must be a matrix")
        if np.any(P < -MASS_TOL):
            raise InputError(f"negative joint mass {P.min():.3g}")
        P = np.clip(P, 0.0, None)
        total = P.sum()
        if abs(total - 1.0) > MASS_TOL:
            raise InputError(f"joint mass {total:.15g} differs from 1")
        object.__setattr__(self, "joint", _readonly(P))
        object.__setattr__(self, "marginal_z", _readonly(P.sum(axis=1)))
        object.__setattr__(self, "marginal_y", _readonly(P.sum(axis=0)))

    @classmethod
    def product(cls, a, b) -> "Coupling":
        return cls(np.outer(a, b))

    def expected_cost(self, cost: CostMatrix | np.ndarray) -> float:
        C = cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost)
        return float(np.sum(self.joint * C))

    def marginal_error(self, a, b) -> float:
        """Largest absolute deviation of the cached marginals from (a, b)."""
        return float(
            max(
                np.max(np.abs(self.marginal_z - np.asarray(a))),
                np.max(np.abs(self.marginal_y - np.asarray(b))),
            )
        )


@dataclass(frozen=True)
class SolverConfig:
    lam: float = 1.0
    R: float = 0.0
    tol: float = 1e-9
    max_iter: int = 100_000
    tau: float = math.inf
    delta: float = 1.0

    def __post_init__(self):
        if not self.tol > 0:
            raise InputError("tol must be positive")
        if self.max_iter < 1:
            raise InputError("max_iter must be >= 1")
        if not self.lam > 0:
            raise InputError("lam must be positive")
        if self.R < 0:
            raise InputError("R must be nonnegative")
        if not self.tau > 0:
            raise InputError("tau must be positive")
        if not self.delta > 0:
            raise InputError("delta must be positive")


def cost_matrix(dist_z: DiscreteDistribution, dist_y: DiscreteDistribution, p: float = 2.0) -> CostMatrix:
    """Euclidean distance to the power ``p`` between the two supports."""
    if p < 1:
        raise InputError("p must be >= 1")
    if dist_z.dim != dist_y.dim:
        raise InputError(f"dimension mismatch: {dist_z.dim} vs {dist_y.dim}")
    diff = dist_z.points[:, None, :] - dist_y.points[None, :, :]
    sq = np.sum(diff * diff, axis=2)
    if p == 2:
        return CostMatrix(sq, p)
    return CostMatrix(np.sqrt(sq) ** p, p)


def _northwest_corner(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    m, k = len(a), len(b)
    P = np.zeros((m, k))
    ra, rb = a.copy(), b.copy()
    i = j = 0
    while i < m and j < k:
        mass = min(ra[i], rb[j])
        P[i, j] += mass
        ra[i] -= mass
        rb[j] -= mass
        # advance whichever side is exhausted; both on a tie
        if ra[i] <= 1e-15:
            i += 1
        if rb[j] <= 1e-15:
            j += 1
    # round-off left over on the last row/column
    if i < m or j < k:
        P[min(i, m - 1), min(j, k - 1)] += max(0.0, 1.0 - P.sum())
    return P


def exact_ot_1d(dist_z: DiscreteDistribution, dist_y: DiscreteDistribution, p: float = 2.0):
    """W_p^p between scalar distributions through the comonotone coupling.

    Zero-weight atoms are dropped; ties in the sort are broken by index.
    Returns ``(value, coupling)`` with the coupling indexed like the inputs.
    """
    if dist_z.dim != 1 or dist_y.dim != 1:
        raise InputError("exact_ot_1d requires scalar supports")
    if p < 1:
        raise InputError("p must be >= 1")
    iz = np.flatnonzero(dist_z.weights > 0)
    iy = np.flatnonzero(dist_y.weights > 0)
    oz = iz[np.argsort(dist_z.points[iz, 0], kind="stable")]
    oy = iy[np.argsort(dist_y.points[iy, 0], kind="stable")]
    sub = _northwest_corner(dist_z.weights[oz], dist_y.weights[oy])
    P = np.zeros((dist_z.size, dist_y.size))
    P[np.ix_(oz, oy)] = sub
    coupling = Coupling(P)
    value = coupling.expected_cost(cost_matrix(dist_z, dist_y, p))
    return value, coupling


def exact_ot(cost: CostMatrix, dist_z: DiscreteDistribution, dist_y: DiscreteDistribution):
    """Unconstrained optimum of <C, P> by linear programming (any dimension)."""
    if dist_z.dim == 1 and dist_y.dim == 1 and _is_convex_power(cost, dist_z, dist_y):
        return exact_ot_1d(dist_z, dist_y, cost.p)
    m, k = cost.shape
    a, b = dist_z.weights, dist_y.weights
    A_eq = np.zeros((m + k, m * k))
    for i in range(m):
        A_eq[i, i * k : (i + 1) * k] = 1.0
    for j in range(k):
        A_eq[m + j, j::k] = 1.0
    res = linprog(cost.entries.ravel(), A_eq=A_eq, b_eq=np.concatenate([a, b]), bounds=(0, None), method="highs")
    if not res.success:
        raise ConvergenceError(f"linear program failed: {res.message}")
    P = np.clip(res.x.reshape(m, k), 0, None)
    P /= P.sum()
    coupling = Coupling(P)
    return coupling.expected_cost(cost), coupling


def _is_convex_power(cost: CostMatrix, dist_z, dist_y) -> bool:
    ref = np.abs(dist_z.points[:, 0][:, None] - dist_y.points[:, 0][None, :]) ** cost.p
    return np.allclose(ref, cost.entries, rtol=1e-12, atol=1e-14)


def _mi_from_joint(P: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    # logs of the factors separately, so tiny marginals cannot underflow the product
    i, j = np.nonzero(P > 0)
    p = P[i, j]
    return float(np.sum(p * (np.log(p) - np.log(a[i]) - np.log(b[j]))))


def mutual_information(c: Coupling) -> float:
    """I_P(Z;Y) in nats, with 0 log 0 = 0."""
    return max(0.0, _mi_from_joint(c.joint, c.marginal_z, c.marginal_y))


def information_density(c: Coupling, i: int, j: int) -> float:
    """ln(P_ij / (p_i q_j)); undefined where the coupling puts no mass."""
    P_ij = c.joint[i, j]
    if not P_ij > 0:
        raise InputError(f"no joint mass at ({i}, {j})")
    return math.log(P_ij) - math.log(c.marginal_z[i]) - math.log(c.marginal_y[j])


def density_concentration(c: Coupling, tau: float) -> float:
    """Probability under ``c`` that |i_P - I_P| <= tau."""
    return float(_density_mass(c.joint[None], c.marginal_z, c.marginal_y, tau)[0])


# ---------------------------------------------------------------------------
# Sinkhorn


@dataclass
class _SinkhornState:
    P: np.ndarray
    f: np.ndarray
    g: np.ndarray
    iterations: int
    residual: float
    log_domain: bool


def _sinkhorn_standard(C, a, b, lam, tol, max_iter, check_every=10) -> _SinkhornState:
    K = np.exp(-C / lam)
    if np.any(K.sum(axis=1) == 0) or np.any(K.sum(axis=0) == 0):
        raise NumericRangeError(f"Gibbs kernel underflows at lam={lam:.3g}; use the log domain")
    u = np.ones_like(a)
    v = np.ones_like(b)
    err = math.inf
    for it in range(1, max_iter + 1):
        u = a / (K @ v)
        v = b / (K.T @ u)
        if it % check_every == 0 or it == max_iter:
            err = float(np.sum(np.abs(u * (K @ v) - a)))
            if not np.isfinite(err):
                raise NumericRangeError("scaling vectors left the floating-point range")
            if err <= tol:
                break
    P = u[:, None] * K * v[None, :]
    with np.errstate(divide="ignore"):
        f = lam * np.log(u / a)
        g = lam * np.log(v / b)
    return _SinkhornState(P, f, g, it, err, False)


def _sinkhorn_log(C, a, b, lam, tol, max_iter, f=None, g=None, check_every=10, absorb_at=1e30) -> _SinkhornState:
    """Log-stabilised scaling: potentials (f, g) absorb the scalings when they grow.

    The plan is P_ij = a_i b_j exp((f_i + g_j - C_ij) / lam) u_i v_j.
    """
    m, k = C.shape
    loga, logb = np.log(a), np.log(b)
    f = np.zeros(m) if f is None else f.copy()
    g = np.zeros(k) if g is None else g.copy()

    def exact_f(g):
        return -lam * logsumexp(logb[None, :] + (g[None, :] - C) / lam, axis=1)

    def exact_g(f):
        return -lam * logsumexp(loga[:, None] + (f[:, None] - C) / lam, axis=0)

    def kernel(f, g):
        return np.exp(loga[:, None] + logb[None, :] + (f[:, None] + g[None, :] - C) / lam)

    f = exact_f(g)
    g = exact_g(f)
    K = kernel(f, g)
    u = np.ones(m)
    v = np.ones(k)
    err = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        Kv = K @ v
        if np.any(Kv <= 0):
            f, g = f + lam * np.log(u), g + lam * np.log(v)
            f = exact_f(g)
            g = exact_g(f)
            K, u, v = kernel(f, g), np.ones(m), np.ones(k)
            Kv = K @ v
        u = a / Kv
        Ktu = K.T @ u
        if np.any(Ktu <= 0):
            f, g = f + lam * np.log(u), g
            g = exact_g(f)
            K, u, v = kernel(f, g), np.ones(m), np.ones(k)
            Ktu = K.T @ u
        v = b / Ktu
        if max(u.max(), v.max(), 1 / u.min(), 1 / v.min()) > absorb_at:
            f, g = f + lam * np.log(u), g + lam * np.log(v)
            K, u, v = kernel(f, g), np.ones(m), np.ones(k)
        if it % check_every == 0 or it == max_iter:
            err = float(np.sum(np.abs(u * (K @ v) - a)))
            if err <= tol:
                break
    f, g = f + lam * np.log(u), g + lam * np.log(v)
    P = kernel(f, g)
    return _SinkhornState(P, f, g, it, err, True)


def _annealed_log(C, a, b, lam, tol, max_iter, f=None, g=None) -> _SinkhornState:
    """Log-domain Sinkhorn with epsilon-scaling.

    Without a warm start the regularisation is halved from max(C) down to
    ``lam``, each stage warm-starting the next; near-sparse kernels otherwise
    converge only sublinearly.
    """
    if f is None:
        stage = max(float(C.max()), lam)
        used = 0
        while stage > 2 * lam and used < max_iter:
            st = _sinkhorn_log(C, a, b, stage, max(tol, 1e-6), min(1000, max_iter - used), f, g)
            f, g, used = st.f, st.g, used + st.iterations
            stage /= 2
        max_iter = max(1, max_iter - used)
    return _sinkhorn_log(C, a, b, lam, tol, max_iter, f, g)


def _run_sinkhorn(C, a, b, lam, tol, max_iter, log_domain=None, warm=None) -> _SinkhornState:
    """Sinkhorn restricted to the positive-mass support, embedded back afterwards."""
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    Cs, as_, bs = C[np.ix_(ia, ib)], a[ia], b[ib]
    if log_domain is None:
        log_domain = lam < LOG_DOMAIN_RATIO * max(Cs.max(), 1e-300)
    if log_domain:
        f0 = g0 = None
        if warm is not None and warm.log_domain and len(warm.f) == len(ia) and len(warm.g) == len(ib):
            f0, g0 = warm.f, warm.g
        st = _annealed_log(Cs, as_, bs, lam, tol, max_iter, f0, g0)
    else:
        try:
            st = _sinkhorn_standard(Cs, as_, bs, lam, tol, max_iter)
        except NumericRangeError:
            if log_domain is False:
                raise
            st = _sinkhorn_log(Cs, as_, bs, lam, tol, max_iter)
    if st.residual > tol:
        raise ConvergenceError(
            f"Sinkhorn did not converge in {max_iter} iterations at lam={lam:.6g}",
            residual=st.residual,
        )
    P = np.zeros_like(C)
    P[np.ix_(ia, ib)] = st.P
    st.P = P
    return st


def sinkhorn(
    cost: CostMatrix,
    dist_z: DiscreteDistribution,
    dist_y: DiscreteDistribution,
    lam: float,
    cfg: SolverConfig | None = None,
    *,
    log_domain: bool | None = None,
) -> Coupling:
    """Minimiser of <C, P> + lam * I_P(Z;Y) over couplings of the two marginals.

    ``log_domain=None`` picks the stabilised log-domain iteration when
    ``lam < 0.05 * max(C)`` or when the plain kernel underflows; ``False``
    forces the plain iteration and raises :class:`NumericRangeError` instead.
    """
    if not lam > 0:
        raise InputError("lam must be positive")
    cfg = cfg or SolverConfig()
    _check_shapes(cost, dist_z, dist_y)
    st = _run_sinkhorn(cost.entries, dist_z.weights, dist_y.weights, lam, cfg.tol, cfg.max_iter, log_domain)
    return Coupling(st.P / st.P.sum())


def _check_shapes(cost, dist_z, dist_y):
    if cost.shape != (dist_z.size, dist_y.size):
        raise InputError(f"cost shape {cost.shape} does not match supports ({dist_z.size}, {dist_y.size})")


# ---------------------------------------------------------------------------
# Information-constrained OT


@dataclass
class ConstrainedSolution:
    value: float
    coupling: Coupling
    lambda_star: float
    mutual_information: float
    fallback: bool = False
    evaluations: int = 0

    def __iter__(self):
        return iter((self.value, self.coupling, self.lambda_star))


class _LambdaPath:
    """Memoised Sinkhorn solves along lam, warm-started from the nearest solve."""

    def __init__(self, C, a, b, tol, max_iter):
        self.C, self.a, self.b = C, a, b
        self.tol, self.max_iter = tol, max_iter
        self.cache: dict[float, tuple[float, float, np.ndarray, _SinkhornState]] = {}

    def __call__(self, lam: float):
        if lam in self.cache:
            return self.cache[lam]
        warm = None
        if self.cache:
            nearest = min(self.cache, key=lambda x: abs(math.log(x / lam)))
            warm = self.cache[nearest][3]
        st = _run_sinkhorn(self.C, self.a, self.b, lam, self.tol, self.max_iter, None, warm)
        P = st.P / st.P.sum()
        info = max(0.0, _mi_from_joint(P, P.sum(axis=1), P.sum(axis=0)))
        value = float(np.sum(P * self.C))
        self.cache[lam] = (info, value, P, st)
        return self.cache[lam]


def solve_info_constrained(
    cost: CostMatrix,
    dist_z: DiscreteDistribution,
    dist_y: DiscreteDistribution,
    R: float,
    cfg: SolverConfig | None = None,
) -> ConstrainedSolution:
    """min <C, P> subject to I_P(Z;Y) <= R.

    The multiplier is located by bracketing followed by false-position
    bisection on log(lam) (Illinois variant), stopping once |I - R| <= tol.
    A bracket inconsistent with I decreasing in lam triggers a grid scan over
    log(lam); ``fallback`` is then set on the result.
    """
    if R < 0:
        raise InputError("R must be nonnegative")
    cfg = cfg or SolverConfig()
    _check_shapes(cost, dist_z, dist_y)
    C = cost.entries
    a, b = dist_z.weights, dist_y.weights

    if R == 0:
        prod = Coupling.product(a, b)
        return ConstrainedSolution(prod.expected_cost(C), prod, math.inf, 0.0)

    value, exact = exact_ot(cost, dist_z, dist_y)
    info = mutual_information(exact)
    if info <= R:
        return ConstrainedSolution(value, exact, 0.0, info)

    path = _LambdaPath(C, a, b, cfg.tol, cfg.max_iter)
    scale = float(C[np.ix_(a > 0, b > 0)].max())
    if scale == 0:  # every pairing is free; the product coupling is optimal
        prod = Coupling.product(a, b)
        return ConstrainedSolution(0.0, prod, math.inf, 0.0)

    lam_hi = scale
    while path(lam_hi)[0] > R:
        lam_hi *= 4.0
        if lam_hi > 1e12 * scale:
            raise ConvergenceError("could not bracket the information budget from above")
    lam_lo = lam_hi / 4.0
    lam_floor = 1e-7 * scale
    while path(lam_lo)[0] < R:
        lam_lo /= 4.0
        if lam_lo < lam_floor:
            # budget exceeds I along the whole entropic path: unconstrained in effect
            return _finish(path, lam_lo * 4.0, R, cfg, fallback=False)

    x_lo, x_hi = math.log(lam_lo), math.log(lam_hi)
    h_lo, h_hi = path(lam_lo)[0] - R, path(lam_hi)[0] - R
    # Illinois rescales the retained endpoint value; the monotonicity guard
    # needs the unscaled ones
    true_lo, true_hi = h_lo, h_hi
    side = 0
    for _ in range(200):
        if abs(h_lo) <= cfg.tol:
            return _finish(path, math.exp(x_lo), R, cfg)
        if abs(h_hi) <= cfg.tol:
            return _finish(path, math.exp(x_hi), R, cfg)
        x = x_hi - h_hi * (x_hi - x_lo) / (h_hi - h_lo)
        if not (min(x_lo, x_hi) < x < max(x_lo, x_hi)):
            x = 0.5 * (x_lo + x_hi)
        h = path(math.exp(x))[0] - R
        if h > true_lo + cfg.tol or h < true_hi - cfg.tol:
            return _grid_fallback(path, lam_lo, lam_hi, R, cfg)
        if abs(h) <= cfg.tol or abs(x_hi - x_lo) < 1e-14:
            return _finish(path, math.exp(x), R, cfg)
        if h > 0:
            x_lo, h_lo, true_lo = x, h, h
            if side == -1:
                h_hi *= 0.5
            side = -1
        else:
            x_hi, h_hi, true_hi = x, h, h
            if side == 1:
                h_lo *= 0.5
            side = 1
    raise ConvergenceError("multiplier search did not converge", residual=min(abs(h_lo), abs(h_hi)))


def _finish(path, lam, R, cfg, fallback=False) -> ConstrainedSolution:
    info, value, P, _ = path(lam)
    return ConstrainedSolution(value, Coupling(P), lam, info, fallback, len(path.cache))


def _grid_fallback(path, lam_lo, lam_hi, R, cfg) -> ConstrainedSolution:
    best = None
    for lam in np.geomspace(lam_lo / 16, lam_hi * 16, 200):
        info, value, _, _ = path(float(lam))
        if info <= R + cfg.tol and (best is None or value < best[1]):
            best = (float(lam), value)
    if best is None:
        raise ConvergenceError("grid scan found no coupling within the information budget")
    return _finish(path, best[0], R, cfg, fallback=True)


# ---------------------------------------------------------------------------
# Brute-force oracles on the coupling polytope

MAX_CELLS = 9


def _polytope_points(a, b, lo, hi, resolution):
    """All grid couplings whose free top-left block lies on the given box.

    Returns an (N, m, k) array of couplings with nonnegative entries.
    """
    m, k = len(a), len(b)
    axes = [np.linspace(l, h, resolution + 1) for l, h in zip(lo, hi)]
    if axes:
        free = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, len(axes))
    else:
        free = np.zeros((1, 0))
    n = free.shape[0]
    P = np.empty((n, m, k))
    P[:, : m - 1, : k - 1] = free.reshape(n, m - 1, k - 1)
    P[:, : m - 1, k - 1] = a[: m - 1] - P[:, : m - 1, : k - 1].sum(axis=2)
    P[:, m - 1, : k - 1] = b[: k - 1] - P[:, : m - 1, : k - 1].sum(axis=1)
    P[:, m - 1, k - 1] = a[m - 1] - P[:, m - 1, : k - 1].sum(axis=1)
    ok = np.all(P >= -1e-14, axis=(1, 2))
    return np.clip(P[ok], 0.0, None)


def _batch_mi(P, a, b):
    ref = np.outer(a, b)[None]
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(P > 0, P * np.log(P / ref), 0.0)
    return terms.sum(axis=(1, 2))


def _density_mass(P, a, b, tau):
    ref = np.outer(a, b)[None]
    with np.errstate(divide="ignore", invalid="ignore"):
        dens = np.where(P > 0, np.log(P / ref), 0.0)
    info = np.sum(P * dens, axis=(1, 2))
    inside = (P > 0) & (np.abs(dens - info[:, None, None]) <= tau)
    return np.sum(np.where(inside, P, 0.0), axis=(1, 2))


def _push_to_boundary(P, target, a, b, R, iters=44):
    """Move each feasible P towards ``target`` as far as I <= R allows.

    I is convex along the segment, so the feasible part is an interval
    starting at P and bisection finds its far end.
    """
    lo = np.zeros(len(P))
    hi = np.ones(len(P))
    if _batch_mi(target[None], a, b)[0] <= R:
        lo[:] = 1.0
    else:
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ok = _batch_mi(P + mid[:, None, None] * (target[None] - P), a, b) <= R
            lo = np.where(ok, mid, lo)
            hi = np.where(ok, hi, mid)
    return P + lo[:, None, None] * (target[None] - P)


def _cheapest_vertex(a, b, C):
    """Exact OT by enumerating bases of the transportation polytope."""
    m, k = len(a), len(b)
    cells = [(i, j) for i in range(m) for j in range(k)]
    A = np.zeros((m + k, m * k))
    for c, (i, j) in enumerate(cells):
        A[i, c] = 1.0
        A[m + j, c] = 1.0
    rhs = np.concatenate([a, b])
    best, best_P = math.inf, None
    for basis in itertools.combinations(range(m * k), m + k - 1):
        sub = A[:, basis]
        x, *_ = np.linalg.lstsq(sub, rhs, rcond=None)
        if np.max(np.abs(sub @ x - rhs)) > 1e-12 or np.min(x) < -1e-14:
            continue
        P = np.zeros(m * k)
        P[list(basis)] = np.clip(x, 0.0, None)
        val = float(P @ C.ravel())
        if val < best:
            best, best_P = val, P.reshape(m, k)
    return best_P


def _grid_search(a, b, C, feasible, resolution, refine, push=None):
    """Minimise <C, P> over grid couplings passing ``feasible``.

    The product coupling and a full-polytope grid seed the incumbent; each
    of the ``refine`` passes re-grids a window of half the previous size
    centred on the incumbent. ``push`` maps feasible candidates to feasible
    candidates of lower cost. Returns (value, coupling), with value = inf if
    nothing passes.
    """
    m, k = len(a), len(b)
    upper = np.array([min(a[i], b[j]) for i in range(m - 1) for j in range(k - 1)])
    dim = len(upper)
    fine = min(resolution, max(6, int(5_000 ** (1 / max(dim, 1)))))
    best_val, best_P = math.inf, None
    prod = np.outer(a, b)[None]
    if feasible(prod)[0]:
        best_val, best_P = float(np.sum(prod * C)), prod[0]
    lo, hi = np.zeros_like(upper), upper.copy()
    res = resolution if dim <= 2 or refine == 0 else fine
    half = 2 * upper / res
    for step in range(refine + 1):
        P = _polytope_points(a, b, lo, hi, res)
        P = P[feasible(P)]
        if push is not None and len(P):
            P = push(P)
        vals = np.sum(P * C[None], axis=(1, 2))
        if len(vals) and vals.min() < best_val:
            idx = int(np.argmin(vals))
            best_val, best_P = float(vals[idx]), P[idx]
        if best_P is None or dim == 0:
            break
        if step:
            half = half / 2
        centre = best_P[: m - 1, : k - 1].ravel()
        lo = np.maximum(centre - half, 0.0)
        hi = np.minimum(centre + half, upper)
        res = fine
    return best_val, best_P


def _from_free(x, a, b):
    m, k = len(a), len(b)
    P = np.empty((m, k))
    P[: m - 1, : k - 1] = x.reshape(m - 1, k - 1)
    P[: m - 1, k - 1] = a[: m - 1] - P[: m - 1, : k - 1].sum(axis=1)
    P[m - 1, : k - 1] = b[: k - 1] - P[: m - 1, : k - 1].sum(axis=0)
    P[m - 1, k - 1] = a[m - 1] - P[m - 1, : k - 1].sum()
    return P


def _polish(P0, a, b, C, R):
    """Local SLSQP pass on the free block, started from the grid incumbent.

    The SLSQP point is pulled towards the product coupling (I = 0) until it is
    a nonnegative coupling with I <= R, so the result stays feasible.
    """
    m, k = len(a), len(b)
    cons = [
        {"type": "ineq", "fun": lambda x: R - _batch_mi(np.clip(_from_free(x, a, b), 0.0, None)[None], a, b)[0]},
        {"type": "ineq", "fun": lambda x: _from_free(x, a, b).ravel()},
    ]
    res = minimize(
        lambda x: float(np.sum(_from_free(x, a, b) * C)),
        P0[: m - 1, : k - 1].ravel(),
        method="SLSQP",
        constraints=cons,
        options={"ftol": 1e-14, "maxiter": 500},
    )
    P = _from_free(res.x, a, b)
    prod = np.outer(a, b)
    lo, hi = 0.0, 1.0
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        Q = (1 - mid) * P + mid * prod
        if Q.min() >= 0 and _batch_mi(Q[None], a, b)[0] <= R:
            hi = mid
        else:
            lo = mid
    P = (1 - hi) * P + hi * prod
    return float(np.sum(P * C)), P


def _oracle_inputs(dist_z, dist_y, cost):
    if dist_z.size * dist_y.size > MAX_CELLS:
        raise InputError(f"brute force limited to {MAX_CELLS} cells, got {dist_z.size}x{dist_y.size}")
    C = cost.entries if isinstance(cost, CostMatrix) else np.asarray(cost, dtype=float)
    if C.shape != (dist_z.size, dist_y.size):
        raise InputError("cost shape does not match supports")
    return dist_z.weights, dist_y.weights, C


def brute_force_constrained(dist_z, dist_y, cost, R: float, grid_resolution: int = 24, refine: int = 4) -> float:
    """Grid search for min <C, P> over couplings with I_P <= R.

    I_P is convex on the polytope, so the feasible set is convex. Each
    feasible grid point is slid towards the cheapest vertex (found by basis
    enumeration) until I_P = R; ``refine`` window passes then re-grid around
    the incumbent and a local SLSQP pass polishes it. Every candidate is a
    feasible coupling, so the value never undercuts the true optimum.
    ``refine = 0`` is the plain grid.
    """
    if grid_resolution < 10:
        raise InputError("grid_resolution must be >= 10")
    if R < 0:
        raise InputError("R must be nonnegative")
    a, b, C = _oracle_inputs(dist_z, dist_y, cost)
    if R == 0:
        # I = 0 only at the product; rounding would admit near-product points
        return float(np.sum(np.outer(a, b) * C))

    def feasible(P):
        return _batch_mi(P, a, b) <= R

    if refine == 0:
        return _grid_search(a, b, C, feasible, grid_resolution, 0)[0]
    target = _cheapest_vertex(a, b, C)
    value, P = _grid_search(
        a, b, C, feasible, grid_resolution, refine, lambda P: _push_to_boundary(P, target, a, b, R)
    )
    return min(value, _polish(P, a, b, C, R)[0])


def brute_force_id_constrained(
    dist_z, dist_y, cost, R: float, tau: float, delta: float, grid_resolution: int = 24, refine: int = 8
) -> float:
    """Grid search under the (R, tau, delta) information-density constraint.

    Feasible couplings satisfy I_P <= R and P(|i_P - I_P| <= tau) >= 1 - delta.
    Returns ``math.inf`` when no grid coupling is feasible. ``delta >= 1``
    makes the density condition vacuous.
    """
    if grid_resolution < 10:
        raise InputError("grid_resolution must be >= 10")
    if not tau > 0 or not delta > 0:
        raise InputError("tau and delta must be positive")
    a, b, C = _oracle_inputs(dist_z, dist_y, cost)
    if R == 0:
        return float(np.sum(np.outer(a, b) * C))

    def feasible(P):
        return (_batch_mi(P, a, b) <= R) & (_density_mass(P, a, b, tau) >= 1 - delta)

    value, _ = _grid_search(a, b, C, feasible, grid_resolution, refine)
    return value


@dataclass
class TriangleReport:
    lhs: float
    w12: float
    rhs_term: float
    rhs: float
    slack: float
    p: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("lhs", "w12", "rhs_term", "rhs", "slack", "p")}


def _comonotone_pushforward(mu1: DiscreteDistribution, mu2: DiscreteDistribution) -> DiscreteDistribution:
    """mu1 re-indexed so that atom i is g(x_i) for the increasing map g."""
    if mu1.dim != 1 or mu2.dim != 1:
        raise InputError("triangle check needs scalar supports")
    if mu1.size != mu2.size:
        raise InputError("no bijection between supports of different sizes")
    o1 = np.argsort(mu1.points[:, 0], kind="stable")
    o2 = np.argsort(mu2.points[:, 0], kind="stable")
    if np.max(np.abs(mu1.weights[o1] - mu2.weights[o2])) > WEIGHT_TOL:
        raise InputError("mu1 is not the monotone push-forward of mu2 (weights differ)")
    pts = np.empty(mu2.size)
    pts[o2] = mu1.points[o1, 0]
    return DiscreteDistribution(pts, mu2.weights.copy())


def check_triangle_id(mu1, mu2, mu3, R, tau, delta, p=2.0, grid_resolution: int = 400) -> TriangleReport:
    """Check W_p(mu1,mu3;R,tau,delta) <= W_p(mu1,mu2) + W_p(mu2,mu3;R,tau,delta).

    mu1 must be the image of mu2 under the increasing bijection of their
    sorted supports, which is the optimal map for p >= 1 on the line. Both
    constrained terms are searched over the same coupling grid (no
    incumbent-dependent refinement), so the comparison is between infima over
    one common candidate set.
    """
    mu1g = _comonotone_pushforward(mu1, mu2)
    if mu2.size * mu3.size > MAX_CELLS:
        raise InputError("triangle check limited to tiny supports")
    w12 = exact_ot_1d(mu1, mu2, p)[0] ** (1.0 / p)
    # coarse grid only: fine enough in low dimension, keeps candidate sets identical
    res = grid_resolution if (mu2.size - 1) * (mu3.size - 1) <= 1 else max(10, min(grid_resolution, 24))
    c13 = brute_force_id_constrained(mu1g, mu3, cost_matrix(mu1g, mu3, p), R, tau, delta, res, refine=0)
    c23 = brute_force_id_constrained(mu2, mu3, cost_matrix(mu2, mu3, p), R, tau, delta, res, refine=0)
    lhs = c13 ** (1.0 / p)
    rhs_term = c23 ** (1.0 / p)
    rhs = w12 + rhs_term
    slack = math.inf if math.isinf(rhs) else rhs - lhs
    return TriangleReport(lhs, w12, rhs_term, rhs, slack, p)


def product_cost(cost: CostMatrix, dist_z, dist_y) -> float:
    """Expected cost under independence, sum_ij p_i q_j C_ij."""
    return float(dist_z.weights @ cost.entries @ dist_y.weights)


def enumerate_vertices_2x2(a, b, C):
    """Both vertices of the 2x2 coupling polytope with their costs (test helper)."""
    out = []
    for t in (max(0.0, a[0] - b[1]), min(a[0], b[0])):
        P = np.array([[t, a[0] - t], [b[0] - t, a[1] - b[0] + t]])
        out.append((float(np.sum(P * C)), P))
    return out


__all__ = [
    "DiscreteDistribution",
    "CostMatrix",
    "Coupling",
    "SolverConfig",
    "ConstrainedSolution",
    "TriangleReport",
    "cost_matrix",
    "exact_ot_1d",
    "exact_ot",
    "mutual_information",
    "information_density",
    "density_concentration",
    "sinkhorn",
    "solve_info_constrained",
    "brute_force_constrained",
    "brute_force_id_constrained",
    "check_triangle_id",
    "product_cost",
]
