"""Named verification bundles run by ``icot suite``.

Each suite returns a JSON-ready report {suite, passed, checks: [...]} where
every check carries its own pass flag, measured value and threshold.
"""

from __future__ import annotations

import math

import numpy as np

from . import bounds, ot, relay, sphere


def _check(name: str, passed: bool, **detail) -> dict:
    return {"name": name, "passed": bool(passed), **detail}


def _report(name: str, checks: list[dict]) -> dict:
    return {"suite": name, "passed": all(c["passed"] for c in checks), "checks": checks}


def random_summaries(rng: np.random.Generator, count: int) -> list[bounds.MomentSummary]:
    """Admissible (E, h, n): entropy at or below the Gaussian maximum for E."""
    out = []
    for _ in range(count):
        n = int(rng.integers(1, 51))
        E = float(n * rng.uniform(0.05, 20.0))
        deficit = float(rng.exponential(2.0) * n) if rng.random() > 0.1 else 0.0
        out.append(bounds.MomentSummary(E, bounds.max_entropy(E, n) - deficit, n))
    return out


def dominance(seed: int = 0, count: int = 1000) -> dict:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for m in random_summaries(rng, count):
        worst = min(worst, bounds.dominance_compare(m).slack)
    eq_dev = 0.0
    for n in range(1, 51):
        h = 0.5 * n * bounds.LOG_2PIE
        m = bounds.MomentSummary(float(n * rng.uniform(1.0, 20.0)), h, n)
        eq_dev = max(eq_dev, abs(bounds.dominance_compare(m).slack))
    return _report(
        "dominance",
        [
            _check("slack nonnegative", worst >= -1e-9, value=worst, threshold=-1e-9, samples=count),
            _check("equality at Gaussian entropy", eq_dev <= 1e-9, value=eq_dev, threshold=1e-9),
        ],
    )


def tightness(points: int = 400, rtol: float = 0.02) -> dict:
    ref = bounds.discretize_gaussian(points)
    checks = []
    for sigma in (0.5, 1.0, 1.5, 2.0):
        Z = bounds.discretize_gaussian(points, sigma)
        C = ot.cost_matrix(Z, ref, 2.0)
        m = bounds.GaussianSpec(0.0, sigma, 1).summary()
        for R in (0.1, 0.5, 1.0, 2.0):
            sol = ot.solve_info_constrained(C, Z, ref, R, ot.SolverConfig(tol=1e-7))
            target = bounds.info_rhs(m, R)
            err = abs(sol.value - target) / target
            checks.append(
                _check(f"sigma={sigma:g} R={R:g}", err <= rtol, value=sol.value, target=target, relError=err, threshold=rtol)
            )
    return _report("tightness", checks)


SPHERE_THETAS = (math.pi / 6, math.pi / 4, math.pi / 3)
SPHERE_NS = (50, 100, 200, 400, 800)
INTERSECTION_GRID = [(t, w) for t in (math.pi / 4, math.pi / 3, 5 * math.pi / 12) for w in (math.pi / 3, 5 * math.pi / 12, math.pi / 2)]


def sphere_suite(seed: int = 0) -> dict:
    checks = []
    for theta in SPHERE_THETAS:
        errs = [e for _, e in sphere.cap_exponent_check(theta, SPHERE_NS)]
        dec = all(b < a for a, b in zip(errs, errs[1:]))
        checks.append(_check(f"cap exponent decreasing theta={theta:.6g}", dec, errors=errs))
    for theta, omega in INTERSECTION_GRID:
        lim = sphere.intersection_exponent_limit(theta, omega)
        e100 = abs(sphere.log_cap_intersection(theta, omega, 100) / 100 - lim)
        e400 = abs(sphere.log_cap_intersection(theta, omega, 400) / 400 - lim)
        checks.append(_check(f"intersection exponent theta={theta:.6g} omega={omega:.6g}", e400 < e100, n100=e100, n400=e400))
    theta = math.pi / 3
    omega = math.pi / 2 - theta + 0.1
    A = sphere.SphericalSet.cap(theta, 1000)
    exact = A.blowup_measure(omega)
    est = sphere.mc_blowup(A, omega, 1000, 10_000, seed)
    checks.append(_check("blowup exact >= 0.99", exact >= 0.99, value=exact, threshold=0.99))
    z = abs(est.estimate - exact) / est.stderr
    checks.append(_check("blowup Monte Carlo within 4 stderr", z <= 4, estimate=est.estimate, stderr=est.stderr, exact=exact))
    return _report("sphere", checks)


RELAY_PN = [(P, N) for P in (0.1, 1.0, 10.0) for N in (0.1, 1.0, 10.0)]
RELAY_C0 = (0.0, 0.1, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0)


def relay_suite(seed: int = 0) -> dict:
    checks = []
    for N in (1.0, 2.0, 10.0):
        for P in (0.1, 1.0, 10.0):
            v = relay.capacity_upper(relay.RelayParams(P, N, 0.0))
            dev = abs(v - 0.5 * math.log1p(P))
            checks.append(_check(f"C0=0 identity P={P:g} N={N:g}", dev <= 1e-6, deviation=dev, threshold=1e-6))
    worst_id, worst_gap = 0.0, math.inf
    for P, N in RELAY_PN:
        for C0 in RELAY_C0:
            p = relay.RelayParams(P, N, C0)
            rep = relay.bound_report(p)
            worst_id = max(worst_id, abs(rep.upper - 0.5 * math.log1p(P) - rep.sdpi))
            worst_gap = min(worst_gap, rep.gap)
            if not rep.certified:
                checks.append(_check(f"gap certified P={P:g} N={N:g} C0={C0:g}", False, gap=rep.gap, tolerance=rep.tolerance))
    checks.append(_check("upper minus sdpi identity", worst_id <= 1e-9, deviation=worst_id, threshold=1e-9))
    checks.append(_check("certified gap positive", worst_gap > 0, minimum=worst_gap))
    rng = np.random.default_rng(seed)
    dev = 0.0
    for _ in range(1000):
        P, N = rng.uniform(0.01, 20.0, 2)
        c, r = rng.uniform(0.0, 5.0), rng.uniform(1e-3, 5.0)
        dev = max(dev, relay.assembly_check(P, N, c, r, atol=math.inf).deviation)
    checks.append(_check("assembly identity", dev < 1e-12, deviation=dev, threshold=1e-12))
    return _report("relay", checks)


def random_triangle_instance(rng: np.random.Generator):
    """Scalar mu2 with equal weights, mu1 its increasing image, mu3 arbitrary."""
    k2 = int(rng.integers(2, 4))
    k3 = 2 if k2 == 3 else int(rng.integers(2, 4))
    w2 = np.full(k2, 1.0 / k2)
    x2 = np.sort(rng.uniform(-2, 2, k2))
    x1 = np.sort(rng.uniform(-2, 2, k2))
    w3 = rng.dirichlet(np.ones(k3))
    x3 = rng.uniform(-2, 2, k3)
    mu1 = ot.DiscreteDistribution(x1, w2)
    mu2 = ot.DiscreteDistribution(x2, w2)
    mu3 = ot.DiscreteDistribution(x3, w3 / w3.sum())
    R = float(rng.uniform(0.02, 0.6))
    tau = float(rng.uniform(0.2, 5.0))
    delta = float(rng.uniform(0.05, 1.0))
    return mu1, mu2, mu3, R, tau, delta


def triangle(seed: int = 0, count: int = 50) -> dict:
    rng = np.random.default_rng(seed)
    worst = math.inf
    for _ in range(count):
        mu1, mu2, mu3, R, tau, delta = random_triangle_instance(rng)
        rep = ot.check_triangle_id(mu1, mu2, mu3, R, tau, delta, p=2.0)
        # +inf slack means both sides are infeasible on the grid
        worst = min(worst, rep.slack)
    return _report("triangle", [_check("slack >= -1e-9", worst >= -1e-9, minimum=worst, threshold=-1e-9, instances=count)])


SUITES = {
    "dominance": dominance,
    "tightness": lambda seed=0: tightness(),
    "sphere": sphere_suite,
    "relay": relay_suite,
    "triangle": triangle,
}


def run_suite(name: str, seed: int = 0) -> dict:
    if name not in SUITES:
        raise KeyError(name)
    return SUITES[name](seed=seed)
