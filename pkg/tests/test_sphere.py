import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate
from scipy.special import betainc, ndtr

from icot import sphere
from icot.errors import InputError

S = sphere.SphericalSet


def cap_betainc(theta, n):
    """Cap measure from the regularised incomplete beta function."""
    half = 0.5 * betainc(0.5 * (n - 1), 0.5, math.sin(theta) ** 2)
    return half if theta <= math.pi / 2 else 1 - half


def v_dblquad(theta, omega, n, beta=math.pi / 2):
    """Two-cap intersection by 2-D quadrature in (angle to pole A, azimuth towards pole B)."""
    norm_t, _ = integrate.quad(lambda t: math.sin(t) ** (n - 2), 0, math.pi)
    norm_p, _ = integrate.quad(lambda p: math.sin(p) ** (n - 3), 0, math.pi)
    cw, cb, sb = math.cos(omega), math.cos(beta), math.sin(beta)

    def inner(t):
        # <x, pole_B> = cos t cos beta + sin t sin beta cos phi >= cos omega
        if sb * math.sin(t) == 0:
            return norm_p if math.cos(t) * cb >= cw else 0.0
        c = (cw - math.cos(t) * cb) / (sb * math.sin(t))
        if c >= 1:
            return 0.0
        hi = math.pi if c <= -1 else math.acos(c)
        val, _ = integrate.quad(lambda p: math.sin(p) ** (n - 3), 0, hi, epsabs=0, epsrel=1e-12)
        return val

    val, _ = integrate.quad(lambda t: math.sin(t) ** (n - 2) * inner(t), 0, theta, epsabs=0, epsrel=1e-11, limit=200)
    return val / (norm_t * norm_p)


# --- cap measure -----------------------------------------------------------------


def test_cap_measure_examples():
    assert sphere.cap_measure(math.pi / 2, 10) == pytest.approx(0.5, abs=1e-12)
    assert sphere.cap_measure(math.pi, 7) == pytest.approx(1.0, abs=1e-12)
    assert sphere.cap_measure(math.pi / 3, 3) == pytest.approx(0.25, rel=1e-10)


@pytest.mark.parametrize("n", [3, 4, 10, 57, 300, 2000])
@pytest.mark.parametrize("theta", [0.05, 0.4, 1.0, math.pi / 2, 2.0, 3.0])
def test_cap_measure_matches_incomplete_beta(n, theta):
    exact = cap_betainc(theta, n)
    if exact > 1e-300:
        assert sphere.cap_measure(theta, n) == pytest.approx(exact, rel=1e-9)


def test_log_cap_measure_deep_tail():
    # far below double range; compare against the leading-order Laplace estimate
    n, theta = 20_000, 0.3
    lv = sphere.log_cap_measure(theta, n)
    approx = (n - 1) * math.log(math.sin(theta)) - math.log(n * math.cos(theta)) - 0.5 * math.log(2 * math.pi / n)
    assert lv == pytest.approx(approx, abs=0.05)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.01, math.pi - 0.01), st.integers(3, 400))
def test_cap_measure_complement_symmetry(theta, n):
    assert sphere.cap_measure(theta, n) + sphere.cap_measure(math.pi - theta, n) == pytest.approx(1.0, abs=1e-10)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.01, 3.0), st.floats(0.001, 0.1), st.integers(3, 200))
def test_cap_measure_increasing(theta, d, n):
    assert sphere.log_cap_measure(min(theta + d, math.pi), n) > sphere.log_cap_measure(theta, n)


def test_cap_domain_errors():
    assert sphere.cap_measure(0.0, 5) == 0.0
    with pytest.raises(InputError):
        sphere.cap_measure(-0.1, 5)
    with pytest.raises(InputError):
        sphere.cap_measure(1.0, 2)


# --- effective angle ----------------------------------------------------------------


def test_effective_angle_examples():
    assert sphere.effective_angle(0.5, 12) == pytest.approx(math.pi / 2, abs=1e-10)
    assert sphere.effective_angle(0.25, 3) == pytest.approx(math.pi / 3, abs=1e-9)
    with pytest.raises(InputError):
        sphere.effective_angle(1.5, 3)
    with pytest.raises(InputError):
        sphere.effective_angle(0.0, 3)


def test_effective_angle_round_trip():
    rng = np.random.default_rng(0)
    for _ in range(50):
        n = int(rng.integers(3, 300))
        m = float(rng.uniform(1e-6, 1 - 1e-6))
        assert sphere.cap_measure(sphere.effective_angle(m, n), n) == pytest.approx(m, abs=1e-9)


# --- cap exponent --------------------------------------------------------------------


def test_exponent_hemisphere():
    rows = sphere.cap_exponent_check(math.pi / 2, [10, 100, 1000])
    for n, err in rows:
        assert err == pytest.approx(abs(math.log(0.5) / n), rel=1e-9)


def test_exponent_examples():
    assert sphere.cap_exponent_check(math.pi / 4, [1000])[0][1] < 0.01
    errs = [e for _, e in sphere.cap_exponent_check(math.pi / 5, [50, 100, 200, 400, 800])]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    with pytest.raises(InputError):
        sphere.cap_exponent_check(1.0, [100, 50])


# --- two-cap intersection ------------------------------------------------------------


@pytest.mark.parametrize("n", [4, 7, 15])
@pytest.mark.parametrize("theta,omega", [(1.0, 1.2), (math.pi / 3, math.pi / 3), (0.8, 1.5), (1.4, 0.9)])
def test_intersection_matches_double_quadrature(n, theta, omega):
    assert sphere.cap_intersection_measure(theta, omega, n) == pytest.approx(v_dblquad(theta, omega, n), rel=1e-7)


@pytest.mark.parametrize("beta", [0.3, 1.0, 2.0])
def test_intersection_general_angle(beta):
    theta, omega, n = 0.9, 1.1, 6
    got = math.exp(sphere.log_cap_intersection(theta, omega, n, beta))
    assert got == pytest.approx(v_dblquad(theta, omega, n, beta), rel=1e-7)


def test_intersection_matches_monte_carlo():
    n, theta, omega = 8, 1.0, 1.2
    rng = np.random.default_rng(1)
    x = rng.standard_normal((400_000, n))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    hit = (x[:, 0] >= math.cos(theta)) & (x[:, 1] >= math.cos(omega))
    p = hit.mean()
    se = math.sqrt(p * (1 - p) / len(hit))
    assert abs(sphere.cap_intersection_measure(theta, omega, n) - p) <= 4 * se


@pytest.mark.parametrize("n", [5, 50, 500])
def test_intersection_reflection_symmetry(n):
    for t in (0.7, 1.2, 2.0):
        half = 0.5 * sphere.cap_measure(t, n)
        assert sphere.cap_intersection_measure(t, math.pi / 2, n) == pytest.approx(half, rel=1e-9)
        assert sphere.cap_intersection_measure(math.pi / 2, t, n) == pytest.approx(half, rel=1e-9)


@settings(max_examples=40, deadline=None)
@given(st.floats(0.2, 2.9), st.floats(0.2, 2.9), st.integers(3, 300))
def test_intersection_symmetric_and_bounded(theta, omega, n):
    a = sphere.log_cap_intersection(theta, omega, n)
    b = sphere.log_cap_intersection(omega, theta, n)
    if a == -math.inf:
        assert b == -math.inf
        return
    assert a == pytest.approx(b, rel=1e-8, abs=1e-9)
    bound = min(sphere.log_cap_measure(theta, n), sphere.log_cap_measure(omega, n))
    assert a <= bound + 1e-9


def test_intersection_exponent_example():
    lv = sphere.log_cap_intersection(math.pi / 3, math.pi / 3, 200)
    assert abs(lv / 200 - 0.5 * math.log(0.5)) < 0.05
    assert sphere.intersection_exponent_limit(math.pi / 3, math.pi / 3) == pytest.approx(0.5 * math.log(0.5))
    with pytest.raises(InputError):
        sphere.intersection_exponent_limit(0.3, 0.4)


def test_intersection_exponent_converges():
    for theta, omega in [(math.pi / 4, math.pi / 3), (5 * math.pi / 12, 5 * math.pi / 12), (math.pi / 3, math.pi / 2)]:
        lim = sphere.intersection_exponent_limit(theta, omega)
        errs = [abs(sphere.log_cap_intersection(theta, omega, n) / n - lim) for n in (100, 400, 1600)]
        assert errs[0] > errs[1] > errs[2]


def test_disjoint_caps_have_empty_intersection():
    assert sphere.log_cap_intersection(0.5, 0.5, 20) == -math.inf


# --- sets --------------------------------------------------------------------------------


def test_set_membership_and_distance():
    n = 5
    A = S.cap(0.5, n)
    x = np.eye(n)
    assert A.contains(x).tolist() == [True] + [False] * (n - 1)
    assert A.distance(x)[1] == pytest.approx(math.pi / 2 - 0.5)
    band = S.band(0.2, n)
    assert band.contains(x).tolist() == [False] + [True] * (n - 1)


def test_band_measure():
    n = 30
    band = S.band(0.2, n)
    assert band.measure() == pytest.approx(1 - 2 * cap_betainc(math.pi / 2 - 0.2, n), rel=1e-9)


def test_union_requires_disjoint_caps():
    e = np.eye(4)
    with pytest.raises(InputError):
        S.cap_union([1.0, 1.0], [e[0], e[1]])
    U = S.cap_union([0.6, 0.6], [e[0], -e[0]])
    assert U.measure() == pytest.approx(2 * sphere.cap_measure(0.6, 4), rel=1e-12)


def test_union_intersection_matches_sum():
    n = 12
    e = np.eye(n)
    U = S.cap_union([0.8, 0.8], [e[0], -e[0]])
    y = np.zeros(n)
    y[0], y[1] = math.cos(1.3), math.sin(1.3)
    lv = U.log_intersection_with_cap(y, 1.1)
    direct = np.logaddexp(
        sphere.log_cap_intersection(0.8, 1.1, n, 1.3), sphere.log_cap_intersection(0.8, 1.1, n, math.pi - 1.3)
    )
    assert lv == pytest.approx(direct, rel=1e-12)


# --- blowups ---------------------------------------------------------------------------------


@pytest.mark.parametrize("n,theta,omega", [(10, 0.6, 0.4), (200, 1.0, 0.3), (2000, math.pi / 3, 0.25)])
def test_blowup_cap_exact_vs_monte_carlo(n, theta, omega):
    A = S.cap(theta, n)
    exact = A.blowup_measure(omega)
    assert exact == pytest.approx(sphere.cap_measure(min(theta + omega, math.pi), n))
    est = sphere.mc_blowup(A, omega, n, 10_000, seed=3)
    assert abs(est.estimate - exact) <= 4 * est.stderr


def test_blowup_full_angle():
    est = sphere.mc_blowup(S.cap(0.2, 6), math.pi, 6, 1000, seed=0)
    assert est.estimate == 1.0


def test_blowup_extremal_example():
    theta = math.pi / 3
    omega = math.pi / 2 - theta + 0.1
    assert S.cap(theta, 1000).blowup_measure(omega) >= 0.99


def test_blowup_union_and_band_monte_carlo():
    n = 40
    e = np.eye(n)
    U = S.cap_union([0.9, 0.9], [e[0], -e[0]])
    exact = U.blowup_measure(0.3)
    est = sphere.mc_blowup(U, 0.3, n, 20_000, seed=4)
    assert abs(est.estimate - exact) <= 4 * est.stderr
    band = S.band(0.1, n)
    exact = band.blowup_measure(0.15)
    est = sphere.mc_blowup(band, 0.15, n, 20_000, seed=5)
    assert abs(est.estimate - exact) <= 4 * est.stderr


def test_sampling_is_seed_deterministic():
    a = sphere.sample_sphere(np.random.default_rng(9), 5, 4)
    b = sphere.sample_sphere(np.random.default_rng(9), 5, 4)
    assert np.array_equal(a, b)
    assert np.allclose(np.linalg.norm(a, axis=1), 1.0)


# --- concentration --------------------------------------------------------------------------


def test_concentration_exact_matches_monte_carlo():
    n, theta, omega, eps = 100, math.pi / 3, math.pi / 3, 0.08
    exact = sphere.concentration_fraction_exact(theta, omega, eps, n)
    est = sphere.mc_intersection_concentration(S.cap(theta, n), omega, eps, n, 600, seed=2)
    assert abs(est.fraction - exact) <= 4 * est.stderr + 1e-3


def test_concentration_large_epsilon():
    est = sphere.mc_intersection_concentration(S.cap(1.0, 50), 1.2, 1e6, 50, 200, seed=0)
    assert est.fraction == 1.0


def test_concentration_grows_with_dimension():
    vals = [sphere.concentration_fraction_exact(math.pi / 3, math.pi / 3, 0.05, n) for n in (200, 400, 1000)]
    assert vals[0] < vals[1] < vals[2]
    assert vals[2] > 0.99


def test_concentration_nested_sampling_cross_check():
    n, theta, omega, eps = 12, 1.2, 1.3, 0.15
    A = S.cap(theta, n)
    exact = sphere.mc_intersection_concentration(A, omega, eps, n, 400, seed=6)
    nested = sphere.mc_intersection_concentration(A, omega, eps, n, 400, seed=6, n_inner=4000)
    assert not nested.resolution_limited
    coarse = sphere.mc_intersection_concentration(A, omega, 5.0, n, 50, seed=6, n_inner=20)
    assert coarse.resolution_limited
    assert abs(exact.fraction - nested.fraction) <= 4 * math.hypot(exact.stderr, nested.stderr) + 0.02


def test_concentration_union_not_worse_than_cap():
    n = 100
    e = np.eye(n)
    theta = math.pi / 3
    half = sphere.effective_angle(sphere.cap_measure(theta, n) / 2, n)
    U = S.cap_union([half, half], [e[0], -e[0]])
    cap_est = sphere.mc_intersection_concentration(S.cap(theta, n), theta, 0.05, n, 400, seed=1)
    uni_est = sphere.mc_intersection_concentration(U, theta, 0.05, n, 400, seed=1)
    assert uni_est.fraction >= cap_est.fraction - 4 * math.hypot(cap_est.stderr, uni_est.stderr)


def test_concentration_preconditions():
    with pytest.raises(InputError):
        sphere.mc_intersection_concentration(S.cap(1.0, 20), 0.3, 0.1, 20, 10, seed=0)
    with pytest.raises(InputError):
        sphere.mc_intersection_concentration(S.band(0.3, 20), 1.2, 0.1, 20, 10, seed=0)


# --- alpha(eta) --------------------------------------------------------------------------------


def _caps(n, angle=1.8):
    pole_b = np.zeros(n)
    pole_b[0], pole_b[1] = math.cos(angle), math.sin(angle)
    return S.cap(1.0, n), S.cap(0.3, n, pole_b)


def test_alpha_full_cover():
    A, B = _caps(30)
    assert sphere.alpha_eta(A, B, 2.0, math.pi, 30) == pytest.approx(-2.0 / 30, abs=1e-10)


def test_alpha_empty_intersection():
    A, B = _caps(30)
    assert sphere.alpha_eta(A, B, 0.0, 0.2, 30) == math.inf


def test_alpha_nonincreasing_and_continuous():
    n = 40
    A, B = _caps(n, angle=1.3)  # B touches A
    etas = np.linspace(0.05, math.pi, 300)
    vals = np.array([sphere.alpha_eta(A, B, 0.0, float(e), n) for e in etas])
    finite = np.isfinite(vals)
    assert np.all(np.diff(vals[finite]) <= 1e-12)
    for e in etas[finite][:-1:10]:
        assert abs(sphere.alpha_eta(A, B, 0.0, float(e) + 1e-4, n) - sphere.alpha_eta(A, B, 0.0, float(e), n)) <= 1e-2


def test_eta_star_definition():
    n = 40
    A, B = _caps(n)
    eps = 0.05
    es = sphere.eta_star(A, B, 0.0, eps, n)
    assert sphere.alpha_eta(A, B, 0.0, es, n) >= eps
    assert sphere.alpha_eta(A, B, 0.0, es + 1e-6, n) < eps


def test_alpha_requires_caps():
    A, _ = _caps(10)
    with pytest.raises(InputError):
        sphere.alpha_eta(A, S.band(0.2, 10), 0.0, 1.0, 10)


# --- Gaussian halfspace ----------------------------------------------------------------------------


def test_halfspace_examples():
    g = sphere.gaussian_blowup_halfspace(-0.7, 0.0)
    assert g.gamma_a == g.gamma_at
    g = sphere.gaussian_blowup_halfspace(-1.0, 2.0)
    assert g.gamma_a == pytest.approx(0.1587, abs=1e-4)
    assert g.gamma_at == pytest.approx(0.8413, abs=1e-4)


def test_halfspace_exponent_and_blowup():
    n = 100
    a = -math.sqrt(2 * n * 0.1)
    t = math.sqrt(2 * n * 0.12)
    g = sphere.gaussian_blowup_halfspace(a, t, n)
    assert g.gamma_at == pytest.approx(float(ndtr(a + t)), rel=1e-14)
    # the nominal exponent 0.1 understates -ln Phi(a)/n, so this blowup is only about 2/3
    assert g.gamma_at == pytest.approx(0.6653, abs=1e-4)
    assert g.exponent == pytest.approx(0.1246, abs=1e-4)
    assert math.exp(-n * g.exponent) == pytest.approx(g.gamma_a, rel=1e-12)
    # with t = sqrt(2n(a' + eps)) for the actual exponent a', the blowup is large
    t_big = math.sqrt(2 * n * (g.exponent + 0.5))
    assert sphere.gaussian_blowup_halfspace(a, t_big, n).gamma_at > 0.97
