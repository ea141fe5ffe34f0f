import numpy as np
import pytest

from khess import barriers as bar
from khess import geometry as geo
from khess import radial
from khess import symfunc as sf


@pytest.fixture(scope="module")
def ball2():
    return geo.build_domain(2, geo.ball_profile(1.0), 0.5, 2.0, 0.25)


@pytest.fixture(scope="module")
def ball3():
    return geo.build_domain(3, geo.ball_profile(1.0), 0.5, 2.0, 0.25)


# ---------------------------------------------------------------------------
# fundamental solution
# ---------------------------------------------------------------------------


def test_fundamental_values():
    assert bar.fundamental_solution(4, 3, np.array([1.0, 0, 0, 0])) == pytest.approx(1.0)
    assert bar.fundamental_solution(2, 1, np.array([1.0, 0.0])) == pytest.approx(0.0)
    assert bar.fundamental_solution(3, 1, np.array([0.5, 0, 0])) == pytest.approx(-(0.5**-1.0))


def test_fundamental_pole_rejected():
    with pytest.raises(ValueError):
        bar.fundamental_solution(3, 2, np.zeros(3))


def test_fundamental_annihilates_sk():
    # analytic radial Hessian of G_k has S_k = 0 (checked through symfunc)
    for n, k in [(3, 2), (2, 1), (4, 3), (3, 1)]:
        sign = -1.0 if 2 * k < n else 1.0
        alpha = 2.0 - n / k

        def dphi(rho):
            if 2 * k == n:
                return 1.0 / rho
            return sign * alpha * rho ** (alpha - 1.0)

        def d2phi(rho):
            if 2 * k == n:
                return -1.0 / rho**2
            return sign * alpha * (alpha - 1.0) * rho ** (alpha - 2.0)

        for rho in (0.3, 0.8):
            x = np.zeros(n)
            x[-1] = rho
            h = radial.radial_hessian(x, dphi(rho), d2phi(rho))
            assert abs(sf.sk(h, k)) < 1e-9


# ---------------------------------------------------------------------------
# outer profile w
# ---------------------------------------------------------------------------


def test_w_high_regime_boundary_value():
    # k > n/2 at |x| = R0: 1/2 + 1/2 = 1
    val = bar.w_profile("k>n/2", np.array([2.0, 0.0]), 2.0, 0.25, 2, 2)
    assert val == pytest.approx(1.0)


def test_w_critical_regime_value():
    # at |x| = R0 with tau0 = 1/4: a0/2 = log(4/3)/4
    val = bar.w_profile("k=n/2", np.array([2.0, 0.0]), 2.0, 0.25, 2, 1)
    assert val == pytest.approx(0.25 * np.log(4.0 / 3.0))
    assert val == pytest.approx(0.07192, abs=5e-6)


def test_w_low_regime_value():
    # n=4, k=1 at |x| = R0: the power terms cancel, leaving a0/2 - 1
    prof = bar.outer_profile(4, 1, 2.0, 0.25)
    val = bar.w_profile("k<n/2", np.array([2.0, 0, 0, 0]), 2.0, 0.25, 4, 1)
    assert val == pytest.approx(-1.0 + prof.a0 / 2.0)


def test_w_regime_mismatch_rejected():
    with pytest.raises(bar.RegimeError):
        bar.w_profile("k>n/2", np.array([1.0, 0.0]), 2.0, 0.25, 3, 1)


def test_w_hessian_floor_all_regimes():
    # S_k(D^2 w) >= the certified floor, via the analytic radial Hessian
    for n, k in [(2, 2), (2, 1), (3, 1), (3, 2), (4, 1), (4, 2), (4, 3)]:
        prof = bar.outer_profile(n, k, 2.0, 0.25)
        for rho in (0.2, 0.5, 1.0, 1.4):
            x = np.zeros(n)
            x[0] = rho
            h = radial.radial_hessian(x, float(prof.dvalue(rho)), float(prof.d2value(rho)))
            assert sf.sk(h, k) >= prof.sk_floor - 1e-12, (n, k, rho)


# ---------------------------------------------------------------------------
# collar profile
# ---------------------------------------------------------------------------


def test_phi0_zero_on_boundary(ball2):
    collar = bar.calibrate_collar(ball2, 2)
    pts = geo.boundary_point(ball2, np.array([0.3]))
    assert bar.phi0_profile(ball2, collar, collar.t0, pts)[0] == pytest.approx(0.0, abs=1e-12)


def test_phi0_closed_form(ball2):
    collar = bar.calibrate_collar(ball2, 2)
    # point at depth mu0 with t0 = 1: e^{-mu0} - 1
    x = np.array([1.0 - collar.mu0, 0.0])
    got = bar.phi0_profile(ball2, collar, 1.0, x)
    assert got == pytest.approx(np.exp(-collar.mu0) - 1.0, abs=1e-10)


def test_phi0_outside_collar_rejected(ball2):
    collar = bar.calibrate_collar(ball2, 2)
    with pytest.raises(ValueError):
        bar.phi0_profile(ball2, collar, collar.t0, np.array([0.1, 0.0]))


def test_collar_certification_scaled_profile(ball2):
    # S_k(D^2 (K0 Phi0)) >= K0^k eps0 at sampled collar points
    collar = bar.calibrate_collar(ball2, 2)
    k0 = 7.0
    t = np.linspace(0, 2 * np.pi, 24, endpoint=False)
    pts = (1.0 - collar.mu0) * np.stack([np.cos(t), np.sin(t)], axis=1)
    h_phi, _, _ = bar.phi0_hessians(ball2, collar.t0, pts)
    vals = sf.batch_sk(k0**2 * h_phi, 2)
    assert np.all(vals >= k0**2 * collar.eps0 - 1e-8)


# ---------------------------------------------------------------------------
# splice kernel
# ---------------------------------------------------------------------------


def test_glue_saturated_regions_exact():
    rng = np.random.default_rng(2)
    h = rng.standard_normal(100)
    delta = 0.3
    g_low = h - delta - rng.uniform(0.0, 1.0, 100)
    assert np.array_equal(bar.guan_glue(h, g_low, delta), h)
    g_high = h + delta + rng.uniform(0.0, 1.0, 100)
    assert np.array_equal(bar.guan_glue(h, g_high, delta), g_high)


def test_glue_equal_inputs_bounded_bump():
    h = np.linspace(-1, 1, 11)
    delta = 0.4
    out = bar.guan_glue(h, h, delta)
    bump = out - h
    assert np.all(bump > 0)
    assert np.allclose(bump, bump[0])
    assert bump[0] < delta / 2


def test_glue_dominates_max():
    rng = np.random.default_rng(3)
    h = rng.standard_normal(200)
    g = h + rng.uniform(-0.5, 0.5, 200)
    out = bar.guan_glue(h, g, 0.3)
    assert np.all(out >= np.maximum(h, g) - 1e-14)


def test_kernel_derivatives_consistent():
    kern = bar.GlueKernel(0.5)
    c = np.linspace(-0.6, 0.6, 41)
    step = 1e-6
    fd1 = (kern.excess(c + step) - kern.excess(c - step)) / (2 * step)
    assert np.allclose(kern.dexcess(c), fd1, atol=1e-8)
    fd2 = (kern.excess(c + step) - 2 * kern.excess(c) + kern.excess(c - step)) / step**2
    assert np.allclose(kern.d2excess(c), fd2, atol=1e-3)
    # G' saturates at 0 and 1
    assert kern.dexcess(-0.8) == 0.0
    assert kern.dexcess(0.8) == 1.0


# ---------------------------------------------------------------------------
# barrier sets
# ---------------------------------------------------------------------------


def test_delta_formula_high_regime(ball3):
    b = bar.build_barriers(ball3, 3, 2, 0.2)
    assert b.constants["delta"] == pytest.approx(0.5 * 0.75**0.5)
    assert b.constants["delta"] == pytest.approx(0.4330, abs=1e-4)


def test_inner_datum_formula(ball3):
    b = bar.build_barriers(ball3, 3, 2, 0.2)
    r, R0 = 0.2, 2.0
    want = 0.5 * (r / R0) ** 0.5 + r**2 / (2 * R0**2)
    assert b.inner_datum() == pytest.approx(want)


def test_boundary_shift_per_regime(ball2, ball3):
    assert bar.build_barriers(ball2, 2, 2, 0.2).outer_datum() == 1.0
    assert bar.build_barriers(ball2, 2, 1, 0.2).outer_datum() == 0.0
    assert bar.build_barriers(ball3, 3, 1, 0.2).outer_datum() == -1.0


def test_k_eq_n_half_odd_n_rejected(ball3):
    with pytest.raises(bar.RegimeError):
        bar.build_barriers(ball3, 3, 1.5, 0.2)  # type: ignore[arg-type]


@pytest.mark.parametrize(
    "n,k,h",
    [(2, 2, 0.025), (2, 1, 0.025), (3, 1, 0.05), (3, 2, 0.05)],
)
def test_certification_all_regimes_ball(n, k, h, ball2, ball3):
    dom = ball2 if n == 2 else ball3
    b = bar.build_barriers(dom, n, k, 0.2)
    grid = geo.build_grid(dom, 0.2, h)
    rep = bar.certify_barriers(b, grid)
    assert rep["sk_certified"], rep["min_sk_subsolution"]
    assert rep["min_sk_subsolution"] >= 0.9 * b.constants["eps1"]
    assert rep["gamma_k_admissible"]
    assert rep["ordering_ok"] and rep["ordering_margin"] > 0
    assert rep["glue_h_region_exact"] and rep["glue_g_region_exact"]
    assert rep["outside_collar_is_w"] and rep["dominates_max"]
    assert rep["outer_trace_error"] < 1e-12
    assert rep["inner_trace_error"] < 1e-12
    assert rep["sk_cross_check_gap"] < 5e-3


def test_certification_ellipse():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.75), 0.55, 2.0, 0.25)
    b = bar.build_barriers(dom, 2, 2, 0.2)
    grid = geo.build_grid(dom, 0.2, 0.025)
    rep = bar.certify_barriers(b, grid)
    assert rep["sk_certified"]
    assert rep["ordering_ok"]
    assert rep["outer_trace_error"] < 1e-10


def test_subsolution_below_supersolution_shared_nodes(ball2):
    b = bar.build_barriers(ball2, 2, 2, 0.2)
    grid = geo.build_grid(ball2, 0.2, 0.025)
    sub = b.subsolution(grid.coords)
    sup = b.supersolution(grid.coords)
    assert np.all(sub <= sup + 10 * grid.h**2)
