import numpy as np
import pytest

from khess import geometry as geo


def unit_ball_domain(dim=2, r0=0.9, R0=2.0, tau0=0.25):
    return geo.build_domain(dim, geo.ball_profile(1.0), r0, R0, tau0)


# ---------------------------------------------------------------------------
# build_domain certificates
# ---------------------------------------------------------------------------


def test_ball_domain_accepted():
    dom = unit_ball_domain()
    assert dom.max_rho == pytest.approx(1.0)
    assert dom.certificates["min_x_dot_nu"] == pytest.approx(1.0)


def test_ellipse_domain_accepted_starshaped():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.5, 2.0, 0.25)
    assert dom.certificates["min_x_dot_nu"] > 0
    assert dom.certificates["min_H1"] > 0  # convex


def test_big_star_perturbation_rejected():
    with pytest.raises(geo.CertificateError, match="inradius"):
        geo.build_domain(2, geo.star_profile(0.8, 3), 0.5, 2.0, 0.25)


def test_circumradius_reject():
    with pytest.raises(geo.CertificateError, match="circumradius"):
        geo.build_domain(2, geo.ball_profile(1.6), 0.9, 2.0, 0.25)


def test_tau0_range_enforced():
    with pytest.raises(geo.CertificateError):
        geo.build_domain(2, geo.ball_profile(1.0), 0.9, 2.0, 0.7)


def test_dim4_ball_only():
    dom = geo.build_domain(4, geo.ball_profile(1.0), 0.9, 2.0, 0.25)
    assert dom.dim == 4
    with pytest.raises(geo.CertificateError):
        geo.build_domain(4, geo.star_profile(0.05, 3), 0.5, 2.0, 0.25)


# ---------------------------------------------------------------------------
# signed distance
# ---------------------------------------------------------------------------


def test_distance_ball_center():
    dom = unit_ball_domain()
    assert geo.signed_distance(dom, np.array([0.0, 0.0])) == pytest.approx(1.0, abs=1e-12)


def test_distance_ball_generic():
    dom = unit_ball_domain()
    x = 0.75 * np.array([np.cos(0.3), np.sin(0.3)])
    assert geo.signed_distance(dom, x) == pytest.approx(0.25, abs=1e-12)
    assert geo.signed_distance(dom, 2.0 * x) == pytest.approx(-0.5, abs=1e-12)


def test_distance_ellipse_vs_bruteforce():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.5, 2.0, 0.25)
    x = np.array([0.5, 0.0])
    t = np.linspace(0, 2 * np.pi, 2_000_001)
    pts = np.stack([np.cos(t), 0.6 * np.sin(t)], axis=1)
    brute = np.min(np.linalg.norm(pts - x, axis=1))
    assert geo.signed_distance(dom, x) == pytest.approx(brute, abs=1e-6)


def test_distance_ball_3d():
    dom = unit_ball_domain(dim=3)
    x = np.array([0.3, -0.2, 0.5])
    assert geo.signed_distance(dom, x) == pytest.approx(1.0 - np.linalg.norm(x), abs=1e-12)


def test_distance_ellipsoid_3d_axis_points():
    dom = geo.build_domain(3, geo.ellipsoid_profile(0.7, 1.0), 0.5, 2.0, 0.25)
    # on the symmetry axis the nearest boundary point is the pole
    assert geo.signed_distance(dom, np.array([0.0, 0.0, 0.5])) == pytest.approx(0.2, abs=1e-9)
    # on the equator
    assert geo.signed_distance(dom, np.array([0.9, 0.0, 0.0])) == pytest.approx(0.1, abs=1e-9)


def test_distance_gradient_is_unit_in_collar():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.5, 2.0, 0.25)
    rng = np.random.default_rng(11)
    t = rng.uniform(0, 2 * np.pi, 40)
    pts = 0.9 * np.stack([np.cos(t), 0.6 * np.sin(t)], axis=1)
    _, grad, _ = geo.distance_hessian(dom, pts)
    assert np.allclose(np.linalg.norm(grad, axis=1), 1.0, atol=1e-5)


# ---------------------------------------------------------------------------
# boundary curvature
# ---------------------------------------------------------------------------


def test_sphere_curvatures_2d():
    dom = geo.build_domain(2, geo.ball_profile(0.8), 0.7, 2.0, 0.25)
    t = np.linspace(0, 2 * np.pi, 17)
    assert np.allclose(geo.boundary_curvature(dom, t, 1), 1 / 0.8, atol=1e-10)
    assert np.allclose(geo.boundary_curvature(dom, t, 0), 1.0)


def test_sphere_curvatures_3d():
    dom = geo.build_domain(3, geo.ball_profile(0.8), 0.7, 2.0, 0.25)
    t = np.linspace(0, np.pi, 17)
    assert np.allclose(geo.boundary_curvature(dom, t, 1), 2 / 0.8, atol=1e-10)
    assert np.allclose(geo.boundary_curvature(dom, t, 2), 1 / 0.64, atol=1e-10)


def test_ellipse_curvature_closed_form():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.5, 2.0, 0.25)
    # curvature of an ellipse at the end of the major axis: a / b^2
    assert geo.boundary_curvature(dom, 0.0, 1) == pytest.approx(1 / 0.36, rel=1e-10)
    # end of the minor axis: b / a^2
    assert geo.boundary_curvature(dom, np.pi / 2, 1) == pytest.approx(0.6, rel=1e-10)


def test_ellipsoid_curvature_fd_consistency():
    # meridian/parallel curvatures against a brute finite-difference of the
    # outward normal along the meridian
    dom = geo.build_domain(3, geo.ellipsoid_profile(0.7, 1.0), 0.5, 2.0, 0.25)
    t0 = 0.9
    h1 = geo.boundary_curvature(dom, t0, 1)
    h2 = geo.boundary_curvature(dom, t0, 2)
    dt = 1e-5
    p = geo.boundary_point(dom, np.array([t0 - dt, t0, t0 + dt]), np.zeros(3))
    nrm = geo.boundary_normal(dom, np.array([t0 - dt, t0, t0 + dt]), np.zeros(3))
    dn = (nrm[2] - nrm[0]) / (2 * dt)
    dp = (p[2] - p[0]) / (2 * dt)
    k_mer = np.dot(dn, dp) / np.dot(dp, dp)
    s = p[1][0]
    k_par = nrm[1][0] / s
    assert h1 == pytest.approx(k_mer + k_par, rel=1e-4)
    assert h2 == pytest.approx(k_mer * k_par, rel=1e-4)


def test_boundary_quadrature_measures():
    dom2 = unit_ball_domain(2)
    q2 = geo.outer_boundary_quadrature(dom2, 128)
    assert q2.weights.sum() == pytest.approx(2 * np.pi, rel=1e-12)
    dom3 = unit_ball_domain(3)
    q3 = geo.outer_boundary_quadrature(dom3, 48, 32)
    assert q3.weights.sum() == pytest.approx(4 * np.pi, rel=1e-10)
    # ellipse perimeter, reference value for (1, 0.6)
    dome = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.5, 2.0, 0.25)
    qe = geo.outer_boundary_quadrature(dome, 512)
    from scipy.special import ellipe

    ecc2 = 1 - 0.36
    perim = 4 * ellipe(ecc2)
    assert qe.weights.sum() == pytest.approx(perim, rel=1e-10)


# ---------------------------------------------------------------------------
# grid construction
# ---------------------------------------------------------------------------


def test_grid_preconditions():
    dom = unit_ball_domain()
    with pytest.raises(geo.GridResolutionError):
        geo.build_grid(dom, 0.5, 0.05)  # r >= r0/2
    with pytest.raises(geo.GridResolutionError):
        geo.build_grid(dom, 0.2, 0.06)  # h > r/4


def test_grid_classification_partition_and_origin():
    dom = unit_ball_domain()
    grid = geo.build_grid(dom, 0.2, 0.05)
    counts = {c: int(np.sum(grid.node_class == c)) for c in range(4)}
    assert sum(counts.values()) == int(np.prod(grid.shape))
    # origin is inside the puncture: exterior
    mid = tuple(s // 2 for s in grid.shape)
    assert grid.node_class[mid] == geo.NODE_EXTERIOR
    assert counts[geo.NODE_INTERIOR] == grid.n_interior


def test_inner_boundary_resolved():
    dom = unit_ball_domain()
    grid = geo.build_grid(dom, 0.2, 0.05)
    inner_cuts = 0
    for table in grid.arms.values():
        inner_cuts += int(np.sum(table.btype == geo.BTYPE_INNER))
    assert inner_cuts >= 24


def test_grid_rebuild_bitwise_identical():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.4, 2.0, 0.25)
    g1 = geo.build_grid(dom, 0.15, 0.0375)
    g2 = geo.build_grid(dom, 0.15, 0.0375)
    assert g1.node_class.tobytes() == g2.node_class.tobytes()
    assert g1.coords.tobytes() == g2.coords.tobytes()
    for key in g1.arms:
        assert g1.arms[key].length.tobytes() == g2.arms[key].length.tobytes()


def test_cut_points_on_boundaries():
    dom = geo.build_domain(2, geo.ellipse_profile(1.0, 0.6), 0.4, 2.0, 0.25)
    grid = geo.build_grid(dom, 0.15, 0.0375)
    for table in grid.arms.values():
        if table.cut_rows.size == 0:
            continue
        pts = table.cut_points
        kinds = table.btype[table.cut_rows, table.cut_sides]
        inner = pts[kinds == geo.BTYPE_INNER]
        if inner.size:
            assert np.allclose(np.linalg.norm(inner, axis=1), 0.15, atol=1e-9)
        outer = pts[kinds == geo.BTYPE_OUTER]
        if outer.size:
            ang = geo.direction_angle(dom, outer)
            assert np.allclose(
                np.linalg.norm(outer, axis=1), dom.profile.rho(ang), atol=1e-9
            )


def test_arm_lengths_positive_and_bounded():
    dom = unit_ball_domain()
    grid = geo.build_grid(dom, 0.2, 0.05)
    for table in grid.arms.values():
        assert np.all(table.length > 0)
        assert np.all(table.length <= table.base_length + 1e-12)


def test_boundary_meta_projections():
    dom = unit_ball_domain()
    grid = geo.build_grid(dom, 0.2, 0.05)
    outer = grid.boundary_meta["outer"]
    assert np.allclose(np.linalg.norm(outer["projection"], axis=1), 1.0, atol=1e-10)
    assert np.allclose(np.linalg.norm(outer["normal"], axis=1), 1.0, atol=1e-12)
    inner = grid.boundary_meta["inner"]
    assert np.allclose(np.linalg.norm(inner["projection"], axis=1), 0.2, atol=1e-12)


def test_grid_function_validation():
    dom = unit_ball_domain()
    grid = geo.build_grid(dom, 0.2, 0.05)
    f = geo.GridFunction.from_callable(grid, lambda x: np.linalg.norm(x, axis=1))
    assert f.values.shape == (grid.n_interior,)
    with pytest.raises(ValueError):
        geo.GridFunction(grid, np.zeros(3))
