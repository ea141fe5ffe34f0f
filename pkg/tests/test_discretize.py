import numpy as np
import pytest

from khess import discretize as dz
from khess import geometry as geo


@pytest.fixture(scope="module")
def annulus2d():
    dom = geo.build_domain(2, geo.ball_profile(1.0), 0.9, 2.0, 0.25)
    grid = geo.build_grid(dom, 0.25, 0.05)
    return dom, grid, dz.DiscreteOps(grid)


def quadratic_field(coords, A, b, c):
    return 0.5 * np.einsum("qi,ij,qj->q", coords, A, coords) + coords @ b + c


def test_hessian_exact_on_quadratics(annulus2d):
    # the SW scheme reproduces quadratics exactly, including at cut arms
    dom, grid, ops = annulus2d
    A = np.array([[2.0, 0.7], [0.7, -1.1]])
    b = np.array([0.3, -0.2])

    def f(pts):
        return quadratic_field(np.atleast_2d(pts), A, b, 0.4)

    u = f(grid.coords)
    bc = dz.BoundaryData(outer=f, inner=f)
    bvals = ops.boundary_values(bc)
    h = ops.hessian(u, bvals)
    assert np.allclose(h, A[None, :, :], atol=1e-9)
    g = ops.gradient(u, bvals)
    want = grid.coords @ A + b
    assert np.allclose(g, want, atol=1e-9)


def test_hessian_second_order_on_smooth_field(annulus2d):
    dom, grid, ops = annulus2d

    def f(pts):
        pts = np.atleast_2d(pts)
        return np.sin(pts[:, 0]) * np.exp(0.5 * pts[:, 1])

    def hess_exact(pts):
        x, y = pts[:, 0], pts[:, 1]
        s, e = np.sin(x), np.exp(0.5 * y)
        out = np.empty((pts.shape[0], 2, 2))
        out[:, 0, 0] = -s * e
        out[:, 0, 1] = out[:, 1, 0] = np.cos(x) * 0.5 * e
        out[:, 1, 1] = 0.25 * s * e
        return out

    u = f(grid.coords)
    bvals = ops.boundary_values(dz.BoundaryData(outer=f, inner=f))
    h = ops.hessian(u, bvals)
    err = np.abs(h - hess_exact(grid.coords)).max()
    # interior truncation is O(h^2); cut arms are one order lower pointwise
    assert err < 0.05


def test_jacobian_matches_fd_directional(annulus2d):
    # d/dt S_1(H(u + t v)) equals J v for the Laplacian weights (identity)
    dom, grid, ops = annulus2d
    rng = np.random.default_rng(3)
    u = rng.standard_normal(grid.n_interior)
    v = rng.standard_normal(grid.n_interior)
    bvals = ops.boundary_values(dz.BoundaryData(outer=0.0, inner=0.0))

    def s1(uv):
        h = ops.hessian(uv, bvals)
        return np.trace(h, axis1=1, axis2=2)

    T = np.broadcast_to(np.eye(2), (grid.n_interior, 2, 2))
    jac = ops.jacobian(np.array(T))
    step = 1e-6
    fd = (s1(u + step * v) - s1(u - step * v)) / (2 * step)
    assert np.allclose(jac @ v, fd, atol=1e-6)


def test_jacobian_matches_fd_nonlinear(annulus2d):
    # full nonlinear check for k = 2 via batch Newton transform weights
    from khess import symfunc as sf

    dom, grid, ops = annulus2d
    rng = np.random.default_rng(4)
    u = quadratic_field(grid.coords, 3.0 * np.eye(2), np.zeros(2), 0.0)
    v = rng.standard_normal(grid.n_interior)
    bvals = ops.boundary_values(dz.BoundaryData(outer=1.0, inner=0.5))

    def res(uv):
        return sf.batch_sk(ops.hessian(uv, bvals), 2)

    h = ops.hessian(u, bvals)
    jac = ops.jacobian(sf.batch_newton_transform(h, 2))
    step = 1e-7
    fd = (res(u + step * v) - res(u - step * v)) / (2 * step)
    got = jac @ v
    assert np.allclose(got, fd, rtol=1e-5, atol=1e-4)


def test_quadratic_interpolator_exact(annulus2d):
    dom, grid, ops = annulus2d
    A = np.array([[1.0, -0.4], [-0.4, 2.0]])
    b = np.array([0.1, 0.2])
    u = quadratic_field(grid.coords, A, b, -0.3)
    interp = dz.QuadraticInterpolator(grid, u)
    rng = np.random.default_rng(5)
    t = rng.uniform(0, 2 * np.pi, 50)
    rad = rng.uniform(0.4, 0.8, 50)
    pts = np.stack([rad * np.cos(t), rad * np.sin(t)], axis=1)
    got = interp(pts)
    want = quadratic_field(pts, A, b, -0.3)
    assert np.allclose(got, want, atol=1e-10)


def test_boundary_normal_derivative_radial(annulus2d):
    dom, grid, ops = annulus2d

    def f(pts):
        pts = np.atleast_2d(pts)
        return np.log(np.linalg.norm(pts, axis=1))

    u = f(grid.coords)
    t = np.linspace(0, 2 * np.pi, 16, endpoint=False)
    pts = np.stack([np.cos(t), np.sin(t)], axis=1)
    nrm = pts.copy()
    d, err = dz.boundary_normal_derivative(grid, u, f(pts), pts, nrm)
    assert np.allclose(d, 1.0, atol=8e-3)
    # the Richardson estimate must cover the actual error
    assert np.all(np.abs(d - 1.0) <= err + 2e-3)


def test_full_field_fills(annulus2d):
    dom, grid, ops = annulus2d
    u = np.ones(grid.n_interior)
    bc = dz.BoundaryData(outer=2.0, inner=0.0)
    field = dz.full_field(grid, u, bc, fill_inside=-9.0, fill_outside=9.0)
    assert np.isfinite(field).all()
    mid = tuple(s // 2 for s in grid.shape)
    assert field[mid] == -9.0
    assert field[0, 0] == 9.0
