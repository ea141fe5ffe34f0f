"""Finite-difference operators on annular cut-cell grids.

Every Hessian entry is reduced to 1D second derivatives along lattice
lines: axis lines give the diagonal entries, and the two in-plane diagonal
lines give the mixed entry via

    u_ab = (D2_{(e_a+e_b)/sqrt2} - D2_{(e_a-e_b)/sqrt2}) / 2.

Each 1D second derivative uses the 3-point unequal-arm (Shortley-Weller)
formula; where an arm is cut by a boundary the Dirichlet datum at the
exact cut point replaces the missing neighbor. The Hessian at a node is
therefore an affine map of interior values, which makes the Newton
linearization a plain sparse matrix.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .geometry import BTYPE_INNER, BTYPE_OUTER, AnnularGrid


@dataclass(frozen=True)
class BoundaryData:
    """Dirichlet data on the two boundary components.

    Each entry is either a constant or a callable mapping an (m, n) array
    of points to m values.
    """

    outer: float | Callable
    inner: float | Callable

    def eval_outer(self, pts: np.ndarray) -> np.ndarray:
        return self._eval(self.outer, pts)

    def eval_inner(self, pts: np.ndarray) -> np.ndarray:
        return self._eval(self.inner, pts)

    @staticmethod
    def _eval(f, pts: np.ndarray) -> np.ndarray:
        if callable(f):
            return np.asarray(f(pts), dtype=float)
        return np.full(pts.shape[0], float(f))


class DiscreteOps:
    """Precomputed stencil coefficients and assembly routines for a grid."""

    def __init__(self, grid: AnnularGrid):
        self.grid = grid
        self.n = grid.dim
        self.N = grid.n_interior
        self.keys = list(grid.arms.keys())
        self._coef2 = {}
        self._coef1 = {}
        for key in self.keys:
            t = grid.arms[key]
            hm = t.length[:, 0]
            hp = t.length[:, 1]
            self._coef2[key] = (
                2.0 / (hm * (hm + hp)),
                -2.0 / (hm * hp),
                2.0 / (hp * (hm + hp)),
            )
            if key[0] == "axis":
                self._coef1[key] = (
                    -hp / (hm * (hm + hp)),
                    (hp - hm) / (hm * hp),
                    hm / (hp * (hm + hp)),
                )

    # -- boundary data ------------------------------------------------------

    def boundary_values(self, bc: BoundaryData) -> dict:
        """Dirichlet data at every cut point, as dense (N, 2) per direction."""
        out = {}
        for key in self.keys:
            t = self.grid.arms[key]
            vals = np.zeros((self.N, 2))
            if t.cut_rows.size:
                kinds = t.btype[t.cut_rows, t.cut_sides]
                data = np.empty(t.cut_rows.size)
                io = kinds == BTYPE_OUTER
                if np.any(io):
                    data[io] = bc.eval_outer(t.cut_points[io])
                ii = kinds == BTYPE_INNER
                if np.any(ii):
                    data[ii] = bc.eval_inner(t.cut_points[ii])
                vals[t.cut_rows, t.cut_sides] = data
            out[key] = vals
        return out

    def _arm_values(self, u: np.ndarray, key, bvals) -> tuple[np.ndarray, np.ndarray]:
        t = self.grid.arms[key]
        bv = bvals[key]
        safe = np.clip(t.nbr, 0, None)
        um = np.where(t.nbr[:, 0] >= 0, u[safe[:, 0]], bv[:, 0])
        up = np.where(t.nbr[:, 1] >= 0, u[safe[:, 1]], bv[:, 1])
        return um, up

    # -- differential operators ---------------------------------------------

    def second_derivative(self, u: np.ndarray, key, bvals) -> np.ndarray:
        um, up = self._arm_values(u, key, bvals)
        cm, c0, cp = self._coef2[key]
        return cm * um + c0 * u + cp * up

    def hessian(self, u: np.ndarray, bvals) -> np.ndarray:
        """Full FD Hessian at every interior node, shape (N, n, n)."""
        n = self.n
        h = np.empty((self.N, n, n))
        d2 = {key: self.second_derivative(u, key, bvals) for key in self.keys}
        for key in self.keys:
            kind, a, b = key
            if kind == "axis":
                h[:, a, a] = d2[key]
        for a in range(n):
            for b in range(a + 1, n):
                mixed = 0.5 * (d2[("diag+", a, b)] - d2[("diag-", a, b)])
                h[:, a, b] = mixed
                h[:, b, a] = mixed
        return h

    def hessian_noise(self, u: np.ndarray, bvals) -> np.ndarray:
        """Roundoff bound for each FD Hessian entry, shape (N, n, n).

        Cut arms can carry coefficients of order 1/(fraction * h^2), so
        float64 cancellation leaves an absolute noise floor proportional
        to sum |coef * value|; Newton convergence checks use this to stop
        at the representable residual instead of spinning.
        """
        n = self.n
        eps = np.finfo(float).eps
        noise = {key: None for key in self.keys}
        for key in self.keys:
            um, up = self._arm_values(u, key, bvals)
            cm, c0, cp = self._coef2[key]
            noise[key] = eps * (np.abs(cm * um) + np.abs(c0 * u) + np.abs(cp * up))
        out = np.empty((self.N, n, n))
        for key in self.keys:
            kind, a, b = key
            if kind == "axis":
                out[:, a, a] = noise[key]
        for a in range(n):
            for b in range(a + 1, n):
                mixed = 0.5 * (noise[("diag+", a, b)] + noise[("diag-", a, b)])
                out[:, a, b] = mixed
                out[:, b, a] = mixed
        return out

    def gradient(self, u: np.ndarray, bvals) -> np.ndarray:
        """FD gradient at every interior node (axis stencils only)."""
        g = np.empty((self.N, self.n))
        for key in self.keys:
            kind, a, _ = key
            if kind != "axis":
                continue
            um, up = self._arm_values(u, key, bvals)
            dm, d0, dp = self._coef1[key]
            g[:, a] = dm * um + d0 * u + dp * up
        return g

    def jacobian(self, weight_matrices: np.ndarray) -> sp.csr_matrix:
        """Sparse derivative of node residuals S_k(H_i(u)) wrt node values.

        weight_matrices holds S_k^{ij} evaluated at the current Hessians,
        shape (N, n, n); combined with the stencil coefficients this is the
        exact linearization of the FD operator.
        """
        rows_all, cols_all, data_all = [], [], []
        idx = np.arange(self.N)
        for key in self.keys:
            kind, a, b = key
            if kind == "axis":
                s = weight_matrices[:, a, a]
            elif kind == "diag+":
                s = weight_matrices[:, a, b]
            else:
                s = -weight_matrices[:, a, b]
            t = self.grid.arms[key]
            cm, c0, cp = self._coef2[key]
            rows_all.append(idx)
            cols_all.append(idx)
            data_all.append(s * c0)
            mask_m = t.nbr[:, 0] >= 0
            rows_all.append(idx[mask_m])
            cols_all.append(t.nbr[mask_m, 0])
            data_all.append((s * cm)[mask_m])
            mask_p = t.nbr[:, 1] >= 0
            rows_all.append(idx[mask_p])
            cols_all.append(t.nbr[mask_p, 1])
            data_all.append((s * cp)[mask_p])
        mat = sp.coo_matrix(
            (
                np.concatenate(data_all),
                (np.concatenate(rows_all), np.concatenate(cols_all)),
            ),
            shape=(self.N, self.N),
        )
        return mat.tocsr()


# ---------------------------------------------------------------------------
# Interpolation
# ---------------------------------------------------------------------------


def full_field(grid: AnnularGrid, values: np.ndarray, bc: BoundaryData | None = None,
               fill_inside: float = np.nan, fill_outside: float = np.nan) -> np.ndarray:
    """Interior values scattered onto the full lattice, shaped.

    Boundary-class nodes get the Dirichlet datum at their projection when
    bc is given; remaining exterior nodes get the directional fills (used
    to keep isosurface extraction away from the boundary well-behaved).
    """
    flat = grid.full_field(values)
    if bc is not None:
        outer = grid.boundary_meta["outer"]
        if outer["flat"].size:
            flat[outer["flat"]] = bc.eval_outer(outer["projection"])
        inner = grid.boundary_meta["inner"]
        if inner["flat"].size:
            flat[inner["flat"]] = bc.eval_inner(inner["projection"])
    field = flat.reshape(grid.shape)
    if not (np.isnan(fill_inside) and np.isnan(fill_outside)):
        mesh = np.meshgrid(*grid.axes, indexing="ij")
        radii = np.sqrt(sum(g**2 for g in mesh))
        nanmask = np.isnan(field)
        field = np.where(nanmask & (radii <= grid.r), fill_inside, field)
        field = np.where(np.isnan(field), fill_outside, field)
    return field


class QuadraticInterpolator:
    """Tensor-product quadratic interpolation from interior nodes only.

    The 3-point stencil per axis is shifted (searching a fixed offset
    order) until all 3^n nodes are interior, so queries within a couple of
    cells of a boundary still interpolate at full order from one side.
    """

    def __init__(self, grid: AnnularGrid, values: np.ndarray):
        self.grid = grid
        self.values_flat = grid.full_field(values)
        self.valid = np.zeros(int(np.prod(grid.shape)), dtype=bool)
        self.valid[grid.interior_flat] = True
        self.h = grid.h
        self.origin = np.array([a[0] for a in grid.axes])
        self.shape = np.array(grid.shape)
        self.strides = np.array(
            [int(np.prod(grid.shape[i + 1 :])) for i in range(grid.dim)], dtype=np.int64
        )
        n = grid.dim
        self.offsets = [np.array(d) for d in itertools.product((0, -1, 1), repeat=n)]
        self.corner_shifts = [np.array(c) for c in itertools.product((0, 1, 2), repeat=n)]

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        q = pts.shape[0]
        n = self.grid.dim
        frac = (pts - self.origin) / self.h
        center = np.rint(frac).astype(np.int64)
        base0 = center - 1
        base = np.full_like(base0, -1)
        resolved = np.zeros(q, dtype=bool)
        for off in self.offsets:
            if np.all(resolved):
                break
            cand = base0 + off
            ok = np.all((cand >= 0) & (cand + 2 < self.shape), axis=1)
            for shift in self.corner_shifts:
                flat = (cand + shift) @ self.strides
                ok &= self.valid[np.clip(flat, 0, self.valid.size - 1)] & (flat >= 0)
            newly = ok & ~resolved
            base[newly] = cand[newly]
            resolved |= ok
        if not np.all(resolved):
            bad = pts[~resolved][0]
            raise ValueError(f"no interior quadratic stencil near point {bad}")
        # per-axis Lagrange weights on the (possibly shifted) 3-point stencil
        w = np.empty((q, n, 3))
        for a in range(n):
            s = frac[:, a] - base[:, a]  # position in units of h from stencil start
            w[:, a, 0] = 0.5 * (s - 1.0) * (s - 2.0)
            w[:, a, 1] = -s * (s - 2.0)
            w[:, a, 2] = 0.5 * s * (s - 1.0)
        out = np.zeros(q)
        for shift in self.corner_shifts:
            flat = (base + shift) @ self.strides
            weight = np.ones(q)
            for a in range(n):
                weight *= w[:, a, shift[a]]
            out += weight * self.values_flat[flat]
        return out


def boundary_normal_derivative(
    grid: AnnularGrid,
    values: np.ndarray,
    bc_value: np.ndarray,
    points: np.ndarray,
    outward: np.ndarray,
    spacing: float | None = None,
):
    """Outward normal derivative at boundary points by one-sided quadratic
    differencing into the domain.

    Since the Dirichlet datum is constant along each boundary component the
    tangential gradient vanishes exactly and |Du| = |u_nu|. Returns the
    derivative and a Richardson-style error estimate (difference against
    the double-spacing stencil, divided by 3).
    """
    s = 1.5 * grid.h if spacing is None else spacing
    interp = QuadraticInterpolator(grid, values)
    f0 = np.asarray(bc_value, dtype=float)

    def one_sided(step):
        f1 = interp(points - step * outward)
        f2 = interp(points - 2.0 * step * outward)
        return (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * step)

    d1 = one_sided(s)
    d2 = one_sided(2.0 * s)
    return d1, np.abs(d1 - d2) / 3.0


def linear_field_sampler(grid: AnnularGrid, field: np.ndarray):
    """Multilinear sampler over the full lattice field (NaN passes through
    where the cell touches missing data)."""
    from scipy.interpolate import RegularGridInterpolator

    rgi = RegularGridInterpolator(
        grid.axes, field, method="linear", bounds_error=False, fill_value=np.nan
    )

    def sample(pts: np.ndarray) -> np.ndarray:
        return rgi(np.atleast_2d(pts))

    return sample
