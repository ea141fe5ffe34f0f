"""Star-shaped smooth domains, signed distance, and annular lattices.

Domains are radial graphs over the unit sphere: the boundary is
x = rho(theta) * direction(theta), which is lossless for star-shaped
targets and gives exact boundary normals and principal curvatures.
In dimension 3 profiles are axisymmetric in the colatitude measured from
the +z axis, so projections and curvatures reduce to the meridian plane.

The annular lattice Omega_r = Omega \\ closure(B_r) is a uniform grid with
nodes classified interior / outer-boundary / inner-boundary / exterior;
every interior stencil arm that crosses a boundary records the exact cut
distance and cut point for Shortley-Weller one-sided differences.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi
from typing import Callable

import numpy as np

from . import symfunc


class CertificateError(ValueError):
    """A domain certificate (inradius, circumradius, star-shapedness,
    convexity) fails; the message names the inequality and a witness."""


class GridResolutionError(ValueError):
    """Grid parameters violate the puncture-resolution preconditions."""


# ---------------------------------------------------------------------------
# Radial profiles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RadialProfile:
    """Smooth positive boundary radius over angles, with two derivatives.

    For dim 2 the parameter is the polar angle (2*pi periodic); for dim 3
    it is the colatitude in [0, pi] of an axisymmetric surface.
    """

    name: str
    rho: Callable[[np.ndarray], np.ndarray]
    drho: Callable[[np.ndarray], np.ndarray]
    d2rho: Callable[[np.ndarray], np.ndarray]
    params: dict = field(default_factory=dict)


def ball_profile(radius: float = 1.0) -> RadialProfile:
    return RadialProfile(
        "ball",
        lambda t: np.full_like(np.asarray(t, dtype=float), radius),
        lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        lambda t: np.zeros_like(np.asarray(t, dtype=float)),
        {"radius": radius},
    )


def two_axis_profile(p: float, q: float, name: str, params: dict) -> RadialProfile:
    """rho(t) = p*q / sqrt(q^2 cos^2 t + p^2 sin^2 t).

    Semi-axis p along t = 0 and q along t = pi/2. An ellipse in 2D; the
    meridian of an axisymmetric ellipsoid in 3D (t measured from the
    symmetry axis, so p is the polar and q the equatorial semi-axis).
    """

    def f(t):
        t = np.asarray(t, dtype=float)
        return q * q * np.cos(t) ** 2 + p * p * np.sin(t) ** 2

    def df(t):
        t = np.asarray(t, dtype=float)
        return (p * p - q * q) * np.sin(2.0 * t)

    def d2f(t):
        t = np.asarray(t, dtype=float)
        return 2.0 * (p * p - q * q) * np.cos(2.0 * t)

    def rho(t):
        return p * q * f(t) ** -0.5

    def drho(t):
        return -0.5 * p * q * f(t) ** -1.5 * df(t)

    def d2rho(t):
        return 0.75 * p * q * f(t) ** -2.5 * df(t) ** 2 - 0.5 * p * q * f(t) ** -1.5 * d2f(t)

    return RadialProfile(name, rho, drho, d2rho, params)


def ellipse_profile(a: float, b: float) -> RadialProfile:
    return two_axis_profile(a, b, "ellipse", {"a": a, "b": b})


def ellipsoid_profile(polar: float, equatorial: float) -> RadialProfile:
    return two_axis_profile(
        polar, equatorial, "ellipsoid", {"polar": polar, "equatorial": equatorial}
    )


def star_profile(alpha: float, m: int, base: float = 1.0) -> RadialProfile:
    """rho(t) = base * (1 + alpha cos(m t)); alpha small keeps certificates."""

    def rho(t):
        return base * (1.0 + alpha * np.cos(m * np.asarray(t, dtype=float)))

    def drho(t):
        return -base * alpha * m * np.sin(m * np.asarray(t, dtype=float))

    def d2rho(t):
        return -base * alpha * m * m * np.cos(m * np.asarray(t, dtype=float))

    return RadialProfile("star", rho, drho, d2rho, {"alpha": alpha, "m": m, "base": base})


# ---------------------------------------------------------------------------
# Domain specification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DomainSpec:
    """Validated star-shaped domain with inradius/circumradius certificates.

    r0: B_{r0} is compactly contained in the domain.
    R0, tau0: the domain is compactly contained in B_{(1-tau0) R0}.
    """

    dim: int
    profile: RadialProfile
    r0: float
    R0: float
    tau0: float
    convexity_class: str
    certificates: dict

    @property
    def max_rho(self) -> float:
        return self.certificates["max_rho"]

    @property
    def min_rho(self) -> float:
        return self.certificates["min_rho"]


def _param_range(dim: int, samples: int) -> np.ndarray:
    if dim == 2:
        return np.linspace(0.0, 2.0 * pi, samples, endpoint=False)
    return np.linspace(0.0, pi, samples)


def build_domain(
    dim: int,
    profile: RadialProfile,
    r0: float,
    R0: float,
    tau0: float,
    samples: int = 720,
) -> DomainSpec:
    """Validate certificates by dense angular sampling and build the spec.

    Raises CertificateError naming the violated inequality and a witness
    angle when the profile does not support the certificates.
    """
    if dim not in (2, 3, 4):
        raise CertificateError(f"dimension {dim} unsupported")
    if not 0.0 < tau0 < 0.5:
        raise CertificateError(f"tau0={tau0} outside (0, 1/2)")
    if r0 <= 0 or R0 <= 0:
        raise CertificateError("r0 and R0 must be positive")
    if dim == 4 and profile.name != "ball":
        raise CertificateError("dim 4 is supported only through the radial (ball) path")

    t = _param_range(dim if dim < 4 else 3, samples)
    rho = np.asarray(profile.rho(t), dtype=float)
    drho = np.asarray(profile.drho(t), dtype=float)
    if np.any(rho <= 0):
        i = int(np.argmin(rho))
        raise CertificateError(f"profile not positive: rho({t[i]:.6f}) = {rho[i]:.6g}")
    i_min, i_max = int(np.argmin(rho)), int(np.argmax(rho))
    if rho[i_min] <= r0:
        raise CertificateError(
            f"inradius certificate fails: min rho = {rho[i_min]:.6g} <= r0 = {r0} "
            f"at angle {t[i_min]:.6f}"
        )
    if rho[i_max] > (1.0 - tau0) * R0:
        raise CertificateError(
            f"circumradius certificate fails: max rho = {rho[i_max]:.6g} > "
            f"(1 - tau0) R0 = {(1.0 - tau0) * R0:.6g} at angle {t[i_max]:.6f}"
        )
    # star-shapedness: x . nu = rho^2 / sqrt(rho^2 + rho'^2) on a radial graph
    x_dot_nu = rho**2 / np.hypot(rho, drho)
    j = int(np.argmin(x_dot_nu))
    if x_dot_nu[j] <= 0:
        raise CertificateError(f"star-shapedness fails at angle {t[j]:.6f}")

    if dim == 4:
        radius = profile.params["radius"]
        kappa = np.full((3, t.size), 1.0 / radius)
    else:
        kappa = _principal_curvatures(profile, dim, t)
    h_mins = {}
    for m in range(1, dim):
        h_mins[f"min_H{m}"] = float(np.min([symfunc.elem_sym(kk, m) for kk in kappa.T]))
    convex = h_mins.get("min_H1", np.inf) > 0 and all(v > 0 for v in h_mins.values())
    strictly = "strictly-convex" if convex else "starshaped"

    certificates = {
        "min_rho": float(rho[i_min]),
        "max_rho": float(rho[i_max]),
        "min_x_dot_nu": float(x_dot_nu[j]),
        "samples": samples,
        **h_mins,
    }
    return DomainSpec(dim, profile, r0, R0, tau0, strictly, certificates)


def is_strictly_j_convex(domain: DomainSpec, j: int) -> bool:
    """True when all sampled H_1..H_j boundary curvatures are positive."""
    if j == 0:
        return True
    return all(domain.certificates.get(f"min_H{m}", -1.0) > 0 for m in range(1, j + 1))


# ---------------------------------------------------------------------------
# Boundary geometry: points, normals, curvatures, quadrature
# ---------------------------------------------------------------------------


def _meridian(profile: RadialProfile, t: np.ndarray):
    """Meridian curve (s, z), its velocity and acceleration."""
    t = np.asarray(t, dtype=float)
    rho, dr, d2r = profile.rho(t), profile.drho(t), profile.d2rho(t)
    st, ct = np.sin(t), np.cos(t)
    s = rho * st
    z = rho * ct
    s1 = dr * st + rho * ct
    z1 = dr * ct - rho * st
    s2 = (d2r - rho) * st + 2.0 * dr * ct
    z2 = (d2r - rho) * ct - 2.0 * dr * st
    return s, z, s1, z1, s2, z2


def _principal_curvatures(profile: RadialProfile, dim: int, t: np.ndarray) -> np.ndarray:
    """Principal curvatures stacked as shape (dim-1, len(t)); outward
    convention gives +1/R on a sphere of radius R."""
    t = np.asarray(t, dtype=float)
    if dim == 2:
        rho, dr, d2r = profile.rho(t), profile.drho(t), profile.d2rho(t)
        kappa = (rho**2 + 2.0 * dr**2 - rho * d2r) / (rho**2 + dr**2) ** 1.5
        return kappa[None, :]
    s, z, s1, z1, s2, z2 = _meridian(profile, t)
    sigma = np.hypot(s1, z1)
    k_mer = (z1 * s2 - s1 * z2) / sigma**3
    with np.errstate(divide="ignore", invalid="ignore"):
        k_par = np.where(np.abs(s) > 1e-9, -z1 / (sigma * np.where(np.abs(s) > 1e-9, s, 1.0)), k_mer)
    return np.stack([k_mer, k_par])


def boundary_curvature(domain: DomainSpec, theta, m: int):
    """m-th elementary symmetric function H_m of the principal curvatures
    of the outer boundary at parameter angle theta (H_0 = 1)."""
    if not 0 <= m <= domain.dim - 1:
        raise ValueError(f"m={m} out of range for dim {domain.dim}")
    t = np.atleast_1d(np.asarray(theta, dtype=float))
    if m == 0:
        out = np.ones_like(t)
    elif domain.dim == 4:
        from math import comb

        radius = domain.profile.params["radius"]
        out = np.full_like(t, comb(3, m) / radius**m)
    elif domain.dim == 2:
        out = _principal_curvatures(domain.profile, domain.dim, t)[0]
    else:
        kappa = _principal_curvatures(domain.profile, domain.dim, t)
        if m == 1:
            out = kappa[0] + kappa[1]
        else:
            out = kappa[0] * kappa[1]
    if np.isscalar(theta) or np.asarray(theta).ndim == 0:
        return float(out[0])
    return out


def boundary_point(domain: DomainSpec, theta, phi=None) -> np.ndarray:
    """Boundary point(s) at parameter angle(s); phi is the azimuth (dim 3)."""
    t = np.asarray(theta, dtype=float)
    rho = domain.profile.rho(t)
    if domain.dim == 2:
        return np.stack([rho * np.cos(t), rho * np.sin(t)], axis=-1)
    p = np.asarray(phi, dtype=float)
    st = np.sin(t)
    return np.stack(
        [rho * st * np.cos(p), rho * st * np.sin(p), rho * np.cos(t)], axis=-1
    )


def boundary_normal(domain: DomainSpec, theta, phi=None) -> np.ndarray:
    """Outward unit normal at parameter angle(s)."""
    t = np.asarray(theta, dtype=float)
    rho = domain.profile.rho(t)
    dr = domain.profile.drho(t)
    sigma = np.hypot(rho, dr)
    if domain.dim == 2:
        ct, st = np.cos(t), np.sin(t)
        er = np.stack([ct, st], axis=-1)
        et = np.stack([-st, ct], axis=-1)
        return (rho[..., None] * er - dr[..., None] * et) / sigma[..., None]
    p = np.asarray(phi, dtype=float)
    st, ct = np.sin(t), np.cos(t)
    cp, sp = np.cos(p), np.sin(p)
    er = np.stack([st * cp, st * sp, ct], axis=-1)
    et = np.stack([ct * cp, ct * sp, -st], axis=-1)
    return (rho[..., None] * er - dr[..., None] * et) / sigma[..., None]


@dataclass(frozen=True)
class BoundaryQuadrature:
    """Quadrature rule on the outer boundary: points, normals, weights,
    parameter angles. Weights sum to the boundary measure."""

    points: np.ndarray
    normals: np.ndarray
    weights: np.ndarray
    thetas: np.ndarray


def outer_boundary_quadrature(domain: DomainSpec, n_theta: int = 256, n_phi: int = 64) -> BoundaryQuadrature:
    prof = domain.profile
    if domain.dim == 2:
        t = np.linspace(0.0, 2.0 * pi, n_theta, endpoint=False)
        rho, dr = prof.rho(t), prof.drho(t)
        w = np.hypot(rho, dr) * (2.0 * pi / n_theta)
        return BoundaryQuadrature(boundary_point(domain, t), boundary_normal(domain, t), w, t)
    # Gauss-Legendre in colatitude x uniform azimuth
    x, wx = np.polynomial.legendre.leggauss(n_theta)
    t = 0.5 * pi * (x + 1.0)
    wt = 0.5 * pi * wx
    rho, dr = prof.rho(t), prof.drho(t)
    sigma = np.hypot(rho, dr)
    p = np.linspace(0.0, 2.0 * pi, n_phi, endpoint=False)
    wp = 2.0 * pi / n_phi
    tt, pp = np.meshgrid(t, p, indexing="ij")
    pts = boundary_point(domain, tt.ravel(), pp.ravel())
    nrm = boundary_normal(domain, tt.ravel(), pp.ravel())
    w2d = (rho * np.sin(t) * sigma * wt)[:, None] * np.full((1, n_phi), wp)
    return BoundaryQuadrature(pts, nrm, w2d.ravel(), tt.ravel())


# ---------------------------------------------------------------------------
# Projection and signed distance
# ---------------------------------------------------------------------------


def _project_meridian(profile: RadialProfile, pts2: np.ndarray, scan: int = 720, half_plane: bool = False):
    """Project 2D points onto the curve t -> (rho sin t, rho cos t) if
    half_plane (meridian, t in [0, pi]) else t -> (rho cos t, rho sin t)
    (full polar curve). Dense scan then vectorized Newton refinement.

    Returns (t_star, foot_points, distances).
    """
    if half_plane:
        tgrid = np.linspace(0.0, pi, scan)
    else:
        tgrid = np.linspace(0.0, 2.0 * pi, scan, endpoint=False)

    def curve(t):
        rho = profile.rho(t)
        if half_plane:
            return np.stack([rho * np.sin(t), rho * np.cos(t)], axis=-1)
        return np.stack([rho * np.cos(t), rho * np.sin(t)], axis=-1)

    def curve_derivs(t):
        rho, dr, d2r = profile.rho(t), profile.drho(t), profile.d2rho(t)
        st, ct = np.sin(t), np.cos(t)
        if half_plane:
            c = np.stack([rho * st, rho * ct], axis=-1)
            c1 = np.stack([dr * st + rho * ct, dr * ct - rho * st], axis=-1)
            c2 = np.stack(
                [(d2r - rho) * st + 2 * dr * ct, (d2r - rho) * ct - 2 * dr * st], axis=-1
            )
        else:
            c = np.stack([rho * ct, rho * st], axis=-1)
            c1 = np.stack([dr * ct - rho * st, dr * st + rho * ct], axis=-1)
            c2 = np.stack(
                [(d2r - rho) * ct - 2 * dr * st, (d2r - rho) * st + 2 * dr * ct], axis=-1
            )
        return c, c1, c2

    pts2 = np.atleast_2d(pts2)
    cgrid = curve(tgrid)
    best = np.empty(pts2.shape[0])
    tbest = np.empty(pts2.shape[0])
    chunk = 4096
    for lo in range(0, pts2.shape[0], chunk):
        sl = slice(lo, min(lo + chunk, pts2.shape[0]))
        d2 = ((pts2[sl, None, :] - cgrid[None, :, :]) ** 2).sum(axis=2)
        j = np.argmin(d2, axis=1)
        best[sl] = d2[np.arange(j.size), j]
        tbest[sl] = tgrid[j]
    step_cap = tgrid[1] - tgrid[0]
    t = tbest.copy()
    for _ in range(12):
        c, c1, c2 = curve_derivs(t)
        diff = c - pts2
        g = np.sum(diff * c1, axis=1)
        gp = np.sum(c1 * c1, axis=1) + np.sum(diff * c2, axis=1)
        stepv = np.where(gp > 1e-300, g / np.where(gp > 1e-300, gp, 1.0), 0.0)
        stepv = np.clip(stepv, -step_cap, step_cap)
        t = t - stepv
        if half_plane:
            t = np.clip(t, 0.0, pi)
    foot = curve(t)
    dist = np.linalg.norm(foot - pts2, axis=1)
    # keep the scan minimum if Newton wandered to a worse stationary point
    worse = dist**2 > best + 1e-15
    if np.any(worse):
        t[worse] = tbest[worse]
        foot[worse] = curve(t[worse])
        dist[worse] = np.linalg.norm(foot[worse] - pts2[worse], axis=1)
    return t, foot, dist


def project_outer_boundary(domain: DomainSpec, pts: np.ndarray):
    """Nearest outer-boundary point for each query; returns (foot, dist,
    theta). dist is unsigned."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if domain.dim == 2:
        t, foot, dist = _project_meridian(domain.profile, pts, half_plane=False)
        return foot, dist, t
    s = np.hypot(pts[:, 0], pts[:, 1])
    z = pts[:, 2]
    t, foot2, dist = _project_meridian(domain.profile, np.stack([s, z], axis=1), half_plane=True)
    with np.errstate(invalid="ignore", divide="ignore"):
        cosp = np.where(s > 1e-300, pts[:, 0] / np.where(s > 1e-300, s, 1.0), 1.0)
        sinp = np.where(s > 1e-300, pts[:, 1] / np.where(s > 1e-300, s, 1.0), 0.0)
    foot = np.stack([foot2[:, 0] * cosp, foot2[:, 0] * sinp, foot2[:, 1]], axis=1)
    return foot, dist, t


def direction_angle(domain: DomainSpec, pts: np.ndarray) -> np.ndarray:
    """Profile parameter angle of each point's direction from the origin."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    if domain.dim == 2:
        return np.mod(np.arctan2(pts[:, 1], pts[:, 0]), 2.0 * pi)
    return np.arctan2(np.hypot(pts[:, 0], pts[:, 1]), pts[:, 2])


def inside_domain(domain: DomainSpec, pts: np.ndarray) -> np.ndarray:
    """Exact membership test for a radial graph: |x| < rho(angle of x)."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    radii = np.linalg.norm(pts, axis=1)
    return radii < domain.profile.rho(direction_angle(domain, pts))


def signed_distance(domain: DomainSpec, x) -> float:
    """Distance to the outer boundary, positive inside the domain."""
    pts = np.atleast_2d(np.asarray(x, dtype=float))
    _, dist, _ = project_outer_boundary(domain, pts)
    sign = np.where(inside_domain(domain, pts), 1.0, -1.0)
    out = sign * dist
    if np.asarray(x).ndim == 1:
        return float(out[0])
    return out


def distance_hessian(domain: DomainSpec, pts: np.ndarray, step: float = 1e-4):
    """Gradient and Hessian of the signed distance by central differences.

    Valid where the distance is smooth (collar free of skeleton points);
    the projection itself is machine precise so the FD error is O(step^2).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    n = domain.dim
    q = pts.shape[0]
    grad = np.zeros((q, n))
    hess = np.zeros((q, n, n))
    d0 = signed_distance(domain, pts)
    for i in range(n):
        ei = np.zeros(n)
        ei[i] = step
        dp = signed_distance(domain, pts + ei)
        dm = signed_distance(domain, pts - ei)
        grad[:, i] = (dp - dm) / (2 * step)
        hess[:, i, i] = (dp - 2 * d0 + dm) / step**2
    for i in range(n):
        for j in range(i + 1, n):
            ei = np.zeros(n)
            ej = np.zeros(n)
            ei[i] = step
            ej[j] = step
            dpp = signed_distance(domain, pts + ei + ej)
            dpm = signed_distance(domain, pts + ei - ej)
            dmp = signed_distance(domain, pts - ei + ej)
            dmm = signed_distance(domain, pts - ei - ej)
            hess[:, i, j] = hess[:, j, i] = (dpp - dpm - dmp + dmm) / (4 * step**2)
    return d0, grad, hess


# ---------------------------------------------------------------------------
# Annular lattice with cut arms
# ---------------------------------------------------------------------------

NODE_INTERIOR = 0
NODE_OUTER_BOUNDARY = 1
NODE_INNER_BOUNDARY = 2
NODE_EXTERIOR = 3

BTYPE_NONE = 0
BTYPE_OUTER = 1
BTYPE_INNER = 2

_SNAP = 1e-12
_MIN_CUT_FRACTION = 1e-6


@dataclass
class ArmTable:
    """Stencil arms of every interior node along one lattice direction.

    nbr[i, side] is the interior ordinal of the neighbor (-1 if the arm is
    cut by a boundary), length[i, side] the arm length, btype the boundary
    the cut lies on, and cut_points the exact cut coordinates for the
    compressed list of cut arms (cut_rows/cut_sides index into the table).
    """

    direction: np.ndarray
    base_length: float
    nbr: np.ndarray
    length: np.ndarray
    btype: np.ndarray
    cut_rows: np.ndarray
    cut_sides: np.ndarray
    cut_points: np.ndarray


@dataclass
class AnnularGrid:
    """Uniform lattice over the punctured domain with classified nodes."""

    domain: DomainSpec
    r: float
    h: float
    axes: tuple
    shape: tuple
    node_class: np.ndarray
    interior_flat: np.ndarray
    interior_map: np.ndarray
    coords: np.ndarray
    arms: dict
    boundary_meta: dict

    @property
    def n_interior(self) -> int:
        return self.interior_flat.size

    @property
    def dim(self) -> int:
        return self.domain.dim

    def full_field(self, interior_values: np.ndarray, fill=np.nan) -> np.ndarray:
        """Scatter interior values onto the full lattice (flat array)."""
        out = np.full(int(np.prod(self.shape)), fill, dtype=float)
        out[self.interior_flat] = interior_values
        return out


def _direction_set(n: int):
    """Axis and in-plane diagonal directions, as integer index offsets."""
    dirs = []
    for a in range(n):
        off = np.zeros(n, dtype=int)
        off[a] = 1
        dirs.append(("axis", a, None, off))
    for a in range(n):
        for b in range(a + 1, n):
            off = np.zeros(n, dtype=int)
            off[a] = 1
            off[b] = 1
            dirs.append(("diag+", a, b, off.copy()))
            off[b] = -1
            dirs.append(("diag-", a, b, off.copy()))
    return dirs


def _inner_cut_fraction(x0: np.ndarray, v: np.ndarray, r: float) -> np.ndarray:
    """Fraction t in (0, 1] where |x0 + t v| = r (x0 outside the ball,
    the segment end inside). Exact quadratic."""
    a = np.sum(v * v, axis=1)
    b = 2.0 * np.sum(x0 * v, axis=1)
    c = np.sum(x0 * x0, axis=1) - r * r
    disc = np.maximum(b * b - 4 * a * c, 0.0)
    sq = np.sqrt(disc)
    t1 = (-b - sq) / (2 * a)
    t2 = (-b + sq) / (2 * a)
    t = np.where((t1 > 0) & (t1 <= 1.0 + 1e-12), t1, t2)
    return np.clip(t, _MIN_CUT_FRACTION, 1.0)


def _outer_cut_fraction(domain: DomainSpec, x0: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Fraction t in (0, 1] where the segment leaves the domain, by
    vectorized bisection on the radial-graph membership gap."""

    def gap(t):
        p = x0 + t[:, None] * v
        ang = direction_angle(domain, p)
        return domain.profile.rho(ang) - np.linalg.norm(p, axis=1)

    lo = np.zeros(x0.shape[0])
    hi = np.ones(x0.shape[0])
    ghi = gap(hi)
    # segment end exactly on the boundary: keep t = 1
    on_boundary = np.abs(ghi) <= _SNAP
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        gm = gap(mid)
        pos = gm > 0
        lo = np.where(pos, mid, lo)
        hi = np.where(pos, hi, mid)
    t = np.where(on_boundary, 1.0, 0.5 * (lo + hi))
    return np.clip(t, _MIN_CUT_FRACTION, 1.0)


def build_grid(domain: DomainSpec, r: float, h: float) -> AnnularGrid:
    """Classified lattice over Omega \\ closure(B_r) with exact cut arms.

    Preconditions: r < r0/2 (puncture well inside the inradius ball) and
    h <= r/4 (inner boundary resolved by the lattice).
    """
    if domain.dim not in (2, 3):
        raise GridResolutionError("lattices are built only for dim 2 and 3")
    if not r < domain.r0 / 2:
        raise GridResolutionError(f"need r < r0/2 = {domain.r0 / 2}, got r = {r}")
    if not h <= r / 4:
        raise GridResolutionError(f"need h <= r/4 = {r / 4}, got h = {h}")

    n = domain.dim
    m = int(np.ceil((domain.max_rho + 2 * h) / h))
    axis = np.arange(-m, m + 1) * h
    axes = tuple(axis for _ in range(n))
    shape = tuple(len(a) for a in axes)
    mesh = np.meshgrid(*axes, indexing="ij")
    coords_all = np.stack([g.ravel() for g in mesh], axis=1)

    radii = np.linalg.norm(coords_all, axis=1)
    ang = direction_angle(domain, coords_all)
    rho_at = domain.profile.rho(ang)
    outer_gap = rho_at - radii  # > 0 strictly inside the domain
    inner_gap = radii - r  # > 0 strictly outside the puncture
    interior = (outer_gap > _SNAP) & (inner_gap > _SNAP)

    node_class = np.full(coords_all.shape[0], NODE_EXTERIOR, dtype=np.int8)
    node_class[interior] = NODE_INTERIOR

    interior_flat = np.flatnonzero(interior)
    interior_map = np.full(coords_all.shape[0], -1, dtype=np.int64)
    interior_map[interior_flat] = np.arange(interior_flat.size)
    coords = coords_all[interior_flat]

    strides = np.array([int(np.prod(shape[i + 1 :])) for i in range(n)], dtype=np.int64)

    arms = {}
    has_outer_nbr = np.zeros(coords_all.shape[0], dtype=bool)
    has_inner_nbr = np.zeros(coords_all.shape[0], dtype=bool)

    for kind, a, b, off in _direction_set(n):
        unit = off / np.linalg.norm(off)
        base_len = h * float(np.linalg.norm(off))
        nbr = np.full((interior_flat.size, 2), -1, dtype=np.int64)
        length = np.full((interior_flat.size, 2), base_len, dtype=float)
        btype = np.zeros((interior_flat.size, 2), dtype=np.int8)
        cut_rows_all, cut_sides_all, cut_pts_all = [], [], []
        flat_off = int(np.dot(off, strides))
        for side, sgn in ((0, -1), (1, +1)):
            nbr_flat = interior_flat + sgn * flat_off
            # lattice bounds: margin guarantees neighbors stay in range
            nbr_ord = interior_map[nbr_flat]
            nbr[:, side] = nbr_ord
            cut = nbr_ord < 0
            if not np.any(cut):
                continue
            rows = np.flatnonzero(cut)
            x0 = coords[rows]
            v = sgn * off * h
            vstack = np.broadcast_to(v.astype(float), (rows.size, n))
            nbr_pts = x0 + vstack
            nbr_inside_ball = np.linalg.norm(nbr_pts, axis=1) <= r + _SNAP
            frac = np.empty(rows.size)
            if np.any(nbr_inside_ball):
                ii = nbr_inside_ball
                frac[ii] = _inner_cut_fraction(x0[ii], vstack[ii], r)
                btype[rows[ii], side] = BTYPE_INNER
                has_inner_nbr[nbr_flat[rows[ii]]] = True
            if np.any(~nbr_inside_ball):
                oo = ~nbr_inside_ball
                frac[oo] = _outer_cut_fraction(domain, x0[oo], vstack[oo])
                btype[rows[oo], side] = BTYPE_OUTER
                has_outer_nbr[nbr_flat[rows[oo]]] = True
            length[rows, side] = frac * base_len
            cut_rows_all.append(rows)
            cut_sides_all.append(np.full(rows.size, side, dtype=np.int8))
            cut_pts_all.append(x0 + frac[:, None] * vstack)
        key = (kind, a, b)
        arms[key] = ArmTable(
            unit,
            base_len,
            nbr,
            length,
            btype,
            np.concatenate(cut_rows_all) if cut_rows_all else np.empty(0, dtype=np.int64),
            np.concatenate(cut_sides_all) if cut_sides_all else np.empty(0, dtype=np.int8),
            np.concatenate(cut_pts_all) if cut_pts_all else np.empty((0, n)),
        )

    # boundary node classes: non-interior lattice nodes adjacent to the
    # interior across each boundary, with exact projections and normals
    outer_nodes = np.flatnonzero(has_outer_nbr & ~interior)
    inner_nodes = np.flatnonzero(has_inner_nbr & ~interior)
    node_class[outer_nodes] = NODE_OUTER_BOUNDARY
    node_class[inner_nodes] = NODE_INNER_BOUNDARY

    boundary_meta = {}
    if outer_nodes.size:
        foot, _, theta = project_outer_boundary(domain, coords_all[outer_nodes])
        if domain.dim == 2:
            nrm = boundary_normal(domain, theta)
        else:
            phi = np.arctan2(coords_all[outer_nodes, 1], coords_all[outer_nodes, 0])
            nrm = boundary_normal(domain, theta, phi)
        boundary_meta["outer"] = {"flat": outer_nodes, "projection": foot, "normal": nrm}
    else:
        boundary_meta["outer"] = {
            "flat": outer_nodes,
            "projection": np.empty((0, n)),
            "normal": np.empty((0, n)),
        }
    if inner_nodes.size:
        x = coords_all[inner_nodes]
        rad = np.linalg.norm(x, axis=1)
        unit_x = x / np.where(rad[:, None] > 1e-300, rad[:, None], 1.0)
        boundary_meta["inner"] = {
            "flat": inner_nodes,
            "projection": r * unit_x,
            # outward normal of the annulus on the puncture side
            "normal": -unit_x,
        }
    else:
        boundary_meta["inner"] = {
            "flat": inner_nodes,
            "projection": np.empty((0, n)),
            "normal": np.empty((0, n)),
        }

    return AnnularGrid(
        domain,
        r,
        h,
        axes,
        shape,
        node_class.reshape(shape),
        interior_flat,
        interior_map,
        coords,
        arms,
        boundary_meta,
    )


@dataclass
class GridFunction:
    """Scalar field on an annular grid, stored over interior nodes."""

    grid: AnnularGrid
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.n_interior,):
            raise ValueError("values must align with the grid's interior nodes")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("grid function carries non-finite values")

    @classmethod
    def from_callable(cls, grid: AnnularGrid, f) -> "GridFunction":
        return cls(grid, np.asarray(f(grid.coords), dtype=float))
