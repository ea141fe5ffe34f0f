"""Closed-form radial solutions of S_k(D^2 u) = epsilon on an annulus.

For u(x) = phi(|x|) the Hessian eigenvalues are phi'' (radial, once) and
phi'/rho (tangential, n-1 times), and the equation reduces to the exact
first integral

    rho^{n-k} (phi'(rho))^k = (k * eps / (n * C(n-1, k-1))) * rho^n + c,

with the constant c fixed by shooting on the two boundary values. At
eps = 0 the profile degenerates to A * G_k(rho) + B with G_k the radial
fundamental profile (rho^{2-n/k}, or log rho at k = n/2).

These profiles are the independent oracle the grid solver is checked
against; nothing here touches the lattice discretization.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb, gamma, pi

import numpy as np
from scipy.optimize import brentq


class RadialInfeasibleError(ValueError):
    """No admissible integration constant: phi' would vanish or turn
    negative inside the annulus."""


def sphere_area(n: int, rho: float = 1.0) -> float:
    """Surface measure of the sphere of radius rho in R^n."""
    return 2.0 * pi ** (n / 2.0) / gamma(n / 2.0) * rho ** (n - 1)


def radial_sk(n: int, k: int, rho, dphi, d2phi):
    """S_k of the Hessian of a radial function from phi', phi''."""
    rho = np.asarray(rho, dtype=float)
    tang = dphi / rho
    return comb(n - 1, k - 1) * d2phi * tang ** (k - 1) + comb(n - 1, k) * tang**k


def radial_hessian(x, dphi, d2phi) -> np.ndarray:
    """Hessian of a radial function at point x from phi', phi''."""
    x = np.asarray(x, dtype=float)
    rho = float(np.linalg.norm(x))
    if rho == 0.0:
        raise ValueError("radial Hessian undefined at the origin")
    e = x / rho
    proj = np.outer(e, e)
    return d2phi * proj + (dphi / rho) * (np.eye(x.size) - proj)


@dataclass(frozen=True)
class RadialSolution:
    """Radial profile phi with derivatives, on [r, R]."""

    n: int
    k: int
    epsilon: float
    r: float
    R: float
    inner_value: float
    outer_value: float
    c: float  # first-integral constant

    @property
    def alpha(self) -> float:
        return self.k * self.epsilon / (self.n * comb(self.n - 1, self.k - 1))

    def dphi(self, rho):
        rho = np.asarray(rho, dtype=float)
        psi = self.alpha * rho**self.n + self.c
        psi = np.where(np.abs(psi) < 1e-300, 0.0, psi)
        if np.any(psi < -1e-12 * max(1.0, abs(self.c))):
            raise RadialInfeasibleError("phi' undefined: first integral negative")
        psi = np.maximum(psi, 0.0)
        return psi ** (1.0 / self.k) * rho ** ((self.k - self.n) / self.k)

    def d2phi(self, rho):
        rho = np.asarray(rho, dtype=float)
        n, k = self.n, self.k
        psi = np.maximum(self.alpha * rho**n + self.c, 0.0)
        term1 = np.where(
            psi > 0.0,
            (1.0 / k) * psi ** (1.0 / k - 1.0) * self.alpha * n * rho ** (n - 1),
            0.0,
        ) * rho ** ((k - n) / k)
        term2 = psi ** (1.0 / k) * ((k - n) / k) * rho ** ((k - n) / k - 1.0)
        return term1 + term2

    def phi(self, rho):
        rho_arr = np.atleast_1d(np.asarray(rho, dtype=float))
        out = np.array(
            [self.inner_value + _gauss_integral(self.dphi, self.r, s) for s in rho_arr]
        )
        if np.isscalar(rho) or np.asarray(rho).ndim == 0:
            return float(out[0])
        return out

    def inverse(self, t: float) -> float:
        """Radius rho with phi(rho) = t (phi is strictly increasing)."""
        lo, hi = self.phi(self.r), self.phi(self.R)
        if not lo <= t <= hi:
            raise ValueError(f"level {t} outside profile range [{lo}, {hi}]")
        return brentq(lambda s: self.phi(s) - t, self.r, self.R, xtol=1e-14)

    def sk_residual(self, rho):
        """|S_k(D^2 u) - epsilon| for the profile, by direct substitution."""
        rho = np.asarray(rho, dtype=float)
        return np.abs(radial_sk(self.n, self.k, rho, self.dphi(rho), self.d2phi(rho)) - self.epsilon)

    def __call__(self, x):
        """Evaluate u(x) = phi(|x|) at one point or a stack of points."""
        x = np.asarray(x, dtype=float)
        rho = np.linalg.norm(x, axis=-1)
        return self.phi(rho)


_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


def _gauss_integral(f, a: float, b: float, panels_per_unit: float = 400.0) -> float:
    """Fixed-panel Gauss-Legendre quadrature; deterministic."""
    if b == a:
        return 0.0
    sign = 1.0
    if b < a:
        a, b = b, a
        sign = -1.0
    m = max(4, int(np.ceil((b - a) * panels_per_unit)))
    edges = np.linspace(a, b, m + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    pts = mid[:, None] + half[:, None] * _GL_NODES[None, :]
    vals = f(pts.ravel()).reshape(pts.shape)
    return sign * float(np.sum(vals * half[:, None] * _GL_WEIGHTS[None, :]))


def radial_oracle(
    n: int,
    k: int,
    epsilon: float,
    r: float,
    R: float,
    inner_value: float,
    outer_value: float,
) -> RadialSolution:
    """Radial profile solving S_k = epsilon with the given boundary values.

    The first-integral constant comes from a 1D shoot (bisection via
    brentq) on the outer boundary value. Raises RadialInfeasibleError if
    no constant yields a strictly increasing admissible profile.
    """
    if not (1 <= k <= n):
        raise ValueError(f"k={k} out of range for n={n}")
    if not 0 < r < R:
        raise ValueError("need 0 < r < R")
    if epsilon < 0:
        raise ValueError("epsilon must be nonnegative")
    target = outer_value - inner_value
    if target <= 0:
        raise RadialInfeasibleError(
            "outer value must exceed inner value for an increasing profile"
        )
    alpha = k * epsilon / (n * comb(n - 1, k - 1))

    def total_rise(c: float) -> float:
        sol = RadialSolution(n, k, epsilon, r, R, inner_value, inner_value, c)
        return _gauss_integral(sol.dphi, r, R)

    c_lo = -alpha * r**n  # phi'(r) = 0: lowest admissible constant
    rise_lo = total_rise(c_lo) if epsilon > 0 else 0.0
    if rise_lo >= target:
        raise RadialInfeasibleError(
            "boundary rise too small: phi' would vanish inside the annulus"
        )
    c_hi = max(1.0, abs(c_lo))
    for _ in range(200):
        if total_rise(c_hi) >= target:
            break
        c_hi *= 2.0
    else:
        raise RadialInfeasibleError("could not bracket the shooting constant")
    c = brentq(lambda cc: total_rise(cc) - target, c_lo, c_hi, xtol=1e-15, rtol=8.9e-16)
    return RadialSolution(n, k, epsilon, r, R, inner_value, outer_value, c)


def homogeneous_profile(n: int, k: int, r: float, R: float, inner_value: float, outer_value: float):
    """Exact eps = 0 profile A * G_k + B as (A, B, callable phi).

    G_k(rho) = rho^{2-n/k} for k != n/2 and log(rho) at k = n/2; the two
    constants solve the 2x2 linear system from the boundary values.
    """
    if 2 * k == n:

        def basis(rho):
            return np.log(rho)

    else:
        expo = 2.0 - n / k

        def basis(rho):
            return np.asarray(rho, dtype=float) ** expo

    g_r, g_R = float(basis(r)), float(basis(R))
    a = (outer_value - inner_value) / (g_R - g_r)
    b = inner_value - a * g_r

    def phi(rho):
        return a * basis(rho) + b

    return a, b, phi
