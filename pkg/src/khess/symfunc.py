"""Elementary symmetric functions of Hessian eigenvalues.

S_k(A) is the sum of all principal k x k minors of a symmetric matrix A,
equivalently the k-th elementary symmetric polynomial of its eigenvalues.
This module provides S_k, its matrix derivative S_k^{ij} (the Newton
transform of order k-1), and the admissibility-cone predicate
Gamma_k = {S_1 > 0, ..., S_k > 0}.

Two evaluation routes are kept deliberately distinct:

* scalar routes go through eigenvalues computed by cyclic Jacobi rotations
  with a fixed sweep order, so repeated calls are bitwise reproducible;
* batch routes (``batch_*``) evaluate S_k and its derivative directly from
  power sums / Newton's identities on stacked matrices, which is what the
  grid solver uses in its hot loop.

Both routes are algebraically identical and cross-checked in the tests.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

# Strict-positivity floor separating Gamma_k membership from the cone
# boundary; inputs with any S_j below this are classified outside.
GAMMA_FLOOR = 1e-14

_SUPPORTED_DIMS = (2, 3, 4)


@dataclass(frozen=True)
class SymMatrix:
    """Dense symmetric n x n matrix, n in {2, 3, 4}."""

    entries: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.entries, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"expected a square matrix, got shape {a.shape}")
        if a.shape[0] not in _SUPPORTED_DIMS:
            raise ValueError(f"dimension {a.shape[0]} not in {_SUPPORTED_DIMS}")
        if not np.array_equal(a, a.T):
            raise ValueError("matrix entries are not exactly symmetric")
        object.__setattr__(self, "entries", a)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class EigenSpectrum:
    """Eigenvalues of a symmetric matrix, sorted ascending."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("eigenvalue spectrum must be a vector")
        if v.size not in _SUPPORTED_DIMS:
            raise ValueError(f"dimension {v.size} not in {_SUPPORTED_DIMS}")
        if np.any(np.diff(v) < 0):
            raise ValueError("eigenvalues must be nondecreasing")
        object.__setattr__(self, "values", v)

    @property
    def dim(self) -> int:
        return self.values.size


def _as_matrix(h) -> np.ndarray:
    if isinstance(h, SymMatrix):
        return h.entries
    a = np.asarray(h, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-13 * max(1.0, float(np.abs(a).max()))):
        raise ValueError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def _as_values(lam) -> np.ndarray:
    if isinstance(lam, EigenSpectrum):
        return lam.values
    return np.asarray(lam, dtype=float)


def elem_sym_all(values) -> np.ndarray:
    """All elementary symmetric polynomials e_0..e_n of a vector.

    Uses the stable product recurrence: multiplying out
    prod_i (1 + values[i] t) one factor at a time.
    """
    v = _as_values(values)
    n = v.size
    e = np.zeros(n + 1)
    e[0] = 1.0
    for i in range(n):
        e[1 : i + 2] = e[1 : i + 2] + v[i] * e[0 : i + 1]
    return e


def elem_sym(values, k: int) -> float:
    """k-th elementary symmetric polynomial of an eigenvalue vector."""
    v = _as_values(values)
    if not 0 <= k <= v.size:
        raise ValueError(f"k={k} out of range for {v.size} eigenvalues")
    return float(elem_sym_all(v)[k])


def eigenvalues_sym(h) -> np.ndarray:
    """Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.

    Fixed (p, q) sweep order and a fixed convergence threshold make
    repeated calls on identical input bitwise reproducible.
    """
    a = _as_matrix(h).copy()
    n = a.shape[0]
    scale = max(1.0, float(np.abs(a).max()))
    for _ in range(30):
        off = 0.0
        for p in range(n - 1):
            for q in range(p + 1, n):
                off = max(off, abs(a[p, q]))
        if off <= 1e-15 * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-18 * scale:
                    continue
                theta = 0.5 * (a[q, q] - a[p, p]) / apq
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0))
                if theta == 0.0:
                    t = 1.0
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                a = 0.5 * (a + a.T)
    return np.sort(np.diag(a))


def spectrum(h) -> EigenSpectrum:
    return EigenSpectrum(eigenvalues_sym(h))


def sk(h, k: int) -> float:
    """S_k of a symmetric matrix, via its eigenvalues."""
    a = _as_matrix(h)
    if not 0 <= k <= a.shape[0]:
        raise ValueError(f"k={k} out of range for dimension {a.shape[0]}")
    return elem_sym(eigenvalues_sym(a), k)


def sk_minors(h, k: int) -> float:
    """S_k by exhaustive principal-minor enumeration (reference oracle)."""
    from itertools import combinations

    a = _as_matrix(h)
    n = a.shape[0]
    if not 0 <= k <= n:
        raise ValueError(f"k={k} out of range for dimension {n}")
    if k == 0:
        return 1.0
    total = 0.0
    for idx in combinations(range(n), k):
        sub = a[np.ix_(idx, idx)]
        total += float(np.linalg.det(sub))
    return total


def _char_poly_elem_syms(a: np.ndarray, m: int) -> np.ndarray:
    """e_0..e_m of the eigenvalues of ``a`` via Newton's identities.

    Power sums p_j = tr(a^j) determine the characteristic-polynomial
    coefficients without any eigen decomposition.
    """
    n = a.shape[0]
    p = np.zeros(m + 1)
    apow = np.eye(n)
    for j in range(1, m + 1):
        apow = apow @ a
        p[j] = np.trace(apow)
    e = np.zeros(m + 1)
    e[0] = 1.0
    for j in range(1, m + 1):
        acc = 0.0
        for i in range(1, j + 1):
            acc += (-1.0) ** (i - 1) * e[j - i] * p[i]
        e[j] = acc / j
    return e


def sk_jacobian(h, k: int):
    """Matrix of partial derivatives S_k^{ij} = dS_k/dH_{ij}.

    Computed as the Newton transform of order k-1,
    T_{k-1}(A) = sum_{j=0}^{k-1} (-1)^j e_{k-1-j}(A) A^j,
    with the e_m obtained from characteristic-polynomial coefficients
    rather than eigenvector perturbation (stable under degenerate
    eigenvalues). Off-diagonal entries follow the symmetric perturbation
    convention: dS_k along H + t(E_ij + E_ji)/2 equals T_{k-1}[i, j].
    For A in the interior of Gamma_k the result is positive definite.
    """
    a = _as_matrix(h)
    n = a.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for dimension {n}")
    e = _char_poly_elem_syms(a, k - 1)
    t = np.eye(n)
    for m in range(1, k):
        t = e[m] * np.eye(n) - a @ t
    out = 0.5 * (t + t.T)
    if isinstance(h, SymMatrix):
        return SymMatrix(out)
    return out


def in_gamma_k(lam, k: int, floor: float = GAMMA_FLOOR) -> bool:
    """True iff S_j(lam) > floor for every j = 1..k.

    Strict positivity with an absolute floor classifies boundary-of-cone
    inputs (for example the zero vector) as outside.
    """
    v = _as_values(lam)
    if not 1 <= k <= v.size:
        raise ValueError(f"k={k} out of range for {v.size} eigenvalues")
    e = elem_sym_all(v)
    return bool(np.all(e[1 : k + 1] > floor))


def matrix_in_gamma_k(h, k: int, floor: float = GAMMA_FLOOR) -> bool:
    return in_gamma_k(eigenvalues_sym(h), k, floor)


# ---------------------------------------------------------------------------
# Batch routes over stacked matrices, shape (..., n, n).
# ---------------------------------------------------------------------------


def batch_elem_sym_all(a: np.ndarray) -> np.ndarray:
    """e_0..e_n of eigenvalues for stacked matrices, via power sums.

    Returns shape (..., n+1). No eigen decomposition is performed.
    """
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    p = [None] * (n + 1)
    apow = a
    p[1] = np.trace(apow, axis1=-2, axis2=-1)
    for j in range(2, n + 1):
        apow = apow @ a
        p[j] = np.trace(apow, axis1=-2, axis2=-1)
    e = np.zeros(a.shape[:-2] + (n + 1,))
    e[..., 0] = 1.0
    for j in range(1, n + 1):
        acc = np.zeros(a.shape[:-2])
        for i in range(1, j + 1):
            acc += (-1.0) ** (i - 1) * e[..., j - i] * p[i]
        e[..., j] = acc / j
    return e


def batch_sk(a: np.ndarray, k: int) -> np.ndarray:
    """S_k for stacked matrices."""
    a = np.asarray(a, dtype=float)
    if not 0 <= k <= a.shape[-1]:
        raise ValueError(f"k={k} out of range for dimension {a.shape[-1]}")
    return batch_elem_sym_all(a)[..., k]


def batch_newton_transform(a: np.ndarray, k: int) -> np.ndarray:
    """S_k^{ij} (the order k-1 Newton transform) for stacked matrices."""
    a = np.asarray(a, dtype=float)
    n = a.shape[-1]
    if not 1 <= k <= n:
        raise ValueError(f"k={k} out of range for dimension {n}")
    e = batch_elem_sym_all(a)
    eye = np.broadcast_to(np.eye(n), a.shape)
    t = np.array(eye)
    for m in range(1, k):
        t = e[..., m, None, None] * eye - a @ t
    return 0.5 * (t + np.swapaxes(t, -1, -2))


def batch_in_gamma_k(a: np.ndarray, k: int, floor: float = GAMMA_FLOOR) -> np.ndarray:
    """Gamma_k membership for stacked matrices; returns a boolean array."""
    e = batch_elem_sym_all(a)
    return np.all(e[..., 1 : k + 1] > floor, axis=-1)


def batch_gamma_margin(a: np.ndarray, k: int) -> np.ndarray:
    """min_j S_j over j = 1..k for stacked matrices (admissibility margin)."""
    e = batch_elem_sym_all(a)
    return np.min(e[..., 1 : k + 1], axis=-1)


def batch_eigenvalues(a: np.ndarray, sweeps: int = 14) -> np.ndarray:
    """Eigenvalues of stacked symmetric matrices by vectorized cyclic Jacobi.

    A fixed sweep count (no data-dependent termination) keeps the
    computation deterministic across runs and input orderings.
    """
    a = np.array(a, dtype=float)
    n = a.shape[-1]
    for _ in range(sweeps):
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[..., p, q]
                app = a[..., p, p]
                aqq = a[..., q, q]
                diff = 0.5 * (aqq - app)
                # Rotation angle from cot(2*phi) = diff/apq, computed in a
                # form that avoids overflow when apq is tiny.
                safe = np.abs(apq) > 1e-300
                denom = np.abs(diff) + np.hypot(diff, np.where(safe, apq, 1.0))
                t = np.where(
                    safe,
                    np.where(diff == 0.0, 1.0, np.sign(diff))
                    * np.where(safe, apq, 0.0)
                    / np.where(denom > 0.0, denom, 1.0),
                    0.0,
                )
                c = 1.0 / np.hypot(t, 1.0)
                s = t * c
                rows_p = a[..., p, :].copy()
                rows_q = a[..., q, :].copy()
                a[..., p, :] = c[..., None] * rows_p - s[..., None] * rows_q
                a[..., q, :] = s[..., None] * rows_p + c[..., None] * rows_q
                cols_p = a[..., :, p].copy()
                cols_q = a[..., :, q].copy()
                a[..., :, p] = c[..., None] * cols_p - s[..., None] * cols_q
                a[..., :, q] = s[..., None] * cols_p + c[..., None] * cols_q
    lam = np.diagonal(a, axis1=-2, axis2=-1)
    return np.sort(lam, axis=-1)


def batch_spectral_norm(a: np.ndarray) -> np.ndarray:
    """Largest |eigenvalue| for stacked symmetric matrices."""
    lam = batch_eigenvalues(a)
    return np.max(np.abs(lam), axis=-1)


def maclaurin_ratio(h, k: int) -> float:
    """Normalized ratio (S_k / C(n,k))^{1/k} for Maclaurin comparisons."""
    a = _as_matrix(h)
    n = a.shape[0]
    val = sk(a, k)
    if val <= 0.0:
        return 0.0
    return float((val / comb(n, k)) ** (1.0 / k))
