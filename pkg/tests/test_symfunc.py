import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from khess import symfunc as sf


def brute_elem_sym(values, k):
    """Exhaustive sum over k-subsets; the independent oracle."""
    if k == 0:
        return 1.0
    return float(sum(math.prod(c) for c in itertools.combinations(values, k)))


def random_sym(rng, n, scale=1.0):
    a = rng.standard_normal((n, n)) * scale
    return 0.5 * (a + a.T)


# ---------------------------------------------------------------------------
# elem_sym
# ---------------------------------------------------------------------------


def test_elem_sym_ones():
    assert sf.elem_sym([1.0, 1.0, 1.0], 2) == pytest.approx(3.0)


def test_elem_sym_zero_factor():
    assert sf.elem_sym([2.0, 0.0, -1.0], 3) == pytest.approx(0.0)


def test_elem_sym_matches_subset_enumeration():
    rng = np.random.default_rng(7)
    v = rng.standard_normal(4)
    assert sf.elem_sym(v, 2) == pytest.approx(brute_elem_sym(v, 2), rel=1e-12)


def test_elem_sym_rejects_bad_k():
    with pytest.raises(ValueError):
        sf.elem_sym([1.0, 2.0], 5)


@given(
    st.lists(st.floats(-10, 10), min_size=2, max_size=4),
    st.integers(min_value=0, max_value=4),
)
@settings(max_examples=200, deadline=None)
def test_elem_sym_property_vs_bruteforce(vals, k):
    v = np.asarray(vals)
    if k > v.size:
        return
    got = sf.elem_sym(v, k)
    want = brute_elem_sym(v, k)
    assert got == pytest.approx(want, rel=1e-10, abs=1e-10)


# ---------------------------------------------------------------------------
# sk
# ---------------------------------------------------------------------------


def test_sk_identity():
    assert sf.sk(np.eye(3), 2) == pytest.approx(3.0)


def test_sk_diag_det():
    assert sf.sk(np.diag([1.0, 2.0, 3.0]), 3) == pytest.approx(6.0)


def test_sk_random_vs_minors():
    rng = np.random.default_rng(12)
    h = random_sym(rng, 4)
    assert sf.sk(h, 2) == pytest.approx(sf.sk_minors(h, 2), rel=1e-12)


def test_sk_eigen_vs_minors_bulk():
    rng = np.random.default_rng(2024)
    for _ in range(300):
        n = int(rng.integers(2, 5))
        h = random_sym(rng, n, scale=3.0)
        for k in range(1, n + 1):
            a = sf.sk(h, k)
            b = sf.sk_minors(h, k)
            assert a == pytest.approx(b, rel=1e-10, abs=1e-10)


def test_sk_rejects_asymmetric():
    with pytest.raises(ValueError):
        sf.sk(np.array([[1.0, 2.0], [0.0, 1.0]]), 1)


def test_sym_matrix_type_validates():
    with pytest.raises(ValueError):
        sf.SymMatrix(np.array([[1.0, 2.0], [2.0 + 1e-9, 1.0]]))
    m = sf.SymMatrix(np.eye(3))
    assert m.dim == 3
    with pytest.raises(ValueError):
        sf.EigenSpectrum(np.array([2.0, 1.0]))


# ---------------------------------------------------------------------------
# sk_jacobian
# ---------------------------------------------------------------------------


def fd_sk_jacobian(h, k, step=1e-5):
    """Central differences of sk under joint symmetric perturbation."""
    n = h.shape[0]
    out = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            d = np.zeros((n, n))
            if i == j:
                d[i, i] = 1.0
            else:
                d[i, j] = d[j, i] = 0.5
            out[i, j] = (sf.sk(h + step * d, k) - sf.sk(h - step * d, k)) / (2 * step)
    return out


def test_sk_jacobian_identity_k2():
    got = sf.sk_jacobian(np.eye(3), 2)
    assert np.allclose(got, 2.0 * np.eye(3), atol=1e-14)


def test_sk_jacobian_k1_is_identity():
    rng = np.random.default_rng(5)
    h = random_sym(rng, 4)
    assert np.allclose(sf.sk_jacobian(h, 1), np.eye(4), atol=1e-14)


def test_sk_jacobian_matches_fd_in_gamma2():
    rng = np.random.default_rng(77)
    h = random_sym(rng, 3) + 4.0 * np.eye(3)
    assert sf.matrix_in_gamma_k(h, 2)
    got = sf.sk_jacobian(h, 2)
    want = fd_sk_jacobian(h, 2)
    assert np.allclose(got, want, rtol=1e-6, atol=1e-8)


def test_sk_jacobian_fd_all_dims():
    rng = np.random.default_rng(99)
    for n in (2, 3, 4):
        for _ in range(10):
            h = random_sym(rng, n, scale=2.0)
            for k in range(1, n + 1):
                got = sf.sk_jacobian(h, k)
                want = fd_sk_jacobian(h, k)
                scale = max(1.0, np.abs(want).max())
                assert np.allclose(got, want, atol=1e-6 * scale)


def test_sk_jacobian_positive_definite_in_cone():
    rng = np.random.default_rng(3)
    h = random_sym(rng, 3) + 4.0 * np.eye(3)
    for k in (1, 2, 3):
        if sf.matrix_in_gamma_k(h, k):
            lam = sf.eigenvalues_sym(sf.sk_jacobian(h, k))
            assert lam[0] > 0


# ---------------------------------------------------------------------------
# in_gamma_k
# ---------------------------------------------------------------------------


def test_gamma_positive_orthant():
    assert sf.in_gamma_k([1.0, 1.0, 1.0], 3)


def test_gamma_mixed_signs():
    lam = [-1.0, -1.0, 5.0]
    # S_1 = 3 > 0, S_2 = 1 - 5 - 5 = -9 < 0
    assert brute_elem_sym(lam, 2) < 0
    assert not sf.in_gamma_k(lam, 2)


def test_gamma_boundary_is_outside():
    for k in (1, 2, 3):
        assert not sf.in_gamma_k([0.0, 0.0, 0.0], k)


# ---------------------------------------------------------------------------
# invariants
# ---------------------------------------------------------------------------


def test_euler_homogeneity_identity():
    rng = np.random.default_rng(31)
    for _ in range(100):
        n = int(rng.integers(2, 5))
        h = random_sym(rng, n, scale=2.0)
        for k in range(1, n + 1):
            jac = sf.sk_jacobian(h, k)
            lhs = float(np.sum(jac * h))
            rhs = k * sf.sk(h, k)
            assert lhs == pytest.approx(rhs, rel=1e-10, abs=1e-10)


def test_maclaurin_monotonicity_on_cone_samples():
    rng = np.random.default_rng(8)
    count = 0
    while count < 50:
        n = int(rng.integers(2, 5))
        h = random_sym(rng, n) + 3.0 * np.eye(n)
        if not sf.matrix_in_gamma_k(h, n):
            continue
        count += 1
        for k in range(2, n + 1):
            assert sf.maclaurin_ratio(h, k) <= sf.maclaurin_ratio(h, k - 1) + 1e-12


def test_sk_root_concavity_sample():
    rng = np.random.default_rng(40)
    count = 0
    while count < 50:
        n = int(rng.integers(2, 5))
        k = int(rng.integers(1, n + 1))
        a = random_sym(rng, n) + 3.0 * np.eye(n)
        b = random_sym(rng, n) + 3.0 * np.eye(n)
        if not (sf.matrix_in_gamma_k(a, k) and sf.matrix_in_gamma_k(b, k)):
            continue
        count += 1
        mid = sf.sk(0.5 * (a + b), k) ** (1.0 / k)
        avg = 0.5 * (sf.sk(a, k) ** (1.0 / k) + sf.sk(b, k) ** (1.0 / k))
        assert mid >= avg - 1e-10


@given(st.integers(2, 4), st.integers(0, 10_000))
@settings(max_examples=100, deadline=None)
def test_rotation_invariance(n, seed):
    rng = np.random.default_rng(seed)
    h = random_sym(rng, n)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    hr = q.T @ h @ q
    hr = 0.5 * (hr + hr.T)
    for k in range(1, n + 1):
        assert sf.sk(h, k) == pytest.approx(sf.sk(hr, k), rel=1e-9, abs=1e-9)


# ---------------------------------------------------------------------------
# batch routes agree with scalar routes
# ---------------------------------------------------------------------------


def test_batch_sk_matches_scalar():
    rng = np.random.default_rng(64)
    for n in (2, 3, 4):
        mats = np.stack([random_sym(rng, n, scale=2.0) for _ in range(40)])
        for k in range(1, n + 1):
            got = sf.batch_sk(mats, k)
            want = np.array([sf.sk(m, k) for m in mats])
            assert np.allclose(got, want, rtol=1e-10, atol=1e-10)


def test_batch_newton_transform_matches_scalar():
    rng = np.random.default_rng(65)
    for n in (2, 3):
        mats = np.stack([random_sym(rng, n, scale=2.0) for _ in range(20)])
        for k in range(1, n + 1):
            got = sf.batch_newton_transform(mats, k)
            want = np.stack([sf.sk_jacobian(m, k) for m in mats])
            assert np.allclose(got, want, rtol=1e-10, atol=1e-10)


def test_batch_gamma_and_margin():
    rng = np.random.default_rng(66)
    mats = np.stack([random_sym(rng, 3) for _ in range(30)])
    flags = sf.batch_in_gamma_k(mats, 2)
    margins = sf.batch_gamma_margin(mats, 2)
    for m, f, g in zip(mats, flags, margins):
        assert f == sf.matrix_in_gamma_k(m, 2)
        e = sf.elem_sym_all(sf.eigenvalues_sym(m))
        assert g == pytest.approx(min(e[1], e[2]), rel=1e-9, abs=1e-12)


def test_batch_eigenvalues_match_scalar():
    rng = np.random.default_rng(67)
    for n in (2, 3, 4):
        mats = np.stack([random_sym(rng, n, scale=3.0) for _ in range(25)])
        got = sf.batch_eigenvalues(mats)
        for m, lam in zip(mats, got):
            want = sf.eigenvalues_sym(m)
            assert np.allclose(lam, want, atol=1e-11 * max(1.0, np.abs(want).max()))


def test_eigenvalues_bitwise_deterministic():
    rng = np.random.default_rng(68)
    h = random_sym(rng, 4)
    a = sf.eigenvalues_sym(h)
    b = sf.eigenvalues_sym(h)
    assert a.tobytes() == b.tobytes()
