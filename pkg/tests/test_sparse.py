import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from sourceshape.errors import SolverError
from sourceshape.sparse import from_triplets, matvec, solve_general, solve_spd


def test_duplicates_are_summed():
    A = from_triplets([0, 0], [0, 0], [1.0, 2.0], 2, 2)
    assert A[0, 0] == 3.0 and A.nnz == 1


def test_empty_buffer():
    A = from_triplets([], [], [], 3, 3)
    assert A.nnz == 0
    np.testing.assert_array_equal(matvec(A, np.ones(3)), np.zeros(3))


def test_out_of_range_and_mismatch():
    with pytest.raises(IndexError):
        from_triplets([3], [0], [1.0], 3, 3)
    with pytest.raises(ValueError):
        matvec(from_triplets([0], [0], [1.0], 2, 2), np.ones(3))


@given(st.integers(0, 10_000))
def test_triplets_match_dense_accumulation(seed):
    rng = np.random.default_rng(seed)
    r, c = rng.integers(0, 50, 300), rng.integers(0, 50, 300)
    v = rng.normal(size=300)
    dense = np.zeros((50, 50))
    for i, j, x in zip(r, c, v):
        dense[i, j] += x
    A = from_triplets(r, c, v, 50, 50)
    np.testing.assert_allclose(A.toarray(), dense, atol=1e-13)
    x = rng.normal(size=50)
    np.testing.assert_allclose(matvec(A, x), dense @ x, rtol=1e-13, atol=1e-13)


def test_identity_solves():
    b = np.arange(5.0)
    np.testing.assert_allclose(solve_spd(sp.identity(5, format="csr"), b), b)
    np.testing.assert_allclose(solve_general(sp.identity(5, format="csr"), b), b)
    np.testing.assert_allclose(solve_spd(sp.csr_matrix(np.diag([2.0, 4.0])), np.array([2.0, 4.0])), [1, 1])


@given(st.integers(0, 10_000), st.integers(5, 80))
def test_cg_on_random_spd(seed, n):
    rng = np.random.default_rng(seed)
    M = sp.random(n, n, density=0.1, random_state=seed)
    A = (M.T @ M + sp.identity(n)).tocsr()
    b = rng.normal(size=n)
    x = solve_spd(A, b, tol=1e-10)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


@pytest.mark.parametrize("method", ["direct", "bicgstab", "gmres"])
def test_nonsymmetric_against_dense_lu(method):
    rng = np.random.default_rng(7)
    n = 120
    M = rng.normal(size=(n, n)) * (rng.uniform(size=(n, n)) < 0.05)
    A = M.T @ M + n * np.eye(n) + 0.3 * (M - M.T)
    b = rng.normal(size=n)
    x = solve_general(sp.csr_matrix(A), b, tol=1e-12, method=method)
    ref = np.linalg.solve(A, b)
    assert np.linalg.norm(x - ref) <= 1e-8 * np.linalg.norm(ref)


def test_failures_report_residual():
    A = sp.csr_matrix(np.diag([1.0, 1e-3, 1e3]))
    with pytest.raises(SolverError) as info:
        solve_spd(A + sp.csr_matrix(np.triu(np.ones((3, 3)), 1)), np.ones(3), maxiter=1)
    assert info.value.residual is not None
    with pytest.raises(SolverError):
        solve_general(sp.csr_matrix((3, 3)), np.ones(3))
    with pytest.raises(ValueError):
        solve_general(A, np.ones(3), method="nope")
