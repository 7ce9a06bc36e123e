"""Sparse matrices and linear solvers.

Matrices are :class:`scipy.sparse.csr_matrix` instances with sorted column
indices and summed duplicates; the helpers here add range checking and
residual-verified solvers.
"""

from __future__ import annotations

import logging

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import SolverError

__all__ = ["SparseMatrix", "from_triplets", "matvec", "solve_spd", "solve_general"]

log = logging.getLogger(__name__)

SparseMatrix = sp.csr_matrix

DEFAULT_TOL = 1e-10


def from_triplets(rows, cols, values, nrows: int, ncols: int) -> sp.csr_matrix:
    """Assemble a CSR matrix from (row, col, value) contributions.

    Duplicate entries are summed.
    """
    rows = np.asarray(rows, dtype=np.int64).ravel()
    cols = np.asarray(cols, dtype=np.int64).ravel()
    values = np.asarray(values, dtype=float).ravel()
    if not (len(rows) == len(cols) == len(values)):
        raise ValueError("triplet arrays must have equal length")
    if len(rows) and (rows.min() < 0 or rows.max() >= nrows or cols.min() < 0 or cols.max() >= ncols):
        raise IndexError("triplet index out of range")
    A = sp.coo_matrix((values, (rows, cols)), shape=(nrows, ncols)).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def matvec(A: sp.csr_matrix, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[0] != A.shape[1]:
        raise ValueError(f"dimension mismatch: matrix has {A.shape[1]} columns, vector {x.shape[0]}")
    return A @ x


def _check(A, x, b, tol, what):
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(A @ x - b)
    if res > tol * max(bnorm, np.finfo(float).tiny) and res > 0:
        raise SolverError(f"{what}: relative residual {res / bnorm:.3e} exceeds {tol:.1e}", res / bnorm)
    return res


def solve_spd(A: sp.csr_matrix, b: np.ndarray, tol: float = DEFAULT_TOL,
              maxiter: int | None = None, x0: np.ndarray | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients.

    Stops when ``||A x - b|| <= tol ||b||``; raises :class:`SolverError`
    with the final residual otherwise.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n)
    maxiter = 10 * n if maxiter is None else maxiter
    dinv = 1.0 / A.diagonal()
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - A @ x
    z = dinv * r
    d = z.copy()
    rz = r @ z
    target = tol * bnorm
    for it in range(maxiter):
        if np.linalg.norm(r) <= target:
            # the recurrence residual drifts; confirm against the true one
            r = b - A @ x
            if np.linalg.norm(r) <= target:
                break
            z = dinv * r
            d = z.copy()
            rz = r @ z
        Ad = A @ d
        step = rz / (d @ Ad)
        x += step * d
        r -= step * Ad
        z = dinv * r
        rz_new = r @ z
        d = z + (rz_new / rz) * d
        rz = rz_new
    true_res = np.linalg.norm(A @ x - b)
    if true_res > target:
        raise SolverError(f"CG did not converge in {maxiter} iterations "
                          f"(relative residual {true_res / bnorm:.3e})", true_res / bnorm)
    return x


def solve_general(A: sp.spmatrix, b: np.ndarray, tol: float = DEFAULT_TOL,
                  method: str = "direct", maxiter: int | None = None) -> np.ndarray:
    """Solve a square nonsingular system.

    ``method="direct"`` uses a sparse LU factorisation; ``"bicgstab"`` and
    ``"gmres"`` run Jacobi-preconditioned Krylov iterations. The residual is
    recomputed afterwards in every case.
    """
    b = np.asarray(b, dtype=float)
    n = A.shape[0]
    if A.shape[0] != A.shape[1]:
        raise ValueError("matrix must be square")
    if np.linalg.norm(b) == 0.0:
        return np.zeros(n)
    A = sp.csc_matrix(A)
    if method == "direct":
        try:
            lu = spla.splu(A)
        except RuntimeError as exc:  # exactly singular
            raise SolverError(f"LU factorisation failed: {exc}") from exc
        x = lu.solve(b)
        for _ in range(3):
            r = b - A @ x
            if np.linalg.norm(r) <= tol * np.linalg.norm(b):
                break
            x += lu.solve(r)
    elif method in ("bicgstab", "gmres"):
        diag = A.diagonal()
        diag[diag == 0] = 1.0
        M = sp.diags(1.0 / diag)
        solver = spla.bicgstab if method == "bicgstab" else spla.gmres
        x, info = solver(A, b, rtol=tol, atol=0.0, M=M, maxiter=maxiter or 10 * n)
        if info != 0:
            res = np.linalg.norm(A @ x - b) / np.linalg.norm(b)
            raise SolverError(f"{method} breakdown or non-convergence (info={info}, residual {res:.3e})", res)
    else:
        raise ValueError(f"unknown method {method!r}")
    _check(A, x, b, max(tol, 1e3 * np.finfo(float).eps * np.sqrt(n)), method)
    return x
