"""Compressed-row matrices and a Jacobi-preconditioned conjugate gradient solver."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, InvalidInputError

DEFAULT_REL_TOL = 1e-10


def as_csr(A) -> sp.csr_array:
    """Return ``A`` in canonical CSR form (sorted indices, duplicates summed)."""
    A = sp.csr_array(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


def spmv(A, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if A.shape[1] != x.shape[0]:
        raise InvalidInputError(f"dimension mismatch: {A.shape} @ {x.shape}")
    return A @ x


def is_symmetric(A, rtol: float = 1e-12) -> bool:
    diff = abs(A - A.T)
    scale = abs(A).max() if A.nnz else 0.0
    return diff.nnz == 0 or diff.max() <= rtol * max(scale, np.finfo(float).tiny)


def cg_solve(A, b, rel_tol: float = DEFAULT_REL_TOL, max_iter: int | None = None, x0=None):
    """Solve ``A x = b`` for SPD ``A`` by Jacobi-preconditioned CG.

    Stops once ``||b - A x||_2 <= rel_tol * ||b||_2``; raises
    :class:`ConvergenceError` after ``max_iter`` (default ``10 n``) iterations.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if A.shape != (n, n):
        raise InvalidInputError(f"dimension mismatch: {A.shape} vs rhs {b.shape}")
    if max_iter is None:
        max_iter = 10 * max(n, 1)
    bnorm = np.linalg.norm(b)
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return np.zeros(n)
    diag = A.diagonal()
    if np.any(diag <= 0):
        raise InvalidInputError("matrix diagonal must be positive for Jacobi preconditioning")
    inv_diag = 1.0 / diag
    target = rel_tol * bnorm

    r = b - A @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return x
    z = inv_diag * r
    p = z.copy()
    rz = r @ z
    for _ in range(max_iter):
        Ap = A @ p
        alpha = rz / (p @ Ap)
        x += alpha * p
        r -= alpha * Ap
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # the recursively updated residual drifts; confirm with the true one
            r = b - A @ x
            rnorm = np.linalg.norm(r)
            if rnorm <= target:
                return x
            z = inv_diag * r
            p = z.copy()
            rz = r @ z
            continue
        z = inv_diag * r
        rz_new = r @ z
        p *= rz_new / rz
        p += z
        rz = rz_new
    raise ConvergenceError(
        f"CG did not converge in {max_iter} iterations (relative residual {rnorm / bnorm:.3e})",
        residual=rnorm / bnorm,
        iterations=max_iter,
    )
