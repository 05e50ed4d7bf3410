"""Real linear solves with an explicit, reusable LU factorization.

A :class:`Factorization` is built once by :func:`factorize` and can then be
applied to any number of right-hand sides with :func:`solve`; only
:func:`factorize` bumps the process-wide factorization counter, which is what
the solvers' factor-once claims are tested against.
"""
from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import SingularMatrixError

PIVOT_TOL = 1e-12
DENSE_BELOW = 64

_lock = threading.Lock()
_count = 0


def factorization_count() -> int:
    """Total factorizations performed in this process."""
    return _count


def _bump() -> int:
    global _count
    with _lock:
        _count += 1
        return _count


@dataclass(frozen=True)
class Factorization:
    n: int
    dense: bool
    lu: object
    perm_r: np.ndarray
    perm_c: np.ndarray
    tag: int

    def solve(self, rhs):
        return solve(self, rhs)


def _check_pivots(diag, col_max):
    scale = np.where(col_max > 0, col_max, 1.0)
    bad = np.flatnonzero(np.abs(diag) <= PIVOT_TOL * scale)
    if bad.size:
        raise SingularMatrixError(int(bad[0]))


def factorize(m, *, ordering: str = "natural", dense_below: int = DENSE_BELOW) -> Factorization:
    """LU-factorize a square matrix with partial (row) pivoting.

    ``ordering="colamd"`` enables a fill-reducing column ordering on the sparse
    path; the default keeps columns in their natural order.
    """
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"matrix must be square, got {m.shape}")
    n = m.shape[0]
    if sp.issparse(m):
        col_max = np.asarray(abs(m).max(axis=0).todense()).ravel() if n else np.zeros(0)
    else:
        m = np.asarray(m, dtype=float)
        col_max = np.abs(m).max(axis=0) if n else np.zeros(0)

    if n < dense_below:
        a = m.toarray() if sp.issparse(m) else m
        with warnings.catch_warnings():
            # exact zero pivots are reported below as SingularMatrixError
            warnings.simplefilter("ignore", la.LinAlgWarning)
            lu, piv = la.lu_factor(a, check_finite=True)
        _check_pivots(np.diag(lu), col_max)
        perm = np.arange(n)
        for i, p in enumerate(piv):
            perm[i], perm[p] = perm[p], perm[i]
        fac = Factorization(n, True, (lu, piv), perm, np.arange(n), _bump())
        return fac

    spec = {"natural": "NATURAL", "colamd": "COLAMD"}[ordering]
    a = sp.csc_matrix(m, dtype=float)
    try:
        lu = spla.splu(a, permc_spec=spec, diag_pivot_thresh=1.0,
                       options={"SymmetricMode": False})
    except RuntimeError as exc:
        raise SingularMatrixError(-1, f"matrix is singular: {exc}") from None
    # U's k-th pivot belongs to original column perm_c^-1[k]
    inv_c = np.empty(n, dtype=int)
    inv_c[lu.perm_c] = np.arange(n)
    _check_pivots(lu.U.diagonal(), col_max[inv_c])
    return Factorization(n, False, lu, lu.perm_r.copy(), lu.perm_c.copy(), _bump())


def solve(f: Factorization, rhs) -> np.ndarray:
    """Forward/backward substitution with an existing factorization."""
    rhs = np.asarray(rhs, dtype=float)
    if rhs.shape[0] != f.n:
        raise ValueError(f"rhs has length {rhs.shape[0]}, factorization is {f.n}x{f.n}")
    if f.dense:
        return la.lu_solve(f.lu, rhs, check_finite=False)
    return f.lu.solve(rhs)


def solve_once(m, rhs) -> np.ndarray:
    return solve(factorize(m), rhs)
