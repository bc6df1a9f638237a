"""Sparse direct solves: CSR systems and the 2x2-block indefinite saddle system.

All matrices are scipy CSR/CSC; factorizations use SuperLU with its default
fill-reducing column ordering.  Factorizations are immutable after
construction and may be reused for any number of right-hand sides, which is
what the time stepper relies on when it keeps one iteration matrix across the
two implicit stages.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .errors import FactorizationError


class LuFactor:
    """LU factorization of a square sparse matrix."""

    def __init__(self, matrix):
        matrix = sp.csc_matrix(matrix)
        if matrix.shape[0] != matrix.shape[1]:
            raise ValueError(f"matrix is not square: {matrix.shape}")
        try:
            self._lu = splu(matrix)
        except (RuntimeError, ValueError) as exc:
            raise FactorizationError(f"sparse LU failed: {exc}") from exc
        diag = self._lu.U.diagonal()
        if not np.all(np.isfinite(diag)) or np.any(diag == 0.0):
            raise FactorizationError("singular pivot encountered")
        self.shape = matrix.shape

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        x = self._lu.solve(np.asarray(rhs, dtype=float))
        if not np.all(np.isfinite(x)):
            raise FactorizationError("non-finite solution from factorized solve")
        return x


def lu_solve(matrix, rhs: np.ndarray) -> np.ndarray:
    """One-shot sparse direct solve of ``matrix @ x = rhs``."""
    return LuFactor(matrix).solve(rhs)


class SaddleSystem:
    """Indefinite block system [[A, B^T], [B, -C]] with right side (F, 0).

    ``A`` is the (symmetric) displacement block, ``B`` couples pressure to
    the divergence, and ``C`` is the scaled pressure mass (``C = 0`` gives
    the incompressible limit, enforcing ``B u = 0`` exactly).
    """

    def __init__(self, A, B, C=None):
        self.A = sp.csr_matrix(A)
        self.B = sp.csr_matrix(B)
        nu = self.A.shape[0]
        npr = self.B.shape[0]
        if self.B.shape[1] != nu:
            raise ValueError("B block shape does not match A")
        self.C = sp.csr_matrix((npr, npr)) if C is None else sp.csr_matrix(C)
        K = sp.bmat([[self.A, self.B.T], [self.B, -self.C]], format="csc")
        self._factor = LuFactor(K)
        self.n_u = nu
        self.n_p = npr

    def solve(self, F: np.ndarray, G: np.ndarray | None = None):
        """Solve for (displacement, pressure) given block right side (F, G)."""
        rhs = np.zeros(self.n_u + self.n_p)
        rhs[:self.n_u] = F
        if G is not None:
            rhs[self.n_u:] = G
        x = self._factor.solve(rhs)
        return x[:self.n_u], x[self.n_u:]


def saddle_solve(system: SaddleSystem, F: np.ndarray, G: np.ndarray | None = None):
    return system.solve(F, G)
