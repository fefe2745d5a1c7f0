"""Sparse SPD linear algebra substrate.

Matrices are scipy CSR throughout (row_offsets/col_indices/values live
in indptr/indices/data).  Solvers sit behind the SpdSolver interface so
that exact factorizations and multigrid surrogates are interchangeable
inside the time-step operators.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp

__all__ = [
    "SolverError",
    "spmv",
    "is_symmetric",
    "to_matrix_market",
    "SpdSolver",
    "ExactSolver",
    "exact_solve",
    "SpatialPair",
    "negative_norm",
    "pearson_wathen_ratio",
]


class SolverError(RuntimeError):
    """Raised when a factorization or iterative solve fails."""


def spmv(mat, x):
    """CSR matrix-vector product with shape validation.

    Summation within each row runs over ascending column indices, so
    repeated calls are bitwise reproducible.
    """
    x = np.asarray(x)
    if mat.shape[1] != x.shape[0]:
        raise ValueError(f"dimension mismatch: matrix {mat.shape} times vector {x.shape}")
    return mat @ x


def is_symmetric(mat, rtol=1e-14):
    """Value-level symmetry check for a sparse matrix."""
    diff = abs(mat - mat.T)
    scale = max(1.0, abs(mat).max())
    return diff.max() <= rtol * scale if diff.nnz else True


def to_matrix_market(path, mat, comment=""):
    """Write a sparse matrix in MatrixMarket coordinate format.

    The banner records the dimensions and, when the matrix is
    symmetric, the symmetry qualifier.
    """
    symmetry = "symmetric" if is_symmetric(mat) else "general"
    scipy.io.mmwrite(path, sp.coo_matrix(mat), comment=comment, symmetry=symmetry)


def _bandwidth(mat):
    coo = sp.coo_matrix(mat)
    if coo.nnz == 0:
        return 0
    return int(np.max(np.abs(coo.row - coo.col)))


class SpdSolver:
    """Action of the inverse of an SPD matrix.

    Concrete solvers provide solve(b) for b of shape (n,) or (n, m);
    mode is "exact", "near_exact" or "vcycles"; description is a short
    human-readable tag recorded in experiment metadata.
    """

    matrix = None
    mode = "abstract"
    description = ""

    def solve(self, b):
        raise NotImplementedError


class ExactSolver(SpdSolver):
    """Direct solver: banded Cholesky for tridiagonal input, sparse LU otherwise."""

    mode = "exact"

    def __init__(self, mat):
        mat = sp.csr_matrix(mat)
        self.matrix = mat
        n = mat.shape[0]
        if _bandwidth(mat) <= 1:
            bands = np.zeros((2, n))
            bands[1] = mat.diagonal()
            if n > 1:
                bands[0, 1:] = mat.diagonal(1)
            try:
                self._chol = sla.cholesky_banded(bands)
            except np.linalg.LinAlgError as exc:
                raise SolverError(f"banded Cholesky failed (non-SPD input): {exc}") from exc
            self._lu = None
            self.description = f"banded Cholesky (n={n})"
        else:
            try:
                self._lu = sp.linalg.splu(mat.tocsc())
            except RuntimeError as exc:
                raise SolverError(f"sparse LU failed: {exc}") from exc
            pivots = self._lu.U.diagonal()
            bad = np.flatnonzero(pivots <= 0)
            if bad.size:
                raise SolverError(f"non-SPD input: nonpositive pivot at index {bad[0]}")
            self._chol = None
            self.description = f"sparse LU (n={n})"

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self._chol is not None:
            return sla.cho_solve_banded((self._chol, False), b)
        return self._lu.solve(b)


def exact_solve(solver, b):
    """Solve with an exact-mode solver (residual below 1e-12 relative)."""
    if solver.mode != "exact":
        raise ValueError(f"exact_solve requires an exact solver, got mode={solver.mode!r}")
    return solver.solve(b)


@dataclass
class SpatialPair:
    """Mass/stiffness pair with attached solvers.

    shifted_solver_factory(mu, vcycles) returns a solver for M + mu A:
    exact (or near-exact beyond the direct-solver cutoff) when vcycles
    is None, otherwise the stated number of multigrid V-cycles.
    """

    M: sp.csr_matrix
    A: sp.csr_matrix
    a_solver: SpdSolver
    shifted_solver_factory: Callable[[float, Optional[int]], SpdSolver]
    hierarchy: object = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.M.shape[0]


def negative_norm(pair, v):
    """sqrt(v^T M A^{-1} M v): the dual norm of ||.||_A under the M pairing."""
    v = np.asarray(v, dtype=float)
    mv = pair.M @ v
    return float(np.sqrt(max(0.0, mv @ pair.a_solver.solve(mv))))


def pearson_wathen_ratio(pair, mu, samples=100, seed=0):
    """Extremes of the two-sided spectral comparison for M A^{-1} M + mu A.

    Over random vectors v, returns (min, max) of

        v^T (M A^{-1} M + mu A) v
        -------------------------------------------
        v^T (M + sqrt(mu) A) A^{-1} (M + sqrt(mu) A) v

    which lie in [1/2, 1] for any SPD M, A and mu >= 0.
    """
    if mu < 0:
        raise ValueError(f"mu must be nonnegative, got {mu}")
    rng = np.random.default_rng(seed)
    n = pair.n
    V = rng.standard_normal((n, samples))
    MV = pair.M @ V
    AinvMV = pair.a_solver.solve(MV)
    num = np.einsum("ij,ij->j", MV, AinvMV) + mu * np.einsum("ij,ij->j", V, pair.A @ V)
    W = MV + np.sqrt(mu) * (pair.A @ V)
    den = np.einsum("ij,ij->j", W, pair.a_solver.solve(W))
    ratios = num / den
    return float(ratios.min()), float(ratios.max())
