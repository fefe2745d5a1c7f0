"""Temporal eigenbasis for the DG time-step operator.

For each polynomial degree p this module constructs the basis
{psi_k} whose reconstruction derivatives are the orthonormal
sqrt(k+1/2) L_k, the pentadiagonal matrix T of their L^2 inner
products, its symmetric eigendecomposition, and from it the
eigenpairs (phi_j, lambda_j) of

    lambda int (I phi)' (I v)' ds = int phi v ds   on P_p,

together with the matrix K mapping phi_k to the coefficients of
(I phi_k)' in the eigenbasis and the endpoint value vectors.
Everything here depends only on p, not on the spatial operators.
"""

from dataclasses import dataclass

import numpy as np

from .legendre import gram_diag, legendre_table

__all__ = [
    "PsiBasis",
    "TemporalBasis",
    "EigenSolveError",
    "build_psi",
    "sym_eigen",
    "build_kstar",
    "build_basis",
    "eigenfunction_values",
    "reconstruction_lift",
    "temporal_eigenvalues",
    "EigenvalueDecayReport",
    "verify_eigenvalue_decay",
]


class EigenSolveError(RuntimeError):
    """Raised when the symmetric eigensolver fails its accuracy contract."""


@dataclass(frozen=True)
class PsiBasis:
    """Rows of Z are the Legendre coefficients of psi_k; T = Z G Z^T."""

    p: int
    Z: np.ndarray
    T: np.ndarray


@dataclass(frozen=True)
class TemporalBasis:
    """Eigenpairs and reconstruction data for one polynomial degree.

    lam is sorted decreasing; column j of Q holds the Legendre
    coefficients of phi_j; K satisfies (I phi_k)' = sum_j K[k, j] phi_j;
    q_plus[j] = phi_j(1) and q_minus[j] = phi_j(-1).
    """

    p: int
    lam: np.ndarray
    Q: np.ndarray
    K: np.ndarray
    q_plus: np.ndarray
    q_minus: np.ndarray


def _psi_rows(p):
    """Legendre coefficient rows of the psi basis, valid for any p >= 0.

    psi_0 = (L_1 + L_0)/sqrt(2), psi_k = (L_{k+1} - L_{k-1})/sqrt(4k+2)
    for 0 < k < p, psi_p = (L_p - L_{p-1})/sqrt(4p+2).  For p = 0 the
    single basis function is sqrt(2) L_0.
    """
    Z = np.zeros((p + 1, p + 1))
    if p == 0:
        Z[0, 0] = np.sqrt(2.0)
        return Z
    Z[0, 0] = Z[0, 1] = 1.0 / np.sqrt(2.0)
    for k in range(1, p):
        c = 1.0 / np.sqrt(4.0 * k + 2.0)
        Z[k, k + 1] = c
        Z[k, k - 1] = -c
    c = 1.0 / np.sqrt(4.0 * p + 2.0)
    Z[p, p] = c
    Z[p, p - 1] = -c
    return Z


def build_psi(p):
    """PsiBasis for p >= 2; small degrees are handled inside build_basis."""
    if p < 2:
        raise ValueError(f"build_psi requires p >= 2, got {p}")
    Z = _psi_rows(p)
    T = (Z * gram_diag(p)) @ Z.T
    return PsiBasis(p, Z, T)


def sym_eigen(T, residual_tol=1e-12):
    """Eigendecomposition of a symmetric matrix, fixed conventions.

    Returns (V, lam) with T V = V diag(lam), columns ordered by
    decreasing eigenvalue, and the sign of each column fixed so that
    its first entry above 1e-12 in magnitude is positive.
    """
    T = np.asarray(T, dtype=float)
    n = T.shape[0]
    if T.shape != (n, n):
        raise ValueError(f"matrix must be square, got shape {T.shape}")
    if n > 1025:
        raise ValueError(f"matrix size {n} exceeds the supported cap 1025")
    scale = max(1.0, float(np.linalg.norm(T)))
    if np.linalg.norm(T - T.T) > 1e-13 * scale:
        raise ValueError("matrix is not symmetric")
    lam, V = np.linalg.eigh(0.5 * (T + T.T))
    lam = lam[::-1].copy()
    V = V[:, ::-1].copy()
    for j in range(n):
        col = V[:, j]
        nz = np.flatnonzero(np.abs(col) > 1e-12)
        if nz.size and col[nz[0]] < 0.0:
            V[:, j] = -col
    resid = np.linalg.norm(T @ V - V * lam)
    ortho = np.linalg.norm(V.T @ V - np.eye(n))
    if resid > residual_tol * scale * n or ortho > 1e-12 * n:
        raise EigenSolveError(
            f"eigendecomposition failed accuracy check: resid={resid:.2e} ortho={ortho:.2e}"
        )
    return V, lam


def build_kstar(p):
    """Matrix K* with (I L_k)' = sum_{j<=p} K*[k, j] L_j.

    K* = Ktilde - x y^T where Ktilde is the Legendre derivative
    expansion, x_j = (-1)^j and y_k = (-1)^(1-k) (k + 1/2).
    """
    if p < 0:
        raise ValueError(f"degree must be nonnegative, got {p}")
    k = np.arange(p + 1)[:, None]
    j = np.arange(p + 1)[None, :]
    ktilde = np.where(j <= k, (1.0 - (-1.0) ** (k - j)) * (j + 0.5), 0.0)
    x = (-1.0) ** np.arange(p + 1)
    y = (-1.0) ** (1.0 - np.arange(p + 1)) * (np.arange(p + 1) + 0.5)
    return ktilde - np.outer(x, y)


def build_basis(p):
    """TemporalBasis for any p >= 0.

    Q = Z^T V and K = V^T G^{-1/2} K* G^{1/2} V, where (V, lam) is the
    eigendecomposition of T = Z G Z^T.  The p = 0 case degenerates to
    phi_0 = sqrt(2) L_0 with lambda_0 = 4 and is produced by the same
    pipeline.
    """
    if p < 0:
        raise ValueError(f"degree must be nonnegative, got {p}")
    Z = _psi_rows(p)
    G = gram_diag(p)
    T = (Z * G) @ Z.T
    V, lam = sym_eigen(T)
    Q = Z.T @ V
    g_sqrt = np.sqrt(G)
    K = (V.T / g_sqrt) @ (build_kstar(p) * g_sqrt) @ V
    signs = (-1.0) ** np.arange(p + 1)
    q_plus = Q.sum(axis=0)
    q_minus = signs @ Q
    return TemporalBasis(p, lam, Q, K, q_plus, q_minus)


def eigenfunction_values(basis, s):
    """Values phi_j(s_q), shape (p+1, len(s))."""
    return basis.Q.T @ legendre_table(basis.p, s)


def reconstruction_lift(coeffs):
    """Legendre coefficients of I v from those of v (length grows by one).

    I v = v - v(-1) (-1)^p (L_p - L_{p+1}) / 2, so only the last two
    coefficients are corrected.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    p = coeffs.size - 1
    v_minus = ((-1.0) ** np.arange(p + 1)) @ coeffs
    lifted = np.zeros(p + 2)
    lifted[: p + 1] = coeffs
    corr = v_minus * (-1.0) ** p / 2.0
    lifted[p] -= corr
    lifted[p + 1] += corr
    return lifted


def temporal_eigenvalues(p):
    """Eigenvalues lambda_j only, sorted decreasing (cheap path for decay studies)."""
    Z = _psi_rows(p)
    T = (Z * gram_diag(p)) @ Z.T
    return np.linalg.eigvalsh(T)[::-1].copy()


@dataclass(frozen=True)
class EigenvalueDecayReport:
    """Scaled extremes and log-log slopes of the eigenvalue decay.

    sup_scaled = max over p of max_j lam_j (j+1)^2; inf_scaled = min
    over p of lam_p (p+1)^4.  tail_slopes fits log lam_j vs log(j+1)
    over j in [p/4, p] (the steep crossover range), bulk_slopes over
    j in [max(1, p/16), p/2] (the (j+1)^-2 regime), and min_eig_slope
    fits log lam_p against log(p+1) across the requested degrees.
    """

    p_list: tuple
    sup_scaled: float
    inf_scaled: float
    sup_scaled_per_p: np.ndarray
    lam0_per_p: np.ndarray
    tail_slopes: dict
    bulk_slopes: dict
    min_eig_slope: float


def _fit_slope(j_indices, lam):
    x = np.log(np.asarray(j_indices, dtype=float) + 1.0)
    y = np.log(lam)
    return float(np.polyfit(x, y, 1)[0])


def verify_eigenvalue_decay(p_list):
    """Decay report over the given degrees; no state is mutated."""
    p_list = tuple(int(p) for p in p_list)
    if not p_list:
        raise ValueError("p_list must be nonempty")
    sup_per_p = np.empty(len(p_list))
    lam0s = np.empty(len(p_list))
    inf_scaled = np.inf
    min_eigs = np.empty(len(p_list))
    tail_slopes = {}
    bulk_slopes = {}
    for i, p in enumerate(p_list):
        lam = temporal_eigenvalues(p)
        j = np.arange(p + 1)
        sup_per_p[i] = np.max(lam * (j + 1.0) ** 2)
        lam0s[i] = lam[0]
        min_eigs[i] = lam[p]
        inf_scaled = min(inf_scaled, lam[p] * (p + 1.0) ** 4)
        if p >= 4:
            lo = max(1, p // 4)
            tail_slopes[p] = _fit_slope(j[lo:], lam[lo:])
            blo = max(1, p // 16)
            bhi = max(blo + 1, p // 2)
            bulk_slopes[p] = _fit_slope(j[blo : bhi + 1], lam[blo : bhi + 1])
    if len(p_list) >= 2:
        min_eig_slope = _fit_slope(np.asarray(p_list), min_eigs)
    else:
        min_eig_slope = float("nan")
    return EigenvalueDecayReport(
        p_list=p_list,
        sup_scaled=float(sup_per_p.max()),
        inf_scaled=float(inf_scaled),
        sup_scaled_per_p=sup_per_p,
        lam0_per_p=lam0s,
        tail_slopes=tail_slopes,
        bulk_slopes=bulk_slopes,
        min_eig_slope=min_eig_slope,
    )
