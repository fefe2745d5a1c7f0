"""Legendre polynomial primitives on (-1, 1).

Everything downstream is expressed in the Legendre basis {L_k}: the
L^2 Gram diagonal 2/(2k+1), the lower-triangular matrix expanding L_k'
back in the basis, and Gauss-Legendre quadrature used for load vectors
and verification integrals.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LegendreWorkspace",
    "workspace",
    "legendre_eval",
    "legendre_table",
    "gram_diag",
    "derivative_expansion",
    "gauss_legendre_rule",
]

_DOMAIN_SLACK = 1e-12


def legendre_eval(k, s):
    """Evaluate L_k(s) by the three-term recurrence.

    Exact at the endpoints: L_k(1) = 1 and L_k(-1) = (-1)^k.
    """
    if k < 0:
        raise ValueError(f"degree must be nonnegative, got {k}")
    if abs(s) > 1.0 + _DOMAIN_SLACK:
        raise ValueError(f"point {s} outside [-1, 1]")
    if k == 0:
        return 1.0
    prev, cur = 1.0, float(s)
    for n in range(1, k):
        prev, cur = cur, ((2 * n + 1) * s * cur - n * prev) / (n + 1)
    return cur


def legendre_table(pmax, s):
    """Values L_k(s_q) for k = 0..pmax at the points s, shape (pmax+1, len(s))."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    if np.any(np.abs(s) > 1.0 + _DOMAIN_SLACK):
        raise ValueError("points outside [-1, 1]")
    table = np.empty((pmax + 1, s.size))
    table[0] = 1.0
    if pmax >= 1:
        table[1] = s
    for n in range(1, pmax):
        table[n + 1] = ((2 * n + 1) * s * table[n] - n * table[n - 1]) / (n + 1)
    return table


def gram_diag(pmax):
    """Diagonal of the L^2(-1,1) Gram matrix: entry k is 2/(2k+1)."""
    return 2.0 / (2.0 * np.arange(pmax + 1) + 1.0)


def derivative_expansion(p):
    """Matrix D with L_k' = sum_j D[k, j] L_j, lower triangular.

    Row k has nonzeros only at indices j < k of parity opposite to k,
    with value (1 - (-1)^(k-j)) (j + 1/2).
    """
    if p < 0:
        raise ValueError(f"degree must be nonnegative, got {p}")
    k = np.arange(p + 1)[:, None]
    j = np.arange(p + 1)[None, :]
    coeffs = (1.0 - (-1.0) ** (k - j)) * (j + 0.5)
    return np.where(j < k, coeffs, 0.0)


@dataclass(frozen=True)
class LegendreWorkspace:
    """Degree-capped Legendre data shared by the temporal-basis builders."""

    pmax: int
    gram_diag: np.ndarray
    deriv_matrix: np.ndarray


def workspace(pmax):
    if pmax < 0:
        raise ValueError(f"degree cap must be nonnegative, got {pmax}")
    return LegendreWorkspace(pmax, gram_diag(pmax), derivative_expansion(pmax))


def _legendre_pair(n, x):
    """(L_n(x), L_{n-1}(x)) for an array x, by the recurrence."""
    prev = np.ones_like(x)
    cur = x.copy()
    for m in range(1, n):
        prev, cur = cur, ((2 * m + 1) * x * cur - m * prev) / (m + 1)
    return cur, prev


def gauss_legendre_rule(n):
    """n-point Gauss-Legendre rule on (-1, 1), exact for degree <= 2n-1.

    Nodes are the roots of L_n, found by Newton iteration from
    Chebyshev initial guesses; the rule is returned in ascending node
    order and is symmetric about 0.
    """
    if n < 1:
        raise ValueError(f"point count must be positive, got {n}")
    if n == 1:
        return np.array([0.0]), np.array([2.0])
    half = (n + 1) // 2
    i = np.arange(half)
    x = np.cos(np.pi * (4 * i + 3) / (4 * n + 2))
    for _ in range(100):
        ln, lnm1 = _legendre_pair(n, x)
        dl = n * (x * ln - lnm1) / (x * x - 1.0)
        dx = ln / dl
        x -= dx
        if np.max(np.abs(dx)) < 1e-15:
            break
    else:
        raise RuntimeError("Gauss-Legendre Newton iteration did not converge in 100 steps")
    if n % 2 == 1:
        x[-1] = 0.0
    ln, lnm1 = _legendre_pair(n, x)
    dl = n * (x * ln - lnm1) / (x * x - 1.0)
    w = 2.0 / ((1.0 - x * x) * dl * dl)
    nodes = np.concatenate([-x[: n // 2], x[::-1]])
    weights = np.concatenate([w[: n // 2], w[::-1]])
    order = np.argsort(nodes, kind="stable")
    return nodes[order], weights[order]
