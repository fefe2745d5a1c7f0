"""P1 finite elements on uniform meshes of (0,1) and (0,1)^2.

1D: elements of size h = 2^-k, tridiagonal mass h/6 [1,4,1] and
stiffness 1/h [-1,2,-1] on the interior nodes.  2D: each grid square
split by its positive-slope diagonal; consistent (non-lumped) mass,
5-point stiffness.  Dirichlet rows and columns are eliminated, so all
matrices act on interior nodes only.  Mesh hierarchies down to k = 2
carry rediscretized operators and interpolation for multigrid.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .legendre import gauss_legendre_rule
from .multigrid import MgSolver, NearExactSolver, VcycleSolver
from .operators import ExactSolver, SpatialPair

__all__ = [
    "MeshLevel",
    "MeshHierarchy",
    "build_hierarchy",
    "assemble_1d",
    "assemble_2d",
    "load_vector",
    "l2_error",
    "p1_interpolant",
    "project_l2",
    "HeatProblem",
    "exact_heat_solution",
]

DIRECT_CUTOFF_2D = 8  # sparse factorization up to h = 2^-8; near-exact CG beyond

# degree-4 rule on the reference triangle (6 points, barycentric)
_TRI_A1, _TRI_W1 = 0.445948490915965, 0.223381589678011
_TRI_A2, _TRI_W2 = 0.091576213509771, 0.109951743655322
_TRI_BARY = np.array(
    [
        [1 - 2 * _TRI_A1, _TRI_A1, _TRI_A1],
        [_TRI_A1, 1 - 2 * _TRI_A1, _TRI_A1],
        [_TRI_A1, _TRI_A1, 1 - 2 * _TRI_A1],
        [1 - 2 * _TRI_A2, _TRI_A2, _TRI_A2],
        [_TRI_A2, 1 - 2 * _TRI_A2, _TRI_A2],
        [_TRI_A2, _TRI_A2, 1 - 2 * _TRI_A2],
    ]
)
_TRI_W = np.array([_TRI_W1, _TRI_W1, _TRI_W1, _TRI_W2, _TRI_W2, _TRI_W2])


@dataclass
class MeshLevel:
    """One uniform refinement level: geometry plus interior operators."""

    dim: int
    k: int
    h: float
    n_interior: int
    coords: np.ndarray  # full-grid node coordinates, boundary included
    interior: np.ndarray  # boolean mask over full-grid nodes
    elements: np.ndarray  # segments (1D) or triangles (2D) in full-grid numbering
    M: sp.csr_matrix
    A: sp.csr_matrix


@dataclass
class MeshHierarchy:
    """Levels ordered coarse to fine with interpolation between them."""

    dim: int
    levels: list
    prolongations: list = field(default_factory=list)

    @property
    def finest(self):
        return self.levels[-1]


def _build_level_1d(k):
    m = 2**k + 1
    h = 2.0**-k
    x = np.arange(m) * h
    interior = np.zeros(m, dtype=bool)
    interior[1:-1] = True
    elements = np.stack([np.arange(m - 1), np.arange(1, m)], axis=1)
    n = m - 2
    M = sp.diags([h / 6, 4 * h / 6, h / 6], [-1, 0, 1], shape=(n, n)).tocsr()
    A = sp.diags([-1 / h, 2 / h, -1 / h], [-1, 0, 1], shape=(n, n)).tocsr()
    return MeshLevel(1, k, h, n, x, interior, elements, M, A)


def _triangles_2d(side):
    """Two triangles per square, split by the positive-slope diagonal."""
    ii, jj = np.meshgrid(np.arange(side - 1), np.arange(side - 1), indexing="xy")
    ii = ii.ravel()
    jj = jj.ravel()
    v00 = jj * side + ii
    v10 = jj * side + ii + 1
    v11 = (jj + 1) * side + ii + 1
    v01 = (jj + 1) * side + ii
    lower = np.stack([v00, v10, v11], axis=1)
    upper = np.stack([v00, v11, v01], axis=1)
    return np.vstack([lower, upper])


def _assemble_p1_2d(coords, tris, interior):
    pv = coords[tris]  # (ntri, 3, 2)
    d = pv[:, [2, 0, 1], :] - pv[:, [1, 2, 0], :]  # edge vectors opposite each vertex
    area = 0.5 * np.abs(d[:, 2, 0] * (-d[:, 1, 1]) - d[:, 2, 1] * (-d[:, 1, 0]))
    nfull = coords.shape[0]
    rows, cols, mvals, avals = [], [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(tris[:, a])
            cols.append(tris[:, b])
            mvals.append(area / 12.0 * (2.0 if a == b else 1.0) * np.ones_like(area))
            avals.append(np.einsum("ij,ij->i", d[:, a, :], d[:, b, :]) / (4.0 * area))
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    M = sp.coo_matrix((np.concatenate(mvals), (rows, cols)), shape=(nfull, nfull)).tocsr()
    A = sp.coo_matrix((np.concatenate(avals), (rows, cols)), shape=(nfull, nfull)).tocsr()
    idx = np.flatnonzero(interior)
    M = M[idx][:, idx].tocsr()
    A = A[idx][:, idx].tocsr()
    M.eliminate_zeros()
    A.eliminate_zeros()
    A.data[np.abs(A.data) < 1e-14] = 0.0
    A.eliminate_zeros()
    return M, A


def _build_level_2d(k):
    side = 2**k + 1
    h = 2.0**-k
    g = np.arange(side) * h
    coords = np.stack([np.tile(g, side), np.repeat(g, side)], axis=1)
    on_boundary = (
        (coords[:, 0] == 0.0) | (coords[:, 0] == 1.0) | (coords[:, 1] == 0.0) | (coords[:, 1] == 1.0)
    )
    interior = ~on_boundary
    tris = _triangles_2d(side)
    M, A = _assemble_p1_2d(coords, tris, interior)
    n = (2**k - 1) ** 2
    return MeshLevel(2, k, h, n, coords, interior, tris, M, A)


def _prolongation_1d(k):
    """Interpolation from interior nodes at level k to level k+1."""
    nc = 2**k - 1
    nf = 2 ** (k + 1) - 1
    rows, cols, vals = [], [], []
    ix = np.arange(1, nf + 1)
    even = ix[ix % 2 == 0]
    rows.append(even - 1)
    cols.append(even // 2 - 1)
    vals.append(np.ones(even.size))
    odd = ix[ix % 2 == 1]
    for shift in (-1, 1):
        cx = (odd + shift) // 2
        ok = (cx >= 1) & (cx <= nc)
        rows.append(odd[ok] - 1)
        cols.append(cx[ok] - 1)
        vals.append(0.5 * np.ones(ok.sum()))
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(nf, nc)
    ).tocsr()


def _prolongation_2d(k):
    """P1 interpolation between interior grids; square centers average the
    two endpoints of the positive-slope diagonal."""
    nc = 2**k - 1
    nf = 2 ** (k + 1) - 1
    ix, iy = np.meshgrid(np.arange(1, nf + 1), np.arange(1, nf + 1), indexing="xy")
    ix = ix.ravel()
    iy = iy.ravel()
    fid = (iy - 1) * nf + (ix - 1)
    rows, cols, vals = [], [], []

    def add(mask, cx, cy, w):
        ok = mask & (cx >= 1) & (cx <= nc) & (cy >= 1) & (cy <= nc)
        rows.append(fid[ok])
        cols.append((cy[ok] - 1) * nc + (cx[ok] - 1))
        vals.append(np.full(int(ok.sum()), w))

    ex = ix % 2 == 0
    ey = iy % 2 == 0
    add(ex & ey, ix // 2, iy // 2, 1.0)
    add(~ex & ey, (ix - 1) // 2, iy // 2, 0.5)
    add(~ex & ey, (ix + 1) // 2, iy // 2, 0.5)
    add(ex & ~ey, ix // 2, (iy - 1) // 2, 0.5)
    add(ex & ~ey, ix // 2, (iy + 1) // 2, 0.5)
    add(~ex & ~ey, (ix - 1) // 2, (iy - 1) // 2, 0.5)
    add(~ex & ~ey, (ix + 1) // 2, (iy + 1) // 2, 0.5)
    return sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nf * nf, nc * nc),
    ).tocsr()


def build_hierarchy(dim, k, k_coarse=2):
    if k < k_coarse:
        raise ValueError(f"need k >= {k_coarse}, got {k}")
    build = _build_level_1d if dim == 1 else _build_level_2d
    prolong = _prolongation_1d if dim == 1 else _prolongation_2d
    levels = [build(kk) for kk in range(k_coarse, k + 1)]
    prolongations = [prolong(kk) for kk in range(k_coarse, k)]
    return MeshHierarchy(dim, levels, prolongations)


def _make_pair(hierarchy, k, dim):
    lev = hierarchy.finest
    M, A = lev.M, lev.A
    use_direct = dim == 1 or k <= DIRECT_CUTOFF_2D

    def shifted_solver_factory(mu, vcycles=None):
        if vcycles is not None:
            return VcycleSolver(MgSolver(hierarchy, mu=mu), vcycles)
        if use_direct:
            return ExactSolver((M + mu * A).tocsr())
        return NearExactSolver(MgSolver(hierarchy, mu=mu))

    a_solver = ExactSolver(A) if use_direct else NearExactSolver(MgSolver(hierarchy, mu=None))
    meta = {
        "dim": dim,
        "k": k,
        "h": lev.h,
        "n": lev.n_interior,
        "a_solver": a_solver.description,
    }
    return SpatialPair(M, A, a_solver, shifted_solver_factory, hierarchy, meta)


def assemble_1d(k):
    """SpatialPair on the uniform 1D mesh with h = 2^-k, 2 <= k <= 20."""
    if not 2 <= k <= 20:
        raise ValueError(f"1D mesh exponent must be in [2, 20], got {k}")
    hierarchy = build_hierarchy(1, k)
    return _make_pair(hierarchy, k, 1)


def assemble_2d(k):
    """SpatialPair on the uniform triangulation of (0,1)^2 with h = 2^-k, 2 <= k <= 10."""
    if not 2 <= k <= 10:
        raise ValueError(f"2D mesh exponent must be in [2, 10], got {k}")
    hierarchy = build_hierarchy(2, k)
    return _make_pair(hierarchy, k, 2)


def load_vector(level, g):
    """Entries int g hat_i over the interior nodes.

    Per-element quadrature: 3-point Gauss in 1D, the 3-point
    edge-midpoint rule in 2D; both exact for piecewise-quadratic g.
    """
    if level.dim == 1:
        nodes, weights = gauss_legendre_rule(3)
        x = level.coords
        xl, xr = x[:-1], x[1:]
        mid = 0.5 * (xl + xr)
        half = 0.5 * level.h
        out = np.zeros(x.size)
        for s, w in zip(nodes, weights):
            xq = mid + half * s
            gq = np.asarray(g(xq), dtype=float)
            out[:-1] += w * half * gq * (xr - xq) / level.h
            out[1:] += w * half * gq * (xq - xl) / level.h
        return out[level.interior]
    pv = level.coords[level.elements]
    area = level.h * level.h / 2.0
    mids = 0.5 * (pv + np.roll(pv, -1, axis=1))  # midpoint of edge (a, a+1)
    vals = np.asarray(g(mids[:, :, 0], mids[:, :, 1]), dtype=float)
    out = np.zeros(level.coords.shape[0])
    for a in range(3):
        # hat_a is 1/2 on the two edges touching vertex a, 0 on the opposite edge
        np.add.at(out, level.elements[:, a], (vals[:, a] + vals[:, (a + 2) % 3]) * 0.5 * (area / 3.0))
    return out[level.interior]


def _full_coeffs(level, coeffs):
    full = np.zeros(level.coords.shape[0])
    full[level.interior] = coeffs
    return full


def l2_error(level, coeffs, reference):
    """L2 distance between the P1 field with the given interior coefficients
    and a reference function, by per-element quadrature of degree >= 4."""
    full = _full_coeffs(level, coeffs)
    if level.dim == 1:
        nodes, weights = gauss_legendre_rule(3)
        x = level.coords
        xl, xr = x[:-1], x[1:]
        cl, cr = full[:-1], full[1:]
        mid = 0.5 * (xl + xr)
        half = 0.5 * level.h
        err2 = 0.0
        for s, w in zip(nodes, weights):
            xq = mid + half * s
            uh = cl * (xr - xq) / level.h + cr * (xq - xl) / level.h
            diff = uh - np.asarray(reference(xq), dtype=float)
            err2 += w * half * float(diff @ diff)
        return np.sqrt(err2)
    pv = level.coords[level.elements]
    cv = full[level.elements]
    area = level.h * level.h / 2.0
    err2 = 0.0
    for q in range(_TRI_BARY.shape[0]):
        lam = _TRI_BARY[q]
        xq = lam[0] * pv[:, 0, 0] + lam[1] * pv[:, 1, 0] + lam[2] * pv[:, 2, 0]
        yq = lam[0] * pv[:, 0, 1] + lam[1] * pv[:, 1, 1] + lam[2] * pv[:, 2, 1]
        uh = lam[0] * cv[:, 0] + lam[1] * cv[:, 1] + lam[2] * cv[:, 2]
        diff = uh - np.asarray(reference(xq, yq), dtype=float)
        err2 += _TRI_W[q] * area * float(diff @ diff)
    return np.sqrt(err2)


def p1_interpolant(level, coeffs):
    """Callable evaluating the P1 field with the given interior coefficients."""
    full = _full_coeffs(level, coeffs)
    h = level.h
    if level.dim == 1:
        x_nodes = level.coords

        def eval_1d(x):
            return np.interp(np.asarray(x, dtype=float), x_nodes, full)

        return eval_1d
    side = int(round(1.0 / h)) + 1

    def eval_2d(x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        ix = np.clip((x / h).astype(int), 0, side - 2)
        iy = np.clip((y / h).astype(int), 0, side - 2)
        xi = x / h - ix
        eta = y / h - iy
        c00 = full[iy * side + ix]
        c10 = full[iy * side + ix + 1]
        c01 = full[(iy + 1) * side + ix]
        c11 = full[(iy + 1) * side + ix + 1]
        lower = c00 * (1 - xi) + c10 * (xi - eta) + c11 * eta
        upper = c00 * (1 - eta) + c11 * xi + c01 * (eta - xi)
        return np.where(eta <= xi, lower, upper)

    return eval_2d


def project_l2(M, level, g):
    """L2 projection onto the P1 space: solve M c = load_vector(g)."""
    return ExactSolver(M).solve(load_vector(level, g))


@dataclass(frozen=True)
class HeatProblem:
    """Heat equation on (0,1)^2 with u0 = x(1-x) sin(pi y), homogeneous Dirichlet.

    The sine expansion of x(1-x) gives the separable exact solution

        u(x, y, t) = sum_{n odd} 8/(n^3 pi^3) exp(-(n^2+1) pi^2 t) sin(n pi x) sin(pi y),

    truncated adaptively; series_truncation floors the term count at
    t = 0 where the exponential gives no decay.
    """

    t_final: float = 0.1
    series_truncation: int = 41

    def u0(self, x, y):
        return x * (1.0 - x) * np.sin(np.pi * y)

    def terms(self, t):
        n = self.series_truncation if t <= 0.0 else 1
        while 8.0 / (n**3 * np.pi**3) * np.exp(-((n**2 + 1)) * np.pi**2 * t) > 1e-14:
            n += 2
            if n > 2001:
                break
        return max(n, self.series_truncation if t <= 0.0 else 1)


def exact_heat_solution(problem, t):
    """Callable (x, y) -> u(x, y, t) from the truncated sine series."""
    if t < 0:
        raise ValueError(f"time must be nonnegative, got {t}")
    nmax = problem.terms(t)
    ns = np.arange(1, nmax + 1, 2, dtype=float)
    amps = 8.0 / (ns**3 * np.pi**3) * np.exp(-((ns**2 + 1.0)) * np.pi**2 * t)

    def u(x, y):
        x = np.asarray(x, dtype=float)
        s = np.zeros_like(x)
        for n, a in zip(ns, amps):
            s += a * np.sin(n * np.pi * x)
        return s * np.sin(np.pi * y)

    return u
