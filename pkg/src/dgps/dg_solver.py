"""Block operators and solvers for one DG time-step.

Working basis is always the temporal eigenbasis {phi_j}, in which the
unknown of one step is a (p+1, n) array of spatial coefficient blocks.
The module exposes the nonsymmetric step operator B, the symmetrizing
left preconditioner P^T, the SPD energy operator L in its
block-diagonal plus rank-two form, the block-diagonal norm
preconditioner H, the PCG loop with energy-norm control, the Lanczos
condition-number estimator, and the multi-step heat-equation driver.
"""

from dataclasses import dataclass, field
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import scipy.linalg as sla

from .fem import exact_heat_solution, l2_error, project_l2
from .legendre import derivative_expansion, gauss_legendre_rule, gram_diag
from .multigrid import MgSolver, VcycleSolver
from .temporal_basis import build_basis, eigenfunction_values

__all__ = [
    "PcgBreakdownError",
    "PcgReport",
    "DgStepOperator",
    "block_dot",
    "apply_B",
    "apply_Pt",
    "apply_L",
    "apply_Hinv",
    "apply_H",
    "pcg",
    "ConditionEstimate",
    "estimate_condition",
    "dense_condition_number",
    "assemble_rhs",
    "timestep_solve",
    "HeatRunReport",
    "solve_heat",
]


class PcgBreakdownError(RuntimeError):
    """Nonpositive curvature or preconditioner energy inside PCG: the
    operator or preconditioner is not SPD, which signals a bug."""

    def __init__(self, iteration, detail):
        super().__init__(f"PCG breakdown at iteration {iteration}: {detail}")
        self.iteration = iteration


def block_dot(u, v):
    return float(np.vdot(u, v))


class DgStepOperator:
    """Bundles a TemporalBasis, a SpatialPair and the step size tau.

    ainv_vcycles / hinv_vcycles select the solver realization: None
    means exact (or the near-exact surrogate beyond the direct-solver
    cutoff), an integer n means n multigrid V-cycles.  threads > 1
    parallelizes the independent block solves; the endpoint reductions
    keep a fixed ascending-j summation order either way.
    """

    def __init__(self, basis, pair, tau, ainv_vcycles=None, hinv_vcycles=None, threads=1):
        if tau <= 0:
            raise ValueError(f"time-step size must be positive, got {tau}")
        self.basis = basis
        self.pair = pair
        self.tau = float(tau)
        self.ainv_vcycles = ainv_vcycles
        self.hinv_vcycles = hinv_vcycles
        self.threads = int(threads)
        p = basis.p
        G = gram_diag(p)
        Qd = derivative_expansion(p).T @ basis.Q
        self.b_coeffs = basis.Q.T @ (G[:, None] * Qd) + np.outer(basis.q_minus, basis.q_minus)
        self.c_coeffs = 0.5 * basis.Q.T @ (G[:, None] * basis.Q)
        self.mus = self.tau * np.sqrt(basis.lam) / 2.0
        if ainv_vcycles is None:
            self.a_solver = pair.a_solver
        else:
            if pair.hierarchy is None:
                raise ValueError("V-cycle mode needs a SpatialPair with a mesh hierarchy")
            self.a_solver = VcycleSolver(MgSolver(pair.hierarchy, mu=None), ainv_vcycles)
        self.shifted_solvers = [pair.shifted_solver_factory(mu, hinv_vcycles) for mu in self.mus]

    @property
    def p(self):
        return self.basis.p

    @property
    def n(self):
        return self.pair.n

    @property
    def exact_mode(self):
        return self.ainv_vcycles is None and self.hinv_vcycles is None

    def zeros(self):
        return np.zeros((self.p + 1, self.n))

    def _map_blocks(self, fn, count):
        if self.threads <= 1:
            return [fn(j) for j in range(count)]
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            return list(pool.map(fn, range(count)))

    def solver_notes(self):
        return {
            "a_solver": self.a_solver.description,
            "shifted_solver": self.shifted_solvers[0].description,
        }


def apply_B(op, u):
    """(B u)_j = sum_k (b_jk M + c_jk tau A) u_k."""
    u = np.asarray(u)
    ub = np.tensordot(op.b_coeffs, u, axes=(1, 0))
    uc = np.tensordot(op.c_coeffs, u, axes=(1, 0))
    out = np.empty_like(u)
    M, A, tau = op.pair.M, op.pair.A, op.tau

    def one(j):
        out[j] = M @ ub[j] + tau * (A @ uc[j])

    op._map_blocks(one, op.p + 1)
    return out


def apply_Pt(op, f):
    """g_k = M A^{-1} (sum_j K[k, j] f_j) + (tau/2) f_k, blocks independent."""
    f = np.asarray(f)
    kf = np.tensordot(op.basis.K, f, axes=(1, 0))
    out = np.empty_like(f)
    M, tau = op.pair.M, op.tau

    def one(k):
        out[k] = M @ op.a_solver.solve(kf[k]) + 0.5 * tau * f[k]

    op._map_blocks(one, op.p + 1)
    return out


def apply_L(op, u):
    """Block-diagonal plus rank-two form of L = P^T B.

    w_j = M u_j, z_{+-} = sum_j phi_j(+-1) w_j, then
    (L u)_j = M A^{-1} w_j + (tau^2 lam_j / 4) A u_j
              + (tau/2) phi_j(1) z_+ + (tau/2) phi_j(-1) z_-.
    """
    u = np.asarray(u)
    M, A, tau = op.pair.M, op.pair.A, op.tau
    lam, qp, qm = op.basis.lam, op.basis.q_plus, op.basis.q_minus
    w = np.empty_like(u)

    def mass(j):
        w[j] = M @ u[j]

    op._map_blocks(mass, op.p + 1)
    z_plus = np.tensordot(qp, w, axes=(0, 0))
    z_minus = np.tensordot(qm, w, axes=(0, 0))
    out = np.empty_like(u)

    def one(j):
        out[j] = (
            M @ op.a_solver.solve(w[j])
            + (tau * tau * lam[j] / 4.0) * (A @ u[j])
            + (0.5 * tau * qp[j]) * z_plus
            + (0.5 * tau * qm[j]) * z_minus
        )

    op._map_blocks(one, op.p + 1)
    return out


def apply_Hinv(op, r):
    """Per block j: solve (M + mu_j A), multiply by A, solve again."""
    r = np.asarray(r)
    A = op.pair.A
    out = np.empty_like(r)

    def one(j):
        solver = op.shifted_solvers[j]
        out[j] = solver.solve(A @ solver.solve(r[j]))

    op._map_blocks(one, op.p + 1)
    return out


def apply_H(op, u):
    """Norm preconditioner itself: (M + mu_j A) A^{-1} (M + mu_j A) per block.

    Needs the exact A-solver; used by spectral-equivalence checks and
    the dense cross-check, not inside PCG.
    """
    u = np.asarray(u)
    out = np.empty_like(u)

    def one(j):
        S = op.shifted_solvers[j].matrix
        out[j] = S @ op.a_solver.solve(S @ u[j])

    op._map_blocks(one, op.p + 1)
    return out


@dataclass
class PcgReport:
    """Convergence record of one PCG solve.

    ritz_min/ritz_max come from the Lanczos tridiagonal assembled from
    the PCG scalars; kappa_estimate is their ratio.
    """

    iterations: int
    converged: bool
    criterion: str
    residual_history: np.ndarray
    energy_error_history: np.ndarray = None
    ritz_min: float = float("nan")
    ritz_max: float = float("nan")
    kappa_estimate: float = float("nan")


def _ritz_from_scalars(alphas, betas):
    m = len(alphas)
    if m == 0:
        return float("nan"), float("nan")
    d = np.empty(m)
    e = np.empty(max(m - 1, 0))
    d[0] = 1.0 / alphas[0]
    for i in range(1, m):
        d[i] = 1.0 / alphas[i] + betas[i - 1] / alphas[i - 1]
        e[i - 1] = np.sqrt(betas[i - 1]) / alphas[i - 1]
    if m == 1:
        return d[0], d[0]
    vals = sla.eigh_tridiagonal(d, e, eigvals_only=True)
    return float(vals[0]), float(vals[-1])


def pcg(op, g, tol=1e-6, maxit=500, criterion="relative_preconditioned_residual", exact_solution=None):
    """PCG on L with preconditioner H^{-1}, zero initial guess.

    criterion is either "relative_preconditioned_residual" or
    "true_energy_error"; the latter requires the exact solution and
    tracks the energy error through the identity
    ||u* - x||_L^2 = u*.g - 2 x.g + x.(g - r).
    """
    if criterion not in ("relative_preconditioned_residual", "true_energy_error"):
        raise ValueError(f"unknown stopping criterion {criterion!r}")
    track_energy = exact_solution is not None
    if criterion == "true_energy_error" and not track_energy:
        raise ValueError("true_energy_error criterion needs the exact solution")
    g = np.asarray(g, dtype=float)
    x = np.zeros_like(g)
    r = g.copy()
    z = apply_Hinv(op, r)
    rho = block_dot(r, z)
    if rho < 0:
        raise PcgBreakdownError(0, f"preconditioner energy {rho:.3e} < 0")
    residual_history = [np.sqrt(rho)]
    energy_history = None
    ustar_g = err0 = None
    if track_energy:
        ustar_g = block_dot(exact_solution, g)
        err0 = np.sqrt(max(ustar_g, 0.0))
        energy_history = [err0]
    if rho == 0.0:
        return x, PcgReport(0, True, criterion, np.array(residual_history),
                            None if energy_history is None else np.array(energy_history))
    rho0 = rho
    p_dir = z.copy()
    alphas, betas = [], []
    iterations = maxit
    converged = False
    for k in range(1, maxit + 1):
        q = apply_L(op, p_dir)
        pq = block_dot(p_dir, q)
        if pq <= 0:
            raise PcgBreakdownError(k, f"curvature {pq:.3e} <= 0")
        alpha = rho / pq
        alphas.append(alpha)
        x += alpha * p_dir
        r -= alpha * q
        z = apply_Hinv(op, r)
        rho_new = block_dot(r, z)
        residual_history.append(np.sqrt(max(rho_new, 0.0)))
        if track_energy:
            err2 = ustar_g - 2.0 * block_dot(x, g) + block_dot(x, g - r)
            energy_history.append(np.sqrt(max(err2, 0.0)))
        if criterion == "relative_preconditioned_residual":
            done = residual_history[-1] <= tol * np.sqrt(rho0)
        else:
            done = energy_history[-1] <= tol * err0
        if done:
            iterations = k
            converged = True
            break
        if rho_new <= 0:
            raise PcgBreakdownError(k, f"preconditioner energy {rho_new:.3e} <= 0")
        beta = rho_new / rho
        betas.append(beta)
        p_dir = z + beta * p_dir
        rho = rho_new
    ritz_min, ritz_max = _ritz_from_scalars(alphas, betas[: max(len(alphas) - 1, 0)])
    report = PcgReport(
        iterations=iterations,
        converged=converged,
        criterion=criterion,
        residual_history=np.array(residual_history),
        energy_error_history=None if energy_history is None else np.array(energy_history),
        ritz_min=ritz_min,
        ritz_max=ritz_max,
        kappa_estimate=ritz_max / ritz_min if ritz_min > 0 else float("nan"),
    )
    return x, report


@dataclass
class ConditionEstimate:
    kappa: float
    ritz_min: float
    ritz_max: float
    iterations: int
    converged: bool


def estimate_condition(op, max_lanczos=500, seed=1234, rtol=1e-8, stable_steps=3):
    """Extremal eigenvalues of H^{-1} L by preconditioned Lanczos.

    Runs the three-term recurrence for L H^{-1} in the H^{-1} inner
    product from a seeded random start, with full reorthogonalization,
    until both extremal Ritz values change by less than rtol over
    stable_steps consecutive iterations (or the Krylov space is
    exhausted).  Requires exact solver modes: the bound concerns the
    ideal preconditioner.
    """
    if not op.exact_mode:
        raise ValueError("condition estimation requires exact solver modes")
    shape = (op.p + 1, op.n)
    dim = shape[0] * shape[1]
    cap = min(max_lanczos, dim)
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(shape)
    z = apply_Hinv(op, v)
    scale = np.sqrt(block_dot(v, z))
    v /= scale
    z /= scale
    V = np.empty((cap + 1, dim))
    Z = np.empty((cap + 1, dim))
    V[0] = v.ravel()
    Z[0] = z.ravel()
    alphas, betas = [], []
    beta_prev = 0.0
    ritz_prev = None
    nstable = 0
    it = 0
    for it in range(1, cap + 1):
        m = it - 1
        y = apply_L(op, Z[m].reshape(shape)).ravel()
        alpha = float(y @ Z[m])
        w = y - alpha * V[m]
        if m > 0:
            w -= beta_prev * V[m - 1]
        w -= V[: m + 1].T @ (Z[: m + 1] @ w)
        alphas.append(alpha)
        zw = apply_Hinv(op, w.reshape(shape)).ravel()
        b2 = float(w @ zw)
        if len(alphas) == 1:
            ritz = (alphas[0], alphas[0])
        else:
            vals = sla.eigh_tridiagonal(np.array(alphas), np.array(betas), eigvals_only=True)
            ritz = (float(vals[0]), float(vals[-1]))
        if ritz_prev is not None:
            change = max(
                abs(ritz[0] - ritz_prev[0]) / abs(ritz[0]),
                abs(ritz[1] - ritz_prev[1]) / abs(ritz[1]),
            )
            nstable = nstable + 1 if change < rtol else 0
        ritz_prev = ritz
        if nstable >= stable_steps or b2 <= 1e-24 or it >= dim:
            return ConditionEstimate(ritz[1] / ritz[0], ritz[0], ritz[1], it, True)
        beta_prev = np.sqrt(b2)
        betas.append(beta_prev)
        V[it] = w / beta_prev
        Z[it] = zw / beta_prev
    return ConditionEstimate(ritz_prev[1] / ritz_prev[0], ritz_prev[0], ritz_prev[1], it, False)


def dense_condition_number(op, cap=200):
    """Generalized dense eigensolve of (L, H); cross-check for small systems."""
    dim = (op.p + 1) * op.n
    if dim > cap:
        raise ValueError(f"dense cross-check limited to dimension {cap}, got {dim}")
    if not op.exact_mode:
        raise ValueError("dense cross-check requires exact solver modes")
    shape = (op.p + 1, op.n)
    L = np.empty((dim, dim))
    H = np.empty((dim, dim))
    e = np.zeros(dim)
    for i in range(dim):
        e[i] = 1.0
        L[:, i] = apply_L(op, e.reshape(shape)).ravel()
        H[:, i] = apply_H(op, e.reshape(shape)).ravel()
        e[i] = 0.0
    L = 0.5 * (L + L.T)
    H = 0.5 * (H + H.T)
    vals = sla.eigh(L, H, eigvals_only=True)
    return float(vals[-1] / vals[0])


def assemble_rhs(op, source, u_prev, t_start=0.0):
    """Right-hand side of one step and its P^T image.

    f_k = (tau/2) sum_q w_q phi_k(s_q) load(t(s_q)) + phi_k(-1) M u_prev
    with a (p+3)-point Gauss rule and t(s) the affine map from (-1, 1)
    onto the step; source maps absolute time to a spatial load vector,
    None meaning zero.  Returns (f, g) with g = P^T f.
    """
    u_prev = np.asarray(u_prev, dtype=float)
    f = op.zeros()
    if source is not None:
        nodes, weights = gauss_legendre_rule(op.p + 3)
        phi = eigenfunction_values(op.basis, nodes)
        loads = np.stack([np.asarray(source(t_start + op.tau * (1.0 + s) / 2.0)) for s in nodes])
        f += 0.5 * op.tau * np.tensordot(phi * weights, loads, axes=(1, 0))
    f += op.basis.q_minus[:, None] * (op.pair.M @ u_prev)
    return f, apply_Pt(op, f)


def timestep_solve(op, source, u_prev, tol=1e-6, maxit=500,
                   criterion="relative_preconditioned_residual", t_start=0.0):
    """Solve one step and return the endpoint value u(1) = sum_j phi_j(1) u_j."""
    _, g = assemble_rhs(op, source, u_prev, t_start)
    u, report = pcg(op, g, tol=tol, maxit=maxit, criterion=criterion)
    return np.tensordot(op.basis.q_plus, u, axes=(0, 0)), report


@dataclass
class HeatRunReport:
    p: int
    tau: float
    steps: int
    mode: str
    iterations: list
    mean_iterations: float
    final_error: float
    u_final: np.ndarray
    solver_notes: dict = field(default_factory=dict)


def solve_heat(pair, problem, p, tau, mode="direct", vcycles_l=5, vcycles_h=1,
               tol=1e-6, maxit=500, threads=1):
    """March the heat problem over N = T/tau uniform steps.

    mode "direct": exact solvers everywhere.  mode "mg": vcycles_l
    V-cycles approximate A^{-1} inside L and P^T and vcycles_h V-cycles
    approximate each shifted solve inside H^{-1}.  The initial datum is
    the L2 projection of u0 in both modes.
    """
    if mode not in ("direct", "mg"):
        raise ValueError(f"unknown mode {mode!r}")
    steps = round(problem.t_final / tau)
    if abs(steps * tau - problem.t_final) > 1e-12 * problem.t_final or steps < 1:
        raise ValueError(f"tau={tau} does not uniformly divide T={problem.t_final}")
    level = pair.hierarchy.finest
    basis = build_basis(p)
    ainv = None if mode == "direct" else vcycles_l
    hinv = None if mode == "direct" else vcycles_h
    op = DgStepOperator(basis, pair, tau, ainv_vcycles=ainv, hinv_vcycles=hinv, threads=threads)
    u = project_l2(pair.M, level, problem.u0)
    iters = []
    for step in range(steps):
        u, report = timestep_solve(op, None, u, tol=tol, maxit=maxit, t_start=step * tau)
        iters.append(report.iterations)
    err = l2_error(level, u, exact_heat_solution(problem, problem.t_final))
    return HeatRunReport(
        p=p,
        tau=tau,
        steps=steps,
        mode=mode,
        iterations=iters,
        mean_iterations=float(np.mean(iters)),
        final_error=err,
        u_final=u,
        solver_notes=op.solver_notes(),
    )
