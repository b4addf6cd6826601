"""Theta-scheme time stepping for the mixed scheme.

Each step solves for the theta-averaged unknowns

    M U* - B^T P* = G
    D P* + B U*   = F + D P^n,        D = diag(|c| / (alpha dt)),

with alpha = (1 + theta) / 2, by eliminating U* through the diagonal M and
solving the SPD pressure Schur complement (D + B M^-1 B^T). The end-of-step
pressure is P^{n+1} = P^n + (P* - P^n) / alpha. theta = 1 is backward Euler,
theta = 0 Crank-Nicolson.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    PermeabilityField,
    assemble_boundary_term,
    assemble_divergence,
    assemble_initial_pressure,
    assemble_source,
    assemble_velocity_mass,
)
from .fespace import DofMap

log = logging.getLogger(__name__)

# Above this many pressure unknowns the default switches from sparse LU to PCG.
DIRECT_LIMIT = 200_000


class SolverError(RuntimeError):
    def __init__(self, message, residual=None, history=None, step=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []
        self.step = step


@dataclass(frozen=True)
class ThetaConfig:
    theta: float
    dt: float
    n_steps: int

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if int(self.n_steps) != self.n_steps or self.n_steps < 0:
            raise ValueError(f"n_steps must be a non-negative integer, got {self.n_steps}")

    @property
    def alpha(self) -> float:
        return 0.5 * (1.0 + self.theta)

    @property
    def T(self) -> float:
        return self.n_steps * self.dt

    @classmethod
    def from_final_time(cls, theta: float, T: float, dt: float, rtol: float = 1e-9) -> "ThetaConfig":
        n = int(round(T / dt))
        if n < 1 or abs(n * dt - T) > rtol * T:
            raise ValueError(f"dt={dt:.6g} does not divide T={T:.6g}")
        return cls(theta, dt, n)


@dataclass
class DiscreteState:
    P: np.ndarray
    U: np.ndarray | None
    t: float
    # velocity and time at the theta-point of the step that produced this state
    U_theta: np.ndarray | None = None
    t_theta: float | None = None
    balance: float = 0.0
    newton_iters: int = 0
    newton_history: list[float] = field(default_factory=list)


@dataclass(frozen=True, eq=False)
class OperatorSet:
    M: np.ndarray
    B: sp.csr_matrix
    area: np.ndarray
    dofmap: DofMap

    def __post_init__(self):
        nc, nv = self.B.shape
        if self.M.shape != (nv,) or self.area.shape != (nc,):
            raise ValueError("operator dimensions are inconsistent")

    def schur(self, d: np.ndarray) -> sp.csr_matrix:
        """diag(d) + B M^-1 B^T."""
        BMB = self.B @ sp.diags(1.0 / self.M) @ self.B.T
        return (sp.diags(d) + BMB).tocsr()

    def velocity(self, P: np.ndarray, G: np.ndarray) -> np.ndarray:
        """Constitutive relation M U = B^T P + G."""
        return (self.B.T @ P + G) / self.M


def build_operators(dofmap: DofMap, K: PermeabilityField) -> OperatorSet:
    return OperatorSet(
        M=assemble_velocity_mass(dofmap, K),
        B=assemble_divergence(dofmap),
        area=dofmap.cell_area.copy(),
        dofmap=dofmap,
    )


def pcg(S, b, tol=1e-12, maxiter=None, x0=None):
    """Jacobi-preconditioned conjugate gradients with a curvature guard."""
    n = b.shape[0]
    maxiter = maxiter or 10 * n
    diag = S.diagonal()
    if np.any(diag <= 0):
        raise SolverError("CG: operator has non-positive diagonal, not SPD")
    minv = 1.0 / diag
    x = np.zeros(n) if x0 is None else x0.copy()
    r = b - S @ x
    bnorm = np.linalg.norm(b)
    z = minv * r
    p = z.copy()
    rz = r @ z
    for k in range(maxiter):
        rel = np.linalg.norm(r) / bnorm
        if rel <= tol:
            return x
        Sp = S @ p
        curv = p @ Sp
        if curv <= 0:
            raise SolverError(f"CG diverged: non-positive curvature {curv:.3e} at iteration {k}", residual=rel)
        a = rz / curv
        x += a * p
        r -= a * Sp
        z = minv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    rel = np.linalg.norm(b - S @ x) / bnorm
    if rel <= tol:
        return x
    raise SolverError(f"CG did not converge in {maxiter} iterations, residual {rel:.3e}", residual=rel)


class SPDSolver:
    """Reusable solver for a fixed SPD matrix.

    ``method`` is "direct" (sparse LU, factorized once), "cg", or "auto".
    Both paths enforce ||S x - b|| <= tol ||b||.
    """

    def __init__(self, S, tol: float = 1e-12, method: str = "auto", maxiter: int | None = None):
        self.S = sp.csr_matrix(S)
        self.tol = tol
        self.maxiter = maxiter
        if method == "auto":
            method = "direct" if self.S.shape[0] <= DIRECT_LIMIT else "cg"
        if method not in ("direct", "cg"):
            raise ValueError(f"unknown linear solver {method!r}")
        self.method = method
        self._lu = spla.splu(self.S.tocsc(), permc_spec="MMD_AT_PLUS_A") if method == "direct" else None

    def __call__(self, rhs: np.ndarray, x0=None) -> np.ndarray:
        bnorm = np.linalg.norm(rhs)
        if bnorm == 0.0:
            return np.zeros_like(rhs)
        if self.method == "cg":
            return pcg(self.S, rhs, self.tol, self.maxiter, x0)
        x = self._lu.solve(rhs)
        for _ in range(3):
            r = rhs - self.S @ x
            rel = np.linalg.norm(r) / bnorm
            if rel <= self.tol:
                return x
            x += self._lu.solve(r)
        rel = np.linalg.norm(rhs - self.S @ x) / bnorm
        if rel > self.tol:
            raise SolverError(f"direct solve residual {rel:.3e} above tolerance {self.tol:.1e}", residual=rel)
        return x


def solve_spd(S, rhs, tol: float = 1e-12, method: str = "auto") -> np.ndarray:
    return SPDSolver(S, tol, method)(np.asarray(rhs, dtype=float))


def theta_step(
    state: DiscreteState,
    ops: OperatorSet,
    cfg: ThetaConfig,
    F: np.ndarray,
    G: np.ndarray,
    G_next: np.ndarray | None = None,
    solver: SPDSolver | None = None,
) -> DiscreteState:
    """Advance one step given source F and boundary term G at the theta-point.

    ``G_next`` (boundary term at t_{n+1}) is needed for theta < 1 to recover
    the end-of-step velocity; the velocity at the theta-point is always kept.
    """
    a = cfg.alpha
    d = ops.area / (a * cfg.dt)
    if solver is None:
        solver = SPDSolver(ops.schur(d))
    Minv_G = G / ops.M
    rhs = F + d * state.P - ops.B @ Minv_G
    P_star = solver(rhs)
    U_star = ops.velocity(P_star, G)
    P_next = state.P + (P_star - state.P) / a

    # local mass balance, relative to the size of the system right-hand side
    r = ops.area * (P_next - state.P) / cfg.dt + ops.B @ U_star - F
    scale = np.linalg.norm(rhs)
    balance = float(np.max(np.abs(r)) / scale) if scale > 0 else float(np.max(np.abs(r)))

    if cfg.theta == 1.0:
        U_next = U_star
    elif G_next is not None:
        U_next = ops.velocity(P_next, G_next)
    else:
        raise ValueError("boundary term at t_{n+1} is required to recover the velocity for theta < 1")
    return DiscreteState(
        P=P_next,
        U=U_next,
        t=state.t + cfg.dt,
        U_theta=U_star,
        t_theta=state.t + a * cfg.dt,
        balance=balance,
    )


@dataclass(frozen=True)
class CompressibilityParams:
    """Slightly compressible fluid; density rho = rho_ref (1 + c_f (p - p_ref))."""

    phi: float = 1.0
    c_f: float = 0.0
    rho_ref: float = 1.0
    p_ref: float = 0.0
    newton_tol: float = 1e-10
    newton_max_iter: int = 20

    def __post_init__(self):
        if not 0.0 < self.phi <= 1.0:
            raise ValueError(f"porosity must lie in (0, 1], got {self.phi}")
        if self.c_f < 0:
            raise ValueError(f"compressibility must be non-negative, got {self.c_f}")
        if self.rho_ref <= 0:
            raise ValueError("reference density must be positive")

    def relative_density(self, p):
        return 1.0 + self.c_f * (p - self.p_ref)


def _edge_density(ops: OperatorSet, params: CompressibilityParams, P, g_edge):
    """Arithmetic average of the relative density of the two sides of each edge.

    On the boundary the outer side takes the Dirichlet pressure.
    """
    dm = ops.dofmap
    rho_c = params.relative_density(P)
    rho_g = params.relative_density(g_edge)
    lo = np.where(dm.vel_minus >= 0, rho_c[np.maximum(dm.vel_minus, 0)], rho_g)
    hi = np.where(dm.vel_plus >= 0, rho_c[np.maximum(dm.vel_plus, 0)], rho_g)
    return 0.5 * (lo + hi)


def newton_slightly_compressible_step(
    state: DiscreteState,
    ops: OperatorSet,
    params: CompressibilityParams,
    cfg: ThetaConfig,
    F: np.ndarray,
    G: np.ndarray,
) -> DiscreteState:
    """Backward Euler step of phi dp/dt + div(rho/rho_ref u) = f with Newton.

    The storage coefficient is scaled out, so with c_f = 0 and phi = 1 this
    is the linear backward Euler step. The Jacobian is analytic.
    """
    if cfg.theta != 1.0:
        raise ValueError("the slightly compressible stepper supports backward Euler (theta = 1) only")
    dm = ops.dofmap
    B = ops.B
    sgn = dm.outward_sign()
    bd = sgn != 0
    # recover Dirichlet values at boundary midpoints from G = -sgn len g
    g_edge = np.zeros(dm.n_vel)
    g_edge[bd] = -G[bd] / (sgn[bd] * dm.vel_len[bd])

    store = params.phi * ops.area / cfg.dt
    # d(rho_e)/d(P_c) = c_f / 2 for each neighbour
    e = np.arange(dm.n_vel)
    m, p = dm.vel_minus >= 0, dm.vel_plus >= 0
    dRho = sp.coo_matrix(
        (
            np.full(m.sum() + p.sum(), 0.5 * params.c_f),
            (np.concatenate([e[m], e[p]]), np.concatenate([dm.vel_minus[m], dm.vel_plus[p]])),
        ),
        shape=(dm.n_vel, dm.n_cells),
    ).tocsr()

    def residual(P):
        U = ops.velocity(P, G)
        rho = _edge_density(ops, params, P, g_edge)
        return store * (P - state.P) + B @ (rho * U) - F, U, rho

    P = state.P.copy()
    R, U, rho = residual(P)
    history = [float(np.max(np.abs(R)))]
    it = 0
    while history[-1] > params.newton_tol:
        if it >= params.newton_max_iter:
            raise SolverError(
                f"Newton did not converge in {params.newton_max_iter} iterations", residual=history[-1], history=history
            )
        J = sp.diags(store) + B @ sp.diags(rho / ops.M) @ B.T + B @ sp.diags(U) @ dRho
        P = P - spla.spsolve(J.tocsc(), R)
        R, U, rho = residual(P)
        history.append(float(np.max(np.abs(R))))
        it += 1
    log.debug("Newton residuals %s", history)
    return DiscreteState(
        P=P,
        U=U,
        t=state.t + cfg.dt,
        U_theta=U,
        t_theta=state.t + cfg.dt,
        balance=history[-1],
        newton_iters=it,
        newton_history=history,
    )


@dataclass
class Trajectory:
    dofmap: DofMap
    ops: OperatorSet
    cfg: ThetaConfig
    states: list[DiscreteState] = field(default_factory=list)
    max_balance: float = 0.0
    max_newton_iters: int = 0

    @property
    def final(self) -> DiscreteState:
        return self.states[-1]


def run_transient(
    dofmap: DofMap,
    K: PermeabilityField,
    problem,
    cfg: ThetaConfig,
    *,
    tol: float = 1e-12,
    method: str = "auto",
    keep: str = "all",
    observer: Callable[[DiscreteState], None] | None = None,
    compressibility: CompressibilityParams | None = None,
) -> Trajectory:
    """March ``problem`` (with ``f(x,y,t)``, ``g(x,y,t)``, ``p0(x,y)``) from 0 to n_steps dt.

    ``keep`` is "all" (every state), "last" (initial and final) or "none"
    (final only); ``observer`` sees every state in order, which is how error
    accumulators run without storing the trajectory.
    """
    if keep not in ("all", "last", "none"):
        raise ValueError(f"keep must be 'all', 'last' or 'none', got {keep!r}")
    ops = build_operators(dofmap, K)
    a = cfg.alpha
    P0 = assemble_initial_pressure(problem.p0, dofmap)
    G_n = assemble_boundary_term(problem.g, 0.0, dofmap)
    F_n = assemble_source(problem.f, 0.0, dofmap)
    state = DiscreteState(P=P0, U=ops.velocity(P0, G_n), t=0.0)

    traj = Trajectory(dofmap, ops, cfg)
    traj.states.append(state)
    if observer is not None:
        observer(state)

    solver = None
    if compressibility is None and cfg.n_steps > 0:
        solver = SPDSolver(ops.schur(ops.area / (a * cfg.dt)), tol=tol, method=method)

    for n in range(cfg.n_steps):
        t_next = (n + 1) * cfg.dt
        F_next = assemble_source(problem.f, t_next, dofmap)
        G_next = assemble_boundary_term(problem.g, t_next, dofmap)
        # theta-averaged data
        F = a * F_next + (1.0 - a) * F_n
        G = a * G_next + (1.0 - a) * G_n
        try:
            if compressibility is None:
                new = theta_step(state, ops, cfg, F, G, G_next, solver)
            else:
                new = newton_slightly_compressible_step(state, ops, compressibility, cfg, F, G)
        except SolverError as exc:
            exc.step = n
            raise SolverError(f"step {n}: {exc}", exc.residual, exc.history, n) from exc
        new.t = t_next
        traj.max_balance = max(traj.max_balance, new.balance)
        traj.max_newton_iters = max(traj.max_newton_iters, new.newton_iters)
        if observer is not None:
            observer(new)
        if keep == "all":
            traj.states.append(new)
        elif keep == "last":
            traj.states[1:] = [new]
        else:
            traj.states[:] = [new]
        state, F_n, G_n = new, F_next, G_next
    return traj
