"""Manufactured solutions, discrete error norms and convergence studies."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import sympy

from .assembly import PermeabilityField, assemble_velocity_mass
from .fespace import DofMap, enumerate_dofs
from .mesh import MultiblockMesh, quadrant_mesh
from .solver import DiscreteState, SolverError, ThetaConfig, Trajectory, run_transient

log = logging.getLogger(__name__)

SX, SY, ST = sympy.symbols("x y t", real=True)
_NAMESPACE = {"x": SX, "y": SY, "t": ST, "pi": sympy.pi, "e": sympy.E}


def _lambdify(expr, args=(SX, SY, ST)):
    fn = sympy.lambdify(args, expr, modules="numpy")
    return lambda *a: np.asarray(fn(*a), dtype=float)


def parse_expression(text: str) -> sympy.Expr:
    """Parse a closed-form expression in x, y, t."""
    expr = sympy.sympify(text, locals=_NAMESPACE)
    extra = expr.free_symbols - {SX, SY, ST}
    if extra:
        raise ValueError(f"expression {text!r} uses unknown symbols {sorted(map(str, extra))}")
    return expr


@dataclass
class ManufacturedCase:
    """Problem data, derived from a closed-form pressure when one is known.

    ``p``, ``grad_p`` and ``velocity`` are None for problems given only by
    their data (forcing, boundary and initial values).
    """

    name: str
    f: Callable
    g: Callable
    p0: Callable
    T: float
    kxx: float = 1.0
    kyy: float = 1.0
    p: Callable | None = None
    grad_p: Callable | None = None
    dp_dt: Callable | None = None
    laplacian_p: Callable | None = None
    expression: str | None = None

    @property
    def has_exact(self) -> bool:
        return self.p is not None

    def velocity(self, x, y, t):
        """Darcy velocity -K grad p."""
        px, py = self.grad_p(x, y, t)
        return -self.kxx * px, -self.kyy * py

    def permeability(self, dofmap: DofMap) -> PermeabilityField:
        return PermeabilityField.constant(dofmap, self.kxx, self.kyy)

    def scaled(self, factor: float) -> "ManufacturedCase":
        """Same case with the pressure multiplied by ``factor``."""
        return case_from_pressure(f"{self.name}*{factor}", f"({self.expression})*({factor!r})", self.T, self.kxx, self.kyy)


def case_from_pressure(name: str, pressure, T: float, kxx: float = 1.0, kyy: float = 1.0) -> ManufacturedCase:
    """Derive f = dp/dt - div(K grad p), g = p on the boundary and p0 = p(., 0)."""
    p = parse_expression(pressure) if isinstance(pressure, str) else sympy.sympify(pressure)
    px, py = sympy.diff(p, SX), sympy.diff(p, SY)
    pt = sympy.diff(p, ST)
    lap = sympy.diff(p, SX, 2) + sympy.diff(p, SY, 2)
    f = sympy.simplify(pt - kxx * sympy.diff(p, SX, 2) - kyy * sympy.diff(p, SY, 2))
    p_fn = _lambdify(p)
    px_fn, py_fn = _lambdify(px), _lambdify(py)
    p0_fn = _lambdify(p.subs(ST, 0), (SX, SY))
    return ManufacturedCase(
        name=name,
        f=_lambdify(f),
        g=p_fn,
        p0=p0_fn,
        T=float(T),
        kxx=float(kxx),
        kyy=float(kyy),
        p=p_fn,
        grad_p=lambda x, y, t: (px_fn(x, y, t), py_fn(x, y, t)),
        dp_dt=_lambdify(pt),
        laplacian_p=_lambdify(lap),
        expression=str(p),
    )


def case_from_data(name: str, forcing: str, boundary: str, initial: str, T: float, kxx=1.0, kyy=1.0) -> ManufacturedCase:
    """Problem without a known exact solution."""
    p0 = parse_expression(initial)
    if ST in p0.free_symbols:
        raise ValueError(f"initial datum must not depend on t: {initial!r}")
    return ManufacturedCase(
        name=name,
        f=_lambdify(parse_expression(forcing)),
        g=_lambdify(parse_expression(boundary)),
        p0=_lambdify(p0, (SX, SY)),
        T=float(T),
        kxx=float(kxx),
        kyy=float(kyy),
    )


_CASES = {
    "example1": ("t*x*(1 - x)*y*(1 - y)", 0.1),
    "example2": ("exp(t)*sin(2*pi*x)*sin(2*pi*y)", 2.0),
    # smooth in time, used for temporal order checks
    "cosine": ("cos(t)*sin(pi*x)*sin(pi*y)", 1.0),
}


def manufactured_case(name: str, T: float | None = None) -> ManufacturedCase:
    try:
        expr, T_default = _CASES[name]
    except KeyError:
        raise ValueError(f"unknown manufactured case {name!r}; known: {sorted(_CASES)}") from None
    return case_from_pressure(name, expr, T_default if T is None else T)


# Error norms -----------------------------------------------------------------


class ErrorAccumulator:
    """Streaming l-infinity(L2) pressure and l2(L2) velocity errors.

    Pressure is sampled at cell centers at the time nodes; velocity normal
    components at edge midpoints at the theta-points, weighted by the lumped
    mass of each edge. Feed it every state of a run in order.
    """

    def __init__(self, case: ManufacturedCase, dofmap: DofMap, dt: float):
        if not case.has_exact:
            raise ValueError(f"case {case.name!r} has no exact solution")
        self.case = case
        self.dofmap = dofmap
        self.dt = dt
        self.area = dofmap.cell_area
        self.weight = assemble_velocity_mass(dofmap, PermeabilityField.constant(dofmap, 1.0))
        self._xc, self._yc = dofmap.cell_center[:, 0], dofmap.cell_center[:, 1]
        self._xe, self._ye = dofmap.vel_mid[:, 0], dofmap.vel_mid[:, 1]
        self._ax = dofmap.vel_axis
        self.error_p = 0.0
        self._num = 0.0
        self._den = 0.0
        self._ratio_sq = 0.0
        self.n_nodes = 0
        self.n_theta = 0

    def exact_normal_velocity(self, t: float) -> np.ndarray:
        ux, uy = self.case.velocity(self._xe, self._ye, t)
        ux = np.broadcast_to(ux, self._xe.shape)
        uy = np.broadcast_to(uy, self._xe.shape)
        return np.where(self._ax == 0, ux, uy)

    def exact_pressure(self, t: float) -> np.ndarray:
        return np.broadcast_to(self.case.p(self._xc, self._yc, t), self._xc.shape)

    def pressure_norm(self, t: float, P: np.ndarray) -> float:
        e = self.exact_pressure(t) - P
        return math.sqrt(float(np.sum(self.area * e * e)))

    def __call__(self, state: DiscreteState):
        self.error_p = max(self.error_p, self.pressure_norm(state.t, state.P))
        self.n_nodes += 1
        if state.U_theta is not None:
            u = self.exact_normal_velocity(state.t_theta)
            num = float(np.sum(self.weight * (u - state.U_theta) ** 2))
            den = float(np.sum(self.weight * u * u))
            self._num += self.dt * num
            self._den += self.dt * den
            if den > 0:
                self._ratio_sq += self.dt * num / den
            self.n_theta += 1

    @property
    def velocity_is_absolute(self) -> bool:
        return self._den == 0.0

    @property
    def error_u(self) -> float:
        """Global-in-time normalization: l2 error over l2 norm of the exact velocity."""
        if self._den == 0.0:
            return math.sqrt(self._num)
        return math.sqrt(self._num / self._den)

    @property
    def error_u_per_step(self) -> float:
        """Per-step normalization: l2 in time of the spatial relative errors."""
        return math.sqrt(self._ratio_sq)


def _accumulate(trajectory: Trajectory, case: ManufacturedCase) -> ErrorAccumulator:
    acc = ErrorAccumulator(case, trajectory.dofmap, trajectory.cfg.dt)
    for s in trajectory.states:
        acc(s)
    return acc


def pressure_error_linf_l2(trajectory: Trajectory, case: ManufacturedCase) -> float:
    return _accumulate(trajectory, case).error_p


def velocity_error_l2_l2_normalized(trajectory: Trajectory, case: ManufacturedCase, normalization: str = "global") -> float:
    acc = _accumulate(trajectory, case)
    if normalization == "global":
        return acc.error_u
    if normalization == "per_step":
        return acc.error_u_per_step
    raise ValueError(f"unknown normalization {normalization!r}")


# Convergence studies ---------------------------------------------------------


@dataclass(frozen=True)
class Level:
    h: float
    H: float
    dt: float


@dataclass
class LevelResult:
    level: Level
    error_p: float = math.nan
    error_u: float = math.nan
    error_u_per_step: float = math.nan
    velocity_absolute: bool = False
    max_balance: float = math.nan
    n_cells: int = 0
    status: str = "ok"


@dataclass
class ErrorReport:
    case: str
    theta: float
    tol: float
    results: list[LevelResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.status == "ok" for r in self.results)

    def errors(self, which: str = "p") -> np.ndarray:
        return np.array([getattr(r, f"error_{which}") for r in self.results])

    def rates(self, which: str = "p") -> list[float | None]:
        """Rates between consecutive levels; None for the first level."""
        out: list[float | None] = [None]
        for a, b in zip(self.results[:-1], self.results[1:]):
            out.append(observed_rate(a.level.h, b.level.h, getattr(a, f"error_{which}"), getattr(b, f"error_{which}")))
        return out[: len(self.results)]

    def slope(self, which: str = "p") -> float | None:
        """Least-squares slope of log(error) against log(h) over all levels."""
        h = np.array([r.level.h for r in self.results])
        e = self.errors(which)
        if len(h) < 2 or np.any(~(e > 0)) or np.unique(h).size < 2:
            return None
        return float(np.polyfit(np.log(h), np.log(e), 1)[0])


def observed_rate(h1: float, h2: float, e1: float, e2: float) -> float | None:
    if h1 == h2 or not (e1 > 0 and e2 > 0) or not all(map(math.isfinite, (e1, e2))):
        return None
    return math.log(e1 / e2) / math.log(h1 / h2)


def run_level(
    case: ManufacturedCase,
    level: Level,
    theta: float,
    *,
    mesh_builder: Callable[[float, float], MultiblockMesh] = quadrant_mesh,
    tol: float = 1e-12,
    method: str = "auto",
) -> LevelResult:
    res = LevelResult(level)
    try:
        mesh = mesh_builder(level.h, level.H)
        dofmap = enumerate_dofs(mesh)
        cfg = ThetaConfig.from_final_time(theta, case.T, level.dt)
        acc = ErrorAccumulator(case, dofmap, cfg.dt)
        traj = run_transient(dofmap, case.permeability(dofmap), case, cfg, tol=tol, method=method, keep="none", observer=acc)
    except (SolverError, ValueError, np.linalg.LinAlgError) as exc:
        log.error("level h=%g H=%g dt=%g failed: %s", level.h, level.H, level.dt, exc)
        res.status = f"error: {exc}".replace(",", ";").replace("\n", " ")
        return res
    res.error_p = acc.error_p
    res.error_u = acc.error_u
    res.error_u_per_step = acc.error_u_per_step
    res.velocity_absolute = acc.velocity_is_absolute
    res.max_balance = traj.max_balance
    res.n_cells = dofmap.n_cells
    return res


def run_convergence_study(
    case: ManufacturedCase,
    levels: Sequence[Level],
    theta: float,
    *,
    mesh_builder: Callable[[float, float], MultiblockMesh] = quadrant_mesh,
    tol: float = 1e-12,
    method: str = "auto",
    threads: int = 1,
) -> ErrorReport:
    """Run every level independently; failures are recorded, not raised."""
    if not levels:
        raise ValueError("convergence study needs at least one level")
    report = ErrorReport(case.name, theta, tol)

    def one(level):
        return run_level(case, level, theta, mesh_builder=mesh_builder, tol=tol, method=method)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            report.results = list(pool.map(one, levels))
    else:
        report.results = [one(lv) for lv in levels]
    return report


TABLE1_LEVELS = [
    Level(1 / 52, 1 / 26, 1 / 50),
    Level(1 / 100, 1 / 50, 1 / 100),
    Level(1 / 120, 1 / 60, 1 / 120),
    Level(1 / 152, 1 / 76, 1 / 150),
]
TABLE2_LEVELS = [
    Level(1 / 100, 1 / 50, 1 / 7),
    Level(1 / 128, 1 / 64, 1 / 8),
    Level(1 / 164, 1 / 82, 1 / 9),
    Level(1 / 200, 1 / 100, 1 / 10),
]


@dataclass
class TemporalStudy:
    dts: list[float]
    errors: list[float]

    @property
    def rates(self) -> list[float | None]:
        return [observed_rate(a, b, ea, eb) for a, b, ea, eb in zip(self.dts, self.dts[1:], self.errors, self.errors[1:])]


def temporal_order_study(
    case: ManufacturedCase,
    mesh: MultiblockMesh,
    theta: float,
    dts: Sequence[float],
    *,
    ref_factor: int = 64,
    tol: float = 1e-12,
) -> TemporalStudy:
    """Time-discretization error on a fixed grid against a fine-step reference.

    The reference run uses step min(dts) / ref_factor on the same mesh, so the
    spatial error cancels and only the time error remains. Errors are the
    l-infinity over common time nodes of the discrete L2 pressure difference.
    """
    dofmap = enumerate_dofs(mesh)
    K = case.permeability(dofmap)
    area = dofmap.cell_area
    dt_ref = min(dts) / ref_factor
    strides = []
    for dt in dts:
        stride = int(round(dt / dt_ref))
        if abs(stride * dt_ref - dt) > 1e-9 * dt:
            raise ValueError(f"dt={dt:.6g} is not a multiple of the reference step {dt_ref:.6g}")
        strides.append(stride)
    keep_every = math.gcd(*strides)
    ref_P = {}

    def store(state):
        n = int(round(state.t / dt_ref))
        if n % keep_every == 0:
            ref_P[n] = state.P.copy()

    run_transient(dofmap, K, case, ThetaConfig.from_final_time(theta, case.T, dt_ref), tol=tol, keep="none", observer=store)
    errors = []
    for dt, stride in zip(dts, strides):
        diffs = []

        def compare(state):
            d = state.P - ref_P[int(round(state.t / dt_ref))]
            diffs.append(math.sqrt(float(np.sum(area * d * d))))

        run_transient(dofmap, K, case, ThetaConfig.from_final_time(theta, case.T, dt), tol=tol, keep="none", observer=compare)
        errors.append(max(diffs))
    return TemporalStudy(list(dts), errors)
