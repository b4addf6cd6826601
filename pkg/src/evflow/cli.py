"""Command line entry point: ``evflow run <config>`` and ``evflow convergence <config>``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig, parse_config
from .fespace import enumerate_dofs
from .mesh import MeshError
from .mms import ErrorAccumulator, ErrorReport, run_convergence_study
from .solver import SolverError, ThetaConfig, run_transient
from .vtk import dump_pressure

log = logging.getLogger("evflow")

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 2, 3, 4

CSV_HEADER = "level,h,H,dt,theta,error_p,error_u,rate_p,rate_u,status,case,solver_tol"


def _fmt(x) -> str:
    if x is None or x != x:
        return ""
    return f"{x:.5e}"


def format_convergence_csv(report: ErrorReport, normalization: str = "global") -> str:
    rows = [CSV_HEADER]
    attr = "error_u" if normalization == "global" else "error_u_per_step"
    rate_u = report.rates("u") if normalization == "global" else report.rates("u_per_step")
    for k, (res, rp, ru) in enumerate(zip(report.results, report.rates("p"), rate_u), start=1):
        lv = res.level
        status = res.status
        if res.status == "ok" and res.velocity_absolute:
            status = "ok (velocity error absolute)"
        rows.append(
            ",".join(
                [
                    str(k),
                    _fmt(lv.h),
                    _fmt(lv.H),
                    _fmt(lv.dt),
                    _fmt(report.theta),
                    _fmt(res.error_p),
                    _fmt(getattr(res, attr)),
                    _fmt(rp),
                    _fmt(ru),
                    status,
                    report.case,
                    _fmt(report.tol),
                ]
            )
        )
    return "\n".join(rows) + "\n"


def _output_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create output directory {out}: {exc.strerror}") from None
    return out


def cmd_convergence(cfg: RunConfig, threads: int = 1) -> int:
    if not cfg.levels:
        raise ConfigError("convergence study needs at least one [level] section")
    case = cfg.build_case()
    if not case.has_exact:
        raise ConfigError("convergence study needs a case with a known exact solution")
    if cfg.layout == "blocks":
        raise ConfigError("convergence study needs layout 'quadrant' or 'two-block'")
    out = _output_dir(cfg)
    report = run_convergence_study(
        case, cfg.levels, cfg.theta, mesh_builder=cfg.mesh_builder(), tol=cfg.tol, method=cfg.method, threads=threads
    )
    text = format_convergence_csv(report, cfg.velocity_normalization)
    path = out / cfg.csv
    path.write_text(text)
    sys.stdout.write(text)
    log.info("wrote %s", path)
    return EXIT_OK if report.ok else EXIT_SOLVER


def _dump_steps(cfg: RunConfig, tc: ThetaConfig) -> set[int]:
    if not cfg.dump:
        return set()
    if not cfg.dump_times:
        return {tc.n_steps}
    steps = set()
    for t in cfg.dump_times:
        n = int(round(t / tc.dt))
        if abs(n * tc.dt - t) > 1e-9 * max(tc.T, tc.dt):
            raise ConfigError(f"dump time {t:.6g} is not a multiple of dt={tc.dt:.6g}")
        steps.add(n)
    return steps


def cmd_run(cfg: RunConfig) -> int:
    if cfg.dt is None:
        raise ConfigError("single run needs dt in [time]")
    if cfg.layout != "blocks" and (cfg.h is None or cfg.H is None):
        raise ConfigError("single run needs h and H in [mesh]")
    case = cfg.build_case()
    try:
        mesh = cfg.build_mesh()
    except MeshError as exc:
        raise ConfigError(f"invalid mesh: {exc}") from None
    dofmap = enumerate_dofs(mesh)
    tc = ThetaConfig.from_final_time(cfg.theta, cfg.T, cfg.dt)
    dump_steps = _dump_steps(cfg, tc)
    out = _output_dir(cfg)

    acc = ErrorAccumulator(case, dofmap, tc.dt) if case.has_exact else None
    step = [0]
    written = []

    def observe(state):
        if acc is not None:
            acc(state)
        if step[0] in dump_steps:
            written.extend(dump_pressure(out, dofmap, state.P, step[0], state.t))
        step[0] += 1

    traj = run_transient(
        dofmap, case.permeability(dofmap), case, tc, tol=cfg.tol, method=cfg.method, keep="none", observer=observe
    )
    fields = [
        f"case={case.name}",
        f"theta={_fmt(cfg.theta)}",
        f"dt={_fmt(tc.dt)}",
        f"n_steps={tc.n_steps}",
        f"cells={dofmap.n_cells}",
        f"velocity_dofs={dofmap.n_vel}",
        f"max_balance={_fmt(traj.max_balance)}",
    ]
    if acc is not None:
        err_u = acc.error_u if cfg.velocity_normalization == "global" else acc.error_u_per_step
        fields += [f"error_p={_fmt(acc.error_p)}", f"error_u={_fmt(err_u)}"]
    line = " ".join(fields)
    (out / cfg.summary).write_text(line + "\n")
    print(line)
    log.info("wrote %d VTK files", len(written))
    return EXIT_OK


def _common_options(suppress: bool) -> argparse.ArgumentParser:
    # options are accepted before or after the subcommand
    common = argparse.ArgumentParser(add_help=False)
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    common.add_argument("--threads", type=int, default=default(None), help="levels run concurrently (convergence)")
    common.add_argument("--output-dir", default=default(None), help="override [output] dir")
    common.add_argument("-v", "--verbose", action="store_true", default=default(False))
    return common


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evflow", description=__doc__, parents=[_common_options(False)])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", parents=[_common_options(True)], help="single transient run")
    p_run.add_argument("config")
    p_conv = sub.add_parser("convergence", parents=[_common_options(True)], help="multi-level error study, writes CSV")
    p_conv.add_argument("config")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = parse_config(args.config)
        if args.output_dir is not None:
            cfg.output_dir = args.output_dir
        threads = 1 if args.threads is None else args.threads
        if threads < 1:
            raise ConfigError("--threads must be at least 1")
        if args.command == "run":
            return cmd_run(cfg)
        return cmd_convergence(cfg, threads)
    except ConfigError as exc:
        print(f"evflow: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SolverError as exc:
        print(f"evflow: solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"evflow: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
