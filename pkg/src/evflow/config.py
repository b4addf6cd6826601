"""Line-oriented run configuration.

Format::

    # comment
    [case]
    name = example1
    [time]
    theta = 1
    dt = 1/50
    [level]
    h = 1/52
    H = 1/26
    dt = 1/50

Sections are ``[case]``, ``[time]``, ``[mesh]``, ``[solver]``, ``[output]``
and any number of ``[level]`` sections. Numbers may be written as fractions.
``block`` may repeat inside ``[mesh]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

from .mesh import MeshError, build_multiblock, build_subdomain_grid, quadrant_mesh, two_block_mesh
from .mms import Level, ManufacturedCase, case_from_data, case_from_pressure, manufactured_case


class ConfigError(ValueError):
    def __init__(self, message, line=None, path=None):
        self.message, self.line, self.path = message, line, path
        loc = [str(p) for p in (path, line) if p is not None]
        super().__init__(":".join(loc) + ": " + message if loc else message)


_KEYS = {
    "case": {"name", "pressure", "forcing", "boundary", "initial", "kxx", "kyy"},
    "time": {"theta", "T", "dt"},
    "mesh": {"layout", "h", "H", "block"},
    "solver": {"tol", "method", "velocity_normalization"},
    "output": {"dir", "csv", "dump", "dump_times", "summary"},
    "level": {"h", "H", "dt"},
}
_REPEATABLE = {("mesh", "block")}
LAYOUTS = ("quadrant", "two-block", "blocks")


@dataclass
class RunConfig:
    case_name: str = "example1"
    pressure: str | None = None
    forcing: str | None = None
    boundary: str | None = None
    initial: str | None = None
    kxx: float = 1.0
    kyy: float = 1.0
    theta: float = 1.0
    T: float | None = None
    dt: float | None = None
    layout: str = "quadrant"
    h: float | None = None
    H: float | None = None
    blocks: list[tuple] = field(default_factory=list)
    levels: list[Level] = field(default_factory=list)
    tol: float = 1e-12
    method: str = "auto"
    velocity_normalization: str = "global"
    output_dir: str = "."
    csv: str = "convergence.csv"
    summary: str = "summary.txt"
    dump: bool = False
    dump_times: list[float] = field(default_factory=list)

    def build_case(self) -> ManufacturedCase:
        if self.case_name == "custom":
            if self.pressure is not None:
                return case_from_pressure("custom", self.pressure, self.T, self.kxx, self.kyy)
            return case_from_data("custom", self.forcing, self.boundary, self.initial, self.T, self.kxx, self.kyy)
        case = manufactured_case(self.case_name, self.T)
        if (self.kxx, self.kyy) != (1.0, 1.0):
            case = case_from_pressure(case.name, case.expression, case.T, self.kxx, self.kyy)
        return case

    def mesh_builder(self):
        if self.layout == "quadrant":
            return quadrant_mesh
        if self.layout == "two-block":
            return two_block_mesh
        return lambda h, H: self.explicit_mesh()

    def explicit_mesh(self):
        return build_multiblock(
            [build_subdomain_grid(x0, x1, y0, y1, nx, ny, id=k + 1) for k, (x0, x1, y0, y1, nx, ny) in enumerate(self.blocks)]
        )

    def build_mesh(self):
        if self.layout == "blocks":
            return self.explicit_mesh()
        return self.mesh_builder()(self.h, self.H)


def _number(text: str, key: str, line: int) -> float:
    try:
        return float(Fraction(text.strip()))
    except (ValueError, ZeroDivisionError):
        try:
            return float(text)
        except ValueError:
            raise ConfigError(f"{key}: expected a number, got {text!r}", line) from None


def _bool(text: str, key: str, line: int) -> bool:
    v = text.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"{key}: expected a boolean, got {text!r}", line)


def parse_lines(lines, path=None):
    """Split into (section, key, value, line) records, rejecting unknown keys."""
    records = []
    section = None
    level_index = -1
    seen: dict[tuple, int] = {}
    for lineno, raw in enumerate(lines, start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        if text.startswith("[") and text.endswith("]"):
            section = text[1:-1].strip()
            if section not in _KEYS:
                raise ConfigError(f"unknown section [{section}]", lineno, path)
            if section == "level":
                level_index += 1
            continue
        if "=" not in text:
            raise ConfigError(f"expected 'key = value', got {text!r}", lineno, path)
        if section is None:
            raise ConfigError("key outside of any section", lineno, path)
        key, value = (s.strip() for s in text.split("=", 1))
        if key not in _KEYS[section]:
            raise ConfigError(f"unknown key {key!r} in [{section}]", lineno, path)
        tag = (section, level_index if section == "level" else None, key)
        if tag in seen and (section, key) not in _REPEATABLE:
            raise ConfigError(f"duplicate key {key!r} in [{section}] (first on line {seen[tag]})", lineno, path)
        seen[tag] = lineno
        records.append((section, level_index, key, value, lineno))
    return records


def parse_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config_text(text, path)


def parse_config_text(text: str, path=None) -> RunConfig:
    cfg = RunConfig()
    levels: dict[int, dict] = {}
    for section, li, key, value, line in parse_lines(text.splitlines(), path):
        try:
            if section == "case":
                if key in ("kxx", "kyy"):
                    setattr(cfg, key, _number(value, key, line))
                else:
                    setattr(cfg, "case_name" if key == "name" else key, value)
            elif section == "time":
                setattr(cfg, key, _number(value, key, line))
                if key == "theta" and not 0.0 <= cfg.theta <= 1.0:
                    raise ConfigError(f"theta must lie in [0, 1], got {value}", line)
            elif section == "mesh":
                if key == "layout":
                    if value not in LAYOUTS:
                        raise ConfigError(f"layout must be one of {LAYOUTS}, got {value!r}", line)
                    cfg.layout = value
                elif key == "block":
                    parts = value.split()
                    if len(parts) != 6:
                        raise ConfigError("block needs 'x0 x1 y0 y1 nx ny'", line)
                    nums = [_number(p, key, line) for p in parts]
                    if nums[4] != int(nums[4]) or nums[5] != int(nums[5]):
                        raise ConfigError("block cell counts must be integers", line)
                    cfg.blocks.append((*nums[:4], int(nums[4]), int(nums[5])))
                else:
                    setattr(cfg, key, _number(value, key, line))
            elif section == "solver":
                if key == "tol":
                    cfg.tol = _number(value, key, line)
                    if not cfg.tol > 0:
                        raise ConfigError("tol must be positive", line)
                elif key == "method":
                    if value not in ("auto", "direct", "cg"):
                        raise ConfigError(f"method must be auto, direct or cg, got {value!r}", line)
                    cfg.method = value
                else:
                    if value not in ("global", "per_step"):
                        raise ConfigError(f"velocity_normalization must be global or per_step, got {value!r}", line)
                    cfg.velocity_normalization = value
            elif section == "output":
                if key == "dir":
                    cfg.output_dir = value
                elif key in ("csv", "summary"):
                    setattr(cfg, key, value)
                elif key == "dump":
                    cfg.dump = _bool(value, key, line)
                else:
                    cfg.dump_times = [_number(v, key, line) for v in value.replace(",", " ").split()]
            elif section == "level":
                levels.setdefault(li, {"line": line})[key] = _number(value, key, line)
        except ConfigError as exc:
            if exc.path is None and path is not None:
                raise ConfigError(exc.message, exc.line or line, path) from None
            raise
    for li in sorted(levels):
        d = levels[li]
        missing = {"h", "H", "dt"} - set(d)
        if missing:
            raise ConfigError(f"[level] {li + 1} is missing {sorted(missing)}", d["line"], path)
        cfg.levels.append(Level(d["h"], d["H"], d["dt"]))
    validate(cfg, path)
    return cfg


def _check_steps(T: float, dt: float, what: str, path):
    if not dt > 0:
        raise ConfigError(f"{what}: dt must be positive", path=path)
    n = round(T / dt)
    if n < 1 or abs(n * dt - T) > 1e-9 * T:
        raise ConfigError(f"{what}: dt={dt:.6g} does not divide T={T:.6g}", path=path)


def validate(cfg: RunConfig, path=None):
    """Check everything that can be checked before computing."""
    if not 0.0 <= cfg.theta <= 1.0:
        raise ConfigError(f"theta must lie in [0, 1], got {cfg.theta}", path=path)
    if cfg.case_name == "custom":
        if cfg.pressure is None and None in (cfg.forcing, cfg.boundary, cfg.initial):
            raise ConfigError("custom case needs 'pressure' or all of 'forcing', 'boundary', 'initial'", path=path)
        if cfg.T is None:
            raise ConfigError("custom case needs T in [time]", path=path)
    try:
        case = cfg.build_case()
    except (ValueError, TypeError, SyntaxError) as exc:
        raise ConfigError(f"invalid case: {exc}", path=path) from None
    T = case.T
    if cfg.T is None:
        cfg.T = T
    if cfg.dt is not None:
        _check_steps(T, cfg.dt, "[time]", path)
    for k, lv in enumerate(cfg.levels, start=1):
        _check_steps(T, lv.dt, f"[level] {k}", path)
    if cfg.layout == "blocks":
        if not cfg.blocks:
            raise ConfigError("layout 'blocks' needs at least one 'block' entry", path=path)
        try:
            cfg.explicit_mesh()
        except MeshError as exc:
            raise ConfigError(f"invalid mesh: {exc}", path=path) from None
    for t in cfg.dump_times:
        if not 0 <= t <= T * (1 + 1e-12):
            raise ConfigError(f"dump time {t:.6g} outside [0, {T:.6g}]", path=path)
    return cfg
