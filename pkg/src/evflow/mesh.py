"""Multiblock rectangular meshes with non-matching interfaces.

A multiblock mesh is a set of axis-aligned rectangles (subdomains), each
carrying its own uniform tensor grid. Where two subdomains share a face the
two grid traces generally do not match; the interface is then split at the
union of both traces' breakpoints, giving the interface grid on which the
enhanced velocity degrees of freedom live.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

VERTICAL = "vertical"
HORIZONTAL = "horizontal"

# Relative tolerance for merging coordinates; scaled by the domain diameter.
GEOMETRIC_EPS = 1e-12

FACES = ("west", "east", "south", "north")


class MeshError(ValueError):
    """Raised when a set of subdomains does not form a valid multiblock mesh."""


@dataclass(frozen=True)
class SubdomainGrid:
    id: int
    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int

    def __post_init__(self):
        if not (self.x1 > self.x0 and self.y1 > self.y0):
            raise MeshError(
                f"subdomain {self.id}: non-positive extent "
                f"[{self.x0}, {self.x1}] x [{self.y0}, {self.y1}]"
            )
        if int(self.nx) != self.nx or int(self.ny) != self.ny or self.nx < 1 or self.ny < 1:
            raise MeshError(f"subdomain {self.id}: cell counts must be positive integers, got {self.nx}x{self.ny}")

    @property
    def hx(self) -> float:
        return (self.x1 - self.x0) / self.nx

    @property
    def hy(self) -> float:
        return (self.y1 - self.y0) / self.ny

    @property
    def n_cells(self) -> int:
        return self.nx * self.ny

    @property
    def area(self) -> float:
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    def x_breaks(self) -> np.ndarray:
        xb = self.x0 + self.hx * np.arange(self.nx + 1)
        xb[-1] = self.x1
        return xb

    def y_breaks(self) -> np.ndarray:
        yb = self.y0 + self.hy * np.arange(self.ny + 1)
        yb[-1] = self.y1
        return yb

    def cell_index(self, i: int, j: int) -> int:
        """Local flat index of cell (i, j); rows of constant j are contiguous."""
        return j * self.nx + i

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-center coordinates, flattened in local cell order."""
        xc = self.x0 + (np.arange(self.nx) + 0.5) * self.hx
        yc = self.y0 + (np.arange(self.ny) + 0.5) * self.hy
        X, Y = np.meshgrid(xc, yc)
        return X.ravel(), Y.ravel()


def build_subdomain_grid(x0, x1, y0, y1, nx, ny, id=0) -> SubdomainGrid:
    return SubdomainGrid(id=id, x0=float(x0), x1=float(x1), y0=float(y0), y1=float(y1), nx=int(nx), ny=int(ny))


@dataclass(frozen=True)
class InterfaceDescriptor:
    """Shared face between two subdomains.

    ``left_id`` is the subdomain on the low-coordinate side, so the outward
    normal of ``left`` points toward ``right`` (+x for vertical interfaces,
    +y for horizontal ones). ``span`` is the shared interval along the line.
    """

    left_id: int
    right_id: int
    axis: str
    position: float
    span: tuple[float, float]

    @property
    def length(self) -> float:
        return self.span[1] - self.span[0]


@dataclass(frozen=True)
class InterfaceSubEdge:
    interface_id: int
    s0: float
    s1: float
    left_cell: int
    right_cell: int

    @property
    def length(self) -> float:
        return self.s1 - self.s0

    @property
    def mid(self) -> float:
        return 0.5 * (self.s0 + self.s1)


@dataclass
class Diagnostics:
    ok: bool = True
    issues: list[str] = field(default_factory=list)

    def fail(self, message: str):
        self.ok = False
        self.issues.append(message)

    def __bool__(self):
        return self.ok


@dataclass(frozen=True)
class MultiblockMesh:
    grids: tuple[SubdomainGrid, ...]
    interfaces: tuple[InterfaceDescriptor, ...]
    subedges: tuple[InterfaceSubEdge, ...]
    # Faces of each subdomain lying on the global boundary, keyed by grid id.
    boundary_faces: dict[int, tuple[str, ...]]
    bbox: tuple[float, float, float, float]
    eps: float

    def grid(self, gid: int) -> SubdomainGrid:
        for g in self.grids:
            if g.id == gid:
                return g
        raise KeyError(gid)

    @property
    def n_cells(self) -> int:
        return sum(g.n_cells for g in self.grids)

    def subedges_of(self, interface_id: int) -> list[InterfaceSubEdge]:
        return [s for s in self.subedges if s.interface_id == interface_id]


def _bbox(grids: Sequence[SubdomainGrid]) -> tuple[float, float, float, float]:
    return (
        min(g.x0 for g in grids),
        max(g.x1 for g in grids),
        min(g.y0 for g in grids),
        max(g.y1 for g in grids),
    )


def _eps_for(grids: Sequence[SubdomainGrid]) -> float:
    x0, x1, y0, y1 = _bbox(grids)
    return GEOMETRIC_EPS * float(np.hypot(x1 - x0, y1 - y0))


def merge_breakpoints(points: Iterable[float], eps: float) -> np.ndarray:
    """Sorted union of ``points`` with values closer than ``eps`` merged."""
    pts = np.sort(np.asarray(list(points), dtype=float))
    if pts.size == 0:
        return pts
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > eps:
            keep.append(p)
    return np.array(keep)


def _coverage(grids: Sequence[SubdomainGrid], eps: float):
    """Cover the bounding box by elementary rectangles and count owners.

    Returns (gaps, overlaps): gaps as rectangles, overlaps as
    (rectangle, ids) pairs.
    """
    x0, x1, y0, y1 = _bbox(grids)
    xs = merge_breakpoints([v for g in grids for v in (g.x0, g.x1)], eps)
    ys = merge_breakpoints([v for g in grids for v in (g.y0, g.y1)], eps)
    gaps, overlaps = [], []
    for a, b in zip(xs[:-1], xs[1:]):
        for c, d in zip(ys[:-1], ys[1:]):
            mx, my = 0.5 * (a + b), 0.5 * (c + d)
            owners = [g.id for g in grids if g.x0 < mx < g.x1 and g.y0 < my < g.y1]
            if not owners:
                gaps.append((a, b, c, d))
            elif len(owners) > 1:
                overlaps.append(((a, b, c, d), owners))
    return gaps, overlaps


def _check_tiling(grids: Sequence[SubdomainGrid], eps: float):
    ids = [g.id for g in grids]
    if len(set(ids)) != len(ids):
        raise MeshError(f"duplicate subdomain ids: {ids}")
    gaps, overlaps = _coverage(grids, eps)
    if overlaps:
        rect, owners = overlaps[0]
        raise MeshError(f"subdomains {owners[0]} and {owners[1]} overlap on {_fmt_rect(rect)}")
    if gaps:
        raise MeshError(f"gap in subdomain tiling at {_fmt_rect(gaps[0])}")


def _fmt_rect(r) -> str:
    return f"[{r[0]:.6g}, {r[1]:.6g}] x [{r[2]:.6g}, {r[3]:.6g}]"


def detect_interfaces(grids: Sequence[SubdomainGrid], eps: float | None = None) -> list[InterfaceDescriptor]:
    """Find every shared face between pairs of subdomains.

    The grids must tile a rectangle; overlaps and gaps raise ``MeshError``.
    Faces shared by more than two subdomains (T-junctions) come out as one
    descriptor per pair, split at the subdomain corners.
    """
    grids = list(grids)
    if not grids:
        raise MeshError("no subdomains given")
    eps = _eps_for(grids) if eps is None else eps
    _check_tiling(grids, eps)

    found = []
    for a in grids:
        for b in grids:
            if a.id == b.id:
                continue
            # a on the low side of b
            if abs(a.x1 - b.x0) <= eps:
                lo, hi = max(a.y0, b.y0), min(a.y1, b.y1)
                if hi - lo > eps:
                    found.append(InterfaceDescriptor(a.id, b.id, VERTICAL, 0.5 * (a.x1 + b.x0), (lo, hi)))
            if abs(a.y1 - b.y0) <= eps:
                lo, hi = max(a.x0, b.x0), min(a.x1, b.x1)
                if hi - lo > eps:
                    found.append(InterfaceDescriptor(a.id, b.id, HORIZONTAL, 0.5 * (a.y1 + b.y0), (lo, hi)))
    found.sort(key=lambda d: (d.axis != VERTICAL, d.position, d.span[0], d.left_id))
    return found


def _trace(grid: SubdomainGrid, axis: str) -> np.ndarray:
    return grid.y_breaks() if axis == VERTICAL else grid.x_breaks()


def build_interface_subedges(
    desc: InterfaceDescriptor,
    left: SubdomainGrid,
    right: SubdomainGrid,
    interface_id: int = 0,
    eps: float | None = None,
) -> list[InterfaceSubEdge]:
    """Split an interface at the union of both grids' trace breakpoints."""
    if eps is None:
        eps = _eps_for([left, right])
    a, b = desc.span
    pts = [a, b]
    for g in (left, right):
        tr = _trace(g, desc.axis)
        pts.extend(tr[(tr > a + eps) & (tr < b - eps)])
    breaks = merge_breakpoints(pts, eps)
    # endpoints of the span are authoritative
    breaks[0], breaks[-1] = a, b

    out = []
    for s0, s1 in zip(breaks[:-1], breaks[1:]):
        mid = 0.5 * (s0 + s1)
        if desc.axis == VERTICAL:
            jl = min(int((mid - left.y0) / left.hy), left.ny - 1)
            jr = min(int((mid - right.y0) / right.hy), right.ny - 1)
            lc = left.cell_index(left.nx - 1, jl)
            rc = right.cell_index(0, jr)
        else:
            il = min(int((mid - left.x0) / left.hx), left.nx - 1)
            ir = min(int((mid - right.x0) / right.hx), right.nx - 1)
            lc = left.cell_index(il, left.ny - 1)
            rc = right.cell_index(ir, 0)
        out.append(InterfaceSubEdge(interface_id, float(s0), float(s1), lc, rc))
    return out


def _boundary_faces(grid: SubdomainGrid, bbox, eps) -> tuple[str, ...]:
    x0, x1, y0, y1 = bbox
    faces = []
    if abs(grid.x0 - x0) <= eps:
        faces.append("west")
    if abs(grid.x1 - x1) <= eps:
        faces.append("east")
    if abs(grid.y0 - y0) <= eps:
        faces.append("south")
    if abs(grid.y1 - y1) <= eps:
        faces.append("north")
    return tuple(faces)


def build_multiblock(grids: Sequence[SubdomainGrid]) -> MultiblockMesh:
    """Assemble and validate a multiblock mesh from subdomain grids."""
    grids = tuple(grids)
    eps = _eps_for(grids)
    interfaces = detect_interfaces(grids, eps)
    by_id = {g.id: g for g in grids}
    subedges = []
    for k, desc in enumerate(interfaces):
        subedges.extend(build_interface_subedges(desc, by_id[desc.left_id], by_id[desc.right_id], k, eps))
    bbox = _bbox(grids)
    mesh = MultiblockMesh(
        grids=grids,
        interfaces=tuple(interfaces),
        subedges=tuple(subedges),
        boundary_faces={g.id: _boundary_faces(g, bbox, eps) for g in grids},
        bbox=bbox,
        eps=eps,
    )
    diag = validate_multiblock(mesh)
    if not diag:
        raise MeshError("; ".join(diag.issues))
    return mesh


def _face_line(grid: SubdomainGrid, face: str):
    """(axis, position, lo, hi) of a subdomain face."""
    if face == "west":
        return VERTICAL, grid.x0, grid.y0, grid.y1
    if face == "east":
        return VERTICAL, grid.x1, grid.y0, grid.y1
    if face == "south":
        return HORIZONTAL, grid.y0, grid.x0, grid.x1
    return HORIZONTAL, grid.y1, grid.x0, grid.x1


def validate_multiblock(mesh: MultiblockMesh) -> Diagnostics:
    """Check tiling, interface coverage and sub-edge partitions.

    Never raises; every failure is recorded with its location.
    """
    diag = Diagnostics()
    grids = mesh.grids
    eps = mesh.eps
    gaps, overlaps = _coverage(grids, eps)
    for rect in gaps:
        diag.fail(f"gap at {_fmt_rect(rect)}")
    for rect, owners in overlaps:
        diag.fail(f"overlap of subdomains {owners} at {_fmt_rect(rect)}")

    # every interior face must be covered by interfaces, every boundary face must lie on the bbox
    for g in grids:
        for face in FACES:
            axis, pos, lo, hi = _face_line(g, face)
            if face in mesh.boundary_faces.get(g.id, ()):
                continue
            side = "left" if face in ("east", "north") else "right"
            covered = 0.0
            for desc in mesh.interfaces:
                gid = desc.left_id if side == "left" else desc.right_id
                if gid == g.id and desc.axis == axis and abs(desc.position - pos) <= eps:
                    covered += desc.length
            if abs(covered - (hi - lo)) > eps * max(1, len(grids)):
                diag.fail(
                    f"subdomain {g.id} {face} face covered by interfaces over length {covered:.6g} of {hi - lo:.6g}"
                )

    for k, desc in enumerate(mesh.interfaces):
        subs = sorted(mesh.subedges_of(k), key=lambda s: s.s0)
        a, b = desc.span
        if not subs:
            diag.fail(f"interface {k} ({desc.left_id}|{desc.right_id}) has no sub-edges")
            continue
        if abs(subs[0].s0 - a) > eps or abs(subs[-1].s1 - b) > eps:
            diag.fail(f"interface {k} ({desc.left_id}|{desc.right_id}) sub-edges do not reach span [{a:.6g}, {b:.6g}]")
        for s, nxt in zip(subs[:-1], subs[1:]):
            if abs(s.s1 - nxt.s0) > eps:
                diag.fail(
                    f"interface {k} ({desc.left_id}|{desc.right_id}) sub-edges leave a hole or overlap "
                    f"between {s.s1:.6g} and {nxt.s0:.6g}"
                )
        for s in subs:
            if not s.s1 > s.s0:
                diag.fail(f"interface {k}: degenerate sub-edge [{s.s0:.6g}, {s.s1:.6g}]")
        total = sum(s.length for s in subs)
        if abs(total - desc.length) > eps * max(1, len(subs)):
            diag.fail(f"interface {k}: sub-edge lengths sum to {total:.12g}, span length {desc.length:.12g}")
    return diag


# Standard layouts -----------------------------------------------------------


def _cells_for(extent: float, h: float) -> int:
    n = extent / h
    nr = int(round(n))
    if nr < 1 or abs(n - nr) > 1e-8 * max(1.0, n):
        raise MeshError(f"spacing {h:.6g} does not divide extent {extent:.6g}")
    return nr


def quadrant_mesh(h: float, H: float, fine_on_diagonal: bool = True) -> MultiblockMesh:
    """Unit square in four quadrants, fine (h) and coarse (H) in a checkerboard.

    Subdomain 1 is lower-left, 2 lower-right, 3 upper-left, 4 upper-right.
    With ``fine_on_diagonal`` subdomains 1 and 4 use spacing ``h``.
    """
    n_f, n_c = _cells_for(0.5, h), _cells_for(0.5, H)
    a, b = (n_f, n_c) if fine_on_diagonal else (n_c, n_f)
    return build_multiblock(
        [
            build_subdomain_grid(0.0, 0.5, 0.0, 0.5, a, a, id=1),
            build_subdomain_grid(0.5, 1.0, 0.0, 0.5, b, b, id=2),
            build_subdomain_grid(0.0, 0.5, 0.5, 1.0, b, b, id=3),
            build_subdomain_grid(0.5, 1.0, 0.5, 1.0, a, a, id=4),
        ]
    )


def two_block_mesh(h: float, H: float) -> MultiblockMesh:
    """Unit square split at x = 1/2; spacing ``h`` on the left, ``H`` on the right."""
    return build_multiblock(
        [
            build_subdomain_grid(0.0, 0.5, 0.0, 1.0, _cells_for(0.5, h), _cells_for(1.0, h), id=1),
            build_subdomain_grid(0.5, 1.0, 0.0, 1.0, _cells_for(0.5, H), _cells_for(1.0, H), id=2),
        ]
    )


def single_block_mesh(nx: int, ny: int | None = None) -> MultiblockMesh:
    return build_multiblock([build_subdomain_grid(0.0, 1.0, 0.0, 1.0, nx, ny or nx, id=1)])
