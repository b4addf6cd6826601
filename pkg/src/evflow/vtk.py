"""Legacy VTK structured-points output of cell pressures, one file per subdomain."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fespace import DofMap


def write_structured_points(path, grid, values: np.ndarray, name: str = "pressure", title: str = "") -> Path:
    """Write cell data on one subdomain grid; ``values`` in local cell order (x fastest)."""
    values = np.asarray(values, dtype=float)
    if values.shape != (grid.n_cells,):
        raise ValueError(f"expected {grid.n_cells} values for subdomain {grid.id}, got {values.shape}")
    lines = [
        "# vtk DataFile Version 3.0",
        (title or f"{name} subdomain {grid.id}")[:255],
        "ASCII",
        "DATASET STRUCTURED_POINTS",
        f"DIMENSIONS {grid.nx + 1} {grid.ny + 1} 1",
        f"ORIGIN {grid.x0:.17g} {grid.y0:.17g} 0",
        f"SPACING {grid.hx:.17g} {grid.hy:.17g} 1",
        f"CELL_DATA {grid.n_cells}",
        f"SCALARS {name} double 1",
        "LOOKUP_TABLE default",
    ]
    lines += [f"{v:.17g}" for v in values]
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def dump_pressure(directory, dofmap: DofMap, P: np.ndarray, step: int, t: float) -> list[Path]:
    """One file per subdomain, named ``pressure_b<id>_n<step>.vtk``."""
    out = []
    for g in dofmap.mesh.grids:
        o = dofmap.cell_offset[g.id]
        fname = Path(directory) / f"pressure_b{g.id}_n{step:05d}.vtk"
        out.append(write_structured_points(fname, g, P[o : o + g.n_cells], title=f"pressure subdomain {g.id} t={t:.9g}"))
    return out


def read_structured_points(path) -> dict:
    """Minimal reader for files written by :func:`write_structured_points`."""
    lines = Path(path).read_text().splitlines()
    head = {}
    for k, line in enumerate(lines):
        parts = line.split()
        if parts and parts[0] in ("DIMENSIONS", "ORIGIN", "SPACING", "CELL_DATA", "SCALARS"):
            head[parts[0]] = parts[1:]
        if line.startswith("LOOKUP_TABLE"):
            head["values"] = np.array([float(v) for v in lines[k + 1 :] if v.strip()])
            break
    return head
