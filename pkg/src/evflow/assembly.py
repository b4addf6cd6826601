"""Discrete operators of the mixed scheme under trapezoidal quadrature.

With the trapezoidal rule the velocity mass matrix is diagonal; each edge
picks up a half-cell contribution from each neighbouring cell, which is
exactly the two-point flux cell-centered scheme. At an interface the
half-cell weight of a cell is shared among its sub-edges in proportion to
their length.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .fespace import DofMap, project_l2_pressure


@dataclass(frozen=True)
class PermeabilityField:
    """Cellwise-constant diagonal permeability (divided by viscosity)."""

    kxx: np.ndarray
    kyy: np.ndarray

    def __post_init__(self):
        if np.any(~(np.asarray(self.kxx) > 0)) or np.any(~(np.asarray(self.kyy) > 0)):
            raise ValueError("permeability must be strictly positive in every cell")

    @classmethod
    def constant(cls, dofmap: DofMap, kxx: float = 1.0, kyy: float | None = None) -> "PermeabilityField":
        kyy = kxx if kyy is None else kyy
        n = dofmap.n_cells
        return cls(np.full(n, float(kxx)), np.full(n, float(kyy)))

    @property
    def k_min(self) -> float:
        return float(min(self.kxx.min(), self.kyy.min()))

    @property
    def k_max(self) -> float:
        return float(max(self.kxx.max(), self.kyy.max()))

    def scaled(self, factor: float) -> "PermeabilityField":
        return PermeabilityField(self.kxx * factor, self.kyy * factor)


def _half_resistance(dofmap: DofMap, K: PermeabilityField, cells: np.ndarray) -> np.ndarray:
    """Half-width over permeability of ``cells`` in each DOF's normal direction; 0 for -1."""
    out = np.zeros(dofmap.n_vel)
    ok = cells >= 0
    c = cells[ok]
    ax = dofmap.vel_axis[ok]
    width = np.where(ax == 0, dofmap.cell_size[c, 0], dofmap.cell_size[c, 1])
    k = np.where(ax == 0, K.kxx[c], K.kyy[c])
    out[ok] = 0.5 * width / k
    return out


def assemble_velocity_mass(dofmap: DofMap, K: PermeabilityField) -> np.ndarray:
    """Diagonal of the lumped velocity mass matrix (K^-1 u, v)."""
    if K.k_min <= 0:
        raise ValueError("permeability must be strictly positive")
    return dofmap.vel_len * (
        _half_resistance(dofmap, K, dofmap.vel_minus) + _half_resistance(dofmap, K, dofmap.vel_plus)
    )


def assemble_divergence(dofmap: DofMap) -> sp.csr_matrix:
    """B[c, e] = +len_e if e's normal leaves c, -len_e if it enters c."""
    rows, cols, vals = [], [], []
    e = np.arange(dofmap.n_vel)
    m = dofmap.vel_minus >= 0
    p = dofmap.vel_plus >= 0
    rows += [dofmap.vel_minus[m], dofmap.vel_plus[p]]
    cols += [e[m], e[p]]
    vals += [dofmap.vel_len[m], -dofmap.vel_len[p]]
    B = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(dofmap.n_cells, dofmap.n_vel),
    )
    return B.tocsr()


def assemble_boundary_term(g, t: float, dofmap: DofMap) -> np.ndarray:
    """-<g, v.n> on the global boundary, g evaluated at edge midpoints."""
    sgn = dofmap.outward_sign()
    G = np.zeros(dofmap.n_vel)
    bd = sgn != 0
    if np.any(bd):
        x, y = dofmap.vel_mid[bd, 0], dofmap.vel_mid[bd, 1]
        G[bd] = -sgn[bd] * dofmap.vel_len[bd] * np.broadcast_to(g(x, y, t), x.shape)
    return G


def assemble_source(f, t: float, dofmap: DofMap) -> np.ndarray:
    """(f, w) by the midpoint rule."""
    x, y = dofmap.cell_center[:, 0], dofmap.cell_center[:, 1]
    return dofmap.cell_area * np.broadcast_to(f(x, y, t), x.shape)


def assemble_initial_pressure(p0, dofmap: DofMap) -> np.ndarray:
    """L2 projection of the initial datum ``p0(x, y)``."""
    return project_l2_pressure(lambda x, y, t: p0(x, y), dofmap, 0.0)
