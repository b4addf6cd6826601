"""Degrees of freedom of the enhanced velocity space and its projections.

Pressure is cellwise constant, one unknown per cell. Velocity is lowest-order
Raviart-Thomas: one normal-velocity value per edge. Along an interface the
parent edges of both grids are replaced by the sub-edges of the interface
grid, and each sub-edge carries a single value shared by both sides, so the
normal flux is continuous at sub-edge scale without Lagrange multipliers.

Every velocity DOF has a fixed unit normal along +x (``axis == 0``) or +y
(``axis == 1``). ``minus`` is the adjacent cell on the low-coordinate side and
``plus`` the cell on the high side; either is -1 on the global boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import VERTICAL, MultiblockMesh

INTERIOR_X, INTERIOR_Y, BOUNDARY, INTERFACE = 0, 1, 2, 3


@dataclass(frozen=True, eq=False)
class DofMap:
    mesh: MultiblockMesh
    cell_offset: dict[int, int]
    cell_center: np.ndarray  # (n_cells, 2)
    cell_size: np.ndarray  # (n_cells, 2): hx, hy
    cell_grid: np.ndarray
    vel_kind: np.ndarray
    vel_axis: np.ndarray
    vel_mid: np.ndarray  # (n_vel, 2)
    vel_len: np.ndarray
    vel_minus: np.ndarray
    vel_plus: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.cell_center.shape[0]

    @property
    def n_vel(self) -> int:
        return self.vel_len.shape[0]

    @property
    def cell_area(self) -> np.ndarray:
        return self.cell_size[:, 0] * self.cell_size[:, 1]

    def global_cell(self, grid_id: int, local: int) -> int:
        return self.cell_offset[grid_id] + local

    def outward_sign(self) -> np.ndarray:
        """+1 where the boundary edge normal points out of the domain, -1 where in.

        Zero for non-boundary DOFs.
        """
        s = np.zeros(self.n_vel)
        bd = self.vel_kind == BOUNDARY
        s[bd & (self.vel_minus >= 0)] = 1.0
        s[bd & (self.vel_plus >= 0)] = -1.0
        return s


def enumerate_dofs(mesh: MultiblockMesh) -> DofMap:
    """Number pressure and velocity unknowns in the fixed documented order.

    Pressure: by subdomain, then row j, then column i. Velocity: interior
    x-normal edges, interior y-normal edges, global-boundary edges (faces
    W, E, S, N per subdomain), then interface sub-edges in interface order.
    """
    offsets, off = {}, 0
    centers, sizes, owner = [], [], []
    for g in mesh.grids:
        offsets[g.id] = off
        off += g.n_cells
        xc, yc = g.cell_centers()
        centers.append(np.column_stack([xc, yc]))
        sizes.append(np.tile([g.hx, g.hy], (g.n_cells, 1)))
        owner.append(np.full(g.n_cells, g.id))

    kind, axis, mid, length, minus, plus = [], [], [], [], [], []

    def add(k, ax, mx, my, ln, cm, cp):
        n = max(np.size(mx), np.size(my))
        kind.append(np.full(n, k, dtype=np.int8))
        axis.append(np.full(n, ax, dtype=np.int8))
        mid.append(np.column_stack([np.broadcast_to(mx, n), np.broadcast_to(my, n)]))
        length.append(np.broadcast_to(np.asarray(ln, dtype=float), n).copy())
        minus.append(np.broadcast_to(cm, n).astype(np.int64))
        plus.append(np.broadcast_to(cp, n).astype(np.int64))

    for g in mesh.grids:
        o = offsets[g.id]
        if g.nx > 1:
            j, i = np.meshgrid(np.arange(g.ny), np.arange(1, g.nx), indexing="ij")
            j, i = j.ravel(), i.ravel()
            add(INTERIOR_X, 0, g.x0 + i * g.hx, g.y0 + (j + 0.5) * g.hy, g.hy,
                o + j * g.nx + i - 1, o + j * g.nx + i)
    for g in mesh.grids:
        o = offsets[g.id]
        if g.ny > 1:
            j, i = np.meshgrid(np.arange(1, g.ny), np.arange(g.nx), indexing="ij")
            j, i = j.ravel(), i.ravel()
            add(INTERIOR_Y, 1, g.x0 + (i + 0.5) * g.hx, g.y0 + j * g.hy, g.hx,
                o + (j - 1) * g.nx + i, o + j * g.nx + i)
    for g in mesh.grids:
        o = offsets[g.id]
        faces = mesh.boundary_faces[g.id]
        j = np.arange(g.ny)
        i = np.arange(g.nx)
        yc = g.y0 + (j + 0.5) * g.hy
        xc = g.x0 + (i + 0.5) * g.hx
        if "west" in faces:
            add(BOUNDARY, 0, g.x0, yc, g.hy, -1, o + j * g.nx)
        if "east" in faces:
            add(BOUNDARY, 0, g.x1, yc, g.hy, o + j * g.nx + g.nx - 1, -1)
        if "south" in faces:
            add(BOUNDARY, 1, xc, g.y0, g.hx, -1, o + i)
        if "north" in faces:
            add(BOUNDARY, 1, xc, g.y1, g.hx, o + (g.ny - 1) * g.nx + i, -1)
    for k, desc in enumerate(mesh.interfaces):
        subs = mesh.subedges_of(k)
        if not subs:
            continue
        s_mid = np.array([s.mid for s in subs])
        s_len = np.array([s.length for s in subs])
        lc = offsets[desc.left_id] + np.array([s.left_cell for s in subs])
        rc = offsets[desc.right_id] + np.array([s.right_cell for s in subs])
        if desc.axis == VERTICAL:
            add(INTERFACE, 0, desc.position, s_mid, s_len, lc, rc)
        else:
            add(INTERFACE, 1, s_mid, desc.position, s_len, lc, rc)

    return DofMap(
        mesh=mesh,
        cell_offset=offsets,
        cell_center=np.concatenate(centers),
        cell_size=np.concatenate(sizes),
        cell_grid=np.concatenate(owner),
        vel_kind=np.concatenate(kind),
        vel_axis=np.concatenate(axis),
        vel_mid=np.concatenate(mid),
        vel_len=np.concatenate(length),
        vel_minus=np.concatenate(minus),
        vel_plus=np.concatenate(plus),
    )


def _normal_component(q, x, y, axis):
    qx, qy = q(x, y)
    qx = np.broadcast_to(qx, np.shape(x))
    qy = np.broadcast_to(qy, np.shape(x))
    return np.where(axis == 0, qx, qy)


def project_pi_star(q, dofmap: DofMap, gauss_points: int = 5) -> np.ndarray:
    """Edge-average normal component of the vector field ``q(x, y) -> (qx, qy)``.

    Matches the edge moments of ``q`` on every edge and interface sub-edge,
    using Gauss-Legendre quadrature along the edge.
    """
    xi, w = np.polynomial.legendre.leggauss(gauss_points)
    ax = dofmap.vel_axis[:, None]
    half = 0.5 * dofmap.vel_len[:, None]
    mx = dofmap.vel_mid[:, 0:1]
    my = dofmap.vel_mid[:, 1:2]
    # vertical edges vary in y, horizontal edges in x
    x = np.where(ax == 0, mx, mx + half * xi[None, :])
    y = np.where(ax == 0, my + half * xi[None, :], my)
    vals = _normal_component(q, x, y, ax)
    return 0.5 * vals @ w


def project_l2_pressure(p, dofmap: DofMap, t: float = 0.0, gauss_points: int = 3) -> np.ndarray:
    """Cell averages of ``p(x, y, t)`` by tensor Gauss quadrature."""
    xi, w = np.polynomial.legendre.leggauss(gauss_points)
    W = np.outer(w, w).ravel() / 4.0
    XI, ETA = np.meshgrid(xi, xi, indexing="ij")
    c = dofmap.cell_center
    hs = 0.5 * dofmap.cell_size
    x = c[:, 0:1] + hs[:, 0:1] * XI.ravel()[None, :]
    y = c[:, 1:2] + hs[:, 1:2] * ETA.ravel()[None, :]
    vals = np.broadcast_to(p(x, y, t), x.shape)
    return vals @ W


def discrete_divergence(flux: np.ndarray, dofmap: DofMap) -> np.ndarray:
    """Cellwise divergence of a lowest-order RT field given by its normal values."""
    net = np.zeros(dofmap.n_cells)
    q = dofmap.vel_len * flux
    m = dofmap.vel_minus >= 0
    p = dofmap.vel_plus >= 0
    np.add.at(net, dofmap.vel_minus[m], q[m])
    np.add.at(net, dofmap.vel_plus[p], -q[p])
    return net / dofmap.cell_area
