"""Reference computations kept independent of the vectorized code paths."""

from __future__ import annotations

import numpy as np


def dense_saddle_point_step(dofmap, P_n, f, g, t_theta, dt, theta, kxx=1.0, kyy=1.0):
    """One theta-step by assembling [[M, -B^T], [B, D]] entry by entry and solving densely.

    Data f, g are evaluated at ``t_theta`` (exact for data affine in t).
    Returns (P_next, U_theta).
    """
    nc, nv = dofmap.n_cells, dofmap.n_vel
    alpha = 0.5 * (1.0 + theta)
    M = np.zeros((nv, nv))
    B = np.zeros((nc, nv))
    G = np.zeros(nv)
    for e in range(nv):
        ax = dofmap.vel_axis[e]
        ln = dofmap.vel_len[e]
        k = kxx if ax == 0 else kyy
        for side, c in ((+1.0, dofmap.vel_minus[e]), (-1.0, dofmap.vel_plus[e])):
            if c < 0:
                continue
            width = dofmap.cell_size[c, ax]
            M[e, e] += ln * width / (2.0 * k)
            B[c, e] = side * ln
        if (dofmap.vel_minus[e] < 0) != (dofmap.vel_plus[e] < 0):
            outward = 1.0 if dofmap.vel_minus[e] >= 0 else -1.0
            x, y = dofmap.vel_mid[e]
            G[e] = -outward * ln * float(g(x, y, t_theta))
    area = np.array([dofmap.cell_size[c, 0] * dofmap.cell_size[c, 1] for c in range(nc)])
    F = np.array([area[c] * float(f(*dofmap.cell_center[c], t_theta)) for c in range(nc)])
    D = np.diag(area / (alpha * dt))
    A = np.block([[M, -B.T], [B, D]])
    rhs = np.concatenate([G, F + D @ P_n])
    sol = np.linalg.solve(A, rhs)
    U, P_star = sol[:nv], sol[nv:]
    return P_n + (P_star - P_n) / alpha, U


def tpfa_single_grid_be(n, f, g, p0_avg, dt, n_steps):
    """Backward Euler two-point flux scheme on an n x n unit-square grid, K = I.

    Returns (P, flux) after n_steps where P[j, i] is the cell pressure and
    flux is a dict keyed by (axis, rounded midpoint) holding the normal velocity.
    """
    h = 1.0 / n
    N = n * n
    idx = lambda i, j: j * n + i
    xc = (np.arange(n) + 0.5) * h
    A = np.zeros((N, N))
    for j in range(n):
        for i in range(n):
            c = idx(i, j)
            A[c, c] += h * h / dt
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                ii, jj = i + di, j + dj
                if 0 <= ii < n and 0 <= jj < n:
                    A[c, c] += 1.0
                    A[c, idx(ii, jj)] -= 1.0
                else:
                    A[c, c] += 2.0  # half-cell distance to the boundary, times edge length h
    P = np.array([p0_avg[c] for c in range(N)], dtype=float)
    t = 0.0
    for _ in range(n_steps):
        t += dt
        rhs = np.zeros(N)
        for j in range(n):
            for i in range(n):
                c = idx(i, j)
                rhs[c] = h * h * f(xc[i], xc[j], t) + h * h / dt * P[c]
                for di, dj, bx, by in ((1, 0, 1.0, xc[j]), (-1, 0, 0.0, xc[j]), (0, 1, xc[i], 1.0), (0, -1, xc[i], 0.0)):
                    ii, jj = i + di, j + dj
                    if not (0 <= ii < n and 0 <= jj < n):
                        rhs[c] += 2.0 * g(bx, by, t)
        P = np.linalg.solve(A, rhs)

    flux = {}
    Pg = P.reshape(n, n)
    for j in range(n):
        for i in range(n + 1):
            x, y = i * h, xc[j]
            lo = Pg[j, i - 1] if i > 0 else g(x, y, t)
            hi = Pg[j, i] if i < n else g(x, y, t)
            dist = h if 0 < i < n else h / 2
            flux[(0, round(x, 12), round(y, 12))] = (lo - hi) / dist
    for j in range(n + 1):
        for i in range(n):
            x, y = xc[i], j * h
            lo = Pg[j - 1, i] if j > 0 else g(x, y, t)
            hi = Pg[j, i] if j < n else g(x, y, t)
            dist = h if 0 < j < n else h / 2
            flux[(1, round(x, 12), round(y, 12))] = (lo - hi) / dist
    return Pg, flux
