import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from evflow.assembly import (
    PermeabilityField,
    assemble_boundary_term,
    assemble_divergence,
    assemble_initial_pressure,
    assemble_source,
    assemble_velocity_mass,
)
from evflow.fespace import BOUNDARY, INTERFACE, INTERIOR_X, enumerate_dofs, project_pi_star
from evflow.mesh import build_multiblock, build_subdomain_grid, quadrant_mesh, single_block_mesh, two_block_mesh
from evflow.mms import manufactured_case


def test_unit_cell_mass():
    dm = enumerate_dofs(single_block_mesh(1))
    M = assemble_velocity_mass(dm, PermeabilityField.constant(dm))
    assert np.allclose(M, 0.5, atol=1e-15)


def test_interface_mass_entry():
    mesh = build_multiblock([build_subdomain_grid(0, 0.5, 0, 1, 2, 2, id=1), build_subdomain_grid(0.5, 1, 0, 1, 1, 3, id=2)])
    dm = enumerate_dofs(mesh)
    M = assemble_velocity_mass(dm, PermeabilityField.constant(dm))
    iface = np.flatnonzero((dm.vel_kind == INTERFACE) & np.isclose(dm.vel_mid[:, 1], 5 / 12))
    assert len(iface) == 1
    assert M[iface[0]] == pytest.approx(1 / 16, abs=1e-15)


def test_doubling_permeability_halves_mass(two_block_23_dofs):
    dm = two_block_23_dofs
    K = PermeabilityField.constant(dm, 1.3, 0.7)
    assert np.allclose(assemble_velocity_mass(dm, K.scaled(2.0)), 0.5 * assemble_velocity_mass(dm, K), rtol=1e-14)


def test_permeability_must_be_positive():
    dm = enumerate_dofs(single_block_mesh(2))
    with pytest.raises(ValueError):
        PermeabilityField.constant(dm, 0.0)


def test_divergence_single_cell_signs():
    dm = enumerate_dofs(single_block_mesh(1))
    B = assemble_divergence(dm).toarray()
    # boundary order W, E, S, N
    assert np.array_equal(B, [[-1.0, 1.0, -1.0, 1.0]])


def test_divergence_columns(two_block_23_dofs):
    dm = two_block_23_dofs
    B = assemble_divergence(dm).toarray()
    for e in range(dm.n_vel):
        col = B[:, e]
        nz = col[col != 0]
        if dm.vel_kind[e] == BOUNDARY:
            assert len(nz) == 1 and abs(nz[0]) == pytest.approx(dm.vel_len[e])
        else:
            assert sorted(nz) == pytest.approx([-dm.vel_len[e], dm.vel_len[e]])
    # the lower-left cell of the 2x2 block touches two interface sub-edges
    c = dm.global_cell(1, 1)
    touching = [e for e in np.flatnonzero(B[c]) if dm.vel_kind[e] == INTERFACE]
    assert len(touching) == 2


def test_boundary_term_examples():
    dm = enumerate_dofs(single_block_mesh(1))
    assert np.all(assemble_boundary_term(lambda x, y, t: 0 * x, 0.3, dm) == 0.0)
    G = assemble_boundary_term(lambda x, y, t: 1 + 0 * x, 0.0, dm)
    assert np.allclose(G, [1.0, -1.0, 1.0, -1.0], atol=1e-15)
    ex1 = manufactured_case("example1")
    dmq = enumerate_dofs(quadrant_mesh(1 / 8, 1 / 4))
    for t in (0.0, 0.05, 0.1):
        assert np.max(np.abs(assemble_boundary_term(ex1.g, t, dmq))) <= 1e-15


def test_source_examples():
    dm = enumerate_dofs(single_block_mesh(2, 1))
    F = assemble_source(lambda x, y, t: x, 0.0, dm)
    assert F[0] == pytest.approx(1 / 8, abs=1e-15)
    one = enumerate_dofs(single_block_mesh(1))
    assert assemble_source(lambda x, y, t: x * x, 0.0, one)[0] == pytest.approx(0.25)
    dmq = enumerate_dofs(quadrant_mesh(1 / 4, 1 / 2))
    assert np.allclose(assemble_source(lambda x, y, t: 1 + 0 * x, 0.0, dmq), dmq.cell_area)


def test_initial_pressure_examples():
    dm = enumerate_dofs(single_block_mesh(2))
    assert np.all(assemble_initial_pressure(lambda x, y: 0 * x, dm) == 0.0)
    assert np.allclose(assemble_initial_pressure(lambda x, y: 5 + 0 * x, dm), 5.0, atol=1e-14)
    P = assemble_initial_pressure(lambda x, y: np.sin(2 * np.pi * x) * np.sin(2 * np.pi * y), dm)
    # three-point Gauss per direction; the tolerance is the quadrature error
    assert np.allclose(np.abs(P), (2 / np.pi) ** 2, rtol=2e-3)
    assert list(np.sign(P)) == [1, -1, -1, 1]


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6), st.integers(0, 2**32 - 1))
def test_telescoping(nl, nr, ny, seed):
    mesh = build_multiblock(
        [build_subdomain_grid(0, 0.4, 0, 1, nl, ny, id=1), build_subdomain_grid(0.4, 1, 0, 1, nr, ny + nr, id=2)]
    )
    dm = enumerate_dofs(mesh)
    B = assemble_divergence(dm)
    U = np.random.default_rng(seed).standard_normal(dm.n_vel)
    sgn = dm.outward_sign()
    boundary_flux = np.sum(sgn * dm.vel_len * U)
    assert abs(np.sum(B @ U) - boundary_flux) <= 1e-12 * max(1.0, np.sum(np.abs(U)))


def test_constant_field_in_kernel(two_block_23_dofs):
    dm = two_block_23_dofs
    B = assemble_divergence(dm)
    v = project_pi_star(lambda x, y: (np.ones_like(x), np.zeros_like(y)), dm)
    assert np.max(np.abs(B @ v)) <= 1e-14


def test_matching_multiblock_operators_equal_single():
    multi = enumerate_dofs(two_block_mesh(1 / 4, 1 / 4))
    single = enumerate_dofs(single_block_mesh(4))

    def keyed(dm, vals):
        return {(int(dm.vel_axis[e]), round(dm.vel_mid[e, 0], 12), round(dm.vel_mid[e, 1], 12)): vals[e] for e in range(dm.n_vel)}

    Mm = keyed(multi, assemble_velocity_mass(multi, PermeabilityField.constant(multi, 2.0, 0.5)))
    Ms = keyed(single, assemble_velocity_mass(single, PermeabilityField.constant(single, 2.0, 0.5)))
    assert Mm.keys() == Ms.keys()
    assert max(abs(Mm[k] - Ms[k]) for k in Mm) <= 1e-15
    assert np.count_nonzero(multi.vel_kind == INTERIOR_X) + np.count_nonzero(multi.vel_kind == INTERFACE) == 12
