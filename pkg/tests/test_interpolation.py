"""Quasi-interpolation checks against dense per-element oracles."""

import numpy as np
import pytest

from elastlod import fem
from elastlod.interpolation import (
    build_averaging,
    build_interpolation,
    build_l2_projection,
)
from elastlod.mesh import BoundarySpec, build_uniform_mesh, refine_to

from test_fem import quadrature_points


def oracle_projection(coarse, fine, v):
    """Per-element affine best approximation of fine P1 data, dense solves."""
    out = np.zeros((coarse.n_triangles, 3))
    for T in range(coarse.n_triangles):
        pc = coarse.nodes[coarse.triangles[T]]
        V = np.column_stack([np.ones(3), pc[:, 0], pc[:, 1]])
        lam_coeffs = np.linalg.solve(V, np.eye(3))  # columns: coarse hats on T
        area = 0.5 * abs(np.linalg.det(V))
        M = area / 12.0 * (np.ones((3, 3)) + np.eye(3))
        b = np.zeros(3)
        for e in np.flatnonzero(fine.parent_of == T):
            tri = fine.triangles[e]
            pts, wts = quadrature_points(fine.nodes[tri])
            Vf = np.column_stack([np.ones(3), fine.nodes[tri, 0], fine.nodes[tri, 1]])
            fine_coeffs = np.linalg.solve(Vf, np.eye(3))
            ones_xy = np.column_stack([np.ones(len(pts)), pts[:, 0], pts[:, 1]])
            vvals = (ones_xy @ fine_coeffs) @ v[tri]
            lam_vals = ones_xy @ lam_coeffs
            b += lam_vals.T @ (wts * vvals)
        out[T] = np.linalg.solve(M, b)
    return out


@pytest.mark.parametrize("nc,nf", [(1, 2), (2, 4), (2, 8)])
def test_l2_projection_matches_dense_oracle(nc, nf):
    coarse = build_uniform_mesh(nc)
    fine = refine_to(coarse, nf)
    rng = np.random.default_rng(nc * 10 + nf)
    v = rng.standard_normal(fine.n_nodes)
    proj = (build_l2_projection(coarse, fine) @ v).reshape(coarse.n_triangles, 3)
    assert np.abs(proj - oracle_projection(coarse, fine, v)).max() < 1e-12


def test_averaging_matches_direct_counts():
    coarse = build_uniform_mesh(4)
    avg = build_averaging(coarse)
    rng = np.random.default_rng(7)
    vals = rng.standard_normal(3 * coarse.n_triangles)
    got = avg @ vals
    sums = np.zeros(coarse.n_nodes)
    counts = np.zeros(coarse.n_nodes)
    for T in range(coarse.n_triangles):
        for a, z in enumerate(coarse.triangles[T]):
            sums[z] += vals[3 * T + a]
            counts[z] += 1
    expected = sums / counts
    expected[coarse.dirichlet_nodes] = 0.0
    assert np.abs(got - expected).max() < 1e-13
    # interior nodes of this triangulation belong to six triangles
    interior = ~coarse.dirichlet_nodes
    assert np.all(counts[interior] == 6)


def test_averaging_row_sums():
    coarse = build_uniform_mesh(4, boundary=BoundarySpec(frozenset({"left"})))
    avg = build_averaging(coarse)
    rows = np.asarray(avg.sum(axis=1)).ravel()
    assert np.abs(rows[~coarse.dirichlet_nodes] - 1.0).max() < 1e-14
    assert np.abs(rows[coarse.dirichlet_nodes]).max() == 0.0


@pytest.mark.parametrize(
    "boundary", [None, BoundarySpec(frozenset({"left", "bottom"}))]
)
def test_interpolation_idempotent_on_coarse_functions(boundary):
    kwargs = {} if boundary is None else {"boundary": boundary}
    coarse = build_uniform_mesh(4, **kwargs)
    fine = refine_to(coarse, 16)
    interp = build_interpolation(coarse, fine)
    rng = np.random.default_rng(0)
    xc = interp.coarse_dofs.scatter(rng.standard_normal(interp.coarse_dofs.n_free))
    back = interp.interp_full @ (interp.prolong_full @ xc)
    assert np.abs(back - xc).max() < 1e-13


def test_kernel_complement_annihilated():
    coarse = build_uniform_mesh(4)
    fine = refine_to(coarse, 16)
    interp = build_interpolation(coarse, fine)
    rng = np.random.default_rng(1)
    w = rng.standard_normal(2 * fine.n_nodes)
    vf = w - interp.prolong_full @ (interp.interp_full @ w)
    assert np.abs(interp.interp_full @ vf).max() < 1e-12 * np.abs(w).max()


def test_components_do_not_mix():
    coarse = build_uniform_mesh(2)
    fine = refine_to(coarse, 8)
    interp = build_interpolation(coarse, fine)
    rng = np.random.default_rng(2)
    v = np.zeros(2 * fine.n_nodes)
    v[0::2] = rng.standard_normal(fine.n_nodes)
    out = interp.interp_full @ v
    assert np.abs(out[1::2]).max() == 0.0


def test_interpolation_is_local():
    coarse = build_uniform_mesh(4)
    fine = refine_to(coarse, 16)
    interp = build_interpolation(coarse, fine)
    H = 1.0 / coarse.n
    mat = interp.scalar_interp.tocsr()
    for z in np.flatnonzero(~coarse.dirichlet_nodes):
        cols = mat.indices[mat.indptr[z] : mat.indptr[z + 1]]
        gap = np.abs(fine.nodes[cols] - coarse.nodes[z]).max()
        assert gap <= H + 1e-12


def test_prolongation_reproduces_affines():
    coarse = build_uniform_mesh(4)
    fine = refine_to(coarse, 12)
    interp = build_interpolation(coarse, fine)
    assert np.abs(interp.scalar_prolong @ np.ones(coarse.n_nodes) - 1.0).max() < 1e-14
    assert (
        np.abs(interp.scalar_prolong @ coarse.nodes[:, 0] - fine.nodes[:, 0]).max()
        < 1e-14
    )
    assert (
        np.abs(interp.scalar_prolong @ coarse.nodes[:, 1] - fine.nodes[:, 1]).max()
        < 1e-14
    )


def test_prolongation_respects_dirichlet_sides():
    coarse = build_uniform_mesh(4, boundary=BoundarySpec(frozenset({"left"})))
    fine = refine_to(coarse, 16)
    interp = build_interpolation(coarse, fine)
    rng = np.random.default_rng(3)
    xc = interp.coarse_dofs.scatter(rng.standard_normal(interp.coarse_dofs.n_free))
    u = interp.prolong_full @ xc
    held = np.repeat(fine.dirichlet_nodes, 2)
    assert np.abs(u[held]).max() < 1e-14
    assert np.abs(u[~held]).max() > 0


def test_interpolation_error_scales_with_coarse_width():
    fine = build_uniform_mesh(32)
    s = np.sin(np.pi * fine.nodes[:, 0]) * np.sin(np.pi * fine.nodes[:, 1])
    v = np.zeros(2 * fine.n_nodes)
    v[0::2] = s
    M = fem.assemble_mass(fine)
    semi = fem.h1_seminorm(fine, v)
    consts = []
    for nc in (4, 8):
        coarse = build_uniform_mesh(nc)
        nested = refine_to(coarse, 32)
        nested_interp = build_interpolation(coarse, nested)
        err = v - nested_interp.prolong_full @ (nested_interp.interp_full @ v)
        l2 = np.sqrt(err @ (M @ err))
        consts.append(l2 / (coarse.h * semi))
    assert max(consts) < 1.0
