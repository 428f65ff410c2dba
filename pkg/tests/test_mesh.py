"""Mesh, refinement, and patch-extraction checks."""

import numpy as np
import pytest

from elastlod.mesh import (
    ALL_DIRICHLET,
    BoundarySpec,
    build_uniform_mesh,
    element_patch,
    refine_to,
)


def grow_patch_oracle(mesh, T, k):
    """Vertex-adjacency growth with plain set arithmetic."""
    vertex_sets = [set(t) for t in mesh.triangles]
    current = {T}
    for _ in range(k):
        nodes = set().union(*(vertex_sets[t] for t in current))
        current = {t for t, vs in enumerate(vertex_sets) if vs & nodes}
    return sorted(current)


def test_mesh_counts_and_geometry():
    mesh = build_uniform_mesh(2)
    assert mesh.n_nodes == 9
    assert mesh.n_triangles == 8
    assert abs(mesh.h - np.sqrt(2.0) / 2) < 1e-15
    areas = mesh.triangle_areas()
    assert np.abs(areas - 1.0 / 8.0).max() < 1e-15  # CCW orientation, equal areas
    assert abs(areas.sum() - 1.0) < 1e-14


def test_node_indexing_row_major():
    mesh = build_uniform_mesh(3)
    assert np.allclose(mesh.nodes[2 * 4 + 1], [1.0 / 3.0, 2.0 / 3.0])
    # lower triangle of square (1, 1): ll, lr, ur
    assert mesh.triangles[2 * (1 * 3 + 1)].tolist() == [5, 6, 10]
    assert mesh.triangles[2 * (1 * 3 + 1) + 1].tolist() == [5, 10, 9]


def test_dirichlet_marking():
    full = build_uniform_mesh(4)
    on_boundary = (
        np.isclose(full.nodes[:, 0], 0.0)
        | np.isclose(full.nodes[:, 0], 1.0)
        | np.isclose(full.nodes[:, 1], 0.0)
        | np.isclose(full.nodes[:, 1], 1.0)
    )
    assert np.array_equal(full.dirichlet_nodes, on_boundary)
    assert full.neumann_edges.shape == (0, 2)

    left = build_uniform_mesh(4, boundary=BoundarySpec(frozenset({"left"})))
    assert np.array_equal(left.dirichlet_nodes, np.isclose(left.nodes[:, 0], 0.0))
    assert left.neumann_edges.shape == (12, 2)
    # each recorded adjacent triangle actually contains its edge
    for edge, tri in zip(left.neumann_edges, left.neumann_edge_tri):
        assert set(edge) <= set(left.triangles[tri])


def test_boundary_spec_rejects_unknown_side():
    with pytest.raises(ValueError):
        BoundarySpec(frozenset({"left", "diagonal"}))


def test_build_rejects_degenerate_size():
    with pytest.raises(ValueError):
        build_uniform_mesh(0)


def test_refinement_parent_contains_child():
    coarse = build_uniform_mesh(2)
    fine = refine_to(coarse, 8)
    bc = fine.nodes[fine.triangles].mean(axis=1)
    for e in range(fine.n_triangles):
        pc = coarse.nodes[coarse.triangles[fine.parent_of[e]]]
        A = np.column_stack([pc[1] - pc[0], pc[2] - pc[0]])
        lam = np.linalg.solve(A, bc[e] - pc[0])
        coords = np.array([1.0 - lam.sum(), lam[0], lam[1]])
        assert coords.min() > -1e-12


def test_refinement_counts_children():
    coarse = build_uniform_mesh(3)
    fine = refine_to(coarse, 9)
    counts = np.bincount(fine.parent_of, minlength=coarse.n_triangles)
    assert np.all(counts == 9)  # r² children per coarse triangle


def test_refinement_identity():
    coarse = build_uniform_mesh(4)
    same = refine_to(coarse, 4)
    assert np.array_equal(same.parent_of, np.arange(coarse.n_triangles))


def test_refinement_validation():
    coarse = build_uniform_mesh(4)
    with pytest.raises(ValueError):
        refine_to(coarse, 6)
    with pytest.raises(ValueError):
        refine_to(coarse, 0)


@pytest.mark.parametrize("T", [0, 6, 17, 31])
@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_patch_growth_matches_set_oracle(T, k):
    coarse = build_uniform_mesh(4)
    fine = refine_to(coarse, 8)
    patch = element_patch(coarse, fine, T, k)
    assert patch.coarse_elements.tolist() == grow_patch_oracle(coarse, T, k)


def test_patch_growth_monotone_until_saturation():
    coarse = build_uniform_mesh(2)
    fine = refine_to(coarse, 4)
    sizes = [
        element_patch(coarse, fine, 0, k).coarse_elements.size for k in range(5)
    ]
    assert sizes == sorted(sizes)
    assert sizes[3] == coarse.n_triangles  # depth 3 saturates every n=2 patch
    for T in range(coarse.n_triangles):
        assert (
            element_patch(coarse, fine, T, 3).coarse_elements.size
            == coarse.n_triangles
        )


def test_patch_interior_dofs_small_cases():
    coarse = build_uniform_mesh(2)
    # at refinement ratio 2, a single-element patch has no interior nodes
    fine2 = refine_to(coarse, 4)
    patch = element_patch(coarse, fine2, 0, 0)
    assert patch.interior_fine_dofs.size == 0
    assert patch.constraint_nodes.tolist() == [4]  # the single free coarse node
    # at ratio 4, the interior nodes of the triangle are (2,1),(3,1),(3,2)
    fine4 = refine_to(coarse, 8)
    patch = element_patch(coarse, fine4, 0, 0)
    nodes = np.unique(patch.interior_fine_dofs // 2)
    assert nodes.tolist() == [1 * 9 + 2, 1 * 9 + 3, 2 * 9 + 3]


def test_saturated_patch_with_neumann_sides_frees_boundary():
    boundary = BoundarySpec(frozenset({"left"}))
    coarse = build_uniform_mesh(2, boundary=boundary)
    fine = refine_to(coarse, 4)
    patch = element_patch(coarse, fine, 0, None)
    assert patch.coarse_elements.size == coarse.n_triangles
    free_nodes = np.unique(patch.interior_fine_dofs // 2)
    expected = np.flatnonzero(~np.isclose(fine.nodes[:, 0], 0.0))
    assert free_nodes.tolist() == expected.tolist()


def test_patch_validation():
    coarse = build_uniform_mesh(2)
    fine = refine_to(coarse, 4)
    with pytest.raises(ValueError):
        element_patch(coarse, fine, 8, 1)
    with pytest.raises(ValueError):
        element_patch(coarse, fine, 0, -1)
    plain = build_uniform_mesh(4)
    with pytest.raises(ValueError):
        element_patch(coarse, plain, 0, 1)


def test_vertex_incidence_counts():
    mesh = build_uniform_mesh(4)
    inc = mesh.vertex_incidence()
    counts = np.asarray(inc.sum(axis=1)).ravel()
    assert np.array_equal(counts, np.bincount(mesh.triangles.ravel()))
    interior = ~mesh.dirichlet_nodes
    assert np.all(counts[interior] == 6)


def test_all_dirichlet_is_default():
    assert build_uniform_mesh(2).boundary == ALL_DIRICHLET
