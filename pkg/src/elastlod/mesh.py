"""Nested uniform triangulations of the unit square.

Conventions (fixed once, everything downstream relies on them):

* The square [0,1]^2 is divided into n x n axis-aligned squares, each split
  into two triangles along the lower-left -> upper-right diagonal.  Coarse and
  fine diagonals therefore align, so every coarse P1 function is exactly
  representable on any refinement.
* Node (ix, iy) on the (n+1) x (n+1) grid has index iy*(n+1) + ix.
* Squares are numbered row-major (iy*n + ix); square s owns triangles 2s
  (lower, vertices ll/lr/ur) and 2s+1 (upper, vertices ll/ur/ul).  Both are
  counterclockwise with area 1/(2 n^2).
* The mesh width h is the triangle diameter sqrt(2)/n.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sparse

SIDES = ("left", "right", "bottom", "top")

ALL_DIRICHLET = None  # forward declaration, assigned after BoundarySpec


@dataclass(frozen=True)
class BoundarySpec:
    """Which sides of the unit square carry Dirichlet data; the rest are Neumann."""

    dirichlet_sides: frozenset

    def __post_init__(self):
        unknown = set(self.dirichlet_sides) - set(SIDES)
        if unknown:
            raise ValueError(f"unknown sides: {sorted(unknown)}")

    @property
    def neumann_sides(self):
        return frozenset(SIDES) - self.dirichlet_sides


ALL_DIRICHLET = BoundarySpec(frozenset(SIDES))


@dataclass(eq=False)
class Mesh:
    n: int
    nodes: np.ndarray          # ((n+1)^2, 2) coordinates
    triangles: np.ndarray      # (2 n^2, 3) vertex indices, CCW
    boundary: BoundarySpec
    dirichlet_nodes: np.ndarray  # bool ((n+1)^2,)
    neumann_edges: np.ndarray    # (m, 2) node pairs on Neumann sides
    neumann_edge_tri: np.ndarray  # (m,) adjacent triangle per Neumann edge
    parent_of: np.ndarray | None = None  # fine triangle -> coarse triangle
    _vertex_incidence: sparse.csr_matrix | None = field(default=None, repr=False)

    @property
    def h(self):
        """Triangle diameter (the hypotenuse), sqrt(2)/n."""
        return np.sqrt(2.0) / self.n

    @property
    def n_nodes(self):
        return self.nodes.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def vertex_incidence(self):
        """Sparse node x triangle incidence (0/1 entries), built lazily."""
        if self._vertex_incidence is None:
            nt = self.n_triangles
            cols = np.repeat(np.arange(nt), 3)
            rows = self.triangles.ravel()
            self._vertex_incidence = sparse.csr_matrix(
                (np.ones(3 * nt), (rows, cols)),
                shape=(self.n_nodes, nt),
            )
        return self._vertex_incidence

    def triangle_areas(self):
        p = self.nodes[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def barycenters(self):
        return self.nodes[self.triangles].mean(axis=1)


@dataclass(frozen=True)
class Patch:
    """ω_k(T): k layers of vertex-adjacent coarse elements around element T."""

    center_element: int
    k: int | None
    coarse_elements: np.ndarray    # sorted coarse triangle indices
    fine_elements: np.ndarray      # sorted fine triangle indices
    interior_fine_dofs: np.ndarray  # fine dofs free within the patch
    constraint_nodes: np.ndarray   # coarse free nodes whose support meets the patch


def _node_side_masks(n, coords):
    x, y = coords[:, 0], coords[:, 1]
    return {
        "left": np.isclose(x, 0.0),
        "right": np.isclose(x, 1.0),
        "bottom": np.isclose(y, 0.0),
        "top": np.isclose(y, 1.0),
    }


def _boundary_edges(n):
    """Per side: (edge node pairs, adjacent triangle index), in fixed order."""

    def sq(ix, iy):
        return iy * n + ix

    def nd(ix, iy):
        return iy * (n + 1) + ix

    out = {}
    r = np.arange(n)
    # bottom edges belong to the lower triangle of square (ix, 0)
    out["bottom"] = (np.column_stack([nd(r, 0), nd(r + 1, 0)]), 2 * sq(r, 0))
    # right edges (lr-ur) belong to the lower triangle of square (n-1, iy)
    out["right"] = (np.column_stack([nd(n, r), nd(n, r + 1)]), 2 * sq(n - 1, r))
    # top edges (ul-ur) belong to the upper triangle of square (ix, n-1)
    out["top"] = (np.column_stack([nd(r, n), nd(r + 1, n)]), 2 * sq(r, n - 1) + 1)
    # left edges (ll-ul) belong to the upper triangle of square (0, iy)
    out["left"] = (np.column_stack([nd(0, r), nd(0, r + 1)]), 2 * sq(0, r) + 1)
    return out


def build_uniform_mesh(n, boundary=ALL_DIRICHLET):
    if n < 1:
        raise ValueError(f"mesh needs at least one square per side, got n={n}")
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)  # indexing 'xy': row = iy, col = ix
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    sq_ix = np.tile(np.arange(n), n)
    sq_iy = np.repeat(np.arange(n), n)
    ll = sq_iy * (n + 1) + sq_ix
    lr = ll + 1
    ul = ll + (n + 1)
    ur = ul + 1
    tris = np.empty((2 * n * n, 3), dtype=np.int64)
    tris[0::2] = np.column_stack([ll, lr, ur])
    tris[1::2] = np.column_stack([ll, ur, ul])

    side_masks = _node_side_masks(n, nodes)
    dirichlet = np.zeros(nodes.shape[0], dtype=bool)
    for side in boundary.dirichlet_sides:
        dirichlet |= side_masks[side]

    edge_info = _boundary_edges(n)
    npairs, ntris = [], []
    for side in SIDES:  # fixed order for determinism
        if side in boundary.neumann_sides:
            pairs, adj = edge_info[side]
            npairs.append(pairs)
            ntris.append(adj)
    if npairs:
        neumann_edges = np.vstack(npairs)
        neumann_edge_tri = np.concatenate(ntris)
    else:
        neumann_edges = np.empty((0, 2), dtype=np.int64)
        neumann_edge_tri = np.empty(0, dtype=np.int64)

    return Mesh(
        n=n,
        nodes=nodes,
        triangles=tris,
        boundary=boundary,
        dirichlet_nodes=dirichlet,
        neumann_edges=neumann_edges,
        neumann_edge_tri=neumann_edge_tri,
    )


def refine_to(coarse, n_fine):
    """Refine to an n_fine x n_fine mesh whose triangles nest in coarse ones.

    n_fine must be a positive multiple of coarse.n; the returned mesh carries
    parent_of.  The parent of a fine triangle follows from integer arithmetic:
    fine squares on the coarse square's diagonal strip are cut by the coarse
    diagonal along their own diagonal, all others lie wholly on one side.
    """
    nc = coarse.n
    if n_fine < 1 or n_fine % nc != 0:
        raise ValueError(f"n_fine={n_fine} is not a positive multiple of {nc}")
    fine = build_uniform_mesh(n_fine, coarse.boundary)
    r = n_fine // nc

    t = np.arange(fine.n_triangles)
    s = t % 2
    square = t // 2
    fx, fy = square % n_fine, square // n_fine
    cx, cy = fx // r, fy // r
    lx, ly = fx % r, fy % r
    side = np.where(ly < lx, 0, np.where(ly > lx, 1, s))
    fine.parent_of = 2 * (cy * nc + cx) + side
    return fine


def _expand_elements(mesh, mask, rounds):
    inc = mesh.vertex_incidence()
    for _ in range(rounds):
        grown = (inc.T @ (inc @ mask)) > 0
        if grown.sum() == mask.sum():  # grown always contains mask
            break
        mask = grown
    return mask


def _submesh_constrained_nodes(mesh, element_mask):
    """Nodes a patch function must vanish at: the submesh boundary except
    where it lies on a global Neumann edge, plus all Dirichlet nodes."""
    tris = mesh.triangles[element_mask]
    edges = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    edges.sort(axis=1)
    key = edges[:, 0] * mesh.n_nodes + edges[:, 1]
    uniq, counts = np.unique(key, return_counts=True)
    bkey = uniq[counts == 1]

    if mesh.neumann_edges.shape[0]:
        ne = np.sort(mesh.neumann_edges, axis=1)
        nkey = ne[:, 0] * mesh.n_nodes + ne[:, 1]
        bkey = bkey[~np.isin(bkey, nkey)]

    constrained = np.zeros(mesh.n_nodes, dtype=bool)
    constrained[bkey // mesh.n_nodes] = True
    constrained[bkey % mesh.n_nodes] = True
    constrained |= mesh.dirichlet_nodes
    return constrained


def element_patch(coarse, fine, T, k):
    """Extract ω_k(T) plus the fine/coarse index sets corrector solves need.

    k=None requests the saturated patch (the whole domain), which realizes
    the ideal (untruncated) corrector as a special case.
    """
    if not 0 <= T < coarse.n_triangles:
        raise ValueError(f"element index {T} out of range")
    if k is not None and k < 0:
        raise ValueError("k must be nonnegative")
    if fine.parent_of is None:
        raise ValueError("fine mesh lacks a parent map")

    mask = np.zeros(coarse.n_triangles, dtype=bool)
    mask[T] = True
    rounds = coarse.n_triangles if k is None else k
    mask = _expand_elements(coarse, mask, rounds)
    coarse_elements = np.flatnonzero(mask)

    fine_mask = mask[fine.parent_of]
    fine_elements = np.flatnonzero(fine_mask)

    patch_nodes = np.zeros(fine.n_nodes, dtype=bool)
    patch_nodes[fine.triangles[fine_mask].ravel()] = True
    constrained = _submesh_constrained_nodes(fine, fine_mask)
    free_nodes = np.flatnonzero(patch_nodes & ~constrained)
    interior_fine_dofs = np.repeat(2 * free_nodes, 2) + np.tile([0, 1], free_nodes.size)

    cnodes = np.zeros(coarse.n_nodes, dtype=bool)
    cnodes[coarse.triangles[mask].ravel()] = True
    cnodes &= ~coarse.dirichlet_nodes
    constraint_nodes = np.flatnonzero(cnodes)

    return Patch(
        center_element=T,
        k=k,
        coarse_elements=coarse_elements,
        fine_elements=fine_elements,
        interior_fine_dofs=interior_fine_dofs,
        constraint_nodes=constraint_nodes,
    )
