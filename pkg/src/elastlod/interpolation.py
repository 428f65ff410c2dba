"""Quasi-interpolation between nested P1 spaces.

I_H = E_H ∘ Π_H, applied to each displacement component independently:

* Π_H projects a fine P1 function onto the (discontinuous) piecewise-affine
  space of the coarse mesh, one exact 3x3 mass solve per coarse element; the
  right-hand sides are exact fine-against-coarse integrals (midpoint rule per
  fine child, exact for the quadratic integrand).
* E_H recovers a continuous coarse function by averaging the per-element
  affine values at each free coarse node; Dirichlet nodes are set to zero.

The kernel of the assembled matrix is the fine-scale space the correctors
live in.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse

from .fem import DofMap

# inverse of the unit P1 mass matrix [[2,1,1],[1,2,1],[1,1,2]]/12, times area
_S3_INV = 0.25 * np.array([[3.0, -1.0, -1.0], [-1.0, 3.0, -1.0], [-1.0, -1.0, 3.0]])


def build_l2_projection(coarse, fine):
    """Sparse map: fine node values -> per-element affine coefficients (3T+a)."""
    if fine.parent_of is None:
        raise ValueError("fine mesh lacks a parent map")
    parents = fine.parent_of
    tri_nodes = fine.triangles

    # barycentric coordinates of fine edge midpoints within the parent element
    pc = coarse.nodes[coarse.triangles[parents]]
    x = fine.nodes[tri_nodes]
    mids = 0.5 * (x[:, [1, 2, 0]] + x[:, [2, 0, 1]])
    d1 = pc[:, 1] - pc[:, 0]
    d2 = pc[:, 2] - pc[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rel = mids - pc[:, None, 0]
    l1 = (rel[:, :, 0] * d2[:, None, 1] - rel[:, :, 1] * d2[:, None, 0]) / det[:, None]
    l2 = (d1[:, None, 0] * rel[:, :, 1] - d1[:, None, 1] * rel[:, :, 0]) / det[:, None]
    lam = np.stack([1.0 - l1 - l2, l1, l2], axis=2)  # (el, midpoint, coarse vertex)

    phi = 0.5 * (1.0 - np.eye(3))  # fine hat i at midpoint q
    weights = fine.triangle_areas() / 3.0
    contrib = np.einsum("eqa,qi->eai", lam, phi) * weights[:, None, None]

    nel = fine.n_triangles
    rows = np.broadcast_to(3 * parents[:, None, None] + np.arange(3)[None, :, None],
                           (nel, 3, 3))
    cols = np.broadcast_to(tri_nodes[:, None, :], (nel, 3, 3))
    R = sparse.coo_matrix(
        (contrib.ravel(), (rows.ravel(), cols.ravel())),
        shape=(3 * coarse.n_triangles, fine.n_nodes),
    ).tocsr()

    area = 1.0 / (2.0 * coarse.n**2)
    minv = sparse.kron(
        sparse.identity(coarse.n_triangles, format="csr"), _S3_INV * (12.0 / area),
        format="csr",
    )
    return minv @ R


def build_averaging(coarse):
    """Node-averaging E_H: per-element affine coefficients -> coarse node values."""
    nodes = coarse.triangles.ravel()
    cols = np.arange(nodes.size)
    card = np.bincount(nodes, minlength=coarse.n_nodes).astype(float)
    keep = ~coarse.dirichlet_nodes[nodes]
    return sparse.coo_matrix(
        (1.0 / card[nodes[keep]], (nodes[keep], cols[keep])),
        shape=(coarse.n_nodes, nodes.size),
    ).tocsr()


def _prolongation_scalar(coarse, fine):
    """Coarse hat values at fine nodes, from exact integer grid arithmetic."""
    nc, nf = coarse.n, fine.n
    r = nf // nc
    idx = np.arange(fine.n_nodes)
    gx, gy = idx % (nf + 1), idx // (nf + 1)
    ix = np.minimum(gx // r, nc - 1)
    iy = np.minimum(gy // r, nc - 1)
    xi = (gx - r * ix) / r
    eta = (gy - r * iy) / r

    ll = iy * (nc + 1) + ix
    lr, ul = ll + 1, ll + nc + 1
    ur = ul + 1
    lower = eta <= xi
    cols = np.where(lower[:, None], np.column_stack([ll, lr, ur]),
                    np.column_stack([ll, ur, ul]))
    vals = np.where(lower[:, None],
                    np.column_stack([1.0 - xi, xi - eta, eta]),
                    np.column_stack([1.0 - eta, xi, eta - xi]))
    rows = np.repeat(idx, 3)
    P = sparse.coo_matrix(
        (vals.ravel(), (rows, cols.ravel())),
        shape=(fine.n_nodes, coarse.n_nodes),
    ).tocsr()
    P.eliminate_zeros()
    return P


@dataclass(frozen=True)
class InterpolationOperator:
    coarse_dofs: DofMap
    fine_dofs: DofMap
    scalar_interp: sparse.csr_matrix    # (Nc, Nf)
    scalar_prolong: sparse.csr_matrix   # (Nf, Nc)
    interp_full: sparse.csr_matrix      # (2Nc, 2Nf), interleaved components
    prolong_full: sparse.csr_matrix     # (2Nf, 2Nc)
    interp_free: sparse.csr_matrix
    prolong_free: sparse.csr_matrix


def build_interpolation(coarse, fine):
    proj = build_l2_projection(coarse, fine)
    avg = build_averaging(coarse)
    i_s = (avg @ proj).tocsr()
    i_s.eliminate_zeros()
    p_s = _prolongation_scalar(coarse, fine)

    eye2 = sparse.identity(2, format="csr")
    interp_full = sparse.kron(i_s, eye2, format="csr")
    prolong_full = sparse.kron(p_s, eye2, format="csr")
    dc = DofMap.from_mesh(coarse)
    df = DofMap.from_mesh(fine)
    return InterpolationOperator(
        coarse_dofs=dc,
        fine_dofs=df,
        scalar_interp=i_s,
        scalar_prolong=p_s,
        interp_full=interp_full,
        prolong_full=prolong_full,
        interp_free=interp_full[dc.free_dofs][:, df.free_dofs].tocsr(),
        prolong_free=prolong_full[df.free_dofs][:, dc.free_dofs].tocsr(),
    )
