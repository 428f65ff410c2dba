"""Localized orthogonal decomposition for the elasticity bilinear form.

The fine space splits as V_h = V_ms ⊕ V_f with V_f = ker I_H.  Element
correctors R^T_{f,k} v solve, on the patch ω_k(T),

    B(R^T_{f,k} v, w) = B(v, w)_T    for all w ∈ V_f(ω_k(T)),

realized as a sparse KKT system: the patch stiffness block constrained by the
I_H rows of the coarse free nodes whose support meets the patch (rows that
vanish on the patch dofs are pruned).  Summing over elements gives R_{f,k};
the multiscale basis is {λ_{z,i} − Q_k λ_{z,i}}.  k=None saturates every patch
and recovers the ideal (global) method through the same code path.
"""

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

from . import fem
from .fem import DofMap, direct_solve
from .interpolation import build_interpolation
from .mesh import element_patch

KKT_TOL = 1e-9


def vector_dofs(nodes):
    """Interleaved (x, y) dof indices for the given node indices."""
    nodes = np.asarray(nodes)
    return np.repeat(2 * nodes, 2) + np.tile([0, 1], nodes.size)


class SystemContext:
    """Fine-grid operators shared by every corrector solve on one mesh pair."""

    def __init__(self, coarse, fine, coeff):
        if fine.parent_of is None:
            raise ValueError("fine mesh must be a refinement carrying parent_of")
        self.coarse = coarse
        self.fine = fine
        self.coeff = coeff
        self.dofs_c = DofMap.from_mesh(coarse)
        self.dofs_f = DofMap.from_mesh(fine)
        self.blocks = fem.element_stiffness(fine, coeff)
        self.edof = fem.element_dofs(fine)
        self.K = fem.assemble_from_blocks(self.blocks, self.edof, self.dofs_f.n_dofs)
        self.K_free = self.dofs_f.restrict(self.K)
        self.interp = build_interpolation(coarse, fine)
        order = np.argsort(fine.parent_of, kind="stable")
        counts = np.bincount(fine.parent_of, minlength=coarse.n_triangles)
        self.children = np.split(order, np.cumsum(counts)[:-1])
        self._saturated_system = None

    def elementwise_rhs(self, T, v):
        """B(v, ·) restricted to fine elements with parent T (full fine vector)."""
        els = self.children[T]
        ed = self.edof[els]
        out = np.zeros(self.dofs_f.n_dofs)
        np.add.at(out, ed, np.einsum("eab,eb->ea", self.blocks[els], v[ed]))
        return out


@dataclass(frozen=True)
class PatchSystem:
    """Factorized saddle-point system of one patch."""

    idofs: np.ndarray
    n_constraints: int
    kkt: sparse.csc_matrix
    lu: object

    def solve(self, rhs):
        """Solve for columns of rhs (given on idofs); verifies the residual."""
        ni = self.idofs.size
        rhs = rhs if rhs.ndim == 2 else rhs[:, None]
        aug = np.vstack([rhs, np.zeros((self.n_constraints, rhs.shape[1]))])
        if not np.any(aug):
            return aug[:ni]
        sol = self.lu.solve(aug)
        scale = np.maximum(np.linalg.norm(aug, axis=0), 1e-300)
        resid = np.linalg.norm(aug - self.kkt @ sol, axis=0)
        for _ in range(2):
            if np.all(resid <= KKT_TOL * scale):
                break
            sol = sol + self.lu.solve(aug - self.kkt @ sol)
            resid = np.linalg.norm(aug - self.kkt @ sol, axis=0)
        if np.any(resid > KKT_TOL * scale):
            raise RuntimeError(
                f"corrector KKT relative residual {(resid / scale).max():.3e} "
                f"exceeds {KKT_TOL:.1e}"
            )
        return sol[:ni]


def build_patch_system(ctx, patch):
    """Assemble and factorize one patch KKT system; None if the patch has no
    free fine dofs (its correctors vanish).  Saturated patches all share the
    same system, so that factorization is computed once and reused."""
    saturated = patch.coarse_elements.size == ctx.coarse.n_triangles
    if saturated and ctx._saturated_system is not None:
        return ctx._saturated_system
    idofs = patch.interior_fine_dofs
    if idofs.size == 0:
        return None
    K_pp = ctx.K[idofs][:, idofs]
    C = ctx.interp.interp_full[vector_dofs(patch.constraint_nodes)][:, idofs].tocsr()
    C.eliminate_zeros()
    C = C[np.flatnonzero(np.diff(C.indptr))]  # prune rows with no patch support
    if C.shape[0]:
        kkt = sparse.bmat([[K_pp, C.T], [C, None]], format="csc")
    else:
        kkt = sparse.csc_matrix(K_pp)
    try:
        lu = spla.splu(kkt)
    except RuntimeError as err:
        raise RuntimeError(
            f"singular patch KKT system around element {patch.center_element}"
        ) from err
    system = PatchSystem(idofs=idofs, n_constraints=C.shape[0], kkt=kkt, lu=lu)
    if saturated:
        ctx._saturated_system = system
    return system


def solve_element_corrector(ctx, T, v, k):
    """R^T_{f,k} v as a full fine vector (zero outside the patch)."""
    patch = element_patch(ctx.coarse, ctx.fine, T, k)
    out = np.zeros(ctx.dofs_f.n_dofs)
    system = build_patch_system(ctx, patch)
    if system is None:
        return out
    rhs = ctx.elementwise_rhs(T, v)[system.idofs]
    out[system.idofs] = system.solve(rhs)[:, 0]
    return out


def _basis_rhs_columns(ctx, T):
    """B(λ_{z,c}, ·)_T for the six local coarse basis fields, (2N_f, 6).

    Column 2a+c belongs to local vertex a, component c; the coarse hats are
    evaluated at fine nodes through the exact affine map of element T.
    """
    els = ctx.children[T]
    pc = ctx.coarse.nodes[ctx.coarse.triangles[T]]
    ainv = np.linalg.inv(np.column_stack([pc[1] - pc[0], pc[2] - pc[0]]))
    x = ctx.fine.nodes[ctx.fine.triangles[els]]
    loc = (x - pc[0]) @ ainv.T
    lam = np.empty((els.size, 3, 3))
    lam[:, :, 1:] = loc
    lam[:, :, 0] = 1.0 - loc.sum(axis=2)

    L = np.zeros((els.size, 6, 6))
    L[:, 0::2, 0::2] = lam
    L[:, 1::2, 1::2] = lam
    vals = np.einsum("eab,ebk->eak", ctx.blocks[els], L)
    out = np.zeros((ctx.dofs_f.n_dofs, 6))
    np.add.at(out, ctx.edof[els], vals)
    return out


@dataclass(frozen=True)
class CorrectorSet:
    """Columns Q_k λ_{z,c} for every coarse dof 2z+c (zero at Dirichlet dofs)."""

    k: int | None
    matrix: sparse.csc_matrix  # (2 N_fine, 2 N_coarse)


def build_corrector_set(ctx, k):
    rows, cols, vals = [], [], []
    free_node = ~ctx.coarse.dirichlet_nodes
    for T in range(ctx.coarse.n_triangles):  # ascending order fixes the fp sums
        zs = ctx.coarse.triangles[T]
        local = np.flatnonzero(free_node[zs])
        if local.size == 0:
            continue
        system = build_patch_system(ctx, element_patch(ctx.coarse, ctx.fine, T, k))
        if system is None:
            continue
        basis_cols = vector_dofs(local)
        rhs = _basis_rhs_columns(ctx, T)[np.ix_(system.idofs, basis_cols)]
        W = system.solve(rhs)
        gdofs = vector_dofs(zs[local])
        for j, g in enumerate(gdofs):
            rows.append(system.idofs)
            cols.append(np.full(system.idofs.size, g))
            vals.append(W[:, j])
    if rows:
        Q = sparse.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(ctx.dofs_f.n_dofs, ctx.dofs_c.n_dofs),
        ).tocsc()
    else:
        Q = sparse.csc_matrix((ctx.dofs_f.n_dofs, ctx.dofs_c.n_dofs))
    return CorrectorSet(k=k, matrix=Q)


def multiscale_basis(ctx, correctors):
    """ψ columns (free fine dofs x free coarse dofs): prolonged hats minus correctors."""
    full = ctx.interp.prolong_full - correctors.matrix
    return full[ctx.dofs_f.free_dofs][:, ctx.dofs_c.free_dofs].tocsr()


def build_neumann_corrector(ctx, b, k):
    """Localized b̃_{f,k}: patch solves with rhs (b, ·) over Γ_N ∩ ∂T, summed."""
    out = np.zeros(ctx.dofs_f.n_dofs)
    if b is None or ctx.fine.neumann_edges.shape[0] == 0:
        return out
    parents = ctx.fine.parent_of[ctx.fine.neumann_edge_tri]
    for T in np.unique(parents):
        load = fem.assemble_neumann_load(
            ctx.fine, b, edges=ctx.fine.neumann_edges[parents == T]
        )
        system = build_patch_system(ctx, element_patch(ctx.coarse, ctx.fine, T, k))
        if system is None:
            continue
        out[system.idofs] += system.solve(load[system.idofs])[:, 0]
    return out


def build_dirichlet_corrector(ctx, g, k):
    """R_{f,k} g for a fine vector g supported on Dirichlet dofs."""
    out = np.zeros(ctx.dofs_f.n_dofs)
    if g is None or not np.any(g):
        return out
    for T in range(ctx.coarse.n_triangles):
        system = build_patch_system(ctx, element_patch(ctx.coarse, ctx.fine, T, k))
        if system is None:
            continue
        rhs = ctx.elementwise_rhs(T, g)[system.idofs]
        out[system.idofs] += system.solve(rhs)[:, 0]
    return out


def solve_fine_projection(ctx, v):
    """Ideal global Ritz projection R_f v onto V_f (one KKT solve on Ω)."""
    free = ctx.dofs_f.free_dofs
    C = ctx.interp.interp_free
    kkt = sparse.bmat([[ctx.K_free, C.T], [C, None]], format="csc")
    rhs = np.concatenate([(ctx.K @ v)[free], np.zeros(C.shape[0])])
    lu = spla.splu(kkt)
    sol = lu.solve(rhs)
    scale = max(np.linalg.norm(rhs), 1e-300)
    resid = np.linalg.norm(rhs - kkt @ sol)
    for _ in range(2):
        if resid <= KKT_TOL * scale:
            break
        sol = sol + lu.solve(rhs - kkt @ sol)
        resid = np.linalg.norm(rhs - kkt @ sol)
    if resid > KKT_TOL * scale:
        raise RuntimeError("global projection residual exceeds tolerance")
    return ctx.dofs_f.scatter(sol[: free.size])


@dataclass(frozen=True)
class GfemSolution:
    u: np.ndarray               # full fine-grid displacement
    coarse_coeffs: np.ndarray   # coefficients of the multiscale basis
    correctors: CorrectorSet


def solve_gfem(ctx, problem, k, correctors=None):
    """Localized GFEM solve; k=None gives the ideal (untruncated) method."""
    if correctors is None:
        correctors = build_corrector_set(ctx, k)
    psi = multiscale_basis(ctx, correctors)

    rhs_full = fem.assemble_load(ctx.fine, problem.body_force)
    if problem.neumann_data is not None:
        rhs_full += fem.assemble_neumann_load(ctx.fine, problem.neumann_data)

    g = problem.dirichlet_values
    if g is not None:
        g = np.asarray(g, dtype=float)
        if np.any(g[ctx.dofs_f.free_dofs] != 0):
            raise ValueError("dirichlet_values must vanish at free dofs")
    else:
        g = np.zeros(ctx.dofs_f.n_dofs)

    extra = (
        build_neumann_corrector(ctx, problem.neumann_data, k)
        - build_dirichlet_corrector(ctx, g, k)
        + g
    )

    free = ctx.dofs_f.free_dofs
    M = (psi.T @ (ctx.K_free @ psi)).tocsc()
    rhs = psi.T @ (rhs_full[free] - (ctx.K @ extra)[free])
    c = direct_solve(M, rhs, label="gfem coarse solve")
    u = ctx.dofs_f.scatter(psi @ c) + extra
    return GfemSolution(u=u, coarse_coeffs=c, correctors=correctors)


def measure_corrector_decay(ctx, T, v, k_max):
    """Tail energies e_k = ‖∇R^T_f v‖ over Ω \\ ω_k(T), k = 0..k_max."""
    w = solve_element_corrector(ctx, T, v, None)
    per_element = fem.h1_seminorm_per_element(ctx.fine, w)
    tails = np.empty(k_max + 1)
    for k in range(k_max + 1):
        patch = element_patch(ctx.coarse, ctx.fine, T, k)
        outside = np.ones(ctx.fine.n_triangles, dtype=bool)
        outside[patch.fine_elements] = False
        tails[k] = np.sqrt(per_element[outside].sum())
    return tails


def localization_schedule(H):
    """Patch depth k = max(1, ⌈0.8 ln(1/H)⌉)."""
    if not 0.0 < H < 1.0:
        raise ValueError(f"mesh width H={H} outside (0, 1)")
    return max(1, math.ceil(0.8 * math.log(1.0 / H)))
