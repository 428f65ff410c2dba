"""P1 vector finite elements for planar linear elasticity.

The bilinear form is B(u, v) = ∫ 2μ ε(u):ε(v) + λ (∇·u)(∇·v) dx with
piecewise-constant Lamé coefficients on a Cartesian cell grid.  Strains of P1
fields and the coefficients are constant per triangle, so the one-point
quadrature used by the assembly is exact.

Dofs interleave components: node z owns dofs 2z (x) and 2z+1 (y).  Dirichlet
conditions are imposed by symmetric row/column elimination, which keeps the
free block SPD.
"""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sparse
import scipy.sparse.linalg as spla

_GAUSS2 = np.array([-1.0, 1.0]) / np.sqrt(3.0)


@dataclass(frozen=True)
class CoefficientField:
    """Isotropic Lamé pair (μ, λ), constant on each cell of a grid_n x grid_n grid.

    Cells are numbered row-major like mesh squares.
    """

    grid_n: int
    mu: np.ndarray
    lam: np.ndarray

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float).ravel()
        lam = np.asarray(self.lam, dtype=float).ravel()
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "lam", lam)
        if self.grid_n < 1:
            raise ValueError("grid_n must be positive")
        expect = self.grid_n**2
        if mu.shape != (expect,) or lam.shape != (expect,):
            raise ValueError(f"need {expect} cell values per coefficient")
        if np.any(mu <= 0) or np.any(lam <= 0):
            raise ValueError("Lamé coefficients must be positive")

    def element_values(self, mesh):
        """Per-triangle (μ, λ), chosen by the cell containing the barycenter."""
        if mesh.n % self.grid_n != 0:
            raise ValueError(
                f"mesh n={mesh.n} does not resolve the coefficient grid "
                f"(grid_n={self.grid_n})"
            )
        bc = mesh.barycenters()
        ix = np.clip((bc[:, 0] * self.grid_n).astype(np.int64), 0, self.grid_n - 1)
        iy = np.clip((bc[:, 1] * self.grid_n).astype(np.int64), 0, self.grid_n - 1)
        cell = iy * self.grid_n + ix
        return self.mu[cell], self.lam[cell]


@dataclass(frozen=True)
class DofMap:
    """Free/Dirichlet partition of the 2·(node count) displacement dofs."""

    n_dofs: int
    is_free: np.ndarray
    free_dofs: np.ndarray

    @classmethod
    def from_mesh(cls, mesh):
        is_free = np.repeat(~mesh.dirichlet_nodes, 2)
        return cls(
            n_dofs=2 * mesh.n_nodes,
            is_free=is_free,
            free_dofs=np.flatnonzero(is_free),
        )

    @property
    def n_free(self):
        return self.free_dofs.size

    def restrict(self, matrix):
        return matrix[self.free_dofs][:, self.free_dofs]

    def scatter(self, v_free):
        v = np.zeros(self.n_dofs)
        v[self.free_dofs] = v_free
        return v


@dataclass(frozen=True)
class ProblemSpec:
    """Inputs of one boundary-value problem (the mesh is supplied separately)."""

    coeff: CoefficientField
    body_force: object                  # (2,) constant or callable points->(m,2)
    neumann_data: object = None         # same convention, on Γ_N only
    dirichlet_values: np.ndarray | None = None  # full fine vector, zero at free dofs


@dataclass(frozen=True)
class StiffnessOperator:
    """Assembled bilinear form: full matrix plus its free-dof restriction."""

    full: sparse.csr_matrix
    free: sparse.csr_matrix
    dofs: DofMap


def p1_gradients(mesh):
    """Constant gradients of the three barycentric hats, (nel, 3, 2)."""
    p = mesh.nodes[mesh.triangles]
    d1 = p[:, 1] - p[:, 0]
    d2 = p[:, 2] - p[:, 0]
    two_area = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    grads = np.empty((mesh.n_triangles, 3, 2))
    for i in range(3):
        j, k = (i + 1) % 3, (i + 2) % 3
        grads[:, i, 0] = p[:, j, 1] - p[:, k, 1]
        grads[:, i, 1] = p[:, k, 0] - p[:, j, 0]
    grads /= two_area[:, None, None]
    return grads


def element_dofs(mesh):
    """Interleaved local-to-global dof table, (nel, 6)."""
    edof = np.empty((mesh.n_triangles, 6), dtype=np.int64)
    edof[:, 0::2] = 2 * mesh.triangles
    edof[:, 1::2] = 2 * mesh.triangles + 1
    return edof


def element_stiffness(mesh, coeff, elements=None):
    """Per-element 6x6 stiffness blocks (exact one-point quadrature)."""
    mu, lam = coeff.element_values(mesh)
    grads = p1_gradients(mesh)
    areas = mesh.triangle_areas()
    if elements is not None:
        mu, lam = mu[elements], lam[elements]
        grads, areas = grads[elements], areas[elements]
    nel = areas.size

    # engineering-strain matrix: rows (ε_xx, ε_yy, γ_xy), columns interleaved
    B = np.zeros((nel, 3, 6))
    for i in range(3):
        B[:, 0, 2 * i] = grads[:, i, 0]
        B[:, 1, 2 * i + 1] = grads[:, i, 1]
        B[:, 2, 2 * i] = grads[:, i, 1]
        B[:, 2, 2 * i + 1] = grads[:, i, 0]

    D = np.zeros((nel, 3, 3))
    D[:, 0, 0] = D[:, 1, 1] = 2 * mu + lam
    D[:, 0, 1] = D[:, 1, 0] = lam
    D[:, 2, 2] = mu

    ke = np.einsum("eia,eij,ejb->eab", B, D, B) * areas[:, None, None]
    return 0.5 * (ke + ke.transpose(0, 2, 1))  # exact entrywise symmetry


def assemble_from_blocks(blocks, edof, n_dofs):
    rows = np.repeat(edof, 6, axis=1).ravel()
    cols = np.tile(edof, (1, 6)).ravel()
    K = sparse.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n_dofs, n_dofs))
    return K.tocsr()


def assemble_stiffness(mesh, coeff, dofs=None):
    if dofs is None:
        dofs = DofMap.from_mesh(mesh)
    ke = element_stiffness(mesh, coeff)
    K = assemble_from_blocks(ke, element_dofs(mesh), dofs.n_dofs)
    return StiffnessOperator(full=K, free=dofs.restrict(K), dofs=dofs)


def assemble_elementwise_rhs(mesh, coeff, T_coarse, v):
    """w ↦ B(v, w) restricted to fine elements whose parent is T_coarse."""
    if mesh.parent_of is None:
        raise ValueError("mesh has no parent map; refine a coarse mesh first")
    els = np.flatnonzero(mesh.parent_of == T_coarse)
    ke = element_stiffness(mesh, coeff, els)
    ed = element_dofs(mesh)[els]
    out = np.zeros(2 * mesh.n_nodes)
    np.add.at(out, ed, np.einsum("eab,eb->ea", ke, v[ed]))
    return out


def assemble_mass(mesh):
    """Consistent P1 vector mass matrix (full dofs); used for L2 norms."""
    areas = mesh.triangle_areas()
    s3 = np.array([[2.0, 1.0, 1.0], [1.0, 2.0, 1.0], [1.0, 1.0, 2.0]]) / 12.0
    block = np.kron(s3, np.eye(2))
    blocks = areas[:, None, None] * block[None]
    return assemble_from_blocks(blocks, element_dofs(mesh), 2 * mesh.n_nodes)


def _eval_force(f, points):
    if callable(f):
        vals = np.asarray(f(points), dtype=float)
        if vals.shape != points.shape:
            raise ValueError("body-force callable must return (m, 2) values")
        return vals
    return np.broadcast_to(np.asarray(f, dtype=float), points.shape)


def assemble_load(mesh, f):
    """(f, φ) for all fine dofs.

    Constant f integrates exactly (area/3 per vertex); a callable f is
    integrated with the degree-2 edge-midpoint rule.
    """
    areas = mesh.triangle_areas()
    load = np.zeros(2 * mesh.n_nodes)
    edof = element_dofs(mesh)
    if not callable(f):
        fvec = np.asarray(f, dtype=float)
        contrib = np.tile(fvec, 3)[None] * (areas / 3.0)[:, None]
        np.add.at(load, edof, contrib)
        return load

    p = mesh.nodes[mesh.triangles]
    mids = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])  # midpoint q opposite vertex q
    fq = _eval_force(f, mids.reshape(-1, 2)).reshape(mesh.n_triangles, 3, 2)
    # hat i at midpoint q: (1 - δ_iq)/2
    phi = 0.5 * (1.0 - np.eye(3))
    contrib = np.einsum("eqc,qi->eic", fq, phi) * (areas / 3.0)[:, None, None]
    np.add.at(load, edof, contrib.reshape(mesh.n_triangles, 6))
    return load


def assemble_neumann_load(mesh, b, edges=None):
    """(b, φ) over Neumann boundary edges (all of them, or a given subset),
    2-point Gauss per edge."""
    load = np.zeros(2 * mesh.n_nodes)
    if edges is None:
        edges = mesh.neumann_edges
    if b is None or edges.shape[0] == 0:
        return load
    pa = mesh.nodes[edges[:, 0]]
    pb = mesh.nodes[edges[:, 1]]
    mid, half = 0.5 * (pa + pb), 0.5 * (pb - pa)
    length = 2.0 * np.hypot(half[:, 0], half[:, 1])
    for t in _GAUSS2:
        xq = mid + t * half
        bq = _eval_force(b, xq)
        wa = 0.5 * length * 0.5 * (1.0 - t)
        wb = 0.5 * length * 0.5 * (1.0 + t)
        for c in range(2):
            np.add.at(load, 2 * edges[:, 0] + c, wa * bq[:, c])
            np.add.at(load, 2 * edges[:, 1] + c, wb * bq[:, c])
    return load


def direct_solve(A, b, tol=1e-10, label="linear system"):
    """Sparse direct solve with iterative refinement and a residual guard."""
    if b.ndim == 1 and not np.any(b):
        return np.zeros_like(b)
    A = sparse.csc_matrix(A)
    lu = spla.splu(A)
    x = lu.solve(b)
    scale = max(np.linalg.norm(b), 1e-300)
    resid = np.linalg.norm(b - A @ x)
    for _ in range(2):  # refinement for badly conditioned cases (large λ)
        if resid <= tol * scale:
            break
        x = x + lu.solve(b - A @ x)
        resid = np.linalg.norm(b - A @ x)
    if resid > tol * scale:
        raise RuntimeError(
            f"{label}: relative residual {resid / scale:.3e} exceeds {tol:.1e}"
        )
    return x


def solve_fem(problem, mesh):
    """Reference P1 solution: u = u_0 + g with B(u_0, v) = (f, v) + (b, v)_Γ − B(g, v)."""
    dofs = DofMap.from_mesh(mesh)
    op = assemble_stiffness(mesh, problem.coeff, dofs)
    rhs = assemble_load(mesh, problem.body_force)
    if problem.neumann_data is not None:
        rhs += assemble_neumann_load(mesh, problem.neumann_data)

    g = problem.dirichlet_values
    if g is not None:
        g = np.asarray(g, dtype=float)
        if g.shape != (dofs.n_dofs,):
            raise ValueError("dirichlet_values must be a full fine-grid vector")
        if np.any(g[dofs.free_dofs] != 0):
            raise ValueError("dirichlet_values must vanish at free dofs")
        rhs = rhs - op.full @ g

    u_free = direct_solve(op.free, rhs[dofs.free_dofs], label="fem solve")
    u = dofs.scatter(u_free)
    if g is not None:
        u = u + g
    return u


def h1_seminorm_per_element(mesh, v):
    """Per-element contributions ∫_T |∇v|² dx (both components)."""
    grads = p1_gradients(mesh)
    vloc = v[element_dofs(mesh)].reshape(mesh.n_triangles, 3, 2)
    G = np.einsum("eid,eic->ecd", grads, vloc)
    return mesh.triangle_areas() * (G**2).sum(axis=(1, 2))


def h1_seminorm(mesh, v):
    return float(np.sqrt(h1_seminorm_per_element(mesh, v).sum()))


def energy_norm(K, v):
    """√(vᵀKv) for any symmetric PSD sparse K matching v."""
    q = float(v @ (K @ v))
    return float(np.sqrt(max(q, 0.0)))


def relative_h1_error(mesh, approx, reference):
    """‖∇(reference − approx)‖ / ‖∇reference‖ (the fixed error convention)."""
    return h1_seminorm(mesh, reference - approx) / h1_seminorm(mesh, reference)
