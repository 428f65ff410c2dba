"""Experiment inputs: coefficient fields and the locking benchmark.

The locking benchmark (Brenner-type) uses μ=1 and the manufactured solution

    u₁ = (cos 2πx − 1) sin 2πy + sin πx sin πy / (1+λ)
    u₂ = sin 2πx (1 − cos 2πy) + sin πx sin πy / (1+λ)

whose divergence is π sin π(x+y) / (1+λ), so the solution stays well behaved
as λ → ∞ while plain P1 elements lock.  The matching body force of
−∇·σ(u) = f is

    f₁ = π² (4 sin 2πy (−1 + 2cos 2πx) − cos π(x+y) + 2 sin πx sin πy/(1+λ))
    f₂ = π² (4 sin 2πx (1 − 2cos 2πy) − cos π(x+y) + 2 sin πx sin πy/(1+λ))

both components vanish on ∂Ω, matching homogeneous Dirichlet conditions.
"""

from dataclasses import dataclass

import numpy as np

from .fem import CoefficientField, ProblemSpec


def constant_coefficients(mu, lam):
    return CoefficientField(grid_n=1, mu=np.array([mu]), lam=np.array([lam]))


def random_checkerboard(grid_n, lo, hi, seed):
    """Per-cell i.i.d. uniform [lo, hi] Lamé pairs; μ cells drawn first, then λ."""
    if grid_n < 1:
        raise ValueError("grid_n must be positive")
    if not 0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    rng = np.random.default_rng(seed)
    mu = rng.uniform(lo, hi, grid_n * grid_n)
    lam = rng.uniform(lo, hi, grid_n * grid_n)
    return CoefficientField(grid_n=grid_n, mu=mu, lam=lam)


def unit_body_force_problem(coeff):
    """f = [1 1]ᵀ, homogeneous Dirichlet on the whole boundary."""
    return ProblemSpec(coeff=coeff, body_force=np.array([1.0, 1.0]))


@dataclass(frozen=True)
class BrennerBenchmark:
    lam: float
    problem: ProblemSpec

    mu = 1.0

    def exact(self, points):
        """Exact displacement at (m, 2) points."""
        x, y = points[:, 0], points[:, 1]
        q = 1.0 / (1.0 + self.lam)
        s = np.sin(np.pi * x) * np.sin(np.pi * y)
        u1 = (np.cos(2 * np.pi * x) - 1.0) * np.sin(2 * np.pi * y) + q * s
        u2 = np.sin(2 * np.pi * x) * (1.0 - np.cos(2 * np.pi * y)) + q * s
        return np.column_stack([u1, u2])

    def body_force(self, points):
        x, y = points[:, 0], points[:, 1]
        q = 1.0 / (1.0 + self.lam)
        s = np.sin(np.pi * x) * np.sin(np.pi * y)
        cxy = np.cos(np.pi * (x + y))
        f1 = np.pi**2 * (
            4.0 * np.sin(2 * np.pi * y) * (-1.0 + 2.0 * np.cos(2 * np.pi * x))
            - cxy + 2.0 * q * s
        )
        f2 = np.pi**2 * (
            4.0 * np.sin(2 * np.pi * x) * (1.0 - 2.0 * np.cos(2 * np.pi * y))
            - cxy + 2.0 * q * s
        )
        return np.column_stack([f1, f2])

    def nodal_interpolant(self, mesh):
        """Exact solution sampled at mesh nodes, as an interleaved dof vector."""
        return self.exact(mesh.nodes).ravel()


def brenner_benchmark(lam):
    if lam <= 0:
        raise ValueError("lambda must be positive")
    lam = float(lam)
    shell = BrennerBenchmark(lam=lam, problem=None)
    problem = ProblemSpec(
        coeff=constant_coefficients(1.0, lam),
        body_force=shell.body_force,
    )
    return BrennerBenchmark(lam=lam, problem=problem)


def write_coefficient_text(coeff, path):
    """Plain-text grid format: grid_n header, then row-major μ lines, then λ."""
    with open(path, "w") as fh:
        fh.write(f"{coeff.grid_n}\n")
        for v in coeff.mu:
            fh.write(f"{v:.17g}\n")
        for v in coeff.lam:
            fh.write(f"{v:.17g}\n")


def read_coefficient_text(path):
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    grid_n = int(lines[0])
    ncell = grid_n * grid_n
    if len(lines) != 1 + 2 * ncell:
        raise ValueError(f"expected {1 + 2 * ncell} lines, found {len(lines)}")
    vals = np.array([float(v) for v in lines[1:]])
    return CoefficientField(grid_n=grid_n, mu=vals[:ncell], lam=vals[ncell:])
