"""Experiment driver: convergence studies, corrector decay, CSV tables, plots.

Four canned cases on the unit square with homogeneous Dirichlet data:

    constant    μ = λ = 1, f = [1 1]ᵀ
    multiscale  seeded 32x32 checkerboard, μ, λ ∈ [0.1, 10], f = [1 1]ᵀ
    locking     Brenner-type benchmark with λ = 1e3 (near incompressibility)
    decay       corrector tail energies vs patch depth k on a checkerboard

Convergence cases solve one fine reference, then per coarse level the
localized GFEM solution and the coarse P1 solution (exact Galerkin restriction
through the prolongation, so the fine-scale coefficient is what both methods
see).  Errors are relative H1 seminorms against the fine reference.
"""

import argparse
import math
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import fem, lod, problems
from .mesh import build_uniform_mesh, refine_to

CASES = ("constant", "multiscale", "locking", "decay")
DEFAULT_SEED = 0
LOCKING_LAMBDA = 1.0e3
CHECKERBOARD_LO = 0.1
CHECKERBOARD_HI = 10.0
MULTISCALE_GRID = 32
DECAY_GRID = 8
DECAY_K_DEFAULT = (0, 1, 2, 3, 4, 5)

CSV_HEADER = "H,k,err_gfem,err_fem,slope_gfem,slope_fem"
DECAY_CSV_HEADER = "element,k,tail_energy"


@dataclass(frozen=True)
class ExperimentConfig:
    case: str
    fine: int
    coarse: tuple
    k: tuple | None = None
    seed: int = DEFAULT_SEED
    out: Path | None = None
    plots: bool = False

    def __post_init__(self):
        if self.case not in CASES:
            raise ValueError(f"unknown case {self.case!r}, expected one of {CASES}")
        if self.fine < 1:
            raise ValueError("fine must be a positive square count per side")
        if not self.coarse:
            raise ValueError("need at least one coarse level")
        for n in self.coarse:
            if n < 1 or self.fine % n != 0:
                raise ValueError(
                    f"coarse level {n} must be positive and divide fine={self.fine}"
                )
        if self.case == "decay":
            if len(self.coarse) != 1:
                raise ValueError("decay case expects exactly one coarse level")
            if self.coarse[0] < 4:
                raise ValueError("decay case needs at least 4 coarse squares per side")
            if self.fine % DECAY_GRID != 0:
                raise ValueError(f"decay case needs fine divisible by {DECAY_GRID}")
            if self.k is not None and (not self.k or any(k < 0 for k in self.k)):
                raise ValueError("decay k values must be a nonempty list of k >= 0")
        else:
            if self.k is not None and len(self.k) != len(self.coarse):
                raise ValueError(
                    f"k list length {len(self.k)} != coarse levels {len(self.coarse)}"
                )
            if self.k is not None and any(k < 0 for k in self.k):
                raise ValueError("k values must be >= 0")
        if self.case == "multiscale" and self.fine % MULTISCALE_GRID != 0:
            raise ValueError(f"multiscale case needs fine divisible by {MULTISCALE_GRID}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in an unsigned 64-bit integer")
        if self.plots and self.out is None:
            raise ValueError("--plots requires --out")

    def k_schedule(self):
        if self.case == "decay":
            return self.k if self.k is not None else DECAY_K_DEFAULT
        if self.k is not None:
            return self.k
        return tuple(lod.localization_schedule(math.sqrt(2.0) / n) for n in self.coarse)


@dataclass(frozen=True)
class LevelResult:
    n_coarse: int
    H: float
    k: int
    err_gfem: float
    err_fem: float
    seconds: float


@dataclass(frozen=True)
class ConvergenceReport:
    case: str
    levels: tuple
    slope_gfem: float
    slope_fem: float
    locking_discretization: float | None = None


@dataclass(frozen=True)
class DecayRow:
    element: int
    k: int
    tail_energy: float


@dataclass(frozen=True)
class DecayReport:
    case: str
    rows: tuple


def fit_slope(H, err):
    """Least-squares slope of log err vs log H over all levels."""
    H = np.asarray(H, dtype=float)
    err = np.asarray(err, dtype=float)
    if H.size < 2:
        return float("nan")
    return float(np.polyfit(np.log(H), np.log(err), 1)[0])


def _case_inputs(config):
    """(problem, benchmark-or-None) for the convergence cases."""
    if config.case == "constant":
        coeff = problems.constant_coefficients(1.0, 1.0)
        return problems.unit_body_force_problem(coeff), None
    if config.case == "multiscale":
        coeff = problems.random_checkerboard(
            MULTISCALE_GRID, CHECKERBOARD_LO, CHECKERBOARD_HI, config.seed
        )
        return problems.unit_body_force_problem(coeff), None
    bench = problems.brenner_benchmark(LOCKING_LAMBDA)
    return bench.problem, bench


def coarse_galerkin_solution(ctx, problem):
    """Coarse P1 solution computed as the exact Galerkin restriction of the
    fine operator, returned on the fine grid."""
    P = ctx.interp.prolong_free
    A = (P.T @ (ctx.K_free @ P)).tocsc()
    rhs_full = fem.assemble_load(ctx.fine, problem.body_force)
    if problem.neumann_data is not None:
        rhs_full += fem.assemble_neumann_load(ctx.fine, problem.neumann_data)
    rhs = P.T @ rhs_full[ctx.dofs_f.free_dofs]
    uc = fem.direct_solve(A, rhs, label="coarse fem solve")
    return ctx.dofs_f.scatter(P @ uc)


def decay_elements(n_coarse):
    """Three deterministic interior elements (lower triangles)."""
    n = n_coarse
    squares = ((n // 2, n // 2), (n // 4, n // 4), (n // 2, n // 4))
    return tuple(2 * (iy * n + ix) for ix, iy in squares)


def _probe_field(ctx, T):
    """Prolonged x-component hat of the first vertex of element T.

    A single hat keeps a nonzero strain on T itself; summing the local hats
    would be constant on T and make the corrector right-hand side vanish.
    """
    e = np.zeros(ctx.dofs_c.n_dofs)
    e[2 * ctx.coarse.triangles[T][0]] = 1.0
    return ctx.interp.prolong_full @ e


def run_experiment(config):
    if config.case == "decay":
        return _run_decay(config)
    problem, bench = _case_inputs(config)
    fine = build_uniform_mesh(config.fine)
    u_h = fem.solve_fem(problem, fine)

    locking_disc = None
    if bench is not None:
        ih_u = bench.nodal_interpolant(fine)
        locking_disc = fem.relative_h1_error(fine, u_h, ih_u)

    levels = []
    for n_c, k in zip(config.coarse, config.k_schedule()):
        t0 = time.perf_counter()
        coarse = build_uniform_mesh(n_c)
        fine_level = refine_to(coarse, config.fine)
        ctx = lod.SystemContext(coarse, fine_level, problem.coeff)
        gfem = lod.solve_gfem(ctx, problem, k)
        err_gfem = fem.relative_h1_error(fine_level, gfem.u, u_h)
        u_fem = coarse_galerkin_solution(ctx, problem)
        err_fem = fem.relative_h1_error(fine_level, u_fem, u_h)
        levels.append(
            LevelResult(
                n_coarse=n_c,
                H=math.sqrt(2.0) / n_c,
                k=k,
                err_gfem=err_gfem,
                err_fem=err_fem,
                seconds=time.perf_counter() - t0,
            )
        )
    Hs = [lv.H for lv in levels]
    return ConvergenceReport(
        case=config.case,
        levels=tuple(levels),
        slope_gfem=fit_slope(Hs, [lv.err_gfem for lv in levels]),
        slope_fem=fit_slope(Hs, [lv.err_fem for lv in levels]),
        locking_discretization=locking_disc,
    )


def _run_decay(config):
    coeff = problems.random_checkerboard(
        DECAY_GRID, CHECKERBOARD_LO, CHECKERBOARD_HI, config.seed
    )
    coarse = build_uniform_mesh(config.coarse[0])
    fine = refine_to(coarse, config.fine)
    ctx = lod.SystemContext(coarse, fine, coeff)
    ks = config.k_schedule()
    rows = []
    for T in decay_elements(config.coarse[0]):
        tails = lod.measure_corrector_decay(ctx, T, _probe_field(ctx, T), max(ks))
        rows.extend(DecayRow(element=T, k=k, tail_energy=tails[k]) for k in ks)
    return DecayReport(case="decay", rows=tuple(rows))


def format_csv(report):
    if isinstance(report, DecayReport):
        lines = [DECAY_CSV_HEADER]
        lines += [f"{r.element},{r.k},{r.tail_energy:.17g}" for r in report.rows]
    else:
        lines = [CSV_HEADER]
        lines += [
            f"{lv.H:.17g},{lv.k},{lv.err_gfem:.17g},{lv.err_fem:.17g},"
            f"{report.slope_gfem:.17g},{report.slope_fem:.17g}"
            for lv in report.levels
        ]
    return "\n".join(lines) + "\n"


def emit_csv(report, path):
    Path(path).write_text(format_csv(report))


def emit_plot(report, path):
    """Static vector image; log-log error plot with a slope-1 reference, or
    per-element semilog tails for the decay case."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(5.0, 4.0))
    if isinstance(report, DecayReport):
        for T in sorted({r.element for r in report.rows}):
            pts = [(r.k, r.tail_energy) for r in report.rows if r.element == T]
            ks = [p[0] for p in pts]
            tails = np.array([p[1] for p in pts])
            mask = tails > 0
            ax.semilogy(np.array(ks)[mask], tails[mask], "o-", label=f"element {T}")
        ax.set_xlabel("patch depth k")
        ax.set_ylabel("corrector tail energy")
    else:
        H = np.array([lv.H for lv in report.levels])
        eg = np.array([lv.err_gfem for lv in report.levels])
        ef = np.array([lv.err_fem for lv in report.levels])
        ax.loglog(H, eg, "o-", label="GFEM")
        ax.loglog(H, ef, "*-", label="P1 FEM")
        ax.loglog(H, eg[0] * H / H[0], "k--", label="slope 1")
        ax.set_xlabel("H")
        ax.set_ylabel("relative H1 error")
    ax.legend()
    ax.set_title(report.case)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def summarize(report):
    lines = []
    if isinstance(report, DecayReport):
        for r in report.rows:
            lines.append(f"element {r.element}  k={r.k}  tail={r.tail_energy:.6e}")
        return "\n".join(lines)
    for lv in report.levels:
        lines.append(
            f"n={lv.n_coarse:<4d} H={lv.H:.5f} k={lv.k}  "
            f"gfem={lv.err_gfem:.6e}  fem={lv.err_fem:.6e}  ({lv.seconds:.2f}s)"
        )
    lines.append(
        f"slopes: gfem={report.slope_gfem:.4f}  fem={report.slope_fem:.4f}"
    )
    if report.locking_discretization is not None:
        lines.append(f"fine discretization error vs exact: "
                     f"{report.locking_discretization:.4f}")
    return "\n".join(lines)


def _int_list(text):
    try:
        return tuple(int(tok) for tok in text.split(",") if tok.strip())
    except ValueError as err:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers: {text!r}") from err


def build_parser():
    parser = argparse.ArgumentParser(
        prog="elastlod",
        description="Multiscale GFEM experiments for 2D linear elasticity.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    runp = sub.add_parser("run", help="run one experiment case")
    runp.add_argument("--config", type=Path, default=None,
                      help="key=value file supplying defaults for the flags below")
    runp.add_argument("--case", choices=CASES, default=None)
    runp.add_argument("--fine", type=int, default=None,
                      help="fine squares per side n_h")
    runp.add_argument("--coarse", type=_int_list, default=None,
                      help="comma-separated coarse squares per side")
    runp.add_argument("--k", type=_int_list, default=None,
                      help="patch depths, one per coarse level (default: schedule)")
    runp.add_argument("--seed", type=int, default=None)
    runp.add_argument("--out", type=Path, default=None,
                      help="output directory for CSV (and plots)")
    runp.add_argument("--plots", action="store_true", default=None)
    return parser


_CONFIG_PARSERS = {
    "case": str,
    "fine": int,
    "coarse": _int_list,
    "k": _int_list,
    "seed": int,
    "out": Path,
    "plots": None,
}

_BOOL_WORDS = {"true": True, "yes": True, "1": True,
               "false": False, "no": False, "0": False}


def load_config_file(path):
    opts = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"bad config line (expected key=value): {raw!r}")
        key, val = (part.strip() for part in line.split("=", 1))
        if key not in _CONFIG_PARSERS:
            raise ValueError(f"unknown config key {key!r}")
        if key == "plots":
            if val.lower() not in _BOOL_WORDS:
                raise ValueError(f"bad boolean for plots: {val!r}")
            opts[key] = _BOOL_WORDS[val.lower()]
        else:
            opts[key] = _CONFIG_PARSERS[key](val)
    return opts


def resolve_config(args):
    opts = load_config_file(args.config) if args.config else {}
    for key in ("case", "fine", "coarse", "k", "seed", "out", "plots"):
        cli_val = getattr(args, key)
        if cli_val is not None:
            opts[key] = cli_val
    for key in ("case", "fine", "coarse"):
        if key not in opts or opts[key] is None:
            raise ValueError(f"missing required option --{key}")
    opts.setdefault("seed", DEFAULT_SEED)
    opts.setdefault("plots", False)
    return ExperimentConfig(**opts)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = resolve_config(args)
        report = run_experiment(config)
        print(summarize(report))
        if config.out is not None:
            config.out.mkdir(parents=True, exist_ok=True)
            csv_path = config.out / f"{config.case}.csv"
            emit_csv(report, csv_path)
            print(f"wrote {csv_path}")
            if config.plots:
                svg_path = config.out / f"{config.case}.svg"
                emit_plot(report, svg_path)
                print(f"wrote {svg_path}")
        else:
            sys.stdout.write(format_csv(report))
    except (ValueError, RuntimeError, OSError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1
    return 0
