"""Command-line front end: config-driven sweeps, dumps, and diagnostics.

Experiments are described by TOML files with three sections:

    [experiment]            example, mesh (list of node counts J), and
                            optional epsilon / mesh_full / stem / gnuplot
    [solver]                rho, tol, max-iter, newton-tol, newton-max-iter,
                            ladder-powers, ladder-constant
    [[scheme]]              one block per scheme column: name plus any of
                            sigma, r, gamma, p, bc, lf_beta, label

Mesh entries are node counts, never spacings; h is derived from the
example's domain so the printed values are reproducible without guessing
how a rounded h was obtained.  `convergence` writes one table per scheme
block: a human-readable mirror with 3-significant-digit cells and a
parallel `.full.csv` at full precision whose bytes depend only on config
and library version (no timestamp).

Exit codes: 0 success, 2 config error, 3 solver non-convergence,
4 unsupported analysis.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # python < 3.11
    import tomli as tomllib

from . import __version__
from .analysis import (
    ErrorRecord,
    characteristic_regime,
    linf_error,
    matrix_diagnostics,
    observed_orders,
    weighted_l2_error,
)
from .grid import Grid, GridFunction, build_grid
from .problems import (
    HJProblem,
    LinearProblem,
    ProblemError,
    example_description,
    example_domain,
    example_names,
    get_example,
)
from .schemes import (
    SchemeConfig,
    SchemeError,
    assemble_linear_system,
    scheme_from_name,
)
from .solvers import (
    ContinuationLadder,
    FixedPointConfig,
    SolverError,
    UnsupportedAnalysisError,
    contraction_constants,
    default_ladder,
    fixed_point_solve,
    newton_continuation_solve,
    solve_direct,
)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "SchemeBlock",
    "TableArtifact",
    "load_config",
    "main",
    "run_analyze",
    "run_convergence",
    "run_solve",
]


class ConfigError(ValueError):
    """Malformed experiment configuration."""


_EXPERIMENT_KEYS = {"example", "epsilon", "mesh", "mesh_full", "stem", "gnuplot"}
_SOLVER_KEYS = {
    "rho",
    "tol",
    "max-iter",
    "newton-tol",
    "newton-max-iter",
    "ladder-powers",
    "ladder-constant",
}
_SCHEME_KEYS = {"name", "sigma", "r", "gamma", "p", "bc", "lf_beta", "label"}


@dataclass(frozen=True)
class SchemeBlock:
    cfg: SchemeConfig
    label: str


@dataclass(frozen=True)
class ExperimentConfig:
    example: str
    mesh: tuple
    schemes: tuple
    epsilon: Optional[float] = None
    mesh_full: tuple = ()
    stem: str = ""
    gnuplot: bool = False
    solver: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.mesh:
            raise ConfigError("mesh list must be nonempty")
        if any(b <= a for a, b in zip(self.mesh, self.mesh[1:])):
            raise ConfigError("mesh list must refine strictly (increasing J)")
        if not self.schemes:
            raise ConfigError("at least one [[scheme]] block is required")

    def single(self, block: SchemeBlock) -> "ExperimentConfig":
        return dataclasses.replace(self, schemes=(block,))

    def meshes_to_run(self, full: bool) -> tuple:
        extra = tuple(self.mesh_full) if full else ()
        return tuple(self.mesh) + extra


def _default_label(name: str, cfg: SchemeConfig) -> str:
    if name.startswith("moment"):
        return f"{name}-p{cfg.p:g}"
    return name


def _build_scheme_block(raw: dict) -> SchemeBlock:
    unknown = set(raw) - _SCHEME_KEYS
    if unknown:
        raise ConfigError(f"unknown scheme keys: {sorted(unknown)}")
    if "name" not in raw:
        raise ConfigError("every [[scheme]] block needs a name")
    name = str(raw["name"])
    overrides = {
        k: raw[k] for k in ("sigma", "r", "gamma", "p", "bc", "lf_beta") if k in raw
    }
    try:
        cfg = scheme_from_name(name, **overrides)
    except SchemeError as exc:
        raise ConfigError(str(exc)) from None
    return SchemeBlock(cfg, str(raw.get("label", _default_label(name, cfg))))


def _validate_mesh(values, key: str) -> tuple:
    out = []
    for v in values:
        if isinstance(v, bool) or not isinstance(v, int):
            raise ConfigError(f"{key} entries must be integer node counts, got {v!r}")
        out.append(v)
    return tuple(out)


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config parse error in {path}: {exc}") from None

    unknown = set(data) - {"experiment", "solver", "scheme"}
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    exp = data.get("experiment")
    if not isinstance(exp, dict):
        raise ConfigError("missing [experiment] section")
    unknown = set(exp) - _EXPERIMENT_KEYS
    if unknown:
        raise ConfigError(f"unknown [experiment] keys: {sorted(unknown)}")
    if "example" not in exp or "mesh" not in exp:
        raise ConfigError("[experiment] needs example and mesh")

    solver = data.get("solver", {})
    unknown = set(solver) - _SOLVER_KEYS
    if unknown:
        raise ConfigError(f"unknown [solver] keys: {sorted(unknown)}")

    blocks = data.get("scheme", [])
    if isinstance(blocks, dict):
        blocks = [blocks]
    schemes = tuple(_build_scheme_block(b) for b in blocks)

    example = str(exp["example"])
    if example not in example_names():
        raise ConfigError(
            f"unknown example {example!r}; see `momentfd list-examples`"
        )
    stem = str(exp.get("stem", example))
    return ExperimentConfig(
        example=example,
        mesh=_validate_mesh(exp["mesh"], "mesh"),
        schemes=schemes,
        epsilon=float(exp["epsilon"]) if "epsilon" in exp else None,
        mesh_full=_validate_mesh(exp.get("mesh_full", ()), "mesh_full"),
        stem=stem,
        gnuplot=bool(exp.get("gnuplot", False)),
        solver=dict(solver),
    )


# ---------------------------------------------------------------------------
# solving one mesh

def _grid_for(example: str, J: int) -> Grid:
    domain = example_domain(example)
    return build_grid(domain, (J,) * domain.dim)


def _csv_h(grid: Grid) -> float:
    # tables label rows by the mesh diagonal: h in 1D, h*sqrt(2) on squares
    return float(np.sqrt(sum(h * h for h in grid.spacings)))


def _ladder_from(solver: dict, cfg: SchemeConfig) -> ContinuationLadder:
    base = default_ladder(cfg)
    C = float(solver.get("ladder-constant", base.C))
    powers = tuple(float(q) for q in solver.get("ladder-powers", base.powers))
    return ContinuationLadder(C, powers)


def _solve_on(problem, cfg: SchemeConfig, grid: Grid, solver: dict):
    """Returns (grid function, converged, stage tag)."""
    if isinstance(problem, LinearProblem):
        if "rho" in solver:
            fp = FixedPointConfig(
                rho=float(solver["rho"]),
                tol=float(solver.get("tol", 1e-10)),
                max_iter=int(solver.get("max-iter", 10**6)),
            )
            report = fixed_point_solve(problem, cfg, fp, GridFunction.zeros(grid))
            return report.solution, report.converged, "fixed-point"
        A, rhs = assemble_linear_system(problem, cfg, grid)
        x = solve_direct(A, rhs)
        block = np.array(
            np.broadcast_to(
                np.asarray(problem.g(*grid.meshes()), dtype=float), grid.shape
            )
        )
        inner = tuple(slice(1, -1) for _ in range(grid.dim))
        block[inner] = x.reshape(grid.interior_shape, order="F")
        return GridFunction(grid, np.ravel(block, order="F")), True, "direct"
    report = newton_continuation_solve(
        problem,
        cfg,
        _ladder_from(solver, cfg),
        tol=float(solver.get("newton-tol", 1e-10)),
        grid=grid,
        max_iter_per_stage=int(solver.get("newton-max-iter", 100)),
    )
    stage = f"stage {len(report.iterations_per_stage)}"
    return report.solution, report.converged, stage


# ---------------------------------------------------------------------------
# convergence tables

@dataclass(frozen=True)
class NCRecord:
    """Placeholder row for a mesh whose solve did not converge."""

    h: float
    stage: str


@dataclass(frozen=True)
class TableArtifact:
    example: str
    label: str
    parameters: str
    records: tuple
    timestamp: str

    @property
    def nonconverged(self) -> bool:
        return any(isinstance(r, NCRecord) for r in self.records)

    def _header(self, with_timestamp: bool) -> list:
        lines = [
            f"# example: {self.example}",
            f"# scheme: {self.label}",
            f"# parameters: {self.parameters}",
        ]
        if with_timestamp:
            lines.append(f"# generated: {self.timestamp}")
        lines.append(f"# version: momentfd {__version__}")
        return lines

    def _rows(self, precise: bool) -> str:
        enum = "%.17g" if precise else "%.2e"
        fnum = "%.17g" if precise else "%.2f"
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["h", "l2", "l2_order", "linf", "linf_order"])
        for rec in self.records:
            if isinstance(rec, NCRecord):
                writer.writerow([enum % rec.h, f"NC({rec.stage})", "", "NC", ""])
            else:
                writer.writerow(
                    [
                        enum % rec.h,
                        enum % rec.l2_weighted,
                        "" if rec.order_l2 is None else fnum % rec.order_l2,
                        enum % rec.linf,
                        "" if rec.order_linf is None else fnum % rec.order_linf,
                    ]
                )
        return buf.getvalue()

    def render(self, precise: bool = False) -> str:
        header = self._header(with_timestamp=not precise)
        return "\n".join(header) + "\n" + self._rows(precise)

    def write(self, outdir: str, stem: str) -> tuple:
        os.makedirs(outdir, exist_ok=True)
        mirror = os.path.join(outdir, f"{stem}__{self.label}.csv")
        full = os.path.join(outdir, f"{stem}__{self.label}.full.csv")
        with open(mirror, "w") as fh:
            fh.write(self.render(precise=False))
        with open(full, "w") as fh:
            fh.write(self.render(precise=True))
        return mirror, full


def _caption(cfg: SchemeConfig, problem) -> str:
    eps = getattr(problem, "epsilon", 0.0)
    parts = [f"epsilon = {eps:g}"]
    if cfg.sigma > 0:
        parts.append(f"eps_h = {cfg.sigma:g}*h^{cfg.r:g}")
    if cfg.gamma > 0:
        parts.append(f"gamma_h = {cfg.gamma:g}*h^{cfg.p:g}")
        parts.append(f"closure = {cfg.bc.value}")
    if cfg.lf_beta is not None:
        parts.append(f"beta = {cfg.lf_beta}")
    return ", ".join(parts)


def run_convergence(config: ExperimentConfig, full: bool = False) -> TableArtifact:
    """Error sweep for a single-scheme config; rows follow the mesh list."""
    if len(config.schemes) != 1:
        raise ConfigError("run_convergence takes one scheme block; use .single()")
    block = config.schemes[0]
    problem = get_example(config.example, epsilon=config.epsilon)
    if problem.exact is None:
        raise ConfigError(
            f"example {config.example} has no exact solution; "
            "convergence tables need one"
        )

    solved = []
    for J in config.meshes_to_run(full):
        grid = _grid_for(config.example, J)
        h = _csv_h(grid)
        try:
            u, ok, stage = _solve_on(problem, block.cfg, grid, config.solver)
        except SolverError as exc:
            solved.append((h, None, str(exc)))
            continue
        if not ok:
            solved.append((h, None, stage))
        else:
            solved.append(
                (
                    h,
                    (
                        weighted_l2_error(u, problem.exact, grid),
                        linf_error(u, problem.exact, grid),
                    ),
                    stage,
                )
            )

    good = [(h, errs) for h, errs, _ in solved if errs is not None]
    o2 = observed_orders([(h, e[0]) for h, e in good])
    oi = observed_orders([(h, e[1]) for h, e in good])
    orders = {h: (a, b) for (h, _), a, b in zip(good, o2, oi)}

    records = []
    for h, errs, stage in solved:
        if errs is None:
            records.append(NCRecord(h, stage))
        else:
            records.append(ErrorRecord(h, errs[0], errs[1], *orders[h]))

    return TableArtifact(
        example=config.example,
        label=block.label,
        parameters=_caption(block.cfg, problem),
        records=tuple(records),
        timestamp=datetime.now(timezone.utc).isoformat(timespec="seconds"),
    )


# ---------------------------------------------------------------------------
# solution dumps

def run_solve(config: ExperimentConfig) -> str:
    """Solve on the single configured mesh; CSV of node coordinates and U."""
    if len(config.mesh) != 1:
        raise ConfigError("solve needs exactly one mesh entry")
    if len(config.schemes) != 1:
        raise ConfigError("solve takes one scheme block")
    block = config.schemes[0]
    problem = get_example(config.example, epsilon=config.epsilon)
    grid = _grid_for(config.example, config.mesh[0])
    u, ok, stage = _solve_on(problem, block.cfg, grid, config.solver)
    if not ok:
        raise SolverError(f"solve did not converge ({stage})")

    coords = grid.meshes()
    cols = [np.ravel(c, order="F") for c in coords]
    vals = u.values[: grid.n_nodes]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["x", "u"] if grid.dim == 1 else ["x", "y", "u"])
    for row in zip(*cols, vals):
        writer.writerow(["%.17g" % v for v in row])
    return buf.getvalue()


def _gnuplot_script(csv_name: str, dim: int, title: str) -> str:
    lines = ["set datafile separator ','", "set key left top"]
    if dim == 1:
        lines.append(f"plot '{csv_name}' skip 1 using 1:2 with lines title '{title}'")
    else:
        lines += ["set hidden3d", f"splot '{csv_name}' skip 1 using 1:2:3 with points title '{title}'"]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# diagnostics report

def run_analyze(config: ExperimentConfig, estimate: bool = False) -> str:
    """Matrix flags, contraction constants, and root regime for one setup."""
    if len(config.schemes) != 1:
        raise ConfigError("analyze takes one scheme block")
    block = config.schemes[0]
    cfg = block.cfg
    problem = get_example(config.example, epsilon=config.epsilon)
    grid = _grid_for(config.example, config.mesh[0])
    if grid.n_interior > 2500 and not estimate:
        raise ConfigError(
            f"{grid.n_interior} interior nodes exceed the dense diagnostics "
            "limit (2500); pass --estimate for iterative bounds"
        )

    out = [
        f"example: {config.example}  ({example_description(config.example)})",
        f"scheme:  {block.label}  [{_caption(cfg, problem)}]",
        f"grid:    J = {grid.nodes_per_dim}, h_max = {grid.h_max:.6g}, "
        f"{grid.n_interior} interior nodes",
        "",
    ]

    if isinstance(problem, LinearProblem):
        A, _ = assemble_linear_system(problem, cfg, grid)
        d = matrix_diagnostics(A)
        out.append("scheme matrix (interior rows):")
        out.append(
            f"  symmetric={d['symmetric']}  antisymmetric={d['antisymmetric']}  "
            f"m_matrix={d['m_matrix']}  estimated={d['estimated']}"
        )
        kind = "eigenvalues" if d["symmetric"] else "singular values"
        out.append(
            f"  {kind}: min = {d['min_eig']:.6g}, max = {d['max_eig']:.6g}, "
            f"rank deficiency = {d['rank_deficiency']}"
        )
        out.append("")
        consts = contraction_constants(problem, cfg, grid)  # may raise: exit 4
        out.append("contraction constants:")
        out.append(
            f"  lambda0 = {consts['lambda0']:.6g}   lambda_star = {consts['lambda_star']:.6g}   "
            f"c0 = {consts['c0']:.6g}"
        )
        out.append(
            f"  kappa = {consts['kappa']:.6g}   beta = {consts['beta']:.6g}"
        )
        out.append(
            f"  R1 = {consts['R1']:.6g}   R2 = {consts['R2']:.6g}   "
            f"suggested rho = {consts['rho']:.6g}"
        )
    else:
        out.append("nonlinear problem: matrix flags and contraction constants")
        out.append("apply to linear problems; reporting the root regime only.")
    out.append("")

    reg = characteristic_regime(
        cfg.sigma, getattr(problem, "epsilon", 0.0), cfg.gamma, cfg.p, grid.h_max
    )
    out.append("characteristic roots (1D normalized recurrence):")
    out.append(f"  ratio (4a-2h)/b = {reg.ratio:.6g}")
    out.append(f"  regime = {reg.regime.value}  (ratio heuristic: {reg.by_ratio.value})")
    roots = ", ".join(
        "nan" if np.isnan(r.real) else f"{r.real:.6g}{r.imag:+.6g}j" for r in reg.roots
    )
    out.append(f"  roots = [{roots}]")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# argument handling

def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="momentfd",
        description="Structured-grid stabilized central-difference solver",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", required=True, help="TOML experiment file")
        p.add_argument("--out", help="output directory (default: print to stdout)")
        p.add_argument("--scheme", help="run only the scheme block with this name/label")
        p.add_argument("--mesh", help="comma-separated node counts overriding the config")

    p_conv = sub.add_parser("convergence", help="error sweep over the mesh list")
    add_common(p_conv)
    p_conv.add_argument(
        "--full", action="store_true", help="include the mesh_full continuation meshes"
    )

    p_solve = sub.add_parser("solve", help="single-mesh solution dump")
    add_common(p_solve)

    p_an = sub.add_parser("analyze", help="matrix / contraction / regime report")
    add_common(p_an)
    p_an.add_argument(
        "--estimate",
        action="store_true",
        help="allow iterative spectral estimates above the dense limit",
    )

    sub.add_parser("list-examples", help="registered example problems")
    return parser


def _apply_overrides(config: ExperimentConfig, args) -> ExperimentConfig:
    if getattr(args, "mesh", None):
        try:
            mesh = tuple(int(tok) for tok in args.mesh.split(","))
        except ValueError:
            raise ConfigError(f"--mesh expects integers, got {args.mesh!r}") from None
        config = dataclasses.replace(config, mesh=mesh, mesh_full=())
    if getattr(args, "scheme", None):
        wanted = args.scheme
        matches = tuple(
            b for b in config.schemes if wanted in (b.label, b.cfg.name)
        )
        if not matches:
            raise ConfigError(
                f"no scheme block named {wanted!r}; config has "
                f"{[b.label for b in config.schemes]}"
            )
        config = dataclasses.replace(config, schemes=matches)
    return config


def _emit(text: str, outdir: Optional[str], filename: str) -> None:
    if outdir is None:
        sys.stdout.write(text)
        return
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, filename)
    with open(path, "w") as fh:
        fh.write(text)
    print(path)


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)

    try:
        if args.command == "list-examples":
            for name in example_names():
                print(f"{name:8s}  {example_description(name)}")
            return 0

        config = _apply_overrides(load_config(args.config), args)

        if args.command == "convergence":
            any_nc = False
            for block in config.schemes:
                artifact = run_convergence(config.single(block), full=args.full)
                any_nc = any_nc or artifact.nonconverged
                if args.out is None:
                    sys.stdout.write(artifact.render(precise=False))
                else:
                    mirror, full_path = artifact.write(args.out, config.stem)
                    print(mirror)
                    print(full_path)
            return 3 if any_nc else 0

        if args.command == "solve":
            text = run_solve(config)
            label = config.schemes[0].label
            name = f"{config.stem}__{label}.solution.csv"
            _emit(text, args.out, name)
            if config.gnuplot and args.out is not None:
                dim = example_domain(config.example).dim
                script = _gnuplot_script(name, dim, f"{config.example} {label}")
                with open(os.path.join(args.out, f"{config.stem}__{label}.gp"), "w") as fh:
                    fh.write(script)
            return 0

        if args.command == "analyze":
            text = run_analyze(config, estimate=args.estimate)
            _emit(text, args.out, f"{config.stem}__analysis.txt")
            return 0
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except UnsupportedAnalysisError as exc:
        print(f"unsupported analysis: {exc}", file=sys.stderr)
        return 4
    except (SolverError, SchemeError, ProblemError) as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
