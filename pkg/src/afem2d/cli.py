"""Batch front-end: run adaptive/uniform loops and emit CSV tables.

Estimator columns in the level tables are SQUARED totals; the fitted rates
are slopes of the square roots against the element count.
"""

import argparse
import csv
import os
import sys
from dataclasses import dataclass, replace

from . import adapt
from .adapt import ConfigError, MarkingConfig, RateFitError, adaptive_loop, rate_fit
from .fem import Quadrature, SegmentRule, TriangleRule
from .mesh import Mesh
from .problem import BUILTIN_PROBLEMS, with_mesh

LEVEL_COLUMNS = [
    "level", "n_triangles", "n_vertices", "n_marked", "branch",
    "varrho_sq", "eta_sq", "eta_jump_sq", "eta_neumann_sq", "osc_sq",
    "osc_dirichlet_sq", "osc_neumann_sq", "varrho_ext_sq", "rho_sq",
    "energy_error", "solver_iterations", "solver_residual",
]

RATE_QUANTITIES = ["varrho", "eta_jump", "eta_neumann", "osc",
                   "osc_dirichlet", "error"]


@dataclass(frozen=True)
class RunConfig:
    problem: str = "zshape"
    strategy: str = "doerfler"
    theta: float = 0.5
    theta1: float = 0.5
    theta2: float = 0.5
    vartheta: float = 0.5
    dirichlet: str = "nodal"
    max_elements: int = 50000
    max_levels: int = 25
    quad_degree: int = 5
    cg_tol: float = 1e-12
    output: str = "afem2d"
    seed: int = 0
    name: str = ""

    def validate(self):
        if not (self.problem in BUILTIN_PROBLEMS
                or self.problem.startswith("custom:")):
            raise ConfigError(f"unknown problem {self.problem!r}")
        self.marking().validate()
        if self.dirichlet not in ("nodal", "l2", "sz"):
            raise ConfigError(f"unknown dirichlet method {self.dirichlet!r}")
        if self.max_elements <= 0 or self.max_levels <= 0:
            raise ConfigError("stop criterion must be positive")
        if self.quad_degree < 1:
            raise ConfigError("quad degree must be positive")
        if not 0 < self.cg_tol < 1:
            raise ConfigError("cg tolerance must lie in (0, 1)")

    def marking(self):
        return MarkingConfig(self.strategy, self.theta, self.theta1,
                             self.theta2, self.vartheta)

    def make_problem(self):
        if self.problem.startswith("custom:"):
            rest = self.problem[len("custom:"):]
            meshfile, _, dataset = rest.partition(":")
            dataset = dataset or "affine"
            if dataset not in BUILTIN_PROBLEMS:
                raise ConfigError(f"unknown data set {dataset!r}")
            return with_mesh(BUILTIN_PROBLEMS[dataset](), Mesh.read(meshfile))
        return BUILTIN_PROBLEMS[self.problem]()

    def label(self):
        if self.name:
            return self.name
        if self.strategy == "uniform":
            return f"{self.problem}-uniform"
        if self.strategy == "modified":
            return (f"{self.problem}-modified-t1_{self.theta1:g}"
                    f"-t2_{self.theta2:g}-vt_{self.vartheta:g}")
        return f"{self.problem}-doerfler-theta_{self.theta:g}"


def execute(config):
    """Run one configuration; returns the RunResult."""
    config.validate()
    prob = config.make_problem()
    quad = Quadrature(
        triangle=TriangleRule.of_degree(config.quad_degree),
        segment=SegmentRule.gauss(),
        volume_subdivision=getattr(prob, "volume_quad_subdivision", 0))
    return adaptive_loop(
        prob, config.marking(), dirichlet=config.dirichlet,
        max_elements=config.max_elements, max_levels=config.max_levels,
        quad=quad, cg_tol=config.cg_tol)


def _record_row(rec, run_label=None):
    row = [rec.level, rec.n_triangles, rec.n_vertices, rec.n_marked,
           rec.branch, repr(rec.varrho_sq), repr(rec.eta_sq),
           repr(rec.eta_jump_sq), repr(rec.eta_neumann_sq), repr(rec.osc_sq),
           repr(rec.osc_dirichlet_sq), repr(rec.osc_neumann_sq),
           repr(rec.varrho_ext_sq), repr(rec.rho_sq),
           "" if rec.energy_error is None else repr(rec.energy_error),
           rec.solver_iterations, repr(rec.solver_residual)]
    if run_label is not None:
        row = [run_label] + row
    return row


def write_levels_csv(path, records, run_label=None):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# afem2d levels schema=1; estimator columns are "
                 "squared totals\n")
        w = csv.writer(fh, lineterminator="\n")
        header = LEVEL_COLUMNS if run_label is None else ["run"] + LEVEL_COLUMNS
        w.writerow(header)
        for rec in records:
            w.writerow(_record_row(rec, run_label))


def write_rates_csv(path, records, window=6):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# afem2d rates schema=1; slopes of sqrt(quantity) vs N "
                 f"over the last {window} levels\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["quantity", "slope"])
        for q in RATE_QUANTITIES:
            try:
                w.writerow([q, repr(rate_fit(records, q, window))])
            except (RateFitError, KeyError):
                w.writerow([q, ""])


def run(config):
    """Execute a config and write its output files; exit-status semantics."""
    try:
        config.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        result = execute(config)
    except Exception as exc:  # runtime failure: flush nothing but report
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    prefix = config.output
    write_levels_csv(prefix + "_levels.csv", result.records)
    write_rates_csv(prefix + "_rates.csv", result.records)
    last = result.records[-1].level
    result.final_mesh.write(f"{prefix}_mesh_{last}.txt")
    return 0


def compare(configs, output):
    """Run several configs on one problem; merged long-format CSV."""
    if len(set(c.problem for c in configs)) > 1:
        raise ConfigError("compare requires configs sharing a problem")
    labels = []
    for c in configs:
        base = c.label()
        label = base
        k = 1
        while label in labels:
            label = f"{base}-{k}"
            k += 1
        labels.append(label)
    rows = []
    for c, label in zip(configs, labels):
        result = execute(c)
        rows += [(_record_row(rec, label)) for rec in result.records]
    with open(output, "w", newline="", encoding="utf-8") as fh:
        fh.write("# afem2d compare schema=1; estimator columns are "
                 "squared totals\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run"] + LEVEL_COLUMNS)
        for row in rows:
            w.writerow(row)
    return output


def _add_run_flags(p):
    p.add_argument("--problem", default="zshape")
    p.add_argument("--strategy", default="doerfler",
                   choices=["doerfler", "modified", "uniform"])
    p.add_argument("--theta", type=float, default=0.5)
    p.add_argument("--theta1", type=float, default=0.5)
    p.add_argument("--theta2", type=float, default=0.5)
    p.add_argument("--vartheta", type=float, default=0.5)
    p.add_argument("--dirichlet", default="nodal", choices=["nodal", "l2", "sz"])
    p.add_argument("--max-elements", type=int, default=50000)
    p.add_argument("--max-levels", type=int, default=25)
    p.add_argument("--quad-degree", type=int, default=5)
    p.add_argument("--cg-tol", type=float, default=1e-12)
    p.add_argument("--output", default="afem2d")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--single-thread", action="store_true",
                   help="force deterministic single-threaded execution "
                        "(the default; kept for config stability)")


def _config_from(args):
    return RunConfig(
        problem=args.problem, strategy=args.strategy, theta=args.theta,
        theta1=args.theta1, theta2=args.theta2, vartheta=args.vartheta,
        dirichlet=args.dirichlet, max_elements=args.max_elements,
        max_levels=args.max_levels, quad_degree=args.quad_degree,
        cg_tol=args.cg_tol, output=args.output, seed=args.seed)


def main(argv=None):
    os.environ.setdefault("AFEM2D_THREADS", "1")
    parser = argparse.ArgumentParser(
        prog="afem2d",
        description="Adaptive P1 FEM for the mixed Poisson problem")
    sub = parser.add_subparsers(dest="command")

    prun = sub.add_parser("run", help="single adaptive/uniform run")
    _add_run_flags(prun)

    pcmp = sub.add_parser("compare", help="overlay several runs in one CSV")
    _add_run_flags(pcmp)
    pcmp.add_argument("--thetas", default="0.2,0.5,0.8",
                      help="comma-separated theta values, one run each")
    pcmp.add_argument("--include-uniform", action="store_true")

    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return 2

    if args.command == "run":
        return run(_config_from(args))

    base = _config_from(args)
    try:
        thetas = [float(t) for t in args.thetas.split(",") if t.strip()]
        configs = [replace(base, strategy=args.strategy, theta=t)
                   for t in thetas]
        if args.include_uniform:
            configs.append(replace(base, strategy="uniform"))
        if len(configs) < 1:
            raise ConfigError("compare needs at least one configuration")
        for c in configs:
            c.validate()
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        compare(configs, base.output + "_compare.csv")
    except Exception as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
