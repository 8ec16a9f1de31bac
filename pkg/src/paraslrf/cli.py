"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 eigenpairs not converged
within ``--max-outer`` outer iterations.
"""

import argparse
import csv
import json
import logging
import os
import sys
import time
from dataclasses import asdict, dataclass

import numpy as np

from . import __version__
from .driver import DriverConfig, solve
from .filters import KINDS, build_filter, eval_filter
from .harness import GroupPlan, scalability_run
from .krylov import PRECONDITIONERS, SolverConfig
from .problems import dump_pencil, parse_problem

log = logging.getLogger("paraslrf")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NOT_CONVERGED = 3

REPORT_SCHEMA = 1


class ConfigError(Exception):
    pass


@dataclass(frozen=True)
class RunManifest:
    problem: str
    filter: str
    npoles: int
    nev: int
    L: int
    gamma: float
    alpha: float
    beta: float
    nparts: int
    workers: int
    mode: str
    it_max_linear: int
    tol_eig: float
    tol_lin: float
    max_outer: int
    max_lin: int
    restart: int
    precond: str
    seed: int
    version: str = __version__

    @classmethod
    def from_args(cls, args):
        return cls(
            problem=args.problem, filter=args.filter, npoles=args.npoles, nev=args.nev,
            L=args.L, gamma=args.gamma, alpha=args.alpha, beta=args.beta,
            nparts=args.nparts, workers=args.workers, mode=args.mode,
            it_max_linear=args.it_max_linear, tol_eig=args.tol_eig,
            tol_lin=args.tol_lin, max_outer=args.max_outer, max_lin=args.max_lin,
            restart=args.restart, precond=args.precond, seed=args.seed,
        )

    @classmethod
    def from_report(cls, path):
        with open(path) as fh:
            data = json.load(fh)["manifest"]
        data.pop("version", None)
        return cls(**data)

    def build(self):
        """Resolve into (pencil, filter, driver config, solver config, plan)."""
        try:
            if self.gamma is None:
                raise ValueError("--gamma is required")
            pencil = parse_problem(self.problem)
            kwargs = {}
            if self.filter == "slrf":
                kwargs = {"alpha": self.alpha, "beta": self.beta}
            spec = build_filter(self.filter, self.gamma, self.npoles, **kwargs)
            cfg = DriverConfig(
                nev=self.nev, gamma=self.gamma, L=self.L, tol_eig=self.tol_eig,
                max_outer=self.max_outer, mode=self.mode,
                it_max_linear=self.it_max_linear, seed=self.seed)
            solver_cfg = SolverConfig(rel_tol=self.tol_lin, max_iters=self.max_lin,
                                      restart=self.restart, precond_kind=self.precond)
            plan = GroupPlan(self.npoles, self.nparts, self.workers)
            if cfg.L > pencil.n:
                raise ValueError(f"L={cfg.L} exceeds the problem dimension {pencil.n}")
        except (ValueError, OSError) as exc:
            raise ConfigError(str(exc)) from exc
        return pencil, spec, cfg, solver_cfg, plan


def _add_run_flags(p):
    p.add_argument("--problem", required=False, default=None,
                   help="fem1d:n=N | laplace3d:nx=..,ny=..,nz=.. | files:A=path,B=path")
    p.add_argument("--filter", choices=KINDS, default="slrf")
    p.add_argument("--npoles", type=int, default=4, help="poles in the upper half-plane")
    p.add_argument("--nev", type=int, default=None)
    p.add_argument("--L", type=int, default=None, help="subspace size (default ceil(1.2 nev))")
    p.add_argument("--gamma", type=float, default=None, help="interval is (0, gamma]")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--nparts", type=int, default=1)
    p.add_argument("--workers", type=int, default=1, help="level-2 workers per group")
    p.add_argument("--mode", choices=("basic", "enhanced"), default="basic")
    p.add_argument("--it-max-linear", type=int, default=None)
    p.add_argument("--tol-eig", type=float, default=1e-8)
    p.add_argument("--tol-lin", type=float, default=1e-10)
    p.add_argument("--max-outer", type=int, default=100)
    p.add_argument("--max-lin", type=int, default=10000)
    p.add_argument("--restart", type=int, default=30)
    p.add_argument("--precond", choices=[k for k in PRECONDITIONERS if k != "none"],
                   default="ilu0")
    p.add_argument("--seed", type=int, default=0)


def _check_run_args(args):
    if args.problem is None:
        raise ConfigError("--problem is required")
    if args.nev is None or args.nev < 1:
        raise ConfigError("--nev must be a positive integer")
    if args.gamma is None or not args.gamma > 0:
        raise ConfigError("--gamma must be positive")


def write_history(path, result, n_part):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["outer_iter", "n_conv", "max_residual"]
                   + [f"group_busy_{g}" for g in range(1, n_part + 1)] + ["max_wait"])
        for h in result.history:
            w.writerow([h["outer_iter"], h["n_conv"], repr(h["max_residual"])]
                       + [repr(b) for b in h["group_busy"]] + [repr(h["max_wait"])])


def write_timing(path, report):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["group", "iter", "busy", "wait"])
        for row in report.timing_rows():
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])


def build_report(manifest, result):
    return {
        "schema_version": REPORT_SCHEMA,
        "manifest": asdict(manifest),
        "converged": result.converged,
        "case": result.case,
        "outer_iterations": result.outer_iterations,
        "thetas": result.thetas.tolist(),
        "residuals": result.residuals.tolist(),
        "rank_loss_iterations": result.rank_loss_iterations,
        "run_report": result.report.as_dict(),
        "history": [{k: v for k, v in h.items() if k not in ("ritz_values", "ritz_residuals")}
                    for h in result.history],
    }


def _warn_oversubscribed(plan):
    cores = os.cpu_count() or 1
    if plan.total_workers > cores:
        log.warning("plan %dx%d uses %d workers on %d cores (oversubscribed)",
                    plan.n_part, plan.workers_per_group, plan.total_workers, cores)


def cmd_solve(args):
    if args.manifest:
        manifest = RunManifest.from_report(args.manifest)
    else:
        _check_run_args(args)
        manifest = RunManifest.from_args(args)
    pencil, spec, cfg, solver_cfg, plan = manifest.build()
    _warn_oversubscribed(plan)
    result = solve(pencil, spec, cfg, plan, solver_cfg)
    out = args.out
    os.makedirs(os.path.dirname(os.path.abspath(out)), exist_ok=True)
    with open(out, "w") as fh:
        json.dump(build_report(manifest, result), fh, indent=2)
    history = args.history or os.path.join(os.path.dirname(os.path.abspath(out)), "history.csv")
    write_history(history, result, plan.n_part)
    if args.timing:
        write_timing(args.timing, result.report)
    log.info("%s after %d outer iterations: %d eigenpairs", result.case,
             result.outer_iterations, result.n_found)
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def _parse_int_list(text):
    try:
        values = [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse integer list {text!r}") from exc
    if not values or min(values) < 1:
        raise ConfigError("list values must be positive integers")
    return values


def sweep_itmax(manifest, it_max_values):
    """One enhanced run per cap; returns a list of row dicts."""
    rows = []
    for it_max in it_max_values:
        m = RunManifest(**{**asdict(manifest), "mode": "enhanced", "it_max_linear": it_max})
        pencil, spec, cfg, solver_cfg, plan = m.build()
        t0 = time.perf_counter()
        result = solve(pencil, spec, cfg, plan, solver_cfg)
        wall = time.perf_counter() - t0
        inner = sum(result.report.pole_iteration_totals().values())
        rows.append({
            "it_max": it_max,
            "outer_iterations": result.outer_iterations if result.converged else "DNF",
            "inner_iterations": inner,
            "wall_time": wall,
            "converged": result.converged,
        })
        log.info("it_max=%d: %s outer, %d inner", it_max, rows[-1]["outer_iterations"], inner)
    return rows


def cmd_sweep_itmax(args):
    _check_run_args(args)
    values = _parse_int_list(args.it_max)
    manifest = RunManifest.from_args(args)
    manifest.build()
    rows = sweep_itmax(manifest, values)
    _write_rows(args.out, rows, ["it_max", "outer_iterations", "inner_iterations",
                                 "wall_time", "converged"])
    return EXIT_OK


def _write_rows(path, rows, columns):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    try:
        w = csv.DictWriter(fh, fieldnames=columns, extrasaction="ignore")
        w.writeheader()
        for row in rows:
            w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})
    finally:
        if fh is not sys.stdout:
            fh.close()


def filter_grid(lmin, lmax, points):
    if points < 1:
        raise ConfigError("--points must be positive")
    if points == 1:
        return np.array([float(lmin)])
    if not lmax > lmin:
        raise ConfigError("--lmax must exceed --lmin")
    return np.linspace(lmin, lmax, points)


def cmd_filter_dump(args):
    if args.gamma is None or not args.gamma > 0:
        raise ConfigError("--gamma must be positive")
    kwargs = {"alpha": args.alpha, "beta": args.beta} if args.filter == "slrf" else {}
    try:
        spec = build_filter(args.filter, args.gamma, args.npoles, **kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    lmin = -args.gamma if args.lmin is None else args.lmin
    lmax = 3 * args.gamma if args.lmax is None else args.lmax
    lam = np.sort(filter_grid(lmin, lmax, args.points))
    phi = eval_filter(spec, lam)
    _write_rows(args.out, [{"lambda": float(a), "phi": float(b)} for a, b in zip(lam, phi)],
                ["lambda", "phi"])
    return EXIT_OK


def _parse_plans(text, npoles):
    plans = []
    for item in filter(None, text.split(",")):
        part, sep, workers = item.lower().partition("x")
        try:
            plans.append(GroupPlan(npoles, int(part), int(workers) if sep else 1))
        except ValueError as exc:
            raise ConfigError(f"bad plan {item!r}: {exc}") from exc
    if not plans:
        raise ConfigError("--plans must list at least one plan")
    return plans


def cmd_scale(args):
    _check_run_args(args)
    manifest = RunManifest.from_args(args)
    plans = _parse_plans(args.plans, manifest.npoles)
    pencil, spec, cfg, solver_cfg, _ = manifest.build()
    for plan in plans:
        _warn_oversubscribed(plan)

    rows = scalability_run(plans, lambda plan: solve(pencil, spec, cfg, plan, solver_cfg))
    ref = np.asarray(rows[0]["thetas"])
    for row in rows:
        th = np.asarray(row["thetas"])
        row["n_eigs"] = len(th)
        row["max_theta_diff"] = float(np.abs(th - ref).max()) if th.shape == ref.shape else float("nan")
    _write_rows(args.out, rows, ["n_part", "workers_per_group", "wall_time", "speedup",
                                 "n_eigs", "max_theta_diff"])
    return EXIT_OK


def cmd_problems_dump(args):
    try:
        pencil = parse_problem(args.problem)
    except (ValueError, OSError) as exc:
        raise ConfigError(str(exc)) from exc
    dump_pencil(pencil, args.out_a, args.out_b)
    return EXIT_OK


def make_parser():
    parser = argparse.ArgumentParser(prog="paraslrf", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="compute eigenpairs in (0, gamma]")
    _add_run_flags(p)
    p.add_argument("--manifest", default=None, help="re-run the manifest embedded in a report")
    p.add_argument("--out", default="report.json")
    p.add_argument("--history", default=None, help="default: history.csv next to --out")
    p.add_argument("--timing", default=None, help="per-iteration group timing CSV")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep-itmax", help="enhanced runs over a list of inner caps")
    _add_run_flags(p)
    p.add_argument("--it-max", required=True, help="comma separated caps, e.g. 5,10,20")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_sweep_itmax)

    p = sub.add_parser("filter-dump", help="tabulate Phi(lambda)")
    p.add_argument("--filter", choices=KINDS, default="slrf")
    p.add_argument("--npoles", type=int, default=4)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=0.01)
    p.add_argument("--lmin", type=float, default=None)
    p.add_argument("--lmax", type=float, default=None)
    p.add_argument("--points", type=int, default=401)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_filter_dump)

    p = sub.add_parser("scale", help="time one task under several group plans")
    _add_run_flags(p)
    p.add_argument("--plans", required=True, help="n_part x workers pairs, e.g. 1x4,2x2,4x1")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_scale)

    p = sub.add_parser("problems", help="problem utilities")
    psub = p.add_subparsers(dest="problems_command", required=True)
    d = psub.add_parser("dump", help="export a pencil as two Matrix Market files")
    d.add_argument("--problem", required=True)
    d.add_argument("--out-a", default="A.mtx")
    d.add_argument("--out-b", default="B.mtx")
    d.set_defaults(func=cmd_problems_dump)
    return parser


def main(argv=None):
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"paraslrf: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
