"""Subspace iteration with a rational filter, basic and enhanced variants.

The enhanced variant locks converged pairs, shrinks the active block,
warm-starts every shifted solve from a scaled Ritz vector and caps the
number of inner iterations.
"""

import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .harness import GroupPlan, Harness, RunReport, reduce_sum
from .krylov import SolverConfig, build_preconditioner, cayley_initial_guess, solve_block
from .linalg import b_norms, b_project_out, form_shifted, solve_dense_gep

log = logging.getLogger(__name__)

MODES = ("basic", "enhanced")


class FilteredSubspaceCollapsed(RuntimeError):
    pass


class SpuriousRitzValue(ValueError):
    pass


def default_subspace_size(nev):
    return -(-12 * nev // 10)


@dataclass(frozen=True)
class DriverConfig:
    nev: int
    gamma: float
    L: int = None
    tol_eig: float = 1e-8
    max_outer: int = 100
    mode: str = "basic"
    it_max_linear: int = None
    seed: int = 0

    def __post_init__(self):
        if self.nev < 1:
            raise ValueError("nev must be at least 1")
        if self.L is None:
            object.__setattr__(self, "L", default_subspace_size(self.nev))
        if self.L < self.nev:
            raise ValueError(f"L={self.L} is smaller than nev={self.nev}")
        if not self.tol_eig > 0:
            raise ValueError("tol_eig must be positive")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.max_outer < 1:
            raise ValueError("max_outer must be at least 1")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if self.it_max_linear is not None and self.it_max_linear < 1:
            raise ValueError("it_max_linear must be at least 1")


@dataclass
class RitzSet:
    thetas: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray

    def __len__(self):
        return len(self.thetas)


@dataclass
class DriverState:
    V: np.ndarray
    Theta: np.ndarray
    X: np.ndarray
    outer_iter: int = 0

    @property
    def n_act(self):
        return self.V.shape[1]

    @property
    def n_conv(self):
        return len(self.Theta)


@dataclass
class EigResult:
    thetas: np.ndarray
    X: np.ndarray
    residuals: np.ndarray
    outer_iterations: int
    converged: bool
    case: str
    report: RunReport
    history: list = field(default_factory=list)
    rank_loss_iterations: list = field(default_factory=list)

    @property
    def n_found(self):
        return len(self.thetas)


@dataclass
class PoleSystem:
    sigma: complex
    C: object
    P: object


def setup_poles(pencil, spec, harness, precond_kind):
    """Form A - sigma_j B and its preconditioner once per pole."""
    def make(j):
        def closure(_executor):
            C = form_shifted(pencil, spec.poles[j])
            return PoleSystem(C.sigma, C, build_preconditioner(C, precond_kind))
        return closure

    pencil.union_pattern  # shared pattern, built before the groups start
    systems, timing = harness.execute_filter([make(j) for j in range(spec.N)])
    return [systems[j] for j in range(spec.N)], timing


def reduction_order(spec):
    """Canonical pole order used by the sum-reduce: by real, then imaginary part."""
    return sorted(range(spec.N), key=lambda j: (spec.poles[j].real, spec.poles[j].imag))


def apply_filter_block(pencil, spec, V, harness, solver_cfg, guesses=None, systems=None):
    """U = sum_j 2 Re(w_j (A - sigma_j B)^{-1} B V).

    ``guesses`` optionally holds one initial-guess block per pole. Returns
    ``(U, stats per pole, IterationTiming)``.
    """
    if systems is None:
        systems, _ = setup_poles(pencil, spec, harness, solver_cfg.precond_kind)
    F = np.ascontiguousarray(pencil.B @ V, dtype=np.complex128)

    def make(j):
        def closure(executor):
            X0 = None if guesses is None else guesses[j]
            return solve_block(systems[j].C, systems[j].P, F, X0, solver_cfg, executor)
        return closure

    results, timing = harness.execute_filter([make(j) for j in range(spec.N)])
    stats = {j: results[j][1] for j in range(spec.N)}
    timing.iterations = {j: [s.iterations for s in stats[j]] for j in range(spec.N)}
    timing.unconverged = sum(not s.converged for j in stats for s in stats[j])
    if timing.unconverged:
        log.debug("%d shifted solves stopped before reaching rel_tol", timing.unconverged)
    order = reduction_order(spec)
    U = reduce_sum({i: results[j][0] for i, j in enumerate(order)},
                   [spec.weights[j] for j in order])
    return U, stats, timing


def residual_check(pencil, theta, v):
    """||(A - theta B) v||_2 / (theta ||v||_B)."""
    if not theta > 0:
        raise SpuriousRitzValue(f"non-positive Ritz value {theta}")
    r = pencil.A @ v - theta * (pencil.B @ v)
    return float(np.linalg.norm(r) / (theta * b_norms(pencil.B, v)))


def _residuals(pencil, thetas, V):
    if V.shape[1] == 0:
        return np.zeros(0)
    R = pencil.A @ V - (pencil.B @ V) * thetas
    denom = thetas * b_norms(pencil.B, V)
    with np.errstate(divide="ignore", invalid="ignore"):
        res = np.linalg.norm(R, axis=0) / denom
    return np.where(thetas > 0, res, np.inf)


def rayleigh_ritz(pencil, U, drop_tol=1e-12):
    U = np.asarray(U, dtype=float)
    if U.ndim != 2 or U.shape[1] == 0:
        raise FilteredSubspaceCollapsed("empty filtered block")
    Ahat = U.T @ (pencil.A @ U)
    Bhat = U.T @ (pencil.B @ U)
    Ahat = 0.5 * (Ahat + Ahat.T)
    Bhat = 0.5 * (Bhat + Bhat.T)
    thetas, S = solve_dense_gep(Ahat, Bhat, drop_tol)
    if len(thetas) == 0:
        raise FilteredSubspaceCollapsed("all filtered directions were rank-truncated")
    V = U @ S
    V /= b_norms(pencil.B, V)
    order = np.argsort(thetas, kind="stable")
    thetas, V = thetas[order], V[:, order]
    return RitzSet(thetas, V, _residuals(pencil, thetas, V))


def _random_block(rng, n, k):
    return rng.uniform(-1.0, 1.0, size=(n, k))


class _Run:
    """Shared plumbing for both variants."""

    def __init__(self, pencil, spec, cfg, harness, solver_cfg):
        if cfg.L > pencil.n:
            raise ValueError(f"L={cfg.L} exceeds the problem dimension {pencil.n}")
        self.pencil, self.spec, self.cfg = pencil, spec, cfg
        self.solver_cfg = solver_cfg
        self.harness = harness
        self.rng = np.random.default_rng(cfg.seed)
        self.report = RunReport(harness.plan.n_part, harness.plan.workers_per_group)
        self.history = []
        self.rank_loss = []
        self.systems, self.report.setup = setup_poles(
            pencil, spec, harness, solver_cfg.precond_kind)

    def filter(self, V, guesses=None):
        U, stats, timing = apply_filter_block(
            self.pencil, self.spec, V, self.harness, self.solver_cfg, guesses, self.systems)
        self.report.entries.append(timing)
        return U

    def record(self, k, ritz, n_conv, tracked_res, locked=()):
        e = self.report.entries[-1]
        self.history.append({
            "outer_iter": k,
            "n_conv": int(n_conv),
            "max_residual": float(tracked_res.max()) if len(tracked_res) else 0.0,
            "group_busy": list(e.busy),
            "max_wait": float(max(e.wait)),
            "ritz_values": ritz.thetas.tolist(),
            "ritz_residuals": ritz.residuals.tolist(),
            "locked": list(locked),
        })


def _wanted(ritz, gamma, limit):
    """Indices of the ``limit`` smallest Ritz values in (0, gamma]."""
    inside = np.flatnonzero((ritz.thetas > 0) & (ritz.thetas <= gamma))
    return inside[:limit]


def _interval_exhausted(ritz, cfg, exclude):
    """True when the first Ritz value beyond gamma is itself well resolved.

    A residual below sqrt(tol_eig) pins that value to within roughly
    tol_eig relative accuracy, so (0, gamma] holds nothing further.
    """
    rest = np.setdiff1d(np.flatnonzero(ritz.thetas > 0), exclude)
    if rest.size == 0:
        return False
    first = rest[0]
    return ritz.thetas[first] > cfg.gamma and ritz.residuals[first] < np.sqrt(cfg.tol_eig)


def run_basic(pencil, spec, cfg, harness, solver_cfg=SolverConfig()):
    t0 = time.perf_counter()
    run = _Run(pencil, spec, cfg, harness, solver_cfg)
    n, L = pencil.n, cfg.L
    V = _random_block(run.rng, n, L)
    case = "not-converged"
    wanted = np.zeros(0, dtype=int)
    ritz = None
    k = 0
    for k in range(1, cfg.max_outer + 1):
        U = run.filter(V)
        ritz = rayleigh_ritz(pencil, U)
        if len(ritz) < L:
            run.rank_loss.append(k)
        wanted = _wanted(ritz, cfg.gamma, cfg.nev)
        conv = ritz.residuals[wanted] < cfg.tol_eig
        tracked = ritz.residuals[np.flatnonzero(ritz.thetas > 0)[:cfg.nev]]
        run.record(k, ritz, conv.sum(), tracked)
        if len(wanted) and conv.all():
            if len(wanted) == cfg.nev:
                case = "nev"
                break
            if _interval_exhausted(ritz, cfg, exclude=wanted):
                case = "interval"
                break
        V = ritz.vectors
        if V.shape[1] < L:
            V = np.hstack([V, _random_block(run.rng, n, L - V.shape[1])])
    run.report.total_wall = time.perf_counter() - t0
    if case == "not-converged":
        keep = wanted[ritz.residuals[wanted] < cfg.tol_eig]
    else:
        keep = wanted
    return EigResult(
        thetas=ritz.thetas[keep].copy(),
        X=ritz.vectors[:, keep].copy(),
        residuals=ritz.residuals[keep].copy(),
        outer_iterations=k,
        converged=case != "not-converged",
        case=case,
        report=run.report,
        history=run.history,
        rank_loss_iterations=run.rank_loss,
    )


def _lock(pencil, X, new):
    """B-orthonormalize ``new`` against X and itself; returns (Q, kept).

    A column that loses almost all of its B-norm is a duplicate of an
    already locked direction and is not kept.
    """
    B = pencil.B
    BX = B @ X
    cols, kept = [], []
    for i in range(new.shape[1]):
        w = new[:, i].copy()
        before = b_norms(B, w)
        for _pass in range(2):
            if X.shape[1]:
                w -= X @ (BX.T @ w)
            for q in cols:
                w -= (q @ (B @ w)) * q
        nrm = b_norms(B, w)
        if nrm < 1e-8 * before:
            continue
        cols.append(w / nrm)
        kept.append(i)
    Q = np.column_stack(cols) if cols else np.zeros((pencil.n, 0))
    return Q, kept


def run_enhanced(pencil, spec, cfg, harness, solver_cfg=SolverConfig()):
    t0 = time.perf_counter()
    if cfg.it_max_linear is not None:
        solver_cfg = replace(solver_cfg, max_iters=cfg.it_max_linear)
    run = _Run(pencil, spec, cfg, harness, solver_cfg)
    n, L = pencil.n, cfg.L
    state = DriverState(V=_random_block(run.rng, n, L), Theta=np.zeros(0), X=np.zeros((n, 0)))
    guesses = None
    case = "not-converged"
    for k in range(1, cfg.max_outer + 1):
        state.outer_iter = k
        U = run.filter(state.V, guesses)
        if state.n_conv > 0:
            U = b_project_out(pencil.B, state.X, U)
        ritz = rayleigh_ritz(pencil, U)
        if len(ritz) < state.n_act:
            run.rank_loss.append(k)

        room = cfg.nev - state.n_conv
        wanted = _wanted(ritz, cfg.gamma, room)
        conv = wanted[ritz.residuals[wanted] < cfg.tol_eig]
        locked = []
        if len(conv):
            Q, kept = _lock(pencil, state.X, ritz.vectors[:, conv])
            locked = [int(conv[i]) for i in kept]
            state.X = np.hstack([state.X, Q])
            state.Theta = np.concatenate([state.Theta, ritz.thetas[locked]])
        tracked = ritz.residuals[np.flatnonzero(ritz.thetas > 0)[:room]]
        run.record(k, ritz, state.n_conv, tracked, [float(ritz.thetas[i]) for i in locked])

        if state.n_conv == cfg.nev:
            case = "nev"
            break
        if (state.n_conv > 0 and len(wanted) == len(locked)
                and _interval_exhausted(ritz, cfg, exclude=wanted)):
            case = "interval"
            break

        # Drop the locked columns, keep the n_act smallest remaining Ritz vectors.
        n_act = L - state.n_conv
        rest = np.setdiff1d(np.arange(len(ritz)), locked)[:n_act]
        thetas = ritz.thetas[rest]
        V = ritz.vectors[:, rest]
        pad = n_act - V.shape[1]
        if pad > 0:
            extra = b_project_out(pencil.B, state.X, _random_block(run.rng, n, pad))
            V = np.hstack([V, extra])
        state.V = V
        guesses = []
        for sysj in run.systems:
            G = np.zeros((n, n_act), dtype=np.complex128)
            for m in range(len(rest)):
                G[:, m] = cayley_initial_guess(thetas[m], sysj.sigma, V[:, m])
            guesses.append(G)

    run.report.total_wall = time.perf_counter() - t0
    order = np.argsort(state.Theta, kind="stable")
    Theta = state.Theta[order]
    X = state.X[:, order]
    return EigResult(
        thetas=Theta,
        X=X,
        residuals=_residuals(pencil, Theta, X),
        outer_iterations=state.outer_iter,
        converged=case != "not-converged",
        case=case,
        report=run.report,
        history=run.history,
        rank_loss_iterations=run.rank_loss,
    )


def solve(pencil, spec, cfg, plan=None, solver_cfg=SolverConfig()):
    """Run the configured variant under ``plan`` (one group by default)."""
    plan = plan or GroupPlan(spec.N, 1)
    with Harness(plan) as harness:
        if cfg.mode == "enhanced":
            return run_enhanced(pencil, spec, cfg, harness, solver_cfg)
        return run_basic(pencil, spec, cfg, harness, solver_cfg)
