"""Two-level parallel execution of per-pole work.

Level 1 runs groups of poles concurrently; level 2 lets each group fan the
columns of its block solves out over a small pool of workers. Groups own
their results until the barrier, after which the reduction reads them in a
fixed order.
"""

import json
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np


class HarnessError(RuntimeError):
    pass


@dataclass(frozen=True)
class GroupPlan:
    n_poles: int
    n_part: int
    workers_per_group: int = 1

    def __post_init__(self):
        if self.n_part < 1:
            raise ValueError("n_part must be at least 1")
        if self.workers_per_group < 1:
            raise ValueError("workers_per_group must be at least 1")
        if self.n_poles % self.n_part:
            raise ValueError(
                f"{self.n_poles} poles cannot be split evenly into {self.n_part} groups")

    @property
    def n_sub(self):
        return self.n_poles // self.n_part

    @property
    def groups(self):
        """Pole indices (0-based) owned by each group, contiguous blocks."""
        s = self.n_sub
        return [list(range(g * s, (g + 1) * s)) for g in range(self.n_part)]

    def group_of(self, pole):
        return pole // self.n_sub

    @property
    def total_workers(self):
        return self.n_part * self.workers_per_group


def partition_poles(N, n_part, workers_per_group=1):
    return GroupPlan(N, n_part, workers_per_group)


@dataclass
class IterationTiming:
    busy: list
    wait: list
    wall: float
    iterations: dict = field(default_factory=dict)
    unconverged: int = 0

    @classmethod
    def from_busy(cls, busy, wall):
        top = max(busy)
        return cls(busy=list(busy), wait=[top - b for b in busy], wall=wall)


@dataclass
class RunReport:
    n_part: int
    workers_per_group: int
    entries: list = field(default_factory=list)
    setup: IterationTiming = None
    total_wall: float = None

    @property
    def cumulative_busy(self):
        if not self.entries:
            return np.zeros(self.n_part)
        return np.sum([e.busy for e in self.entries], axis=0)

    @property
    def cumulative_wait(self):
        if not self.entries:
            return np.zeros(self.n_part)
        return np.sum([e.wait for e in self.entries], axis=0)

    @property
    def ratio(self):
        busy = self.cumulative_busy
        if busy.min() <= 0:
            return 1.0 if busy.max() <= 0 else np.inf
        return float(busy.max() / busy.min())

    @property
    def max_wait(self):
        return float(self.cumulative_wait.max())

    @property
    def prop(self):
        wall = self.total_wall
        if wall is None:
            wall = sum(e.wall for e in self.entries)
        return self.max_wait / wall if wall > 0 else 0.0

    def pole_iteration_totals(self):
        totals = {}
        for e in self.entries:
            for pole, counts in e.iterations.items():
                totals[pole] = totals.get(pole, 0) + int(sum(counts))
        return dict(sorted(totals.items()))

    def as_dict(self):
        return {
            "n_part": self.n_part,
            "workers_per_group": self.workers_per_group,
            "ratio": self.ratio,
            "max_wait": self.max_wait,
            "prop": self.prop,
            "total_wall": self.total_wall,
            "cumulative_busy": self.cumulative_busy.tolist(),
            "cumulative_wait": self.cumulative_wait.tolist(),
            "pole_iteration_totals": {str(k): v for k, v in self.pole_iteration_totals().items()},
            "setup": None if self.setup is None else _timing_dict(self.setup),
            "iterations": [_timing_dict(e) for e in self.entries],
        }

    def to_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.as_dict(), fh, indent=2)

    def timing_rows(self):
        """(group, iter, busy, wait) rows, 1-based iteration and group."""
        rows = []
        for k, e in enumerate(self.entries, start=1):
            for g, (b, w) in enumerate(zip(e.busy, e.wait), start=1):
                rows.append((g, k, b, w))
        return rows


def _timing_dict(e):
    d = asdict(e)
    d["iterations"] = {str(k): v for k, v in e.iterations.items()}
    return d


class Harness:
    """Runs one closure per pole under a GroupPlan.

    Each closure is called as ``closure(executor)`` where ``executor`` is the
    group's level-2 pool (``None`` when the group has a single worker).
    """

    def __init__(self, plan: GroupPlan):
        self.plan = plan
        self._groups = ThreadPoolExecutor(max_workers=plan.n_part, thread_name_prefix="group")
        if plan.workers_per_group > 1:
            self._inner = [
                ThreadPoolExecutor(max_workers=plan.workers_per_group,
                                   thread_name_prefix=f"group{g}-worker")
                for g in range(plan.n_part)
            ]
        else:
            self._inner = [None] * plan.n_part
        cores = os.cpu_count() or 1
        self.oversubscribed = plan.total_workers > cores

    def close(self):
        self._groups.shutdown(wait=True)
        for ex in self._inner:
            if ex is not None:
                ex.shutdown(wait=True)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def _run_group(self, g, closures):
        start = time.perf_counter()
        out = {}
        for pole in self.plan.groups[g]:
            try:
                out[pole] = closures[pole](self._inner[g])
            except Exception as exc:
                raise HarnessError(f"group {g}: pole {pole} failed: {exc!r}") from exc
        return out, time.perf_counter() - start

    def execute_filter(self, closures):
        """Run every pole closure; returns ``(results by pole, IterationTiming)``."""
        if len(closures) != self.plan.n_poles:
            raise ValueError(f"expected {self.plan.n_poles} closures, got {len(closures)}")
        t0 = time.perf_counter()
        futures = [self._groups.submit(self._run_group, g, closures)
                   for g in range(self.plan.n_part)]
        results, busy, failure = {}, [], None
        # Barrier: every group finishes before anything is reduced.
        for fut in futures:
            try:
                out, b = fut.result()
            except HarnessError as exc:
                failure = failure or exc
                continue
            results.update(out)
            busy.append(b)
        if failure is not None:
            raise failure
        return results, IterationTiming.from_busy(busy, time.perf_counter() - t0)


def reduce_sum(results, weights):
    """U = sum_j 2 Re(w_j Y_j), accumulated in ascending index order."""
    missing = [j for j in range(len(weights)) if j not in results]
    if missing:
        raise HarnessError(f"missing result for pole(s) {missing}")
    U = None
    for j, w in enumerate(weights):
        term = 2.0 * (w * results[j]).real
        U = term if U is None else U + term
    return U


def scalability_run(plans, task):
    """Run ``task(plan)`` under each plan and time it.

    ``task`` returns an object with a ``thetas`` attribute. Speedups are
    relative to the first plan.
    """
    rows = []
    base = None
    for plan in plans:
        t0 = time.perf_counter()
        result = task(plan)
        wall = time.perf_counter() - t0
        if base is None:
            base = wall
        rows.append({
            "n_part": plan.n_part,
            "workers_per_group": plan.workers_per_group,
            "wall_time": wall,
            "speedup": base / wall if wall > 0 else float("nan"),
            "thetas": np.asarray(result.thetas).tolist(),
        })
    rows[0]["speedup"] = 1.0
    return rows
