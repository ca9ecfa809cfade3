"""Solver registry, seeded evaluation reports and the ablation runner."""
from __future__ import annotations

import csv
import io
import time
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .core import TspInstance, generate_instances, random_tour, tour_length
from .diffcomp import ParameterStore
from .exact import MAX_EXACT_N, held_karp_exact
from .policy import rollout
from .search import LocalSearchConfig, combined_local_search, insertion_tour, two_opt_sweep

REPORT_HEADER = ["solver", "n", "count", "seed", "mean_length", "gap_pct", "total_s", "per_instance_ms"]
ABLATION_VARIANTS = ("full", "wo_rl", "wo_cl", "wo_baseline", "wo_local_search")
LEARNED_VARIANTS = tuple(v for v in ABLATION_VARIANTS if v != "wo_rl")

# search strength used for the ablation table
ABLATION_SEARCH = LocalSearchConfig(rounds=15)


class UnknownSolverError(KeyError):
    pass


@dataclass
class SolverContext:
    params: Optional[ParameterStore] = None
    search: LocalSearchConfig = field(default_factory=LocalSearchConfig)


Solver = Callable[[TspInstance, np.random.Generator, SolverContext], np.ndarray]


def _need_params(ctx: SolverContext) -> ParameterStore:
    if ctx.params is None:
        raise ValueError("this solver needs a checkpoint")
    return ctx.params


def _policy_tour(inst, rng, ctx):
    if inst.n < 2:
        return np.arange(inst.n, dtype=np.int64)
    return rollout(_need_params(ctx), inst, "greedy").tour


SOLVERS: dict[str, Solver] = {
    "random": lambda inst, rng, ctx: random_tour(inst.n, rng),
    "random_insertion": lambda inst, rng, ctx: insertion_tour(inst, "random", rng),
    "nearest_insertion": lambda inst, rng, ctx: insertion_tour(inst, "nearest", rng),
    "farthest_insertion": lambda inst, rng, ctx: insertion_tour(inst, "farthest", rng),
    "two_opt": lambda inst, rng, ctx: two_opt_sweep(inst, random_tour(inst.n, rng)),
    "search": lambda inst, rng, ctx: combined_local_search(inst, random_tour(inst.n, rng), ctx.search, rng),
    "exact": lambda inst, rng, ctx: held_karp_exact(inst),
    "policy": _policy_tour,
    "policy+search": lambda inst, rng, ctx: combined_local_search(inst, _policy_tour(inst, rng, ctx),
                                                                  ctx.search, rng),
}


def get_solver(name: str) -> Solver:
    try:
        return SOLVERS[name]
    except KeyError:
        raise UnknownSolverError(f"unknown solver {name!r}; choose from {sorted(SOLVERS)}") from None


@dataclass
class EvalReport:
    solver: str
    n: int
    count: int
    seed: int
    mean_length: float
    total_s: float
    per_instance_ms: float
    gap_pct: Optional[float] = None
    reference: Optional[str] = None
    lengths: np.ndarray = field(default=None, repr=False)

    def row(self, timing: bool = True) -> list[str]:
        gap = "" if self.gap_pct is None else f"{self.gap_pct:.2f}"
        return [self.solver, str(self.n), str(self.count), str(self.seed), f"{self.mean_length:.6f}", gap,
                f"{self.total_s:.3f}" if timing else "", f"{self.per_instance_ms:.3f}" if timing else ""]

    def summary(self) -> str:
        text = (f"{self.solver}: n={self.n} count={self.count} seed={self.seed} "
                f"mean length {self.mean_length:.4f}")
        if self.gap_pct is not None:
            text += f", gap {self.gap_pct:.2f}% vs {self.reference}"
        return text + f" ({self.total_s:.2f}s total, {self.per_instance_ms:.2f} ms/instance)"


def gap_pct(mean_length: float, reference_mean: float) -> float:
    return round((mean_length / reference_mean - 1.0) * 100.0, 2)


def solve_all(solver: str, instances: Sequence[TspInstance], seed: int, ctx: SolverContext):
    """Run ``solver`` on every instance; returns ``(lengths, seconds)`` with timing of solves only."""
    fn = get_solver(solver)
    lengths = np.empty(len(instances))
    elapsed = 0.0
    for i, inst in enumerate(instances):
        rng = np.random.default_rng([seed, i])
        start = time.perf_counter()
        tour = fn(inst, rng, ctx)
        elapsed += time.perf_counter() - start
        lengths[i] = tour_length(inst, tour)
    return lengths, elapsed


def reference_lengths(instances: Sequence[TspInstance], seed: int) -> tuple[np.ndarray, str]:
    """Exact lengths when ``n <= 15``, otherwise farthest insertion (not optimal)."""
    n = instances[0].n
    if n <= MAX_EXACT_N:
        return solve_all("exact", instances, seed, SolverContext())[0], "exact"
    return solve_all("farthest_insertion", instances, seed, SolverContext())[0], \
        "farthest_insertion (non-optimal)"


def evaluate_solver(solver: str, n: int, count: int, seed: int, params: Optional[ParameterStore] = None,
                    search: Optional[LocalSearchConfig] = None, reference: str = "auto",
                    reference_report: Optional[EvalReport] = None) -> EvalReport:
    """Solve ``count`` seeded random instances and aggregate length and time.

    ``reference`` is ``auto`` (exact for ``n <= 15``, farthest insertion
    above), ``exact``, ``farthest`` or ``none``. A ``reference_report``
    overrides it.
    """
    get_solver(solver)
    if count < 1:
        raise ValueError("count must be positive")
    instances = generate_instances(n, count, seed)
    ctx = SolverContext(params, search or LocalSearchConfig())
    lengths, elapsed = solve_all(solver, instances, seed, ctx)
    report = EvalReport(solver, n, count, seed, float(lengths.mean()), elapsed,
                        1000.0 * elapsed / count, lengths=lengths)
    if reference_report is not None:
        report.gap_pct = gap_pct(report.mean_length, reference_report.mean_length)
        report.reference = reference_report.solver
    elif reference == "exact" or (reference == "auto" and n <= MAX_EXACT_N):
        ref = solve_all("exact", instances, seed, SolverContext())[0]
        report.gap_pct, report.reference = gap_pct(report.mean_length, ref.mean()), "exact"
    elif reference in ("farthest", "auto"):
        ref = solve_all("farthest_insertion", instances, seed, SolverContext())[0]
        report.gap_pct = gap_pct(report.mean_length, ref.mean())
        report.reference = "farthest_insertion (non-optimal)"
    elif reference != "none":
        raise ValueError(f"unknown reference {reference!r}")
    return report


def reports_to_csv(reports: Sequence[EvalReport], timing: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for r in reports:
        writer.writerow(r.row(timing))
    return buf.getvalue()


# -- ablation ---------------------------------------------------------------

@dataclass
class AblationRow:
    variant: str
    n: int
    count: int
    mean_length: float
    gap_pct: Optional[float]
    reference: str


def default_count(n: int) -> int:
    """10,000 test instances up to TSP100, 128 above."""
    return 10_000 if n <= 100 else 128


def run_ablation(checkpoints: dict[str, ParameterStore], sizes: Sequence[int], seed: int,
                 counts: Optional[dict[int, int]] = None, variants: Sequence[str] = ABLATION_VARIANTS,
                 search: LocalSearchConfig = ABLATION_SEARCH) -> list[AblationRow]:
    """Mean lengths for each requested variant and size.

    ``wo_rl`` applies the combined search to uniform random tours and needs
    no checkpoint; every other variant is its checkpoint decoded greedily,
    then searched.
    """
    for v in variants:
        if v not in ABLATION_VARIANTS:
            raise ValueError(f"unknown ablation variant {v!r}")
        if v != "wo_rl" and v not in checkpoints:
            raise ValueError(f"missing checkpoint for variant {v!r}")
    rows = []
    for n in sizes:
        count = (counts or {}).get(n, default_count(n))
        instances = generate_instances(n, count, seed)
        ref, ref_name = reference_lengths(instances, seed)
        for v in variants:
            solver = "search" if v == "wo_rl" else "policy+search"
            ctx = SolverContext(checkpoints.get(v), search)
            lengths, _ = solve_all(solver, instances, seed, ctx)
            rows.append(AblationRow(v, n, count, float(lengths.mean()),
                                    gap_pct(lengths.mean(), ref.mean()), ref_name))
    return rows


def ablation_to_csv(rows: Sequence[AblationRow]) -> str:
    """Wide table: one line per size, a length and gap column per variant."""
    variants = [v for v in ABLATION_VARIANTS if any(r.variant == v for r in rows)]
    sizes = sorted({r.n for r in rows})
    cell = {(r.variant, r.n): r for r in rows}
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = ["n", "count", "reference"]
    for v in variants:
        header += [f"{v}_length", f"{v}_gap_pct"]
    writer.writerow(header)
    for n in sizes:
        any_row = next(r for r in rows if r.n == n)
        line = [str(n), str(any_row.count), any_row.reference]
        for v in variants:
            r = cell.get((v, n))
            line += ["", ""] if r is None else [f"{r.mean_length:.4f}", f"{r.gap_pct:.2f}"]
        writer.writerow(line)
    return buf.getvalue()
