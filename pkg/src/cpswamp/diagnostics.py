"""Swamp detection on traces, seed-sweep comparisons and CSV export."""

from __future__ import annotations

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from os import PathLike
from typing import Sequence

import numpy as np

from cpswamp.solvers import (
    IterationRecord,
    IterationTrace,
    SolveReport,
    SolverConfig,
    random_init,
    run,
)
from cpswamp.tensor_core import DenseTensor

DEFAULT_WINDOW = 50
DEFAULT_FLAT_TOL = 1e-4


@dataclass(frozen=True)
class SwampReport:
    detected: bool
    # inclusive (start_iter, end_iter) pairs, in trace iteration numbers
    intervals: tuple[tuple[int, int], ...]
    plateau_depth: float | None


def detect_swamp(
    trace: IterationTrace | Sequence[float],
    window: int = DEFAULT_WINDOW,
    flat_tol: float = DEFAULT_FLAT_TOL,
    fit_tol: float = 1e-5,
) -> SwampReport:
    """Find stretches where the fit error stalls.

    Step ``k -> k+1`` is flat when ``(f_k - f_{k+1}) / f_k < flat_tol`` while
    ``f_k > fit_tol``. A run of at least `window` consecutive flat steps is
    reported as the interval from the first to the last iterate it touches,
    so ``end - start >= window``. ``plateau_depth`` is the median fit error
    over the longest interval.

    `trace` may also be a bare sequence of fit errors, numbered from 1.
    """
    if window < 2:
        raise ValueError(f"window must be at least 2, got {window}")
    if not flat_tol > 0:
        raise ValueError(f"flat_tol must be positive, got {flat_tol}")
    if isinstance(trace, IterationTrace):
        f = trace.fit_errors
        iters = trace.iters
    else:
        f = np.asarray(trace, dtype=np.float64)
        iters = np.arange(1, f.size + 1)
    if f.size < window:
        return SwampReport(False, (), None)

    head, tail = f[:-1], f[1:]
    above = head > fit_tol
    rel = np.full(head.shape, np.inf)
    np.divide(head - tail, head, out=rel, where=above & (head != 0))
    flat = above & (rel < flat_tol)

    intervals = []
    # run boundaries of the boolean mask
    padded = np.concatenate([[False], flat, [False]])
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    for s, e in zip(edges[::2], edges[1::2]):
        if e - s >= window:
            intervals.append((int(iters[s]), int(iters[e])))
    if not intervals:
        return SwampReport(False, (), None)
    start, end = max(intervals, key=lambda iv: iv[1] - iv[0])
    mask = (iters >= start) & (iters <= end)
    return SwampReport(True, tuple(intervals), float(np.median(f[mask])))


def _stats(values) -> dict[str, float]:
    v = np.asarray(values, dtype=np.float64)
    return {
        "min": float(v.min()),
        "median": float(np.median(v)),
        "mean": float(v.mean()),
        "max": float(v.max()),
    }


@dataclass(frozen=True)
class MethodSummary:
    label: str
    n_seeds: int
    iterations: dict[str, float]
    final_error: dict[str, float]
    final_change: dict[str, float]
    convergence_rate: float


@dataclass(frozen=True)
class ComparisonSummary:
    methods: tuple[MethodSummary, ...]
    n_seeds: int
    reports: tuple[tuple[SolveReport, ...], ...]

    def __getitem__(self, label: str) -> MethodSummary:
        for m in self.methods:
            if m.label == label:
                return m
        raise KeyError(label)

    def rows(self) -> list[list[str]]:
        header = ["method", "seeds", "converged"]
        for name in ("iters", "abs_err", "rel_change"):
            header += [f"{name}_{s}" for s in ("min", "median", "mean", "max")]
        rows = [header]
        for m in self.methods:
            row = [m.label, str(m.n_seeds), f"{m.convergence_rate:.17g}"]
            for d in (m.iterations, m.final_error, m.final_change):
                row += [f"{d[s]:.17g}" for s in ("min", "median", "mean", "max")]
            rows.append(row)
        return rows

    def to_table(self) -> str:
        rows = self.rows()
        pretty = [rows[0]] + [
            r[:2] + [f"{float(x):.4g}" for x in r[2:]] for r in rows[1:]
        ]
        widths = [max(len(r[c]) for r in pretty) for c in range(len(pretty[0]))]
        return "\n".join(
            "  ".join(cell.rjust(w) for cell, w in zip(r, widths)) for r in pretty
        )

    def write_csv(self, path: str | PathLike) -> None:
        with open(path, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(self.rows())


def _label(cfg: SolverConfig, index: int, labels: set) -> str:
    base = cfg.method.value
    return base if base not in labels else f"{base}#{index}"


def compare_methods(
    t: DenseTensor,
    configs: Sequence[SolverConfig],
    n_seeds: int,
    max_workers: int | None = None,
    labels: Sequence[str] | None = None,
) -> ComparisonSummary:
    """Run every config on seeds ``0 .. n_seeds-1`` and aggregate.

    For a given seed all configs start from the same uniform random
    factors, so differences come from the method alone. Runs may execute
    on a thread pool of `max_workers`; aggregation is always in seed order.
    """
    if n_seeds < 1:
        raise ValueError(f"n_seeds must be at least 1, got {n_seeds}")
    if not configs:
        raise ValueError("need at least one config")
    if labels is None:
        seen: set = set()
        labels = []
        for i, cfg in enumerate(configs):
            lab = _label(cfg, i, seen)
            seen.add(lab)
            labels.append(lab)

    jobs = [
        (ci, seed, replace(cfg, seed=seed))
        for ci, cfg in enumerate(configs)
        for seed in range(n_seeds)
    ]

    def work(job):
        _, seed, cfg = job
        return run(t, cfg, random_init(t.dims, cfg.rank, seed))

    if max_workers is None or max_workers <= 1:
        results = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(work, jobs))

    per_method = [[] for _ in configs]
    for (ci, _, _), rep in zip(jobs, results):
        per_method[ci].append(rep)

    summaries = []
    for lab, reps in zip(labels, per_method):
        summaries.append(
            MethodSummary(
                label=lab,
                n_seeds=n_seeds,
                iterations=_stats([r.iterations for r in reps]),
                final_error=_stats([r.fit_error for r in reps]),
                final_change=_stats([r.final_change for r in reps]),
                convergence_rate=sum(r.status.converged for r in reps) / n_seeds,
            )
        )
    return ComparisonSummary(tuple(summaries), n_seeds, tuple(map(tuple, per_method)))


def threads_from_env(default: int = 1) -> int:
    """Thread cap from ``CP_SWAMP_THREADS``."""
    raw = os.environ.get("CP_SWAMP_THREADS")
    if not raw:
        return default
    try:
        return max(1, int(raw))
    except ValueError:
        raise ValueError(f"CP_SWAMP_THREADS must be an integer, got {raw!r}") from None


def trace_header(order: int) -> list[str]:
    return (
        ["iter", "fit_error", "lambda"]
        + [f"sigma_min_mode{n}" for n in range(1, order + 1)]
        + [f"delta_mode{n}" for n in range(1, order + 1)]
    )


def export_trace_csv(trace: IterationTrace, path: str | PathLike) -> None:
    """Write one row per sweep, floats at 17 significant digits, LF endings."""
    try:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(trace_header(trace.order))
            for r in trace.records:
                w.writerow(
                    [str(r.iter), f"{r.fit_error:.17g}", f"{r.lam:.17g}"]
                    + [f"{v:.17g}" for v in r.sigma_min]
                    + [f"{v:.17g}" for v in r.delta]
                )
    except OSError as exc:
        raise OSError(f"cannot write trace CSV {os.fspath(path)!r}: {exc}") from exc


def read_trace_csv(path: str | PathLike) -> IterationTrace:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise OSError(f"cannot read trace CSV {os.fspath(path)!r}: {exc}") from exc
    header = rows[0]
    order = (len(header) - 3) // 2
    if header != trace_header(order):
        raise ValueError(f"{path}: unexpected trace header {header}")
    trace = IterationTrace(order=order)
    for row in rows[1:]:
        vals = [float(x) for x in row[1:]]
        trace.records.append(
            IterationRecord(
                iter=int(row[0]),
                fit_error=vals[0],
                lam=vals[1],
                sigma_min=tuple(vals[2:2 + order]),
                delta=tuple(vals[2 + order:]),
            )
        )
    return trace
