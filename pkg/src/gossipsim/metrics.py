"""Trace analysis and sweep orchestration.

Coverage is the fraction of non-origin nodes reached, averaged over
messages; delay is the mean hop count pooled over all first deliveries; the
overhead ratio divides total sends by the spanning-tree lower bound
(messages * (n - 1)), so 1.0 is a perfect single-tree broadcast and anything
above it is duplicate traffic absorbed (or not) by the caches.

A sweep runs one protocol over a parameter grid across every corpus graph
and repetition with derived per-run seeds, aggregating arithmetic means per
grid value.
"""

from __future__ import annotations

import math
import multiprocessing
from dataclasses import dataclass, replace

import numpy as np

from .engine import EventTrace, SimulationConfig, run
from .protocol import scheme_with_param
from .rng import TAG_SWEEP, derive
from .topology import Corpus


@dataclass(frozen=True)
class RunReport:
    """Per-run aggregates."""

    coverage: float | None
    mean_delay: float | None
    delivered: int
    lower_bound: int
    overhead_ratio: float | None
    messages_generated: int


@dataclass(frozen=True)
class SweepPoint:
    """Aggregates for one grid value over (corpus graphs x repetitions)."""

    param: float
    coverage: float
    delay: float | None
    overhead: float
    stdev_coverage: float
    runs: int


class SweepRunError(RuntimeError):
    """A constituent run failed; identifies the (param, graph, rep) triple."""


def coverage(trace: EventTrace, node_count: int,
             count_origin: bool = False) -> float | None:
    """Mean over messages of receivers/(n-1); None when nothing was generated.

    ``count_origin`` switches the denominator to n (sensitivity variant
    where the origin counts itself as covered).
    """
    m = trace.message_count
    if m == 0:
        return None
    if node_count < 2:
        return 1.0
    if count_origin:
        return float(np.mean((trace.receiver_counts + 1) / node_count))
    return float(np.mean(trace.receiver_counts / (node_count - 1)))


def mean_delay(trace: EventTrace) -> float | None:
    """Mean hop count over all first deliveries of all messages; None when
    no non-origin node received anything."""
    total_receivers = int(trace.receiver_counts.sum())
    if total_receivers == 0:
        return None
    return float(trace.first_hop_sum.sum() / total_receivers)


def overhead_ratio(trace: EventTrace, node_count: int) -> float:
    """Total sends / (messages * (n - 1))."""
    m = trace.message_count
    if m == 0:
        raise ValueError("overhead ratio requires at least one generated message")
    return trace.total_sends / (m * (node_count - 1))


def run_report(trace: EventTrace) -> RunReport:
    m = trace.message_count
    n = trace.node_count
    lower = m * (n - 1)
    return RunReport(
        coverage=coverage(trace, n),
        mean_delay=mean_delay(trace),
        delivered=trace.total_sends,
        lower_bound=lower,
        overhead_ratio=(trace.total_sends / lower) if lower > 0 else None,
        messages_generated=m)


def report_from_records(generations: dict, deliveries: dict,
                        node_count: int) -> RunReport:
    """Recompute a RunReport from dumped trace records (the analyze path).

    Independent of the engine's aggregate arrays: coverage and delay come
    from the first-delivery records, delivered from the record count (sends
    and deliveries balance exactly).
    """
    m = len(generations["msg"])
    first_mask = deliveries["first"] == 1
    lower = m * (node_count - 1)
    if m == 0:
        return RunReport(None, None, int(len(deliveries["msg"])), 0, None, 0)
    counts = np.zeros(m, np.int64)
    msg_ids = deliveries["msg"][first_mask]
    np.add.at(counts, msg_ids, 1)
    cov = float(np.mean(counts / (node_count - 1))) if node_count > 1 else 1.0
    firsts = int(first_mask.sum())
    delay = float(deliveries["hops"][first_mask].sum() / firsts) if firsts else None
    delivered = int(len(deliveries["msg"]))
    return RunReport(cov, delay, delivered, lower,
                     (delivered / lower) if lower > 0 else None, m)


# ---------------------------------------------------------------------------
# sweeps

def _run_task(args):
    graph, cfg = args
    try:
        trace = run(graph, cfg)
    except Exception as exc:  # propagated with run identity by the caller
        return ("err", f"{type(exc).__name__}: {exc}")
    report = run_report(trace)
    return ("ok", (report.coverage, report.mean_delay, report.overhead_ratio,
                   report.messages_generated))


def sweep(corpus: Corpus, base_cfg: SimulationConfig, grid,
          repetitions: int = 1, workers: int | None = None) -> list[SweepPoint]:
    """Run grid x corpus graphs x repetitions and aggregate per grid value.

    Per-run seeds derive from (base seed, param index, graph index, rep), so
    repeating a sweep with identical inputs reproduces identical points.
    """
    grid = list(grid)
    if not grid:
        raise ValueError("parameter grid must not be empty")
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    tasks = []
    labels = []
    for pi, value in enumerate(grid):
        proto = replace(base_cfg.protocol,
                        variant=scheme_with_param(base_cfg.protocol.variant, value))
        for gi, graph in enumerate(corpus.graphs):
            for rep in range(repetitions):
                seed = derive(base_cfg.seed, TAG_SWEEP, pi, gi, rep)
                cfg = replace(base_cfg, protocol=proto, seed=seed)
                tasks.append((graph, cfg))
                labels.append((value, gi, rep, seed))
    if workers is not None and workers > 1 and len(tasks) > 1:
        ctx = multiprocessing.get_context("fork")
        with ctx.Pool(workers) as pool:
            outcomes = pool.map(_run_task, tasks, chunksize=1)
    else:
        outcomes = [_run_task(task) for task in tasks]
    results = []
    for outcome, (value, gi, rep, seed) in zip(outcomes, labels):
        if outcome[0] == "err":
            raise SweepRunError(
                f"run failed at param={value} graph={gi} rep={rep} "
                f"seed={seed}: {outcome[1]}")
        results.append(outcome[1])

    points = []
    per_point = len(corpus.graphs) * repetitions
    for pi, value in enumerate(grid):
        chunk = results[pi * per_point:(pi + 1) * per_point]
        covs = [c for c, _, _, _ in chunk if c is not None]
        delays = [d for _, d, _, _ in chunk if d is not None]
        overs = [o for _, _, o, _ in chunk if o is not None]
        cov_mean = float(np.mean(covs)) if covs else math.nan
        stdev = float(np.std(covs, ddof=1)) if len(covs) > 1 else 0.0
        points.append(SweepPoint(
            param=float(value),
            coverage=cov_mean,
            delay=float(np.mean(delays)) if delays else None,
            overhead=float(np.mean(overs)) if overs else math.nan,
            stdev_coverage=stdev,
            runs=len(chunk)))
    return points


def overhead_for_coverage(points, target: float,
                          tolerance: float = 0.0) -> tuple[float, float | None] | None:
    """Smallest mean overhead among points whose mean coverage reaches the
    target; None when unreachable.

    ``tolerance`` relaxes the comparison (e.g. 5e-4 accepts coverages that
    round to 100.0% at one-decimal display precision).
    """
    eligible = [p for p in points
                if not math.isnan(p.coverage) and p.coverage >= target - tolerance]
    if not eligible:
        return None
    best = min(eligible, key=lambda p: p.overhead)
    return best.overhead, best.delay


# ---------------------------------------------------------------------------
# CSV emission

def _fmt(value) -> str:
    if value is None:
        return "nan"
    return format(value, ".6g")


def write_sweep_csv(points, path) -> None:
    """Header `param,coverage,delay,overhead,stdev_coverage,runs`; six
    significant digits."""
    lines = ["param,coverage,delay,overhead,stdev_coverage,runs\n"]
    for p in points:
        lines.append(f"{_fmt(p.param)},{_fmt(p.coverage)},{_fmt(p.delay)},"
                     f"{_fmt(p.overhead)},{_fmt(p.stdev_coverage)},{p.runs}\n")
    with open(path, "w") as fh:
        fh.write("".join(lines))


def write_table_csv(rows, path, include_pct: bool = False) -> None:
    """Rows of (protocol, target_coverage, overhead, delay[, pct_vs_best]).

    overhead/delay may be None (target unreachable), emitted as `nan`.
    """
    header = "protocol,target_coverage,overhead,delay"
    if include_pct:
        header += ",pct_vs_best"
    lines = [header + "\n"]
    for row in rows:
        cells = [str(row[0])] + [_fmt(x) for x in row[1:]]
        lines.append(",".join(cells) + "\n")
    with open(path, "w") as fh:
        fh.write("".join(lines))
