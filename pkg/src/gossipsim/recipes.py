"""Named experiment recipes: corpus spec, pinned TTL/cache, sweep grids.

Each recipe reproduces one table family: it builds (or loads) the matched
10-graph corpus, sweeps the four protocols, and extracts the overhead and
delay needed for each coverage target. TTL values are pinned per corpus
rather than derived from the 130%-of-diameter rule, so the tables are
comparable across regenerated corpuses.

Coverage targets are compared with a small tolerance (default 5e-4): a
sweep point whose mean coverage rounds to 100.0% at one-decimal display
precision counts as full coverage. Exact comparison is available by setting
the tolerance to zero.

Grids are deliberately desk-scale. Degree-dependent sweeps run a coarse
logarithmic grid first and refine once around the best full-coverage point;
both grids are recorded in the output sidecar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import SimulationConfig
from .metrics import SweepPoint, overhead_for_coverage, sweep
from .protocol import ProtocolConfig, make_scheme
from .topology import Corpus, GeneratorSpec

#: Coverage slack equal to one-decimal percent display precision.
COVERAGE_DISPLAY_TOLERANCE = 5e-4

_FP_GRID = (0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5,
            0.6, 0.7, 0.8, 0.9, 0.95, 1.0)
# Degree-dependent alphas: small alpha floods (full coverage, high overhead),
# large alpha thins traffic until coverage breaks.
_DDF1_GRID = (0.001, 0.005, 0.01, 0.02, 0.04, 0.08, 0.15, 0.3, 0.6, 1.0, 1.5)
_DDF2_GRID = (0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.2, 1.5)


@dataclass(frozen=True)
class TableRecipe:
    name: str
    generator: GeneratorSpec
    ttl: int
    cache: int = 256
    corpus_size: int = 10
    corpus_seed: int = 42
    targets: tuple[float, ...] = (1.0,)
    protocols: tuple[str, ...] = ("fp", "pb", "ddf1", "ddf2")
    grids: dict = field(default_factory=dict)

    def grid_for(self, kind: str):
        if kind in self.grids:
            return self.grids[kind]
        if kind in ("fp", "pb"):
            return _FP_GRID
        return _DDF1_GRID if kind == "ddf1" else _DDF2_GRID


def _er(n, m):
    return GeneratorSpec("er", n, edge_count=m)


def _ba(n, m):
    return GeneratorSpec("ba", n, edges_per_node=m)


def _ws(n, k, p):
    return GeneratorSpec("ws", n, neighbors_each_side=k, rewire_prob=p)


def _kreg(n, k):
    return GeneratorSpec("kregular", n, k=k)


RECIPES: dict[str, TableRecipe] = {r.name: r for r in [
    TableRecipe("random-1000", _er(500, 1000), ttl=16,
                targets=(1.0, 0.99, 0.90, 0.75)),
    TableRecipe("random-1500", _er(500, 1500), ttl=10),
    TableRecipe("random-2000", _er(500, 2000), ttl=8),
    TableRecipe("scalefree-997", _ba(500, 2), ttl=10),
    TableRecipe("scalefree-1494", _ba(500, 3), ttl=7),
    TableRecipe("scalefree-1990", _ba(500, 4), ttl=6),
    TableRecipe("smallworld-1000", _ws(500, 2, 0.1), ttl=17),
    TableRecipe("smallworld-1500", _ws(500, 3, 0.1), ttl=12),
    TableRecipe("smallworld-2000", _ws(500, 4, 0.1), ttl=10),
    TableRecipe("kregular-1000", _kreg(500, 4), ttl=11),
    TableRecipe("kregular-1500", _kreg(500, 6), ttl=8),
    TableRecipe("kregular-2000", _kreg(500, 8), ttl=7),
]}


@dataclass(frozen=True)
class TableResult:
    recipe: str
    protocol: str
    target: float
    overhead: float | None
    delay: float | None

    def as_row(self):
        return (self.protocol, self.target, self.overhead, self.delay)


def base_config(recipe: TableRecipe, kind: str, steps: int = 250,
                sweep_seed: int = 0, free_rider_fraction: float = 0.0,
                cache: int | None = None, ttl: int | None = None) -> SimulationConfig:
    proto = ProtocolConfig(variant=make_scheme(kind, 0.5),
                           initial_ttl=ttl if ttl is not None else recipe.ttl)
    return SimulationConfig(protocol=proto, total_steps=steps,
                            cache_capacity=cache if cache is not None else recipe.cache,
                            free_rider_fraction=free_rider_fraction,
                            seed=sweep_seed)


def refine_grid(points: list[SweepPoint], target: float,
                tolerance: float) -> list[float]:
    """Six extra values bracketing the best full-coverage point.

    Mirrors the coarse-then-fine exploration of degree-dependent parameters:
    the interesting alpha sits where coverage is still full at minimum
    overhead, so refine between its grid neighbors.
    """
    hit = overhead_for_coverage(points, target, tolerance)
    if hit is None:
        return []
    best_idx = None
    for i, p in enumerate(points):
        if not math.isnan(p.coverage) and p.coverage >= target - tolerance \
                and p.overhead == hit[0]:
            best_idx = i
            break
    if best_idx is None:
        return []
    lo = points[best_idx - 1].param if best_idx > 0 else points[best_idx].param * 0.5
    hi = points[best_idx + 1].param if best_idx + 1 < len(points) \
        else points[best_idx].param * 1.5
    inner = np.linspace(lo, hi, 8)[1:-1]
    existing = {p.param for p in points}
    return [float(x) for x in inner if float(x) not in existing]


def sweep_protocol(corpus: Corpus, recipe: TableRecipe, kind: str,
                   steps: int = 250, repetitions: int = 1,
                   workers: int | None = None, sweep_seed: int = 0,
                   free_rider_fraction: float = 0.0,
                   cache: int | None = None, ttl: int | None = None,
                   tolerance: float = COVERAGE_DISPLAY_TOLERANCE,
                   refine: bool = True) -> tuple[list[SweepPoint], dict]:
    """Sweep one protocol per the recipe; returns (points, grid metadata)."""
    cfg = base_config(recipe, kind, steps, sweep_seed, free_rider_fraction,
                      cache, ttl)
    coarse = list(recipe.grid_for(kind))
    points = sweep(corpus, cfg, coarse, repetitions, workers)
    meta = {"coarse_grid": coarse, "refined_grid": []}
    if refine and kind in ("ddf1", "ddf2"):
        extra = refine_grid(points, max(recipe.targets), tolerance)
        if extra:
            meta["refined_grid"] = extra
            more = sweep(corpus, cfg, extra, repetitions, workers)
            points = sorted(points + more, key=lambda p: p.param)
    return points, meta


def run_recipe(recipe: TableRecipe, corpus: Corpus, steps: int = 250,
               repetitions: int = 1, workers: int | None = None,
               sweep_seed: int = 0,
               tolerance: float = COVERAGE_DISPLAY_TOLERANCE,
               ) -> tuple[list[TableResult], dict]:
    """All protocols, all targets. Returns results plus sidecar metadata."""
    results = []
    meta: dict = {"recipe": recipe.name, "steps": steps,
                  "repetitions": repetitions, "sweep_seed": sweep_seed,
                  "ttl": recipe.ttl, "cache": recipe.cache,
                  "coverage_tolerance": tolerance, "grids": {}}
    for kind in recipe.protocols:
        points, grid_meta = sweep_protocol(
            corpus, recipe, kind, steps, repetitions, workers, sweep_seed,
            tolerance=tolerance)
        meta["grids"][kind] = grid_meta
        for target in recipe.targets:
            hit = overhead_for_coverage(points, target, tolerance)
            if hit is None:
                results.append(TableResult(recipe.name, kind, target, None, None))
            else:
                results.append(TableResult(recipe.name, kind, target,
                                           hit[0], hit[1]))
    return results, meta


def table_rows_with_pct(results: list[TableResult]):
    """(protocol, target, overhead, delay, pct_vs_best) rows; pct is the
    overhead excess over the best protocol at the same target, in percent."""
    rows = []
    by_target: dict[float, list[TableResult]] = {}
    for r in results:
        by_target.setdefault(r.target, []).append(r)
    best = {t: min((r.overhead for r in rs if r.overhead is not None),
                   default=None)
            for t, rs in by_target.items()}
    for r in results:
        if r.overhead is None or best[r.target] is None:
            pct = None
        else:
            pct = 100.0 * (r.overhead - best[r.target]) / best[r.target]
        rows.append((r.protocol, r.target, r.overhead, r.delay, pct))
    return rows
