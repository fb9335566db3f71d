"""Per-timestep simulation pipeline and the scaling benchmark harness.

One timestep runs: vehicle tree build, candidate pair enumeration,
link classification with range gating, large-scale power, neighborhood
statistics, small-scale sigma, and one stochastic draw per link. Output is
canonically ordered by (time, tx id, rx id) so runs diff cleanly regardless
of worker count.
"""

import logging
import math
import os
import time as _time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .geom import Point2, Polygon2
from .linkclass import (LinkRecord, LinkType, classify, enumerate_pairs,
                        neighborhood_stats, with_stats)
from .proploss import PowerResult, large_scale_power
from .scenario import (RadioConfig, Scenario, StaticObject, VehicleOutline,
                       WorldState, build_static_tree, density_maxima, make_state)
from .smallscale import link_rng, sample_power, sigma_for

log = logging.getLogger(__name__)

PHASES = ("tree_build", "classification", "large_scale", "small_scale")


@dataclass(frozen=True)
class LinkResult:
    link: LinkRecord
    power: PowerResult
    sigma_db: float
    sampled_dbm: float
    below_threshold: bool


@dataclass
class TimestepReport:
    time: float
    counts: dict = field(default_factory=dict)  # LinkType value -> link count
    timings: dict = field(default_factory=dict)  # phase name -> seconds
    n_records: int = 0


@dataclass
class RunReport:
    timesteps: list = field(default_factory=list)
    total_wall_s: float = 0.0

    def total_counts(self):
        out = {t.value: 0 for t in LinkType}
        for ts in self.timesteps:
            for k, v in ts.counts.items():
                out[k] = out.get(k, 0) + v
        return out

    def total_timings(self):
        out = {p: 0.0 for p in PHASES}
        for ts in self.timesteps:
            for k, v in ts.timings.items():
                out[k] = out.get(k, 0.0) + v
        return out

    def total_records(self):
        return sum(ts.n_records for ts in self.timesteps)


def worker_count(explicit=None) -> int:
    """Workers to use; the GEMV_WORKERS env var caps whatever is requested."""
    n = explicit if explicit is not None else (os.cpu_count() or 1)
    env = os.environ.get("GEMV_WORKERS")
    if env:
        try:
            n = min(n, int(env))
        except ValueError:
            log.warning("ignoring non-integer GEMV_WORKERS=%r", env)
    return max(1, n)


def _parallel_map(fn, items, workers):
    if workers <= 1 or len(items) < 32:
        return [fn(x) for x in items]
    chunk = max(1, len(items) // (workers * 4))
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items, chunksize=chunk))


def resolve_density_maxima(cfg: RadioConfig, static_objects, vehicle_lists) -> RadioConfig:
    """Fill in nv_max / as_max from scene content when not configured."""
    if cfg.nv_max is not None and cfg.as_max is not None:
        return cfg
    nv, built = density_maxima(static_objects, vehicle_lists)
    return replace(cfg,
                   nv_max=cfg.nv_max if cfg.nv_max is not None else nv,
                   as_max=cfg.as_max if cfg.as_max is not None else built)


def run_timestep(state: WorldState, cfg: RadioConfig, seed: int = 0,
                 workers=None, tree_build_s: float = 0.0):
    """Evaluate every link in one world snapshot.

    Returns (results, report). Results are sorted by (time, tx, rx); a
    failure in one link is logged and drops only that link.
    """
    if cfg.nv_max is None or cfg.as_max is None:
        cfg = resolve_density_maxima(cfg, state.static_objects, [state.vehicles])
    nworkers = worker_count(workers)

    t0 = _time.perf_counter()
    pairs = enumerate_pairs(state, cfg)

    def _classify(pair):
        try:
            return classify(state, pair[0], pair[1], cfg)
        except Exception:
            log.exception("classification failed for %s-%s at t=%s", *pair, state.time)
            return None

    links = [l for l in _parallel_map(_classify, pairs, nworkers) if l is not None]
    t_classify = _time.perf_counter() - t0

    t1 = _time.perf_counter()

    def _power(link):
        try:
            return large_scale_power(link, state, cfg)
        except Exception:
            log.exception("large-scale power failed for %s-%s at t=%s",
                          link.tx_id, link.rx_id, state.time)
            return None

    powers = _parallel_map(_power, links, nworkers)
    t_large = _time.perf_counter() - t1

    t2 = _time.perf_counter()
    results = []
    for link, power in zip(links, powers):
        if power is None:
            continue
        try:
            stats = neighborhood_stats(state, link.tx_id, link.rx_id, cfg, link.link_type)
            link = with_stats(link, stats)
            sigma = sigma_for(link, cfg)
            rng = link_rng(seed, state.time, link.tx_id, link.rx_id)
            sampled = sample_power(power.large_scale_dbm, sigma, rng)
        except Exception:
            log.exception("small-scale stage failed for %s-%s at t=%s",
                          link.tx_id, link.rx_id, state.time)
            continue
        results.append(LinkResult(
            link=link, power=power, sigma_db=sigma, sampled_dbm=sampled,
            below_threshold=sampled < cfg.reception_threshold_dbm))
    t_small = _time.perf_counter() - t2

    results.sort(key=lambda r: (r.link.time, r.link.tx_id, r.link.rx_id))
    counts = {t.value: 0 for t in LinkType}
    for r in results:
        counts[r.link.link_type.value] += 1
    report = TimestepReport(
        time=state.time, counts=counts, n_records=len(results),
        timings={"tree_build": tree_build_s, "classification": t_classify,
                 "large_scale": t_large, "small_scale": t_small})
    return results, report


def run(scenario: Scenario, seed: int = 0, workers=None):
    """Evaluate every timestep of a scenario. Returns (results, RunReport)."""
    cfg = resolve_density_maxima(
        scenario.cfg, scenario.static_objects,
        [scenario.trace.vehicles_at(t) for t in scenario.times])
    report = RunReport()
    all_results = []
    wall0 = _time.perf_counter()
    for t in scenario.times:
        b0 = _time.perf_counter()
        state = scenario.step_state(t)
        tree_s = _time.perf_counter() - b0
        results, ts_report = run_timestep(state, cfg, seed=seed, workers=workers,
                                          tree_build_s=tree_s)
        all_results.extend(results)
        report.timesteps.append(ts_report)
    report.total_wall_s = _time.perf_counter() - wall0
    return all_results, report


# ----------------------------------------------------------------- benchmark

def synthetic_scene(n_objects: int, seed: int = 0):
    """Grid city with constant density; area grows with the object count.

    Half the objects are square buildings on a block grid, half are vehicles
    scattered along the streets between them.
    """
    rng = np.random.default_rng(seed)
    n_static = n_objects // 2
    n_vehicles = n_objects - n_static
    side = max(1, math.ceil(math.sqrt(n_static)))
    block = 100.0

    statics = []
    for i in range(n_static):
        gx, gy = (i % side) * block, (i // side) * block
        x0, y0 = gx + 30.0, gy + 30.0
        statics.append(StaticObject(
            id=f"b{i}", kind="building", height=10.0,
            outline=Polygon2([(x0, y0), (x0 + 40, y0), (x0 + 40, y0 + 40), (x0, y0 + 40)])))

    extent = side * block
    vehicles = []
    for i in range(n_vehicles):
        # keep vehicles on the street lattice, off the building pads
        along = rng.uniform(0, extent)
        lane = rng.integers(0, side + 1) * block + rng.uniform(5, 15)
        if rng.uniform() < 0.5:
            x, y, heading = along, lane, 0.0
        else:
            x, y, heading = lane, along, math.pi / 2
        vehicles.append(VehicleOutline(id=f"v{i:06d}", center=Point2(x, y), heading=heading))
    return statics, vehicles


BENCH_RADIUS = 120.0


def bench_config() -> RadioConfig:
    # short ranges keep per-vehicle neighbor counts size-independent; high
    # density references keep routine clamp warnings out of the timed loop
    return RadioConfig(r_los_urban=BENCH_RADIUS, r_nlosv=BENCH_RADIUS,
                       r_nlosb=BENCH_RADIUS, nv_max=20000.0, as_max=4.0)


def benchmark(sizes, seed: int = 0, workers=None, repeats: int = 3):
    """Time each pipeline phase across scene sizes and check doubling trends.

    Returns (rows, violations): one row dict per size with phase timings and
    link counts; violations lists any consecutive-doubling ratio above 2.5
    for tree build, classification, or per-link processing.
    """
    cfg = bench_config()
    rows = []
    for n in sizes:
        statics, vehicles = synthetic_scene(n, seed=seed)
        # warm lazy outline/bounds caches so every repeat times the same work
        for v in vehicles:
            v.outline.bounds
        for s in statics:
            s.outline.bounds
        timings = None
        n_links = 0
        for _ in range(max(1, repeats)):
            b0 = _time.perf_counter()
            static_tree = build_static_tree(statics)
            state = make_state(0.0, vehicles, statics, static_tree)
            tree_s = _time.perf_counter() - b0
            results, rep = run_timestep(state, cfg, seed=seed, workers=workers,
                                        tree_build_s=tree_s)
            n_links = len(results)
            if timings is None:
                timings = dict(rep.timings)
            else:
                timings = {k: min(v, rep.timings[k]) for k, v in timings.items()}
        row = {"size": n, "n_vehicles": len(vehicles), "n_static": len(statics),
               "links": n_links, "total_s": sum(timings.values())}
        row.update({f"{k}_s": v for k, v in timings.items()})
        rows.append(row)

    violations = []
    floor = 1e-3  # ratios of sub-millisecond timings are noise
    for prev, cur in zip(rows, rows[1:]):
        if cur["size"] != 2 * prev["size"]:
            continue
        checks = {
            "tree_build": (prev["tree_build_s"], cur["tree_build_s"]),
            "classification": (prev["classification_s"], cur["classification_s"]),
            "per_link": (_per_link_s(prev), _per_link_s(cur)),
        }
        for name, (a, b) in checks.items():
            ratio = max(b, floor) / max(a, floor)
            if ratio > 2.5:
                violations.append(
                    f"{name}: {prev['size']}->{cur['size']} objects grew {ratio:.2f}x (> 2.5x)")
    return rows, violations


def _per_link_s(row):
    links = max(row["links"], 1)
    return (row["large_scale_s"] + row["small_scale_s"]) / links
