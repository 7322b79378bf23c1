"""Acquisition comparison harness: run matched campaigns over one labeled
pool, one cell per (acquisition, seed), and aggregate recovery curves."""
from __future__ import annotations

import csv
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields

import numpy as np

from .campaign import ACQUISITIONS, CampaignConfig, build_initial_data, init_campaign, run
from .gp import GpConfig
from .oracles import LookupOracle
from .pareto import (
    MetricRecord,
    fraction_recovered,
    non_dominated_mask,
    read_metrics_csv,
    write_metrics_csv,
)

logger = logging.getLogger("poolbo.bench")

SUMMARY_HEADER = (
    "acquisition", "iteration", "mean_hv", "ci95_hv",
    "mean_fraction", "ci95_fraction", "n_seeds",
)


@dataclass(frozen=True)
class BenchSpec:
    """One benchmark: a labeled pool, a set of acquisitions, matched seeds."""

    pool_path: str
    output_dir: str
    batch_size: int
    init_size: int
    acquisitions: tuple = ("qpmhi", "qehvi_mc", "thompson", "random")
    seeds: tuple = (0, 1, 2, 3, 4)
    iterations: int = 20
    mc_samples: int = 256
    ref_rule: str = "nadir_minus_epsilon"
    true_front_ids: tuple | None = None
    gp: GpConfig = field(default_factory=GpConfig)

    def __post_init__(self):
        object.__setattr__(self, "acquisitions", tuple(self.acquisitions))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        if not self.acquisitions:
            raise ValueError("need at least one acquisition")
        unknown = set(self.acquisitions) - set(ACQUISITIONS)
        if unknown:
            raise ValueError(f"unknown acquisition(s): {sorted(unknown)}")
        if not self.seeds or len(set(self.seeds)) != len(self.seeds):
            raise ValueError("seeds must be non-empty and distinct")
        if self.iterations < 1:
            raise ValueError("iterations must be at least 1")
        if self.batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.init_size < 2:
            raise ValueError("init_size must be at least 2")
        if self.ref_rule not in ("nadir_of_initial", "nadir_minus_epsilon"):
            raise ValueError(
                "bench ref_rule must be 'nadir_of_initial' or 'nadir_minus_epsilon', "
                f"got {self.ref_rule!r}"
            )
        if self.true_front_ids is not None:
            object.__setattr__(self, "true_front_ids", tuple(self.true_front_ids))

    def to_dict(self) -> dict:
        import dataclasses

        out = dataclasses.asdict(self)
        out["acquisitions"] = list(self.acquisitions)
        out["seeds"] = list(self.seeds)
        out["true_front_ids"] = None if self.true_front_ids is None else list(self.true_front_ids)
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "BenchSpec":
        if not isinstance(payload, dict):
            raise ValueError("bench spec must be a mapping")
        work = dict(payload)
        gp = work.pop("gp", None)
        if gp is None:
            gp = GpConfig()
        elif not isinstance(gp, GpConfig):
            gp = GpConfig(**gp)
        known = {f.name for f in fields(cls)} - {"gp"}
        unknown = set(work) - known
        if unknown:
            raise ValueError(f"unknown bench field(s): {sorted(unknown)}")
        try:
            return cls(gp=gp, **work)
        except TypeError as exc:
            raise ValueError(str(exc)) from None


def true_pareto_ids(pool_path) -> tuple:
    """Recompute the non-dominated ids from the pool's own labels."""
    oracle = LookupOracle.from_pool_csv(pool_path)
    from .generation import load_pool

    pool = load_pool(pool_path)
    objectives = np.stack([oracle.table[c.genome] for c in pool])
    mask = non_dominated_mask(objectives)
    return tuple(pool[i].id for i in np.flatnonzero(mask))


def _cell_path(output_dir, acquisition: str, seed: int) -> str:
    return os.path.join(output_dir, "cells", f"{acquisition}_seed{seed}.csv")


def _resolve_truth(spec: BenchSpec) -> tuple:
    recomputed = true_pareto_ids(spec.pool_path)
    if spec.true_front_ids is not None and set(spec.true_front_ids) != set(recomputed):
        raise ValueError(
            "true_front_ids in the bench spec disagree with the pool labels; "
            f"spec has {len(spec.true_front_ids)}, labels give {len(recomputed)}"
        )
    return recomputed


def shared_ref_point(spec: BenchSpec) -> tuple:
    """Resolve the bench spec's nadir rule against the full pool labels.

    Per-cell nadir rules would give every seed its own reference point and
    make hypervolumes incomparable across cells, so the rule is applied once
    to the whole labeled pool and handed to each campaign as explicit.
    """
    oracle = LookupOracle.from_pool_csv(spec.pool_path)
    labels = np.stack(list(oracle.table.values()))
    lo = labels.min(axis=0)
    if spec.ref_rule == "nadir_of_initial":
        ref = lo
    else:
        span = labels.max(axis=0) - lo
        ref = lo - np.where(span > 0, 1e-6 * span, 1e-6)
    return tuple(float(v) for v in ref)


def run_cell(spec: BenchSpec, acquisition: str, seed: int, true_ids=None,
             ref_point=None) -> list:
    """Run one campaign cell and write its per-iteration metrics CSV.

    The file gets an extra iteration-0 row for the initial sample so curves
    start at the shared baseline.
    """
    if true_ids is None:
        true_ids = _resolve_truth(spec)
    if ref_point is None:
        ref_point = shared_ref_point(spec)
    oracle = LookupOracle.from_pool_csv(spec.pool_path)
    cfg = CampaignConfig(
        iterations=spec.iterations,
        batch_size=spec.batch_size,
        mc_samples=spec.mc_samples,
        n_objectives=oracle.m,
        acquisition=acquisition,
        ref_rule="explicit",
        ref_point=tuple(ref_point),
        pool_path=spec.pool_path,
        oracle=f"lookup:{spec.pool_path}",
        init={"pool_sample": spec.init_size},
        seed=seed,
        gp=spec.gp,
    )
    state = init_campaign(cfg, build_initial_data(cfg, oracle))
    baseline = MetricRecord(
        iteration=0,
        hv=state.hv_initial,
        relative_hvi=0.0 if state.hv_initial > 0 else None,
        fraction_recovered=fraction_recovered(state.dataset.ids, true_ids),
        batch_ids=(),
    )
    state = run(state, cfg, oracle=oracle, true_front_ids=true_ids)
    records = [baseline] + state.history
    path = _cell_path(spec.output_dir, acquisition, seed)
    os.makedirs(os.path.dirname(path), exist_ok=True)
    write_metrics_csv(path, records)
    return records


def _run_cell_job(args) -> str:
    spec_dict, acquisition, seed, true_ids, ref_point = args
    spec = BenchSpec.from_dict(spec_dict)
    run_cell(spec, acquisition, seed, true_ids=true_ids, ref_point=ref_point)
    return _cell_path(spec.output_dir, acquisition, seed)


def _mean_ci(values) -> tuple:
    arr = np.asarray(values, dtype=float)
    mean = float(arr.mean())
    if arr.size < 2:
        return mean, 0.0
    return mean, float(1.96 * arr.std(ddof=1) / math.sqrt(arr.size))


def aggregate(records_by_cell: dict) -> list:
    """Mean and normal 95% interval per acquisition per iteration."""
    by_acq: dict = {}
    for (acq, _), records in records_by_cell.items():
        by_acq.setdefault(acq, []).append(records)
    rows = []
    for acq in sorted(by_acq):
        runs = by_acq[acq]
        lengths = {len(r) for r in runs}
        if len(lengths) != 1:
            raise ValueError(f"cells for {acq} have unequal lengths: {sorted(lengths)}")
        for t in range(lengths.pop()):
            hv_mean, hv_ci = _mean_ci([r[t].hv for r in runs])
            fracs = [r[t].fraction_recovered for r in runs]
            if any(f is None for f in fracs):
                frac_mean, frac_ci = "", ""
            else:
                frac_mean, frac_ci = _mean_ci(fracs)
            rows.append({
                "acquisition": acq,
                "iteration": runs[0][t].iteration,
                "mean_hv": hv_mean,
                "ci95_hv": hv_ci,
                "mean_fraction": frac_mean,
                "ci95_fraction": frac_ci,
                "n_seeds": len(runs),
            })
    return rows


def write_summary_csv(path, rows) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SUMMARY_HEADER)
        writer.writeheader()
        writer.writerows(rows)


def run_bench(spec: BenchSpec, workers: int = 1) -> dict:
    """Run every (acquisition, seed) cell and write cell CSVs plus a summary.

    All acquisitions share the same initial sample at each seed, and every
    cell measures hypervolume against one reference point resolved from the
    full pool, so curves are comparable across both axes. Cells are
    independent, which is what makes `workers > 1` safe; each one rewrites
    its own file, so reruns are idempotent.
    """
    true_ids = _resolve_truth(spec)
    ref_point = shared_ref_point(spec)
    os.makedirs(spec.output_dir, exist_ok=True)
    cells = [(acq, seed) for acq in spec.acquisitions for seed in spec.seeds]
    records_by_cell = {}
    if workers > 1:
        jobs = [(spec.to_dict(), acq, seed, true_ids, ref_point) for acq, seed in cells]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            paths = list(pool.map(_run_cell_job, jobs))
        for (acq, seed), path in zip(cells, paths):
            records_by_cell[(acq, seed)] = read_metrics_csv(path)
    else:
        for acq, seed in cells:
            logger.info("bench cell: acquisition=%s seed=%d", acq, seed)
            records_by_cell[(acq, seed)] = run_cell(
                spec, acq, seed, true_ids=true_ids, ref_point=ref_point
            )
    rows = aggregate(records_by_cell)
    summary_path = os.path.join(spec.output_dir, "summary.csv")
    write_summary_csv(summary_path, rows)
    return {
        "records": records_by_cell,
        "summary": rows,
        "summary_path": summary_path,
        "true_front_ids": true_ids,
        "ref_point": ref_point,
    }


# ---------------------------------------------------------------------------
# synthetic pool for acquisition ablations

def make_ablation_pool(path, n: int = 2000, bits: int = 24, seed: int = 20240301,
                       front_range: tuple = (20, 60)) -> dict:
    """Write a labeled pool whose true front size lands in `front_range`.

    Objectives are weighted ones-fractions pushed through a tunable mixing
    knob: with mixing near 1 the two objectives are tightly anti-correlated
    (nearly every point is non-dominated), near 0 they are independent (the
    front shrinks to a handful). The knob is swept until the front size fits.
    """
    rng = np.random.default_rng(seed)
    genomes: list = []
    seen = set()
    while len(genomes) < n:
        block = rng.integers(0, 2, size=(n, bits))
        for row in block:
            g = "".join("1" if b else "0" for b in row)
            if g not in seen:
                seen.add(g)
                genomes.append(g)
                if len(genomes) == n:
                    break
    x = np.array([[int(c) for c in g] for g in genomes], dtype=float)
    w1 = rng.uniform(0.5, 1.5, size=bits)
    w2 = rng.uniform(0.5, 1.5, size=bits)
    u = x @ w1 / w1.sum()
    v = x @ w2 / w2.sum()
    lo, hi = front_range
    chosen = None
    for alpha in np.linspace(0.05, 0.95, 19):
        s = alpha * u + (1.0 - alpha) * v
        objectives = np.column_stack([u, 1.0 - s ** 2])
        size = int(non_dominated_mask(objectives).sum())
        if lo <= size <= hi:
            chosen = (float(alpha), objectives, size)
            break
    if chosen is None:
        raise ValueError(f"no mixing weight gave a front in {front_range}")
    alpha, objectives, front_size = chosen
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id", "genome", "obj_1", "obj_2"])
        for i, g in enumerate(genomes):
            writer.writerow([f"p{i}", g, repr(float(objectives[i, 0])),
                             repr(float(objectives[i, 1]))])
    logger.info("ablation pool: n=%d bits=%d mixing=%.2f front=%d", n, bits, alpha, front_size)
    return {"n": n, "bits": bits, "alpha": alpha, "front_size": front_size, "path": str(path)}
