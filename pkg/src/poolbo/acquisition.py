"""Batch acquisition over discrete candidate pools.

The flagship scorer estimates, per candidate, the posterior probability of
attaining the pool-wide maximum hypervolume improvement. Every joint draw
elects at most one winner, so the per-candidate probabilities partition the
improving event exactly and the top-q ranking is the exact batch optimizer
of the summed score. Baselines: greedy Monte Carlo joint-improvement,
Thompson sampling with fantasy updates, and uniform random selection.
"""
from __future__ import annotations

import csv
import heapq
import logging
from dataclasses import dataclass, field

import numpy as np

from .gp import Posterior
from .pareto import ParetoFront, hvi_many, hypervolume, strictly_dominated_mask
from .seeds import derive_seed

logger = logging.getLogger(__name__)

_CONSTRAINT_STREAM = 0xC057


@dataclass
class AcquisitionResult:
    """Per-candidate scores plus the selected batch.

    probs sums exactly to improving_fraction: draws where no candidate
    strictly improves attribute to nobody.
    """

    probs: np.ndarray
    pareto_membership: np.ndarray
    mean_hvi: np.ndarray
    improving_fraction: float
    n_samples: int
    seed: int
    selected: list | None = None
    truncated: bool = False

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=float)
        self.pareto_membership = np.asarray(self.pareto_membership, dtype=float)
        self.mean_hvi = np.asarray(self.mean_hvi, dtype=float)
        n = self.probs.size
        if self.pareto_membership.size != n or self.mean_hvi.size != n:
            raise ValueError("score vectors must have equal length")
        if np.any(self.probs < 0) or np.any(self.probs > 1):
            raise ValueError("probs must lie in [0, 1]")
        if np.any(self.pareto_membership < 0) or np.any(self.pareto_membership > 1):
            raise ValueError("pareto_membership must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.probs.size

    def summary(self) -> dict:
        return {
            "improving_fraction": float(self.improving_fraction),
            "L": int(self.n_samples),
            "seed": int(self.seed),
        }


def _attribute(deltas: np.ndarray, n_samples: int, feasible: np.ndarray | None = None):
    """Count, per candidate, the draws in which it is the unique winner.

    A draw's winner is the feasible candidate with the largest strictly
    positive improvement, lowest index on ties; draws without one go
    unattributed.
    """
    n = deltas.shape[1]
    masked = deltas if feasible is None else np.where(feasible, deltas, -np.inf)
    winners = np.argmax(masked, axis=1)
    best = masked[np.arange(deltas.shape[0]), winners]
    counted = best > 0.0
    counts = np.bincount(winners[counted], minlength=n)
    probs = counts / n_samples
    improving_fraction = counts.sum() / n_samples
    return probs, float(improving_fraction)


def estimate_qpmhi(post: Posterior, front: ParetoFront, n_samples: int, seed: int) -> AcquisitionResult:
    """Monte Carlo probability that each candidate maximizes hypervolume improvement.

    Improvements are measured against the fixed current front; the front is
    never updated within a draw.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if post.m != front.m:
        raise ValueError(f"objective dimensions must match: {post.m} vs {front.m}")
    samples = post.sample(n_samples, seed)
    flat = samples.reshape(-1, post.m)
    deltas = hvi_many(flat, front).reshape(n_samples, post.n)
    probs, improving_fraction = _attribute(deltas, n_samples)
    membership = 1.0 - strictly_dominated_mask(flat, front).reshape(n_samples, post.n).mean(axis=0)
    return AcquisitionResult(
        probs=probs,
        pareto_membership=membership,
        mean_hvi=hvi_many(post.mean, front),
        improving_fraction=improving_fraction,
        n_samples=n_samples,
        seed=seed,
    )


def estimate_qpo(post: Posterior, best_observed: float, n_samples: int, seed: int) -> AcquisitionResult:
    """Single-objective reduction: probability of being the pool-wide best improver.

    The hypervolume improvement collapses to max(0, f - best_observed).
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if post.m != 1:
        raise ValueError(f"single-objective acquisition requires one objective, got {post.m}")
    best = float(best_observed)
    samples = post.sample(n_samples, seed)[:, :, 0]
    deltas = np.maximum(0.0, samples - best)
    probs, improving_fraction = _attribute(deltas, n_samples)
    membership = (samples >= best).mean(axis=0)
    return AcquisitionResult(
        probs=probs,
        pareto_membership=membership,
        mean_hvi=np.maximum(0.0, post.mean[:, 0] - best),
        improving_fraction=improving_fraction,
        n_samples=n_samples,
        seed=seed,
    )


def constrained_qpmhi(post: Posterior, constraint_post: Posterior, thresholds,
                      front: ParetoFront, n_samples: int, seed: int) -> AcquisitionResult:
    """Feasibility-filtered variant: each draw also samples the constraints.

    A candidate is eligible to win a draw only when every sampled constraint
    value meets its threshold (value >= threshold). Constraint draws come
    from an independent stream derived from the seed, so vacuous thresholds
    reproduce the unconstrained result bit for bit.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    if post.m != front.m:
        raise ValueError(f"objective dimensions must match: {post.m} vs {front.m}")
    thresholds = np.asarray(thresholds, dtype=float)
    if constraint_post.n != post.n:
        raise ValueError("constraint posterior must cover the same pool")
    if thresholds.size != constraint_post.m:
        raise ValueError("one threshold per constraint is required")
    samples = post.sample(n_samples, seed)
    con_samples = constraint_post.sample(n_samples, derive_seed(seed, _CONSTRAINT_STREAM))
    feasible = np.all(con_samples >= thresholds[None, None, :], axis=-1)
    flat = samples.reshape(-1, post.m)
    deltas = hvi_many(flat, front).reshape(n_samples, post.n)
    probs, improving_fraction = _attribute(deltas, n_samples, feasible=feasible)
    membership = 1.0 - strictly_dominated_mask(flat, front).reshape(n_samples, post.n).mean(axis=0)
    return AcquisitionResult(
        probs=probs,
        pareto_membership=membership,
        mean_hvi=hvi_many(post.mean, front),
        improving_fraction=improving_fraction,
        n_samples=n_samples,
        seed=seed,
    )


def _ranked(values: np.ndarray, pool: np.ndarray) -> np.ndarray:
    """Indices from `pool` ordered by descending value, lowest index on ties."""
    return pool[np.argsort(-values[pool], kind="stable")]


def select_batch(result: AcquisitionResult, q: int) -> list:
    """Ordered batch of q candidate indices.

    Ranks by descending winner probability; remaining slots fall back to
    descending Pareto-membership probability, then to the improvement of the
    posterior mean. Ties always break toward the lower index.
    """
    if q < 1:
        raise ValueError("batch size must be at least 1")
    n = result.n
    if q > n:
        logger.warning("batch size %d exceeds pool size %d; truncating", q, n)
        result.truncated = True
        q = n
    idx = np.arange(n)
    order = []
    positive = idx[result.probs > 0]
    order.extend(_ranked(result.probs, positive))
    if len(order) < q:
        rest = idx[(result.probs <= 0) & (result.pareto_membership > 0)]
        order.extend(_ranked(result.pareto_membership, rest))
    if len(order) < q:
        taken = np.zeros(n, dtype=bool)
        taken[np.asarray(order, dtype=int)] = True
        rest = idx[~taken]
        order.extend(_ranked(result.mean_hvi, rest))
    selected = [int(i) for i in order[:q]]
    result.selected = selected
    return selected


def _insert_staircase(xs: np.ndarray, ys: np.ndarray, x: float, y: float, ref: np.ndarray):
    """Fold one point into a sorted 2-d front (xs ascending, ys descending)."""
    if not (x > ref[0] and y > ref[1]):
        return xs, ys
    # the leftmost member with xs >= x carries the best ys among potential
    # dominators; equality counts as weak domination and rejects the point
    j = np.searchsorted(xs, x, side="left")
    if j < xs.size and ys[j] >= y:
        return xs, ys
    # drop members dominated by (x, y): those with xs <= x and ys <= y
    start = ys.size - np.searchsorted(ys[::-1], y, side="right")
    hi = np.searchsorted(xs, x, side="right")
    cut = min(start, hi)
    xs = np.concatenate([xs[:cut], [x], xs[hi:]])
    ys = np.concatenate([ys[:cut], [y], ys[hi:]])
    return xs, ys


def _staircase_hvi(xs: np.ndarray, ys: np.ndarray, ref: np.ndarray, pts: np.ndarray) -> np.ndarray:
    left = np.concatenate(([ref[0]], xs))
    right = np.concatenate((xs, [np.inf]))
    height = np.concatenate((ys, [ref[1]]))
    width = np.clip(np.minimum(pts[:, 0, None], right[None, :]) - left[None, :], 0.0, None)
    gain = np.clip(pts[:, 1, None] - height[None, :], 0.0, None)
    return (width * gain).sum(axis=1)


class _SampleFronts:
    """Per-draw augmented fronts used by the greedy joint-improvement baselines."""

    def __init__(self, front: ParetoFront, n_fronts: int):
        self.ref = front.ref
        self.m = front.m
        if self.m == 2:
            order = np.argsort(front.points[:, 0]) if front.size else np.zeros(0, dtype=int)
            xs = front.points[order, 0] if front.size else np.zeros(0)
            ys = front.points[order, 1] if front.size else np.zeros(0)
            self.stairs = [(xs, ys) for _ in range(n_fronts)]
        else:
            self.points = [front.points for _ in range(n_fronts)]

    def current_points(self, ell: int) -> np.ndarray:
        if self.m == 2:
            xs, ys = self.stairs[ell]
            return np.stack([xs, ys], axis=1)
        return self.points[ell]

    def gains(self, values: np.ndarray, ell: int) -> np.ndarray:
        """Hypervolume improvement of each row of values against front ell."""
        if self.m == 2:
            xs, ys = self.stairs[ell]
            return _staircase_hvi(xs, ys, self.ref, values)
        pts = self.points[ell]
        out = np.empty(values.shape[0])
        for i, y in enumerate(values):
            if not np.all(y > self.ref):
                out[i] = 0.0
                continue
            if pts.shape[0] and np.any(np.all(pts >= y, axis=1)):
                out[i] = 0.0
                continue
            clipped = np.minimum(pts, y) if pts.shape[0] else np.empty((0, self.m))
            out[i] = np.prod(y - self.ref) - hypervolume(clipped, self.ref)
        return out

    def insert(self, ell: int, y: np.ndarray) -> None:
        if self.m == 2:
            xs, ys = self.stairs[ell]
            self.stairs[ell] = _insert_staircase(xs, ys, float(y[0]), float(y[1]), self.ref)
        else:
            if not np.all(y > self.ref):
                return
            pts = self.points[ell]
            if pts.shape[0] and np.any(np.all(pts >= y, axis=1)):
                return
            keep = ~np.all(y >= pts, axis=1) if pts.shape[0] else np.zeros(0, dtype=bool)
            self.points[ell] = np.vstack([pts[keep], y[None, :]]) if pts.shape[0] else y[None, :]


def qehvi_mc(post: Posterior, front: ParetoFront, q: int, n_samples: int, seed: int) -> list:
    """Greedy batch maximizing Monte Carlo expected joint hypervolume improvement.

    One shared set of joint samples scores every greedy step; each step adds
    the candidate with the largest mean incremental improvement against the
    per-draw augmented fronts. Stale gains are re-evaluated lazily, which is
    exact because incremental improvements only shrink as the batch grows.
    """
    if q < 1:
        raise ValueError("batch size must be at least 1")
    if post.m != front.m:
        raise ValueError(f"objective dimensions must match: {post.m} vs {front.m}")
    n = post.n
    if q > n:
        logger.warning("batch size %d exceeds pool size %d; truncating", q, n)
        q = n
    samples = post.sample(n_samples, seed)
    fronts = _SampleFronts(front, n_samples)
    flat = samples.reshape(-1, post.m)
    gains = hvi_many(flat, front).reshape(n_samples, n).mean(axis=0)
    heap = [(-gains[i], i) for i in range(n)]
    heapq.heapify(heap)
    stamp = np.zeros(n, dtype=int)
    selected: list = []
    for step in range(1, q + 1):
        while True:
            neg_gain, i = heapq.heappop(heap)
            if stamp[i] == step - 1:
                selected.append(int(i))
                break
            fresh = float(np.mean([
                fronts.gains(samples[ell, i][None, :], ell)[0] for ell in range(n_samples)
            ]))
            stamp[i] = step - 1
            heapq.heappush(heap, (-fresh, i))
        for ell in range(n_samples):
            fronts.insert(ell, samples[ell, selected[-1]])
    return selected


def thompson_hvi(post: Posterior, front: ParetoFront, q: int, seed: int) -> list:
    """Sequential Thompson batch: draw j's maximizer joins as a fantasy point.

    Step j maximizes the sampled hypervolume improvement against the front
    augmented with earlier fantasies; when nothing improves, the candidate
    whose draw is least dominated (largest non-domination margin) is taken.
    """
    if q < 1:
        raise ValueError("batch size must be at least 1")
    if post.m != front.m:
        raise ValueError(f"objective dimensions must match: {post.m} vs {front.m}")
    n = post.n
    if q > n:
        logger.warning("batch size %d exceeds pool size %d; truncating", q, n)
        q = n
    samples = post.sample(q, seed)
    fronts = _SampleFronts(front, 1)
    taken = np.zeros(n, dtype=bool)
    selected: list = []
    for j in range(q):
        values = samples[j]
        deltas = fronts.gains(values, 0)
        deltas[taken] = -np.inf
        if deltas.max() > 0:
            pick = int(np.argmax(deltas))
        else:
            pts = fronts.current_points(0)
            if pts.shape[0]:
                margins = (values[:, None, :] - pts[None, :, :]).max(axis=2).min(axis=1)
            else:
                margins = (values - front.ref[None, :]).max(axis=1)
            margins[taken] = -np.inf
            pick = int(np.argmax(margins))
        selected.append(pick)
        taken[pick] = True
        fronts.insert(0, values[pick])
    return selected


def random_select(pool_size: int, q: int, seed: int) -> list:
    """Uniform batch without replacement."""
    if q < 1:
        raise ValueError("batch size must be at least 1")
    if q > pool_size:
        logger.warning("batch size %d exceeds pool size %d; truncating", q, pool_size)
        q = pool_size
    rng = np.random.default_rng(seed)
    return [int(i) for i in rng.permutation(pool_size)[:q]]


def write_result_csv(path, result: AcquisitionResult, ids) -> None:
    """Per-candidate scores; selected_rank is 1-based within the batch, blank otherwise."""
    ids = list(ids)
    if len(ids) != result.n:
        raise ValueError("one id per candidate is required")
    rank = {i: r + 1 for r, i in enumerate(result.selected or [])}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(("candidate_id", "prob", "pareto_membership", "selected_rank"))
        for i, cid in enumerate(ids):
            writer.writerow([
                cid,
                repr(float(result.probs[i])),
                repr(float(result.pareto_membership[i])),
                rank.get(i, ""),
            ])
