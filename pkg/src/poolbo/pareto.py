"""Objective-space primitives: dominance, Pareto fronts, hypervolume, metrics.

Every objective is maximized; callers with minimization targets negate before
entry. A reference point bounds dominated volume from below, and only points
that strictly exceed it in every coordinate enclose positive volume.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

logger = logging.getLogger(__name__)

MAX_HV_DIM = 6

METRICS_HEADER = ("iteration", "hv", "relative_hvi", "fraction_recovered", "batch_ids")


def _as_vector(values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError(f"objective vector must be 1-dimensional and non-empty, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("objective vector contains non-finite entries")
    return arr


def _as_matrix(points, m: int | None = None) -> np.ndarray:
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, m if m is not None else (arr.shape[1] if arr.ndim == 2 else 1))
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-d array of objective vectors, got shape {arr.shape}")
    if m is not None and arr.shape[1] != m:
        raise ValueError(f"objective dimensions must match: expected {m}, got {arr.shape[1]}")
    if not np.all(np.isfinite(arr)):
        raise ValueError("objective matrix contains non-finite entries")
    return arr


def dominates(a, b) -> bool:
    """Strict Pareto dominance: a >= b in every objective and a > b in at least one."""
    av, bv = _as_vector(a), _as_vector(b)
    if av.size != bv.size:
        raise ValueError(f"objective dimensions must match: {av.size} vs {bv.size}")
    return bool(np.all(av >= bv) and np.any(av > bv))


def non_dominated_mask(points) -> np.ndarray:
    """Boolean mask of points not strictly dominated by any other point.

    Duplicate rows do not dominate each other, so all copies are retained.
    """
    pts = _as_matrix(points)
    n = pts.shape[0]
    mask = np.ones(n, dtype=bool)
    if n == 0:
        return mask
    # pairwise strict-dominance test, chunked to bound peak memory
    chunk = max(1, int(2 ** 22) // max(1, n))
    for start in range(0, n, chunk):
        block = pts[start:start + chunk]
        ge = (pts[:, None, :] >= block[None, :, :]).all(axis=-1)
        gt = (pts[:, None, :] > block[None, :, :]).any(axis=-1)
        mask[start:start + chunk] = ~(ge & gt).any(axis=0)
    return mask


@dataclass(frozen=True)
class ParetoFront:
    """A mutually non-dominated point set, all strictly above a reference point.

    Points keep insertion order; ids run parallel to points and may be None
    when the source candidate is unknown.
    """

    points: np.ndarray
    ids: tuple
    ref: np.ndarray

    def __post_init__(self):
        ref = _as_vector(self.ref)
        pts = _as_matrix(self.points, m=ref.size)
        if len(self.ids) != pts.shape[0]:
            raise ValueError(f"ids length {len(self.ids)} does not match point count {pts.shape[0]}")
        if pts.shape[0] and not np.all(pts > ref):
            raise ValueError("every front point must strictly dominate the reference point")
        if not np.all(non_dominated_mask(pts)):
            raise ValueError("front points must be mutually non-dominated")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "ref", ref)

    @classmethod
    def empty(cls, ref) -> "ParetoFront":
        ref = _as_vector(ref)
        return cls(points=np.empty((0, ref.size)), ids=(), ref=ref)

    @property
    def m(self) -> int:
        return self.ref.size

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def hypervolume(self) -> float:
        return hypervolume(self.points, self.ref)


def update_front(front: ParetoFront, values, point_id=None) -> ParetoFront:
    """Fold one point into a front, returning a new front.

    The point enters only if it strictly dominates the reference point and no
    incumbent weakly dominates it; equal duplicates of an incumbent are
    rejected. Dominated incumbents are dropped.
    """
    y = _as_vector(values)
    if y.size != front.m:
        raise ValueError(f"objective dimensions must match: {y.size} vs {front.m}")
    if not np.all(y > front.ref):
        return front
    pts = front.points
    if pts.shape[0] and np.any(np.all(pts >= y, axis=1)):
        return front
    keep = ~np.all(y >= pts, axis=1) if pts.shape[0] else np.zeros(0, dtype=bool)
    new_points = np.vstack([pts[keep], y[None, :]]) if pts.shape[0] else y[None, :]
    new_ids = tuple(i for i, k in zip(front.ids, keep) if k) + (point_id,)
    return ParetoFront(points=new_points, ids=new_ids, ref=front.ref)


def build_front(points, ids, ref) -> ParetoFront:
    """Fold a labeled point set into a front; order of insertion follows the input."""
    front = ParetoFront.empty(ref)
    for values, point_id in zip(points, ids):
        front = update_front(front, values, point_id)
    return front


def _hv_1d(pts: np.ndarray, ref: np.ndarray) -> float:
    return float(pts[:, 0].max() - ref[0])


def _hv_2d(pts: np.ndarray, ref: np.ndarray) -> float:
    # sweep from largest first objective; each point adds a horizontal strip
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    hv = 0.0
    y_max = ref[1]
    for i in order:
        x, y = pts[i]
        if y > y_max:
            hv += (x - ref[0]) * (y - y_max)
            y_max = y
    return float(hv)


def _hv_recursive(pts: np.ndarray, ref: np.ndarray) -> float:
    # exclusive-contribution recursion: each point adds its box minus the part
    # covered by the remaining points clipped underneath it
    n = pts.shape[0]
    if n == 0:
        return 0.0
    if n == 1:
        return float(np.prod(pts[0] - ref))
    if pts.shape[1] == 2:
        return _hv_2d(pts, ref)
    order = np.lexsort(tuple(pts[:, j] for j in range(pts.shape[1] - 1)) + (-pts[:, -1],))
    pts = pts[order]
    total = 0.0
    for i in range(n):
        p = pts[i]
        limited = np.minimum(pts[i + 1:], p)
        if limited.shape[0]:
            limited = np.unique(limited, axis=0)
            limited = limited[non_dominated_mask(limited)]
        total += float(np.prod(p - ref)) - _hv_recursive(limited, ref)
    return total


def hypervolume(points, ref) -> float:
    """Exact dominated hypervolume of a point set against a reference point.

    Points that fail to strictly dominate the reference contribute nothing.
    Supports 1 to 6 objectives; higher dimensions raise ValueError.
    """
    r = _as_vector(ref)
    if r.size > MAX_HV_DIM:
        raise ValueError(f"hypervolume supports at most {MAX_HV_DIM} objectives, got {r.size}")
    pts = _as_matrix(points, m=r.size)
    if pts.shape[0] == 0:
        return 0.0
    pts = pts[np.all(pts > r, axis=1)]
    if pts.shape[0] == 0:
        return 0.0
    pts = np.unique(pts, axis=0)
    pts = pts[non_dominated_mask(pts)]
    if r.size == 1:
        return _hv_1d(pts, r)
    if r.size == 2:
        return _hv_2d(pts, r)
    return _hv_recursive(pts, r)


def _staircase(front: ParetoFront):
    """Segment decomposition of a 2-d front: left edges, right edges, covered heights."""
    pts = front.points
    order = np.argsort(pts[:, 0]) if pts.shape[0] else np.zeros(0, dtype=int)
    xs = pts[order, 0] if pts.shape[0] else np.zeros(0)
    ys = pts[order, 1] if pts.shape[0] else np.zeros(0)
    left = np.concatenate(([front.ref[0]], xs))
    right = np.concatenate((xs, [np.inf]))
    height = np.concatenate((ys, [front.ref[1]]))
    return left, right, height


def hvi_many(points, front: ParetoFront) -> np.ndarray:
    """Hypervolume improvement of each point against a fixed front.

    Vectorized for two objectives; falls back to per-point evaluation
    otherwise.
    """
    pts = _as_matrix(points, m=front.m)
    n = pts.shape[0]
    if n == 0:
        return np.zeros(0)
    if front.m == 1:
        base = front.points[:, 0].max() if front.size else front.ref[0]
        return np.maximum(0.0, pts[:, 0] - base)
    if front.m == 2:
        left, right, height = _staircase(front)
        out = np.empty(n)
        # chunked so the (rows, segments) intermediates stay small
        chunk = max(1, int(2 ** 21) // max(1, left.size))
        for start in range(0, n, chunk):
            u = pts[start:start + chunk, 0, None]
            v = pts[start:start + chunk, 1, None]
            width = np.clip(np.minimum(u, right[None, :]) - left[None, :], 0.0, None)
            gain = np.clip(v - height[None, :], 0.0, None)
            out[start:start + chunk] = (width * gain).sum(axis=1)
        return out
    return np.array([hvi(p, front) for p in pts])


def hvi(values, front: ParetoFront) -> float:
    """Hypervolume improvement of a single point: HV(front + point) - HV(front)."""
    y = _as_vector(values)
    if y.size != front.m:
        raise ValueError(f"objective dimensions must match: {y.size} vs {front.m}")
    if not np.all(y > front.ref):
        return 0.0
    if front.m in (1, 2):
        return float(hvi_many(y[None, :], front)[0])
    if front.size == 0:
        return float(np.prod(y - front.ref))
    if np.any(np.all(front.points >= y, axis=1)):
        return 0.0
    # exclusive volume: box under y minus the covered part, computed from the
    # front clipped underneath y
    clipped = np.minimum(front.points, y)
    return float(np.prod(y - front.ref) - hypervolume(clipped, front.ref))


def strictly_dominated_mask(points, front: ParetoFront) -> np.ndarray:
    """Mask of points strictly dominated by at least one front point."""
    pts = _as_matrix(points, m=front.m)
    n = pts.shape[0]
    if n == 0 or front.size == 0:
        return np.zeros(n, dtype=bool)
    if front.m == 2:
        pf = front.points
        order = np.argsort(pf[:, 0])
        xs, ys = pf[order, 0], pf[order, 1]
        # the best second coordinate among front points with first >= u is the
        # leftmost such point, since the sorted front decreases in y
        j = np.searchsorted(xs, pts[:, 0], side="left")
        inside = j < xs.size
        jj = np.minimum(j, xs.size - 1)
        return inside & ((ys[jj] > pts[:, 1]) | ((ys[jj] == pts[:, 1]) & (xs[jj] > pts[:, 0])))
    out = np.zeros(n, dtype=bool)
    chunk = max(1, int(2 ** 21) // max(1, front.size))
    for start in range(0, n, chunk):
        block = pts[start:start + chunk]
        ge = (front.points[None, :, :] >= block[:, None, :]).all(axis=-1)
        gt = (front.points[None, :, :] > block[:, None, :]).any(axis=-1)
        out[start:start + chunk] = (ge & gt).any(axis=1)
    return out


def fraction_recovered(found_ids: Iterable, true_ids: Iterable) -> float:
    """Fraction of a known optimal id set present among found ids."""
    true_set = set(true_ids)
    if not true_set:
        raise ValueError("true Pareto id set is empty")
    found_set = set(found_ids)
    return len(found_set & true_set) / len(true_set)


def relative_hvi(hv_t: float, hv_0: float) -> float:
    """Relative hypervolume improvement over a baseline hypervolume."""
    if not hv_0 > 0:
        raise ValueError(f"baseline hypervolume must be positive, got {hv_0}")
    return (hv_t - hv_0) / hv_0


def front_to_dict(front: ParetoFront) -> dict:
    return {
        "ref_point": [float(v) for v in front.ref],
        "points": [
            {"id": pid, "values": [float(v) for v in row]}
            for pid, row in zip(front.ids, front.points)
        ],
    }


def front_from_dict(payload: dict) -> ParetoFront:
    try:
        ref = payload["ref_point"]
        entries = payload["points"]
        points = [e["values"] for e in entries]
        ids = tuple(e["id"] for e in entries)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed front payload: {exc}") from exc
    ref = _as_vector(ref)
    pts = _as_matrix(points, m=ref.size) if points else np.empty((0, ref.size))
    return ParetoFront(points=pts, ids=ids, ref=ref)


def save_front(front: ParetoFront, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(front_to_dict(front), fh, indent=2)
        fh.write("\n")


def load_front(path) -> ParetoFront:
    with open(path, "r", encoding="utf-8") as fh:
        return front_from_dict(json.load(fh))


@dataclass(frozen=True)
class MetricRecord:
    """One campaign iteration's progress metrics."""

    iteration: int
    hv: float
    relative_hvi: float | None
    fraction_recovered: float | None
    batch_ids: tuple

    def __post_init__(self):
        if self.iteration < 0:
            raise ValueError("iteration must be non-negative")
        if self.hv < 0:
            raise ValueError("hypervolume must be non-negative")
        if self.fraction_recovered is not None and not 0 <= self.fraction_recovered <= 1:
            raise ValueError("fraction_recovered must lie in [0, 1]")
        object.__setattr__(self, "batch_ids", tuple(str(b) for b in self.batch_ids))


def _format_float(value) -> str:
    return repr(float(value))


def write_metrics_csv(path, records: Sequence[MetricRecord]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_HEADER)
        for rec in records:
            writer.writerow([
                rec.iteration,
                _format_float(rec.hv),
                "" if rec.relative_hvi is None else _format_float(rec.relative_hvi),
                "" if rec.fraction_recovered is None else _format_float(rec.fraction_recovered),
                ";".join(rec.batch_ids),
            ])


def read_metrics_csv(path) -> list[MetricRecord]:
    records = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != METRICS_HEADER:
            raise ValueError(f"unexpected metrics header: {header}")
        for row in reader:
            if len(row) != len(METRICS_HEADER):
                raise ValueError(f"malformed metrics row: {row}")
            records.append(MetricRecord(
                iteration=int(row[0]),
                hv=float(row[1]),
                relative_hvi=None if row[2] == "" else float(row[2]),
                fraction_recovered=None if row[3] == "" else float(row[3]),
                batch_ids=tuple(row[4].split(";")) if row[4] else (),
            ))
    return records
