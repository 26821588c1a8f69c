"""Modified simplicial band depth, center-outward ranking, central bands and
the boxplot construction.

The depth of a curve is the average over vertex-curve subsets of size p + 1
of the fraction of grid points at which the curve's point lies inside the
simplex the subset spans.  Exact enumeration counts containing subsets per
time point in O(m log m) through an angular sweep (with a brute-force
fallback for degenerate configurations) so that results agree with the
subset-by-subset definition; above the subset cap a seeded uniform subsample
of subsets is evaluated directly.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from math import ceil, comb

import numpy as np

from .core import (
    RandomSeed,
    TooFewCurves,
    TrajectoryEnsemble,
    ValidationError,
    restrict,
)
from .pointwise import EPS_REL, simplex_contains_batch

_EPS_ANGLE = 1e-10


class AllCurvesFlagged(ValidationError):
    def __init__(self, survivors: int, p: int):
        super().__init__(
            f"only {survivors} curves survive outlier removal; need {p + 2} to rank"
        )


@dataclass(frozen=True)
class MsbdConfig:
    """Depth computation knobs.

    Exact enumeration is used while the number of vertex subsets stays at or
    below ``max_triples``; beyond that, a seeded uniform subsample of that
    many distinct subsets is evaluated.  The query curve is excluded from
    vertex sets unless ``exclude_query`` is False.
    """

    max_triples: int | None = 200_000
    seed: RandomSeed = field(default_factory=RandomSeed)
    exclude_query: bool = True

    def __post_init__(self):
        if self.max_triples is not None and self.max_triples < 100:
            raise ValidationError("max_triples must be >= 100 when present")


@dataclass(frozen=True)
class DepthRanking:
    """Per-curve depth values plus the induced center-outward order."""

    entries: tuple[tuple[str, float], ...]
    order: tuple[str, ...]

    @classmethod
    def from_values(cls, ids: list[str], values: list[float]) -> "DepthRanking":
        entries = tuple(zip(ids, values))
        order = tuple(cid for cid, _ in sorted(entries, key=lambda e: (-e[1], e[0])))
        return cls(entries, order)

    def value(self, curve_id: str) -> float:
        for cid, v in self.entries:
            if cid == curve_id:
                return v
        raise ValidationError(f"no depth entry for {curve_id!r}")


@dataclass(frozen=True)
class BandAssignment:
    """Nested central bands (cumulative prefixes of the ranking order)."""

    median_id: str
    bands: dict[int, list[str]]
    outer_ids: list[str]


def _c2(x: np.ndarray | int):
    return x * (x - 1) // 2


def _c3(x: np.ndarray | int):
    return x * (x - 1) * (x - 2) // 6


@lru_cache(maxsize=32)
def _combination_indices(m: int, size: int) -> np.ndarray:
    from itertools import combinations

    return np.array(list(combinations(range(m), size)), dtype=np.intp)


def _angular_count(diffs: np.ndarray, tol: float) -> int | None:
    """Number of triangles over `diffs` rows (points minus query) containing
    the origin, by the angular-sweep count.  None means a degenerate
    configuration; the caller falls back to brute enumeration."""
    r = np.hypot(diffs[:, 0], diffs[:, 1])
    coincident = r <= tol
    e = int(coincident.sum())
    m_total = len(diffs)
    rest = diffs[~coincident]
    mp = len(rest)
    # Any triple using a vertex that coincides with the query contains it.
    mixed = _c3(m_total) - _c3(mp)
    if mp < 3:
        return mixed
    theta = np.sort(np.mod(np.arctan2(rest[:, 1], rest[:, 0]), 2.0 * np.pi))
    gaps = np.diff(theta)
    wrap = theta[0] + 2.0 * np.pi - theta[-1]
    if (gaps.size and gaps.min() < _EPS_ANGLE) or wrap < _EPS_ANGLE:
        return None
    ext = np.concatenate([theta, theta + 2.0 * np.pi])
    targets = theta + np.pi
    pos = np.searchsorted(ext, targets)
    near_lo = np.abs(ext[np.clip(pos - 1, 0, 2 * mp - 1)] - targets)
    near_hi = np.abs(ext[np.clip(pos, 0, 2 * mp - 1)] - targets)
    if min(near_lo.min(), near_hi.min()) < _EPS_ANGLE:
        return None
    g = pos - np.arange(1, mp + 1)
    outside = int(_c2(g).sum())
    return mixed + int(_c3(mp)) - outside


def _brute_count(others: np.ndarray, query: np.ndarray) -> int:
    idx = _combination_indices(len(others), 3)
    tri = others[idx]
    q = np.broadcast_to(query, (len(idx), 2))
    return int(simplex_contains_batch(tri, q).sum())


def _collinear_direction(pts: np.ndarray, tol: float) -> np.ndarray | None:
    """Unit direction if all points lie within tol of one common line."""
    center = pts.mean(axis=0)
    x = pts - center
    _, s, vt = np.linalg.svd(x, full_matrices=False)
    if s[-1] <= max(tol, EPS_REL * max(s[0], 1.0)):
        return vt[0]
    return None


def _counts_collinear(pts: np.ndarray, direction: np.ndarray, tol: float,
                      queries: np.ndarray, exclude_query: bool) -> np.ndarray:
    """Containing-subset counts when the whole section lies on one line.

    A subset fails to contain the query exactly when all its vertices sit
    strictly on one side; subsets using the query itself (include-query mode)
    are never one-sided, so the complement count covers both modes.
    """
    s = pts @ direction
    sq = s[queries]
    order = np.sort(s)
    n = len(s)
    above = n - np.searchsorted(order, sq + tol, side="right")
    below = np.searchsorted(order, sq - tol, side="left")
    m = n - 1 if exclude_query else n
    counts = _c3(m) - _c3(above) - _c3(below)
    return counts.astype(np.int64)


def _counts_general(pts: np.ndarray, tol: float, queries: np.ndarray,
                    exclude_query: bool) -> np.ndarray:
    n = len(pts)
    out = np.empty(len(queries), dtype=np.int64)
    for k, i in enumerate(queries):
        others = np.delete(pts, i, axis=0)
        diffs = others - pts[i]
        c = _angular_count(diffs, tol)
        if c is None:
            c = _brute_count(others, pts[i])
        if not exclude_query:
            # Subsets using the query as a vertex always contain it.
            c += _c3(n) - _c3(n - 1)
        out[k] = c
    return out


def _counts_1d(pts: np.ndarray, tol: float, queries: np.ndarray,
               exclude_query: bool) -> np.ndarray:
    s = pts[:, 0]
    sq = s[queries]
    order = np.sort(s)
    n = len(s)
    above = n - np.searchsorted(order, sq + tol, side="right")
    below = np.searchsorted(order, sq - tol, side="left")
    m = n - 1 if exclude_query else n
    counts = _c2(m) - _c2(above) - _c2(below)
    return counts.astype(np.int64)


def _exact_time_fractions(data: np.ndarray, query_indices: np.ndarray,
                          exclude_query: bool) -> np.ndarray:
    """Mean over time of the contained-subset fraction, exact enumeration.

    data is the stacked ensemble (n, k, p); returns one value per query.
    """
    n, k, p = data.shape
    size = p + 1
    total = comb(n - 1 if exclude_query else n, size)
    acc = np.zeros(len(query_indices), dtype=np.float64)
    for j in range(k):
        pts = data[:, j, :]
        tol = EPS_REL * max(1.0, float(np.max(np.abs(pts))))
        if p == 1:
            counts = _counts_1d(pts, tol, query_indices, exclude_query)
        else:
            direction = _collinear_direction(pts, tol)
            if direction is not None:
                counts = _counts_collinear(pts, direction, tol, query_indices,
                                           exclude_query)
            else:
                counts = _counts_general(pts, tol, query_indices, exclude_query)
        acc += counts / total
    return acc / k


def _sample_subsets(m: int, size: int, count: int, rng: np.random.Generator) -> np.ndarray:
    """`count` distinct index subsets, uniform without replacement."""
    chosen: set[tuple[int, ...]] = set()
    out = []
    while len(out) < count:
        draw = rng.integers(0, m, size=(max(count - len(out), 64), size))
        draw = np.sort(draw, axis=1)
        distinct = (np.diff(draw, axis=1) > 0).all(axis=1)
        for row in draw[distinct]:
            key = tuple(int(v) for v in row)
            if key not in chosen:
                chosen.add(key)
                out.append(key)
                if len(out) == count:
                    break
    return np.array(out, dtype=np.intp)


def _subset_fractions(data_others: np.ndarray, query_curve: np.ndarray,
                      idx: np.ndarray, all_times: bool) -> float:
    """Containment fraction over sampled/enumerated subsets.

    data_others: (m, k, p) vertex curves; query_curve: (k, p).
    With all_times=True, a subset counts only if it contains the query at
    every grid point (the SBD rule); otherwise the time fraction is averaged.
    """
    m, k, p = data_others.shape
    n_sub = len(idx)
    if all_times:
        alive = np.ones(n_sub, dtype=bool)
        for j in range(k):
            if not alive.any():
                break
            pts = data_others[:, j, :]
            tri = pts[idx[alive]]
            if p == 1:
                lo = tri.min(axis=1)[:, 0]
                hi = tri.max(axis=1)[:, 0]
                tol = EPS_REL * max(1.0, float(np.max(np.abs(pts))))
                ok = (lo - tol <= query_curve[j, 0]) & (query_curve[j, 0] <= hi + tol)
            else:
                ok = simplex_contains_batch(tri, np.broadcast_to(query_curve[j], (int(alive.sum()), 2)))
            alive[alive] = ok
        return float(alive.sum()) / n_sub
    frac = np.zeros(n_sub)
    for j in range(k):
        pts = data_others[:, j, :]
        tri = pts[idx]
        if p == 1:
            lo = tri.min(axis=1)[:, 0]
            hi = tri.max(axis=1)[:, 0]
            tol = EPS_REL * max(1.0, float(np.max(np.abs(pts))))
            frac += (lo - tol <= query_curve[j, 0]) & (query_curve[j, 0] <= hi + tol)
        else:
            frac += simplex_contains_batch(tri, np.broadcast_to(query_curve[j], (n_sub, 2)))
    return float(frac.mean()) / k


def _check_depth_pre(ensemble: TrajectoryEnsemble):
    if ensemble.p not in (1, 2):
        raise ValidationError(f"band depth supports p in {{1, 2}}, got p={ensemble.p}")
    if ensemble.n < ensemble.p + 2:
        raise TooFewCurves(ensemble.n, ensemble.p)


def _curve_rng(config: MsbdConfig, curve_index: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=config.seed.seed, spawn_key=(curve_index,))
    return np.random.Generator(np.random.PCG64(ss))


def _depth_one(ensemble: TrajectoryEnsemble, curve_index: int, config: MsbdConfig,
               all_times: bool) -> float:
    data = ensemble.stacked()
    n, k, p = data.shape
    size = p + 1
    m = n - 1 if config.exclude_query else n
    total = comb(m, size)
    cap = config.max_triples
    exact = cap is None or total <= cap

    if exact and not all_times:
        return float(_exact_time_fractions(data, np.array([curve_index]),
                                           config.exclude_query)[0])

    others = np.delete(data, curve_index, axis=0)
    query_curve = data[curve_index]
    if exact:
        idx = _combination_indices(m, size)
    else:
        idx = _sample_subsets(m, size, cap, _curve_rng(config, curve_index))
    frac = _subset_fractions(others, query_curve, idx, all_times)
    if not config.exclude_query:
        # Subsets drawn from all n curves: those using the query as a vertex
        # contain it at every time point.
        own = comb(n, size) - comb(m, size)
        frac = (frac * comb(m, size) + own) / comb(n, size)
    return frac


def msbd(ensemble: TrajectoryEnsemble, curve_id: str,
         config: MsbdConfig = MsbdConfig()) -> float:
    """Modified simplicial band depth: average containment-time fraction."""
    _check_depth_pre(ensemble)
    return _depth_one(ensemble, ensemble.index_of(curve_id), config, all_times=False)


def sbd(ensemble: TrajectoryEnsemble, curve_id: str,
        config: MsbdConfig = MsbdConfig()) -> float:
    """Simplicial band depth: fraction of subsets containing the curve at
    every grid point."""
    _check_depth_pre(ensemble)
    return _depth_one(ensemble, ensemble.index_of(curve_id), config, all_times=True)


def rank(ensemble: TrajectoryEnsemble, config: MsbdConfig = MsbdConfig()) -> DepthRanking:
    """MSBD for every curve plus the induced order (depth desc, id asc)."""
    _check_depth_pre(ensemble)
    data = ensemble.stacked()
    n, k, p = data.shape
    size = p + 1
    m = n - 1 if config.exclude_query else n
    total = comb(m, size)
    cap = config.max_triples
    if cap is None or total <= cap:
        values = _exact_time_fractions(data, np.arange(n), config.exclude_query)
        return DepthRanking.from_values(ensemble.ids, [float(v) for v in values])
    values = [_depth_one(ensemble, i, config, all_times=False) for i in range(n)]
    return DepthRanking.from_values(ensemble.ids, values)


def assign_bands(ranking: DepthRanking) -> BandAssignment:
    """25/50/75 percent central bands as cumulative prefixes of the order."""
    order = list(ranking.order)
    m = len(order)
    if m < 4:
        raise TooFewCurves(m, 2)
    bands = {level: order[: ceil(level / 100.0 * m)] for level in (25, 50, 75)}
    outer = order[ceil(0.75 * m):]
    return BandAssignment(median_id=order[0], bands=bands, outer_ids=outer)


def build_boxplot(
    ensemble: TrajectoryEnsemble,
    detect_cfg=None,
    msbd_cfg: MsbdConfig = MsbdConfig(),
    method=None,
) -> tuple[BandAssignment, list[str]]:
    """The boxplot procedure: flag shape outliers by the WO rule, set them
    aside, rank the remainder by MSBD and form the central bands."""
    from .detect import WoRuleConfig, wo_outliers
    from .outlyingness import Projection, profile_ensemble

    if detect_cfg is None:
        detect_cfg = WoRuleConfig()
    if method is None:
        method = Projection()
    profiles = profile_ensemble(ensemble, method)
    wo_res = wo_outliers(profiles, detect_cfg)
    outlier_ids = [pr.curve_id for pr, f in zip(profiles, wo_res.flags) if f]
    survivors = [cid for cid in ensemble.ids if cid not in set(outlier_ids)]
    if len(survivors) < ensemble.p + 2:
        raise AllCurvesFlagged(len(survivors), ensemble.p)
    ranking = rank(restrict(ensemble, survivors), msbd_cfg)
    return assign_bands(ranking), outlier_ids
