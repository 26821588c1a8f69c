"""The three outlier-detection rules.

* WO rule: standardized log-wiggliness beyond a normal quantile.
* MSBD rule: a curve leaving the inflated convex hull of the central half
  of the sample at some time point.
* RMD rule: robust Mahalanobis distance of (MO, VO) under an MCD scatter
  estimate, cut at an F quantile with the Hardin-Rocke c and m parameters.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, comb, exp, log

import numpy as np
from scipy.stats import chi2, f as f_dist, norm

from .core import NumericalError, RandomSeed, TrajectoryEnsemble, ValidationError
from .depthrank import DepthRanking
from .outlyingness import OutlyingnessProfile
from .pointwise import EPS_REL, MAD_SCALE, cross2


class AllZeroWo(ValidationError):
    def __init__(self):
        super().__init__("every curve has zero wiggliness; the WO rule is undefined")


class SingularSubsetCov(NumericalError):
    def __init__(self):
        super().__init__("best MCD subset has a singular covariance (exact fit)")


@dataclass(frozen=True)
class WoRuleConfig:
    """Flag curve i when (log WO_i - med) / MAD > Phi^-1(alpha)."""

    alpha: float = 0.975

    def __post_init__(self):
        if not 0.5 < self.alpha < 1.0:
            raise ValidationError("alpha must lie in (0.5, 1)")


@dataclass(frozen=True)
class MsbdRuleConfig:
    """Inflation factor for the central-region fence."""

    factor: float = 1.5

    def __post_init__(self):
        if self.factor < 1.0:
            raise ValidationError("factor must be >= 1")


@dataclass(frozen=True)
class RmdRuleConfig:
    """MCD subset size, start count and the fixed 0.993 F-quantile cutoff."""

    h_fraction: float | None = None
    quantile: float = 0.993
    seed: RandomSeed = field(default_factory=RandomSeed)
    n_starts: int = 500

    def __post_init__(self):
        if self.h_fraction is not None and not 0.5 < self.h_fraction <= 1.0:
            raise ValidationError("h_fraction must lie in (0.5, 1]")
        if self.n_starts < 1:
            raise ValidationError("n_starts must be positive")


@dataclass(frozen=True)
class WoRuleResult:
    flags: np.ndarray
    standardized: np.ndarray
    threshold: float
    degenerate_mad: bool


@dataclass(frozen=True)
class McdResult:
    center: np.ndarray
    cov: np.ndarray
    subset: np.ndarray
    det: float


@dataclass(frozen=True)
class RmdRuleResult:
    flags: np.ndarray
    rmd2: np.ndarray
    threshold: float
    c: float
    m: float
    kept_columns: np.ndarray
    chi2_fallback: bool


@dataclass(frozen=True)
class CurveRecord:
    curve_id: str
    wo: float
    standardized_log_wo: float
    wo_flag: bool
    msbd: float
    msbd_flag: bool
    rmd2: float
    rmd_flag: bool


@dataclass(frozen=True)
class DetectionReport:
    records: tuple[CurveRecord, ...]
    wo_threshold: float
    rmd_threshold: float
    mcd_c: float
    mcd_m: float

    @property
    def wo_outlier_ids(self) -> list[str]:
        return [r.curve_id for r in self.records if r.wo_flag]

    @property
    def msbd_outlier_ids(self) -> list[str]:
        return [r.curve_id for r in self.records if r.msbd_flag]

    @property
    def rmd_outlier_ids(self) -> list[str]:
        return [r.curve_id for r in self.records if r.rmd_flag]


def wo_outliers(profiles: list[OutlyingnessProfile], cfg: WoRuleConfig = WoRuleConfig()) -> WoRuleResult:
    """Flags from the standardized-log-WO rule.

    med and MAD are taken over the curves with positive WO; zero-WO curves
    get standardized value -inf and are never flagged.  A zero MAD degrades
    the rule to flagging exactly the curves above the median log WO.
    """
    wos = np.array([p.wo for p in profiles], dtype=float)
    pos = wos > 0.0
    if not pos.any():
        raise AllZeroWo()
    logs = np.log(wos[pos])
    med = float(np.median(logs))
    mad = MAD_SCALE * float(np.median(np.abs(logs - med)))
    std = np.full(len(wos), -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (logs - med) / mad
    z = np.where(np.isnan(z), 0.0, z)  # log wo exactly at med with MAD 0
    std[pos] = z
    threshold = float(norm.ppf(cfg.alpha))
    return WoRuleResult(std > threshold, std, threshold, degenerate_mad=(mad == 0.0))


def _convex_hull(points: np.ndarray) -> np.ndarray:
    """Andrew's monotone chain; returns hull vertices in CCW order.

    Collinear input collapses to the two extreme points (a segment), a
    single repeated point to that point.
    """
    pts = np.unique(points, axis=0)
    if len(pts) <= 2:
        return pts
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]

    def half(seq):
        out: list[np.ndarray] = []
        for q in seq:
            while len(out) >= 2 and cross2(out[-1] - out[-2], q - out[-2]) <= 0:
                out.pop()
            out.append(q)
        return out

    lower = half(pts)
    upper = half(pts[::-1])
    hull = np.array(lower[:-1] + upper[:-1])
    if len(hull) < 3:
        return hull
    return hull


def _polygon_centroid(hull: np.ndarray) -> np.ndarray:
    """Area centroid of a convex polygon; midpoint for segments/points."""
    if len(hull) < 3:
        return hull.mean(axis=0)
    x, y = hull[:, 0], hull[:, 1]
    xn, yn = np.roll(x, -1), np.roll(y, -1)
    cross = x * yn - xn * y
    area = cross.sum() / 2.0
    if abs(area) < 1e-300:
        return hull.mean(axis=0)
    cx = ((x + xn) * cross).sum() / (6.0 * area)
    cy = ((y + yn) * cross).sum() / (6.0 * area)
    return np.array([cx, cy])


def _outside_inflated_hull(points: np.ndarray, queries: np.ndarray, factor: float) -> np.ndarray:
    """True where a query lies strictly outside the hull of `points` scaled
    by `factor` about its centroid.  Collinear hulls fall back to the
    inflated covering segment (distance test)."""
    hull = _convex_hull(points)
    centroid = _polygon_centroid(hull)
    scaled = centroid + factor * (hull - centroid)
    scale = max(1.0, float(np.max(np.abs(points))))
    tol = EPS_REL * scale * max(factor, 1.0)
    if len(scaled) == 1:
        return np.linalg.norm(queries - scaled[0], axis=1) > tol
    if len(scaled) == 2:
        a, b = scaled
        ab = b - a
        denom = float(ab @ ab)
        t = np.clip((queries - a) @ ab / denom, 0.0, 1.0) if denom > 0 else np.zeros(len(queries))
        nearest = a + t[:, None] * ab
        return np.linalg.norm(queries - nearest, axis=1) > tol
    edges = np.roll(scaled, -1, axis=0) - scaled  # CCW
    rel = queries[:, None, :] - scaled[None, :, :]
    cross = edges[None, :, 0] * rel[:, :, 1] - edges[None, :, 1] * rel[:, :, 0]
    return (cross < -tol).any(axis=1)


def msbd_outliers(
    ensemble: TrajectoryEnsemble,
    ranking: DepthRanking,
    cfg: MsbdRuleConfig = MsbdRuleConfig(),
) -> np.ndarray:
    """Flag curves leaving the inflated hull of the deepest half.

    At each grid point the convex hull of the top-50% (by MSBD) curves'
    points is inflated about its centroid by cfg.factor; a curve is flagged
    when its point falls strictly outside at one or more grid points.
    """
    if ensemble.p != 2:
        raise ValidationError("the MSBD fence rule is defined for p = 2")
    order = list(ranking.order)
    central_ids = order[: ceil(0.5 * len(order))]
    central_idx = [ensemble.index_of(cid) for cid in central_ids]
    data = ensemble.stacked()
    flags = np.zeros(ensemble.n, dtype=bool)
    for j in range(ensemble.k):
        pts = data[:, j, :]
        outside = _outside_inflated_hull(pts[central_idx], pts, cfg.factor)
        flags |= outside
        if flags.all():
            break
    return flags


def _h_from_cfg(n: int, q: int, cfg: RmdRuleConfig) -> int:
    # Default mirrors floor((n + p + 2) / 2) with q = p + 1 measurement dims.
    h = int(np.floor((n + q + 1) / 2)) if cfg.h_fraction is None else int(cfg.h_fraction * n)
    lo = int(np.floor((n + q + 1) / 2))
    if not lo <= h <= n:
        raise ValidationError(f"h={h} outside [{lo}, {n}]")
    return h


def _subset_stats(points: np.ndarray, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    sub = points[idx]
    center = sub.mean(axis=0)
    centered = sub - center
    cov = centered.T @ centered / len(sub)  # h-normalized subset covariance
    sign, logdet = np.linalg.slogdet(cov)
    det = float(sign * np.exp(logdet)) if sign > 0 else 0.0
    return center, cov, det


def _mahalanobis_d2(points: np.ndarray, center: np.ndarray, cov: np.ndarray) -> np.ndarray:
    """Squared distances via a Cholesky solve (stable for thin clouds)."""
    from scipy.linalg import cho_factor, cho_solve

    centered = points - center
    factor = cho_factor(cov, lower=True)
    return np.einsum("ij,ij->i", centered, cho_solve(factor, centered.T).T)


def mcd(points: np.ndarray, cfg: RmdRuleConfig = RmdRuleConfig()) -> McdResult:
    """FastMCD-style search for the minimum covariance determinant subset.

    n_starts seeded random (q+1)-point subsets are each refined by
    concentration steps (recompute center/cov on the subset, reselect the h
    smallest Mahalanobis distances) until the determinant stalls; the subset
    with the smallest determinant wins, ties to the lowest start index.
    """
    points = np.asarray(points, dtype=float)
    n, q = points.shape
    if n < q + 2:
        raise ValidationError(f"MCD needs n >= q + 2, got n={n}, q={q}")
    h = _h_from_cfg(n, q, cfg)

    best: McdResult | None = None
    for start in range(cfg.n_starts):
        rng = np.random.Generator(np.random.PCG64(cfg.seed.seed ^ np.uint64(start)))
        size = q + 1
        idx = rng.choice(n, size=size, replace=False)
        center, cov, det = _subset_stats(points, idx)
        # Grow a degenerate seed subset until its covariance has full rank.
        while det <= 0.0 and size < n:
            size += 1
            idx = rng.choice(n, size=size, replace=False)
            center, cov, det = _subset_stats(points, idx)
        if det <= 0.0:
            continue

        prev = (center, cov, det, idx)
        prev_det = np.inf
        subset = idx
        for _ in range(50):
            try:
                d2 = _mahalanobis_d2(points, center, cov)
            except np.linalg.LinAlgError:
                break
            subset = np.sort(np.argsort(d2, kind="stable")[:h])
            center, cov, det = _subset_stats(points, subset)
            # The C-step never increases the determinant in exact arithmetic;
            # on float-level violations keep the previous (better) estimate.
            if det > prev_det:
                center, cov, det, subset = prev
                break
            if prev_det - det < 1e-12 * max(prev_det if np.isfinite(prev_det) else det, 1e-300) or det == 0.0:
                break
            prev = (center, cov, det, subset)
            prev_det = det
        if best is None or det < best.det:
            best = McdResult(center, cov, subset, det)

    if best is None or best.det <= 0.0 or not np.all(np.isfinite(best.cov)):
        raise SingularSubsetCov()
    try:
        np.linalg.cholesky(best.cov)
    except np.linalg.LinAlgError:
        raise SingularSubsetCov() from None
    return best


def hardin_rocke_cm(n: int, q: int, h: int) -> tuple[float, float]:
    """Consistency factor c and Wishart degrees of freedom m for the
    distribution of raw MCD-based squared distances.

    c is P(chi2_{q+2} <= chi2_q quantile at h/n) / (h/n); m comes from the
    asymptotic variance of the MCD scatter, rescaled by the small-sample
    adjustment fit for the maximum-breakdown case.
    """
    alpha = h / n
    qa = float(chi2.ppf(alpha, q))
    c_a = float(chi2.cdf(qa, q + 2)) / alpha
    c2 = -float(chi2.cdf(qa, q + 2)) / 2.0
    c3 = -float(chi2.cdf(qa, q + 4)) / 2.0
    c4 = 3.0 * c3
    b1 = c_a * (c3 - c4) / (1.0 - alpha)
    b2 = 0.5 + c_a / (1.0 - alpha) * (c3 - qa / q * (c2 + (1.0 - alpha) / 2.0))
    v1 = (1.0 - alpha) * b1**2 * (alpha * (c_a * qa / q - 1.0) ** 2 - 1.0) - 2.0 * c3 * c_a**2 * (
        3.0 * (b1 - q * b2) ** 2 + (q + 2.0) * b2 * (2.0 * b1 - q * b2)
    )
    v2 = n * (b1 * (b1 - q * b2) * (1.0 - alpha)) ** 2 * c_a**2
    m_asy = 2.0 / (c_a**2 * v1 / v2)
    m = m_asy * exp(0.725 - 0.00663 * q - 0.0780 * log(n))
    return c_a, m


def rmd_outliers(
    profiles: list[OutlyingnessProfile], cfg: RmdRuleConfig = RmdRuleConfig()
) -> RmdRuleResult:
    """Robust Mahalanobis rule on Y = (MO, VO).

    Constant Y-coordinates (e.g. a coordinate with identically zero
    outlyingness) are dropped before the MCD search; the F cutoff then uses
    the effective dimension.  Flags satisfy
    c (m - p) / (m (p + 1)) RMD^2 > F_{p+1, m-p}(quantile) with q = p + 1
    the effective dimension.
    """
    y = np.array([np.concatenate([p.mo, [p.vo]]) for p in profiles], dtype=float)
    n = len(y)
    spread = y.max(axis=0) - y.min(axis=0)
    scale = max(1.0, float(np.max(np.abs(y))))
    kept = spread > EPS_REL * scale
    if not kept.any():
        raise ValidationError("all (MO, VO) coordinates are constant")
    y_eff = y[:, kept]
    q = y_eff.shape[1]

    est = mcd(y_eff, cfg)
    rmd2 = _mahalanobis_d2(y_eff, est.center, est.cov)

    c, m = hardin_rocke_cm(n, q, _h_from_cfg(n, q, cfg))
    p_eff = q - 1
    if m <= p_eff or not np.isfinite(m):
        threshold = float(chi2.ppf(cfg.quantile, q)) / c
        flags = rmd2 > threshold
        return RmdRuleResult(flags, rmd2, threshold, c, m, kept, chi2_fallback=True)
    fq = float(f_dist.ppf(cfg.quantile, q, m - q + 1))
    threshold = fq * m * q / (c * (m - q + 1))
    flags = rmd2 > threshold
    return RmdRuleResult(flags, rmd2, threshold, c, m, kept, chi2_fallback=False)


def detect_all(
    ensemble: TrajectoryEnsemble,
    profiles: list[OutlyingnessProfile],
    ranking: DepthRanking,
    wo_cfg: WoRuleConfig = WoRuleConfig(),
    msbd_cfg: MsbdRuleConfig = MsbdRuleConfig(),
    rmd_cfg: RmdRuleConfig = RmdRuleConfig(),
) -> DetectionReport:
    """Joint report of the three detectors over one ensemble."""
    if [p.curve_id for p in profiles] != ensemble.ids:
        raise ValidationError("profiles do not match the ensemble")
    wo_res = wo_outliers(profiles, wo_cfg)
    msbd_flags = msbd_outliers(ensemble, ranking, msbd_cfg)
    rmd_res = rmd_outliers(profiles, rmd_cfg)
    depth = {cid: v for cid, v in ranking.entries}
    records = tuple(
        CurveRecord(
            curve_id=p.curve_id,
            wo=p.wo,
            standardized_log_wo=float(wo_res.standardized[i]),
            wo_flag=bool(wo_res.flags[i]),
            msbd=depth[p.curve_id],
            msbd_flag=bool(msbd_flags[i]),
            rmd2=float(rmd_res.rmd2[i]),
            rmd_flag=bool(rmd_res.flags[i]),
        )
        for i, p in enumerate(profiles)
    )
    return DetectionReport(
        records=records,
        wo_threshold=wo_res.threshold,
        rmd_threshold=rmd_res.threshold,
        mcd_c=rmd_res.c,
        mcd_m=rmd_res.m,
    )
