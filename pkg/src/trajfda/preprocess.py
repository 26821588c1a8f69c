"""Real-data conditioning: cubic smoothing splines, resampling to a common
uniform grid, and start-point alignment.

Each coordinate of each raw track is fit by a natural cubic smoothing spline
(Reinsch's banded formulation) with the penalty weight chosen by GCV over a
log grid, then evaluated on a shared uniform grid spanning the intersection
of the track time ranges, rescaled to [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solveh_banded

from .core import (
    NumericalError,
    TimeGrid,
    Trajectory,
    TrajectoryEnsemble,
    ValidationError,
)

_GCV_GRID_POINTS = 50
_GCV_LOG_SPAN = 6.0  # lambda grid spans 10^-span .. 10^+span around the time scale


class NoCommonInterval(ValidationError):
    def __init__(self):
        super().__init__("track time ranges have no common interval")


class IllConditionedFit(NumericalError):
    def __init__(self, track_id: str):
        self.track_id = track_id
        super().__init__(f"smoothing-spline system ill-conditioned for track {track_id!r}")


@dataclass(frozen=True)
class RawTrack:
    """Irregularly sampled track with strictly increasing times.

    Parsing accepts any length >= 2; the smoothing stage requires >= 8
    samples per track.
    """

    id: str
    t: np.ndarray
    coords: np.ndarray  # (m, p)

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        coords = np.asarray(self.coords, dtype=float)
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "coords", coords)
        if t.ndim != 1 or coords.ndim != 2 or coords.shape[0] != t.size:
            raise ValidationError(f"track {self.id!r}: shapes do not line up")
        if t.size < 2:
            raise ValidationError(f"track {self.id!r}: need >= 2 samples")
        if not np.all(np.diff(t) > 0):
            raise ValidationError(f"track {self.id!r}: times must be strictly increasing")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(coords))):
            raise ValidationError(f"track {self.id!r}: non-finite values")


@dataclass(frozen=True)
class GCV:
    """Pick lambda by generalized cross-validation over a 50-point log grid."""


@dataclass(frozen=True)
class Fixed:
    value: float

    def __post_init__(self):
        if self.value < 0:
            raise ValidationError("lambda must be nonnegative")


@dataclass(frozen=True)
class Alignment:
    NONE = "none"
    COMMON_START = "common-start"


@dataclass(frozen=True)
class SmoothingConfig:
    target_k: int = 200
    lam: GCV | Fixed = GCV()
    align: str = Alignment.NONE

    def __post_init__(self):
        if self.target_k < 50:
            raise ValidationError("target_k must be >= 50")
        if self.align not in (Alignment.NONE, Alignment.COMMON_START):
            raise ValidationError(f"unknown alignment {self.align!r}")


def _reinsch_matrices(t: np.ndarray):
    """Banded R (penalty Gram) and the bands of Q^T Q for the knot vector."""
    m = t.size
    h = np.diff(t)
    # Q is m x (m-2): column j has 1/h[j], -(1/h[j] + 1/h[j+1]), 1/h[j+1].
    q = np.zeros((m, m - 2))
    for j in range(m - 2):
        q[j, j] = 1.0 / h[j]
        q[j + 1, j] = -1.0 / h[j] - 1.0 / h[j + 1]
        q[j + 2, j] = 1.0 / h[j + 1]
    r = np.zeros((m - 2, m - 2))
    for j in range(m - 2):
        r[j, j] = (h[j] + h[j + 1]) / 3.0
        if j + 1 < m - 2:
            r[j, j + 1] = h[j + 1] / 6.0
            r[j + 1, j] = h[j + 1] / 6.0
    return q, r


def _to_banded_lower(a: np.ndarray, bandwidth: int) -> np.ndarray:
    n = a.shape[0]
    banded = np.zeros((bandwidth + 1, n))
    for d in range(bandwidth + 1):
        banded[d, : n - d] = np.diagonal(a, -d)
    return banded


def _spline_fit(t: np.ndarray, y: np.ndarray, lam: float):
    """Fitted values and knot second derivatives of the penalized fit."""
    m = t.size
    q, r = _reinsch_matrices(t)
    if lam == 0.0:
        return y.copy(), np.zeros(m)
    a = r + lam * (q.T @ q)
    banded = _to_banded_lower(a, 2)
    gamma = solveh_banded(banded, q.T @ y, lower=True)
    fitted = y - lam * (q @ gamma)
    second = np.zeros(m)
    second[1:-1] = gamma
    return fitted, second


def _spline_trace(t: np.ndarray, lam: float) -> float:
    """Trace of the smoother matrix at lambda."""
    m = t.size
    if lam == 0.0:
        return float(m)
    q, r = _reinsch_matrices(t)
    a = r + lam * (q.T @ q)
    banded = _to_banded_lower(a, 2)
    x = solveh_banded(banded, q.T @ q, lower=True)
    return float(m - lam * np.trace(x))


def _spline_eval(t: np.ndarray, values: np.ndarray, second: np.ndarray,
                 s: np.ndarray) -> np.ndarray:
    """Evaluate the natural cubic spline given knot values and second
    derivatives (zero at the boundary knots)."""
    idx = np.clip(np.searchsorted(t, s, side="right") - 1, 0, t.size - 2)
    t0, t1 = t[idx], t[idx + 1]
    h = t1 - t0
    a, b = values[idx], values[idx + 1]
    g0, g1 = second[idx], second[idx + 1]
    u = (s - t0) / h
    w = (t1 - s) / h
    return (
        w * a
        + u * b
        + (h**2 / 6.0) * ((w**3 - w) * g0 + (u**3 - u) * g1)
    )


def _gcv_lambda(t: np.ndarray, y: np.ndarray) -> float:
    m = t.size
    base = float(np.mean(np.diff(t))) ** 3
    grid = base * np.logspace(-_GCV_LOG_SPAN, _GCV_LOG_SPAN, _GCV_GRID_POINTS)
    best_lam, best_score = grid[0], np.inf
    for lam in grid:
        fitted, _ = _spline_fit(t, y, lam)
        rss = float(np.sum((y - fitted) ** 2))
        tr = _spline_trace(t, lam)
        denom = m - tr
        if denom <= 0:
            continue
        score = m * rss / denom**2
        if score < best_score:
            best_score, best_lam = score, lam
    return float(best_lam)


def smooth_resample(tracks: list[RawTrack], cfg: SmoothingConfig = SmoothingConfig()) -> TrajectoryEnsemble:
    """Fit every coordinate of every track, evaluate all tracks on target_k
    uniform points spanning the intersection of their time ranges, and
    return the ensemble on the [0, 1]-rescaled grid."""
    if not tracks:
        raise ValidationError("no tracks given")
    for tr in tracks:
        if tr.t.size < 8:
            raise ValidationError(f"track {tr.id!r}: need >= 8 samples to smooth")
    lo = max(float(tr.t[0]) for tr in tracks)
    hi = min(float(tr.t[-1]) for tr in tracks)
    if not lo < hi:
        raise NoCommonInterval()
    s = np.linspace(lo, hi, cfg.target_k)

    trajs = []
    for tr in tracks:
        cols = []
        for c in range(tr.coords.shape[1]):
            y = tr.coords[:, c]
            try:
                lam = _gcv_lambda(tr.t, y) if isinstance(cfg.lam, GCV) else cfg.lam.value
                fitted, second = _spline_fit(tr.t, y, lam)
            except np.linalg.LinAlgError as exc:
                raise IllConditionedFit(tr.id) from exc
            if not np.all(np.isfinite(fitted)):
                raise IllConditionedFit(tr.id)
            cols.append(_spline_eval(tr.t, fitted, second, s))
        trajs.append(Trajectory(tr.id, np.column_stack(cols)))

    grid = TimeGrid((s - lo) / (hi - lo))
    ensemble = TrajectoryEnsemble(grid, tuple(trajs))
    if cfg.align == Alignment.COMMON_START:
        ensemble = align_common_start(ensemble)
    return ensemble


def align_common_start(ensemble: TrajectoryEnsemble) -> TrajectoryEnsemble:
    """Translate every curve so all start points meet at their componentwise
    median; shapes are unchanged."""
    starts = np.array([tr.values[0] for tr in ensemble.trajectories])
    target = np.median(starts, axis=0)
    moved = tuple(
        Trajectory(tr.id, tr.values + (target - tr.values[0]))
        for tr in ensemble.trajectories
    )
    return TrajectoryEnsemble(ensemble.grid, moved)
