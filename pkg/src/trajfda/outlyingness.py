"""Directional outlyingness O(t) per curve, the MO/VO aggregates and the
wiggliness statistic WO.

O(t) is the pointwise outlyingness magnitude times the unit vector from the
cross-sectional median to the curve.  MO and VO are its time mean and time
variance.  WO is the mean squared norm of the order-2 difference of O(t)
over the interior grid points, which is what flags shape outliers.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import TimeGrid, TrajectoryEnsemble, ValidationError
from .pointwise import (
    EPS_REL,
    Mahalanobis,
    PointwiseDepthMethod,
    Projection,
    _outlyingness_batch,
    _section_scale,
)


class NonUniformGrid(ValidationError):
    def __init__(self):
        super().__init__("the wiggliness stencil requires a uniform time grid")


class TooShort(ValidationError):
    def __init__(self, k: int):
        self.k = k
        super().__init__(f"need k >= 5 grid points for second differences, got {k}")


class WoWeight(Enum):
    """Weight function on the time interval; only the constant one is used."""

    CONSTANT = "constant"


class EndpointRule(Enum):
    INTERIOR_ONLY = "interior-only"


@dataclass(frozen=True)
class WoConfig:
    weight: WoWeight = WoWeight.CONSTANT
    endpoint_rule: EndpointRule = EndpointRule.INTERIOR_ONLY


@dataclass(frozen=True)
class OutlyingnessProfile:
    """Per-curve outlyingness summary: the O(t) series plus MO, VO and WO."""

    curve_id: str
    o_series: np.ndarray  # (k, p)
    mo: np.ndarray  # (p,)
    vo: float
    wo: float


def _o_field(ensemble: TrajectoryEnsemble, method: PointwiseDepthMethod) -> np.ndarray:
    """Directional outlyingness of every curve at every time: (n, k, p).

    The cross-sectional median is computed once per time point over the full
    section (query curves included), so O(t) is consistent across queries.
    """
    data = ensemble.stacked()  # (n, k, p)
    n, k, p = data.shape
    field = np.empty((n, k, p))
    for j in range(k):
        pts = data[:, j, :]
        o = _outlyingness_batch(pts, pts, method)
        z = pts[int(np.argmin(o))]
        diff = pts - z
        norms = np.linalg.norm(diff, axis=1)
        eps = EPS_REL * _section_scale(pts)
        safe = norms >= eps
        v = np.zeros_like(diff)
        v[safe] = diff[safe] / norms[safe, None]
        field[:, j, :] = o[:, None] * v
    return field


def directional_outlyingness(
    ensemble: TrajectoryEnsemble, curve_id: str, method: PointwiseDepthMethod
) -> np.ndarray:
    """O(t) rows for one curve: o(X(t)) times the unit median-to-point vector.

    Rows where the curve coincides with the cross-sectional median (within
    the degeneracy guard) are zero.
    """
    idx = ensemble.index_of(curve_id)
    return _o_field(ensemble, method)[idx]


def mo_vo(o_series: np.ndarray) -> tuple[np.ndarray, float]:
    """Time mean MO and time variance VO = mean ||O(t) - MO||^2."""
    o = np.asarray(o_series, dtype=float)
    if o.ndim != 2 or o.shape[0] < 2:
        raise ValidationError("o_series must be a k x p matrix with k >= 2")
    mo = o.mean(axis=0)
    vo = float(np.mean(np.sum((o - mo) ** 2, axis=1)))
    return mo, vo


def wo(o_series: np.ndarray, grid: TimeGrid, config: WoConfig = WoConfig()) -> float:
    """Mean squared norm of the second-order difference of O(t).

    For interior indices i the stencil is (O[i+1] - 2 O[i] + O[i-1]) / dt^2;
    the average runs over the k - 2 interior points with the constant unit
    weight.  Requires a uniform grid and k >= 5.
    """
    o = np.asarray(o_series, dtype=float)
    k = o.shape[0]
    if k != len(grid):
        raise ValidationError("o_series length does not match the grid")
    if k < 5:
        raise TooShort(k)
    if not grid.is_uniform:
        raise NonUniformGrid()
    dt = grid.uniform_step
    second = (o[2:] - 2.0 * o[1:-1] + o[:-2]) / dt**2
    return float(np.mean(np.sum(second**2, axis=1)))


def profile_ensemble(
    ensemble: TrajectoryEnsemble,
    method: PointwiseDepthMethod = Projection(),
    config: WoConfig = WoConfig(),
) -> list[OutlyingnessProfile]:
    """One profile per curve, in ensemble order; deterministic."""
    field = _o_field(ensemble, method)
    profiles = []
    for tr, series in zip(ensemble.trajectories, field):
        mo, vo = mo_vo(series)
        w = wo(series, ensemble.grid, config)
        profiles.append(OutlyingnessProfile(tr.id, series, mo, vo, w))
    return profiles


__all__ = [
    "EndpointRule",
    "Mahalanobis",
    "NonUniformGrid",
    "OutlyingnessProfile",
    "Projection",
    "TooShort",
    "WoConfig",
    "WoWeight",
    "directional_outlyingness",
    "mo_vo",
    "profile_ensemble",
    "wo",
]
