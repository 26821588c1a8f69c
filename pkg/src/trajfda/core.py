"""Core data model: time grids, trajectories and validated ensembles.

Everything downstream consumes a :class:`TrajectoryEnsemble`; raw matrices are
validated exactly once, here.  All containers are frozen and their arrays are
marked read-only, so they can be shared freely across workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_UNIFORM_RTOL = 1e-9


class TrajectoryDataError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(TrajectoryDataError):
    """Invalid input data or configuration."""


class NumericalError(TrajectoryDataError):
    """A numerical procedure failed (singular matrix, no convergence, ...)."""


class NonFiniteValue(ValidationError):
    def __init__(self, curve_id: str, row: int, col: int):
        self.curve_id, self.row, self.col = curve_id, row, col
        super().__init__(f"curve {curve_id!r} has a non-finite value at [{row}, {col}]")


class GridMismatch(ValidationError):
    def __init__(self, curve_id: str, rows: int, expected: int):
        self.curve_id = curve_id
        super().__init__(
            f"curve {curve_id!r} has {rows} rows but the grid has {expected} points"
        )


class DuplicateId(ValidationError):
    def __init__(self, curve_id: str):
        self.curve_id = curve_id
        super().__init__(f"duplicate curve id {curve_id!r}")


class TooFewCurves(ValidationError):
    def __init__(self, n: int, p: int):
        self.n, self.p = n, p
        super().__init__(f"need at least p + 2 = {p + 2} curves, got {n}")


class UnknownId(ValidationError):
    def __init__(self, curve_id: str):
        self.curve_id = curve_id
        super().__init__(f"unknown curve id {curve_id!r}")


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class TimeGrid:
    """Shared, strictly increasing evaluation grid of k >= 3 time points.

    ``uniform_step`` is set automatically when successive spacings agree to
    one part in 1e9; several operations (the wiggliness stencil in
    particular) require it.
    """

    points: np.ndarray
    uniform_step: float | None = field(default=None)

    def __post_init__(self):
        pts = _readonly(self.points)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 1 or pts.size < 3:
            raise ValidationError(f"grid needs >= 3 points, got shape {pts.shape}")
        diffs = np.diff(pts)
        if not np.all(diffs > 0):
            raise ValidationError("grid points must be strictly increasing")
        step = float(diffs.mean())
        if np.max(np.abs(diffs - step)) <= _UNIFORM_RTOL * step:
            object.__setattr__(self, "uniform_step", step)
        else:
            object.__setattr__(self, "uniform_step", None)

    def __len__(self) -> int:
        return self.points.size

    @property
    def is_uniform(self) -> bool:
        return self.uniform_step is not None


@dataclass(frozen=True)
class Trajectory:
    """One curve: an id plus its k x p coordinate matrix."""

    id: str
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _readonly(self.values))
        if self.values.ndim != 2:
            raise ValidationError(f"curve {self.id!r}: values must be a k x p matrix")


@dataclass(frozen=True)
class RandomSeed:
    """64-bit seed; identical seeds give bit-identical simulation output."""

    seed: int = 0

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValidationError("seed must fit in an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))


@dataclass(frozen=True)
class TrajectoryEnsemble:
    """n validated trajectories sampled on one shared grid.

    Invariants enforced at construction: unique ids, identical dimension p,
    every curve matching the grid length, all values finite, and
    n >= p + 2 (one simplex of p + 1 vertex curves plus the query curve).
    """

    grid: TimeGrid
    trajectories: tuple[Trajectory, ...]

    def __post_init__(self):
        trajs = tuple(self.trajectories)
        object.__setattr__(self, "trajectories", trajs)
        if not trajs:
            raise TooFewCurves(0, 1)
        k = len(self.grid)
        p = trajs[0].values.shape[1]
        seen: set[str] = set()
        for tr in trajs:
            if tr.id in seen:
                raise DuplicateId(tr.id)
            seen.add(tr.id)
            if tr.values.shape[0] != k:
                raise GridMismatch(tr.id, tr.values.shape[0], k)
            if tr.values.shape[1] != p:
                raise ValidationError(
                    f"curve {tr.id!r} has p={tr.values.shape[1]}, expected {p}"
                )
            if not np.all(np.isfinite(tr.values)):
                bad = np.argwhere(~np.isfinite(tr.values))[0]
                raise NonFiniteValue(tr.id, int(bad[0]), int(bad[1]))
        if len(trajs) < p + 2:
            raise TooFewCurves(len(trajs), p)

    @property
    def n(self) -> int:
        return len(self.trajectories)

    @property
    def p(self) -> int:
        return self.trajectories[0].values.shape[1]

    @property
    def k(self) -> int:
        return len(self.grid)

    @property
    def ids(self) -> list[str]:
        return [tr.id for tr in self.trajectories]

    def stacked(self) -> np.ndarray:
        """All curves as one (n, k, p) array (read-only view copy)."""
        return np.stack([tr.values for tr in self.trajectories])

    def curve(self, curve_id: str) -> Trajectory:
        for tr in self.trajectories:
            if tr.id == curve_id:
                return tr
        raise UnknownId(curve_id)

    def index_of(self, curve_id: str) -> int:
        for i, tr in enumerate(self.trajectories):
            if tr.id == curve_id:
                return i
        raise UnknownId(curve_id)


def validate_ensemble(
    raw_curves: list[tuple[str, np.ndarray]], grid: TimeGrid
) -> TrajectoryEnsemble:
    """Build a validated ensemble from (id, k x p matrix) pairs.

    Never silently drops a curve: the first violation raises one of
    :class:`NonFiniteValue`, :class:`GridMismatch`, :class:`DuplicateId`
    or :class:`TooFewCurves`.
    """
    trajs = []
    seen: set[str] = set()
    k = len(grid)
    p = None
    for curve_id, values in raw_curves:
        values = np.asarray(values, dtype=float)
        if curve_id in seen:
            raise DuplicateId(curve_id)
        seen.add(curve_id)
        if values.ndim != 2 or values.shape[0] != k:
            raise GridMismatch(curve_id, values.shape[0] if values.ndim else 0, k)
        if p is None:
            p = values.shape[1]
        elif values.shape[1] != p:
            raise GridMismatch(curve_id, values.shape[1], p)
        bad = np.argwhere(~np.isfinite(values))
        if bad.size:
            raise NonFiniteValue(curve_id, int(bad[0][0]), int(bad[0][1]))
        trajs.append(Trajectory(curve_id, values))
    if p is None:
        raise TooFewCurves(0, 1)
    if len(trajs) < p + 2:
        raise TooFewCurves(len(trajs), p)
    return TrajectoryEnsemble(grid, tuple(trajs))


def restrict(ensemble: TrajectoryEnsemble, ids: list[str]) -> TrajectoryEnsemble:
    """Sub-ensemble with the given ids, in the given order, on the same grid."""
    by_id = {tr.id: tr for tr in ensemble.trajectories}
    picked = []
    for curve_id in ids:
        if curve_id not in by_id:
            raise UnknownId(curve_id)
        picked.append(by_id[curve_id])
    return TrajectoryEnsemble(ensemble.grid, tuple(picked))
