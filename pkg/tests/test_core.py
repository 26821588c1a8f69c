import numpy as np
import pytest

from trajfda.core import (
    DuplicateId,
    GridMismatch,
    NonFiniteValue,
    TimeGrid,
    TooFewCurves,
    TrajectoryEnsemble,
    UnknownId,
    ValidationError,
    restrict,
    validate_ensemble,
)


def make_curves(n, k, p, rng):
    return [(f"c{i}", rng.normal(size=(k, p))) for i in range(n)]


def test_validate_wellformed():
    rng = np.random.default_rng(0)
    grid = TimeGrid(np.linspace(0, 1, 10))
    ens = validate_ensemble(make_curves(5, 10, 2, rng), grid)
    assert (ens.n, ens.p, ens.k) == (5, 2, 10)


def test_validate_nan_names_cell():
    rng = np.random.default_rng(0)
    grid = TimeGrid(np.linspace(0, 1, 10))
    curves = make_curves(5, 10, 2, rng)
    bad = curves[2][1].copy()
    bad[3, 1] = np.nan
    curves[2] = ("c2", bad)
    with pytest.raises(NonFiniteValue) as err:
        validate_ensemble(curves, grid)
    assert (err.value.curve_id, err.value.row, err.value.col) == ("c2", 3, 1)


def test_validate_too_few_curves():
    rng = np.random.default_rng(0)
    grid = TimeGrid(np.linspace(0, 1, 10))
    with pytest.raises(TooFewCurves) as err:
        validate_ensemble(make_curves(3, 10, 2, rng), grid)
    assert (err.value.n, err.value.p) == (3, 2)


def test_validate_duplicate_and_grid_mismatch():
    rng = np.random.default_rng(0)
    grid = TimeGrid(np.linspace(0, 1, 10))
    curves = make_curves(4, 10, 2, rng)
    with pytest.raises(DuplicateId):
        validate_ensemble(curves + [("c0", rng.normal(size=(10, 2)))], grid)
    with pytest.raises(GridMismatch):
        validate_ensemble(curves + [("c9", rng.normal(size=(9, 2)))], grid)


def test_restrict_identity_and_subset():
    rng = np.random.default_rng(1)
    grid = TimeGrid(np.linspace(0, 1, 8))
    ens = validate_ensemble(make_curves(10, 8, 2, rng), grid)
    same = restrict(ens, ens.ids)
    assert same.ids == ens.ids
    assert all(
        np.array_equal(a.values, b.values)
        for a, b in zip(same.trajectories, ens.trajectories)
    )
    sub = restrict(ens, ["c5", "c1", "c9", "c0", "c3", "c7"])
    assert sub.n == 6
    assert sub.ids == ["c5", "c1", "c9", "c0", "c3", "c7"]
    assert sub.grid is ens.grid
    with pytest.raises(UnknownId):
        restrict(ens, ["c0", "c1", "c2", "nope"])


def test_grid_uniform_detection():
    g = TimeGrid(np.linspace(0, 1, 50))
    assert g.is_uniform
    assert g.uniform_step == pytest.approx(1 / 49)
    irregular = TimeGrid(np.array([0.0, 0.1, 0.3, 0.35, 1.0]))
    assert not irregular.is_uniform
    with pytest.raises(ValidationError):
        TimeGrid(np.array([0.0, 1.0]))
    with pytest.raises(ValidationError):
        TimeGrid(np.array([0.0, 1.0, 1.0]))


def test_ensemble_immutable():
    rng = np.random.default_rng(2)
    grid = TimeGrid(np.linspace(0, 1, 8))
    ens = validate_ensemble(make_curves(5, 8, 2, rng), grid)
    with pytest.raises(ValueError):
        ens.trajectories[0].values[0, 0] = 99.0
