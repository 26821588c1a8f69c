from itertools import combinations

import numpy as np
import pytest

from trajfda.core import RandomSeed, TimeGrid, TooFewCurves, validate_ensemble
from trajfda.depthrank import (
    DepthRanking,
    MsbdConfig,
    assign_bands,
    build_boxplot,
    msbd,
    rank,
    sbd,
)
from trajfda.pointwise import simplex_contains


def oracle_depth(ens, cid, all_times=False, exclude=True):
    """Double-loop subset enumeration straight from the definition."""
    data = ens.stacked()
    n, k, p = data.shape
    qi = ens.index_of(cid)
    members = [i for i in range(n) if i != qi or not exclude]
    total, acc = 0, 0.0
    for sub in combinations(members, p + 1):
        hits = [simplex_contains(data[list(sub), j, :], data[qi, j, :]) for j in range(k)]
        acc += all(hits) if all_times else sum(hits) / k
        total += 1
    return acc / total


def random_ensemble(rng, n, k, p=2):
    grid = TimeGrid(np.linspace(0, 1, k))
    return validate_ensemble([(f"c{i:02d}", rng.normal(size=(k, p))) for i in range(n)], grid)


def constant_ensemble(points, k=6):
    grid = TimeGrid(np.linspace(0, 1, k))
    return validate_ensemble(
        [(f"c{i}", np.tile(p, (k, 1))) for i, p in enumerate(points)], grid
    )


def test_msbd_full_containment_is_one():
    ens = constant_ensemble([[0.3, 0.3], [0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    assert msbd(ens, "c0") == pytest.approx(1.0)
    assert sbd(ens, "c0") == pytest.approx(1.0)


def test_msbd_half_time_containment():
    k = 6
    grid = TimeGrid(np.linspace(0, 1, k))
    tri = [np.tile(p, (k, 1)) for p in ([0.0, 0.0], [1.0, 0.0], [0.0, 1.0])]
    query = np.tile([0.3, 0.3], (k, 1))
    query[: k // 2] = [5.0, 5.0]  # outside at exactly half the grid points
    ens = validate_ensemble(
        [("q", query)] + [(f"v{i}", v) for i, v in enumerate(tri)], grid
    )
    assert msbd(ens, "q") == pytest.approx(0.5)
    assert sbd(ens, "q") == pytest.approx(0.0)


def test_msbd_matches_oracle_constant_curves():
    rng = np.random.default_rng(0)
    ens = constant_ensemble(rng.normal(size=(6, 2)))
    for cid in ens.ids:
        assert msbd(ens, cid) == pytest.approx(oracle_depth(ens, cid), abs=1e-12)


def test_msbd_and_sbd_match_oracle_random_fixtures():
    rng = np.random.default_rng(1)
    for _ in range(15):
        ens = random_ensemble(rng, int(rng.integers(4, 9)), int(rng.integers(5, 13)))
        for cid in ens.ids:
            assert msbd(ens, cid) == pytest.approx(oracle_depth(ens, cid), abs=1e-12)
            assert sbd(ens, cid) == pytest.approx(
                oracle_depth(ens, cid, all_times=True), abs=1e-12
            )


def test_sbd_never_exceeds_msbd():
    rng = np.random.default_rng(2)
    ens = random_ensemble(rng, 6, 8)
    for cid in ens.ids:
        assert sbd(ens, cid) <= msbd(ens, cid) + 1e-12


def test_p1_ensembles_supported():
    rng = np.random.default_rng(3)
    ens = random_ensemble(rng, 6, 7, p=1)
    for cid in ens.ids:
        assert msbd(ens, cid) == pytest.approx(oracle_depth(ens, cid), abs=1e-12)


def test_rank_permutation_invariance():
    rng = np.random.default_rng(4)
    grid = TimeGrid(np.linspace(0, 1, 8))
    curves = [(f"c{i}", rng.normal(size=(8, 2))) for i in range(7)]
    ens = validate_ensemble(curves, grid)
    shuffled = validate_ensemble([curves[i] for i in [3, 0, 6, 2, 5, 1, 4]], grid)
    r1, r2 = rank(ens), rank(shuffled)
    assert dict(r1.entries) == dict(r2.entries)
    assert r1.order == r2.order


def test_rank_duplicated_curves_equal_depth():
    rng = np.random.default_rng(5)
    base = [rng.normal(size=(6, 2)) for _ in range(5)]
    grid = TimeGrid(np.linspace(0, 1, 6))
    curves = [(f"a{i}", v) for i, v in enumerate(base)]
    curves += [(f"b{i}", v.copy()) for i, v in enumerate(base)]
    vals = dict(rank(validate_ensemble(curves, grid)).entries)
    for i in range(5):
        assert vals[f"a{i}"] == pytest.approx(vals[f"b{i}"], abs=1e-12)


def test_msbd_affine_invariance():
    rng = np.random.default_rng(6)
    ens = random_ensemble(rng, 7, 6)
    a = rng.normal(size=(2, 2)) + 2 * np.eye(2)  # nonsingular
    b = rng.normal(size=2)
    mapped = validate_ensemble(
        [(tr.id, tr.values @ a.T + b) for tr in ens.trajectories], ens.grid
    )
    for cid in ens.ids:
        assert msbd(mapped, cid) == pytest.approx(msbd(ens, cid), abs=1e-12)


def test_rank_deterministic_under_subsampling():
    rng = np.random.default_rng(7)
    ens = random_ensemble(rng, 12, 6)
    cfg = MsbdConfig(max_triples=100, seed=RandomSeed(99))
    r1 = rank(ens, cfg)
    r2 = rank(ens, cfg)
    assert r1 == r2
    # subsampled values approximate the exact ones
    exact = dict(rank(ens).entries)
    for cid, v in r1.entries:
        assert abs(v - exact[cid]) < 0.25


def test_nested_circle_ranking_matches_radius_order():
    # Constant curves at nested radii: depth order must follow centrality.
    radii = [0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0]
    ang = np.deg2rad(np.arange(8) * 45.0 + 10.0)
    pts = [[r * np.cos(a), r * np.sin(a)] for r, a in zip(radii, ang)]
    ens = constant_ensemble(pts, k=5)
    vals = dict(rank(ens).entries)
    depths = [vals[f"c{i}"] for i in range(8)]
    # innermost strictly deeper than outermost; outermost has zero depth
    assert depths[0] > depths[-1]
    assert depths[-1] == pytest.approx(0.0, abs=1e-12)
    # oracle agreement on this mini fixture
    for cid in ens.ids:
        assert vals[cid] == pytest.approx(oracle_depth(ens, cid), abs=1e-12)


def test_assign_bands_ceil_rule():
    r8 = DepthRanking.from_values([f"c{i}" for i in range(8)], list(np.linspace(1, 0.2, 8)))
    bands = assign_bands(r8)
    assert [len(bands.bands[level]) for level in (25, 50, 75)] == [2, 4, 6]
    assert len(bands.outer_ids) == 2
    assert bands.median_id == "c0"

    r5 = DepthRanking.from_values([f"c{i}" for i in range(5)], list(np.linspace(1, 0.2, 5)))
    bands = assign_bands(r5)
    assert [len(bands.bands[level]) for level in (25, 50, 75)] == [2, 3, 4]

    with pytest.raises(TooFewCurves):
        assign_bands(DepthRanking.from_values(["a", "b", "c"], [0.3, 0.2, 0.1]))


def test_ranking_ties_break_by_id():
    r = DepthRanking.from_values(["b", "a", "c"], [0.5, 0.5, 0.9])
    assert r.order == ("c", "a", "b")


def test_build_boxplot_partition():
    rng = np.random.default_rng(8)
    k = 16
    grid = TimeGrid(np.linspace(0, 1, k))
    smooth = [
        (f"c{i}", np.column_stack([np.linspace(0, 1, k), np.full(k, i * 0.1)]))
        for i in range(8)
    ]
    wiggly = np.column_stack([np.linspace(0, 1, k), 0.35 + 0.8 * rng.normal(size=k)])
    curves = smooth + [("w0", wiggly)]
    ens = validate_ensemble(curves, grid)
    bands, outliers = build_boxplot(ens)
    banded = set(bands.bands[75]) | set(bands.outer_ids)
    assert banded | set(outliers) == set(ens.ids)
    assert banded.isdisjoint(outliers)
    assert "w0" in outliers


def test_build_boxplot_no_outliers():
    rng = np.random.default_rng(9)
    ens = random_ensemble(rng, 8, 10)
    bands, outliers = build_boxplot(ens)
    if not outliers:
        assert set(bands.bands[75]) | set(bands.outer_ids) == set(ens.ids)
