"""Synthetic trajectory generators and the detection benchmark harness.

Four contamination models (lines, rotated sinusoids, circles with ellipse or
rose-curve intruders), a bivariate Matern Gaussian process sampler, and the
pc/pf benchmark that runs all three detectors over seeded replicates.

Normal notation N(0, v) is read as variance v throughout.  All generators
are seed-deterministic; the clean body of a model is drawn from a stream
separate from the contamination stream, so the body is identical with and
without contamination (and shared between Models 3 and 4).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from math import gamma as gamma_fn

import numpy as np
from scipy.special import kv

from .core import (
    NumericalError,
    RandomSeed,
    TimeGrid,
    Trajectory,
    TrajectoryEnsemble,
    ValidationError,
)
from .depthrank import MsbdConfig, rank
from .detect import (
    MsbdRuleConfig,
    RmdRuleConfig,
    WoRuleConfig,
    msbd_outliers,
    rmd_outliers,
    wo_outliers,
)
from .outlyingness import Mahalanobis, PointwiseDepthMethod, profile_ensemble


class NotPositiveDefinite(NumericalError):
    def __init__(self):
        super().__init__("covariance not positive definite after maximal jitter")


class InvalidCrossParams(ValidationError):
    pass


class Model(Enum):
    M1 = "m1"
    M2 = "m2"
    M3 = "m3"
    M4 = "m4"


@dataclass(frozen=True)
class ModelSpec:
    model: Model
    k: int = 0  # 0 = model default (100 for M1/M2, 360 for M3/M4)
    seed: RandomSeed = field(default_factory=RandomSeed)
    contaminate: bool = True

    def grid_size(self) -> int:
        if self.k:
            if self.k < 50:
                raise ValidationError("k must be >= 50")
            return self.k
        if self.model is Model.M1:
            return 300
        return 360 if self.model in (Model.M3, Model.M4) else 100


@dataclass(frozen=True)
class MaternSpec:
    """Bivariate Matern cross-covariance parameters on a uniform grid."""

    sigma: tuple[float, float] = (1.0, 1.0)
    alpha: tuple[float, float, float] = (0.02, 0.01, 0.016)  # a11, a22, a12
    nu: tuple[float, float, float] = (1.2, 0.6, 1.0)  # nu11, nu22, nu12
    rho12: float = 0.6
    k: int = 200
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        if not -1.0 < self.rho12 < 1.0:
            raise InvalidCrossParams("rho12 must lie in (-1, 1)")
        if min(self.sigma) <= 0 or min(self.alpha) <= 0 or min(self.nu) <= 0:
            raise InvalidCrossParams("sigma, alpha and nu must be positive")
        if self.k < 3:
            raise ValidationError("k must be >= 3")


@dataclass(frozen=True)
class MethodRates:
    pc_mean: float
    pc_sd: float
    pf_mean: float
    pf_sd: float


@dataclass(frozen=True)
class BenchmarkResult:
    rates: dict[str, MethodRates]  # keys: WO, MSBD, RMD
    replicates: int


def _streams(seed: RandomSeed, n_children: int = 2) -> list[np.random.Generator]:
    children = np.random.SeedSequence(seed.seed).spawn(n_children)
    return [np.random.Generator(np.random.PCG64(c)) for c in children]


def _ids(prefix: str, n: int) -> list[str]:
    width = max(2, len(str(n)))
    return [f"{prefix}{i + 1:0{width}d}" for i in range(n)]


def _ensemble(points: np.ndarray, values: list[np.ndarray], ids: list[str]) -> TrajectoryEnsemble:
    grid = TimeGrid(points)
    return TrajectoryEnsemble(grid, tuple(Trajectory(i, v) for i, v in zip(ids, values)))


#: Correlation range of the smooth unit-variance body noise in Model 1,
#: as a fraction of the time domain.
_M1_NOISE_RANGE = 0.1


def _smooth_noise_chol(t: np.ndarray) -> np.ndarray:
    """Cholesky factor of a unit-variance squared-exponential kernel."""
    span = float(t[-1] - t[0])
    ell = _M1_NOISE_RANGE * span
    lags = t[:, None] - t[None, :]
    cov = np.exp(-0.5 * (lags / ell) ** 2) + 1e-10 * np.eye(t.size)
    return np.linalg.cholesky(cov)


def gen_model1(
    k: int = 300,
    seed: RandomSeed = RandomSeed(),
    contaminate: bool = True,
    body_noise: str = "smooth",
) -> tuple[TrajectoryEnsemble, list[str]]:
    """70 noisy lines with slopes tan(1..70 deg) on t in (0, 100); the three
    contaminations add variance-6 white noise around slopes 1, 0.5 and -1.

    The body's unit-variance noise is a smooth Gaussian process by default
    (body_noise="white" gives iid per-point draws instead): the model's
    contaminations are *shape* outliers, so their white jitter is the
    anomaly the smooth body sets off.

    Curves are stored as (t, Y(t)) pairs so the planar machinery applies.
    Returns the ensemble and the contaminated ids.
    """
    if body_noise not in ("smooth", "white"):
        raise ValidationError(f"unknown body_noise {body_noise!r}")
    body_rng, out_rng = _streams(seed)
    t = 100.0 * np.arange(1, k + 1) / (k + 1)
    slopes = np.tan(np.deg2rad(np.arange(1, 71)))
    if body_noise == "smooth":
        chol = _smooth_noise_chol(t)
        noise = (chol @ body_rng.standard_normal((k, 70))).T
    else:
        noise = body_rng.standard_normal((70, k))
    values = [np.column_stack([t, s * t + noise[i]]) for i, s in enumerate(slopes)]
    outliers: list[str] = []
    if contaminate:
        sd = np.sqrt(6.0)
        for s in (1.0, 0.5, -1.0):
            values.append(np.column_stack([t, s * t + sd * out_rng.standard_normal(k)]))
    ids = _ids("c", len(values))
    if contaminate:
        outliers = ids[70:]
    return _ensemble(t, values, ids), outliers


def gen_model2(
    k: int = 100, seed: RandomSeed = RandomSeed(), contaminate: bool = True
) -> tuple[TrajectoryEnsemble, list[str]]:
    """The sinusoid (x, sin x) on [0, 2 pi] rotated by 2, 4, ..., 80 degrees;
    contaminations are y = 2 sin(4x) plus variance-2 noise rotated by
    30, 45, 60 and 80 degrees."""
    _, out_rng = _streams(seed)
    x = np.linspace(0.0, 2.0 * np.pi, k)
    base_y = np.sin(x)

    def rotated(y: np.ndarray, theta_deg: float) -> np.ndarray:
        th = np.deg2rad(theta_deg)
        # The rotation acts on the stacked (y, x) vector.
        y_r = np.cos(th) * y - np.sin(th) * x
        x_r = np.sin(th) * y + np.cos(th) * x
        return np.column_stack([x_r, y_r])

    values = [rotated(base_y, th) for th in range(2, 81, 2)]
    outliers: list[str] = []
    if contaminate:
        sd = np.sqrt(2.0)
        for th in (30.0, 45.0, 60.0, 80.0):
            y = 2.0 * np.sin(4.0 * x) + sd * out_rng.standard_normal(k)
            values.append(rotated(y, th))
    ids = _ids("c", len(values))
    if contaminate:
        outliers = ids[40:]
    return _ensemble(x, values, ids), outliers


@dataclass(frozen=True)
class ClosedCurveConfig:
    """Constructive contamination choices for Models 3 and 4 (the text fixes
    only their flavor, not the constants).

    Roses are traversed at constant speed by default: an object tracing the
    rose shape spends equal path length between samples, which decouples its
    polar angle from the circles' angular clock.  "polar" instead samples
    r(theta) at the shared grid angles.
    """

    noisy_radius: float = 100.0
    noisy_sd: float = 4.0
    ellipse_radii: tuple[float, ...] = (90.0, 125.0, 160.0)
    ellipse_ratio: float = 0.6
    rose_amplitude: float = 100.0
    rose_leaves: tuple[int, ...] = (2, 3, 4, 5)
    rose_traversal: str = "arclength"  # or "polar"

    def __post_init__(self):
        if self.rose_traversal not in ("arclength", "polar"):
            raise ValidationError(f"unknown rose traversal {self.rose_traversal!r}")


def _circle_body(k: int, rng: np.random.Generator) -> tuple[np.ndarray, list[np.ndarray]]:
    theta = np.deg2rad(np.arange(1, k + 1) * (360.0 / k))
    t = np.arange(1, k + 1, dtype=float)
    radii = 20.0 + 8.0 * np.arange(1, 21)
    values = []
    for r in radii:
        x = r * np.cos(theta) + rng.standard_normal(k)
        y = r * np.sin(theta) + rng.standard_normal(k)
        values.append(np.column_stack([x, y]))
    return t, values


def gen_model3(
    k: int = 360,
    seed: RandomSeed = RandomSeed(),
    contaminate: bool = True,
    config: ClosedCurveConfig = ClosedCurveConfig(),
) -> tuple[TrajectoryEnsemble, list[str]]:
    """20 circles of radius 28..180 with unit noise; contaminations are one
    mid-radius circle with sd-4 noise and three axis-aligned ellipses."""
    body_rng, out_rng = _streams(seed)
    t, values = _circle_body(k, body_rng)
    theta = np.deg2rad(np.arange(1, k + 1) * (360.0 / k))
    outliers: list[str] = []
    if contaminate:
        r = config.noisy_radius
        values.append(
            np.column_stack(
                [
                    r * np.cos(theta) + config.noisy_sd * out_rng.standard_normal(k),
                    r * np.sin(theta) + config.noisy_sd * out_rng.standard_normal(k),
                ]
            )
        )
        for r in config.ellipse_radii:
            values.append(
                np.column_stack(
                    [
                        r * np.cos(theta) + out_rng.standard_normal(k),
                        config.ellipse_ratio * r * np.sin(theta) + out_rng.standard_normal(k),
                    ]
                )
            )
    ids = _ids("c", len(values))
    if contaminate:
        outliers = ids[20:]
    return _ensemble(t, values, ids), outliers


def _rose_points(m: int, amplitude: float, k: int, traversal: str) -> np.ndarray:
    if traversal == "polar":
        theta = np.deg2rad(np.arange(1, k + 1) * (360.0 / k))
        r = amplitude * np.cos(m * theta)
        return np.column_stack([r * np.cos(theta), r * np.sin(theta)])
    # Constant-speed traversal: resample the rose at equal arc length.
    psi = np.linspace(0.0, 2.0 * np.pi, 20 * k, endpoint=False)
    r = amplitude * np.cos(m * psi)
    pts = np.column_stack([r * np.cos(psi), r * np.sin(psi)])
    seg = np.linalg.norm(np.diff(np.vstack([pts, pts[:1]]), axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    targets = cum[-1] * np.arange(k) / k
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(pts) - 1)
    return pts[idx]


def gen_model4(
    k: int = 360,
    seed: RandomSeed = RandomSeed(),
    contaminate: bool = True,
    config: ClosedCurveConfig = ClosedCurveConfig(),
) -> tuple[TrajectoryEnsemble, list[str]]:
    """Same circle body as Model 3 (same seed, same body); contaminations are
    rose curves r(theta) = A cos(m theta) with unit noise."""
    body_rng, out_rng = _streams(seed)
    t, values = _circle_body(k, body_rng)
    outliers: list[str] = []
    if contaminate:
        for m in config.rose_leaves:
            pts = _rose_points(m, config.rose_amplitude, k, config.rose_traversal)
            values.append(pts + out_rng.standard_normal((k, 2)))
    ids = _ids("c", len(values))
    if contaminate:
        outliers = ids[20:]
    return _ensemble(t, values, ids), outliers


def generate(spec: ModelSpec, config: ClosedCurveConfig = ClosedCurveConfig()):
    k = spec.grid_size()
    if spec.model is Model.M1:
        return gen_model1(k, spec.seed, spec.contaminate)
    if spec.model is Model.M2:
        return gen_model2(k, spec.seed, spec.contaminate)
    if spec.model is Model.M3:
        return gen_model3(k, spec.seed, spec.contaminate, config)
    return gen_model4(k, spec.seed, spec.contaminate, config)


def matern_corr(h, nu: float, alpha: float):
    """Matern correlation M(h) = 2^(1-nu)/Gamma(nu) (h/a)^nu K_nu(h/a).

    M(0) = 1; accepts scalars or arrays of nonnegative lags.
    """
    if nu <= 0 or alpha <= 0:
        raise ValidationError("nu and alpha must be positive")
    h = np.asarray(h, dtype=float)
    if np.any(h < 0):
        raise ValidationError("lags must be nonnegative")
    x = h / alpha
    out = np.ones_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = (2.0 ** (1.0 - nu) / gamma_fn(nu)) * xp**nu * kv(nu, xp)
    return out if out.ndim else float(out)


def _rho_bound(nu1: float, nu2: float, nu12: float, d: int = 1) -> float:
    """Parsimonious-Matern admissibility bound on |rho12| (domain dim d)."""
    g = gamma_fn
    return float(
        np.sqrt(g(nu1 + d / 2.0) / g(nu1) * g(nu2 + d / 2.0) / g(nu2))
        * g(nu12)
        / g(nu12 + d / 2.0)
    )


def gp_sample(spec: MaternSpec, n: int, seed: RandomSeed = RandomSeed()) -> TrajectoryEnsemble:
    """n iid draws of the bivariate stationary Matern Gaussian process.

    Builds the 2k x 2k cross-covariance over the uniform grid, factorizes
    with escalating jitter and returns a p = 2 ensemble.
    """
    nu11, nu22, nu12 = spec.nu
    if nu12 < (nu11 + nu22) / 2.0:
        raise InvalidCrossParams("need nu12 >= (nu11 + nu22) / 2")
    bound = _rho_bound(nu11, nu22, nu12)
    if abs(spec.rho12) > bound:
        raise InvalidCrossParams(f"|rho12| exceeds the admissibility bound {bound:.6g}")

    k = spec.k
    lo, hi = spec.domain
    t = np.linspace(lo, hi, k)
    lags = np.abs(t[:, None] - t[None, :])
    s1, s2 = spec.sigma
    a11, a22, a12 = spec.alpha
    c11 = s1 * s1 * matern_corr(lags, nu11, a11)
    c22 = s2 * s2 * matern_corr(lags, nu22, a22)
    c12 = spec.rho12 * s1 * s2 * matern_corr(lags, nu12, a12)
    cov = np.block([[c11, c12], [c12.T, c22]])

    base = float(np.trace(cov)) / (2 * k)
    chol = None
    for jitter in (0.0, 1e-12, 1e-11, 1e-10, 1e-9, 1e-8):
        try:
            chol = np.linalg.cholesky(cov + jitter * base * np.eye(2 * k))
            break
        except np.linalg.LinAlgError:
            continue
    if chol is None:
        raise NotPositiveDefinite()

    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed.seed)))
    z = rng.standard_normal((2 * k, n))
    draws = chol @ z  # (2k, n)
    values = [np.column_stack([draws[:k, i], draws[k:, i]]) for i in range(n)]
    return _ensemble(t, values, _ids("gp", n))


@dataclass(frozen=True)
class DetectorConfigs:
    method: PointwiseDepthMethod = field(default_factory=Mahalanobis)
    wo: WoRuleConfig = field(default_factory=WoRuleConfig)
    msbd_rule: MsbdRuleConfig = field(default_factory=MsbdRuleConfig)
    rmd: RmdRuleConfig = field(default_factory=RmdRuleConfig)
    msbd: MsbdConfig = field(default_factory=MsbdConfig)


def _rates(flagged: set[str], truth: set[str], all_ids: list[str]) -> tuple[float, float]:
    n_out = len(truth)
    n_clean = len(all_ids) - n_out
    pc = len(flagged & truth) / n_out if n_out else 0.0
    pf = len(flagged - truth) / n_clean if n_clean else 0.0
    return pc, pf


def run_replicate(
    spec: ModelSpec, cfgs: DetectorConfigs = DetectorConfigs(),
    contamination: ClosedCurveConfig = ClosedCurveConfig(),
) -> dict[str, tuple[float, float]]:
    """One benchmark replicate: generate, detect with all three rules,
    return per-method (pc, pf)."""
    ensemble, outlier_ids = generate(spec, contamination)
    truth = set(outlier_ids)
    ids = ensemble.ids
    profiles = profile_ensemble(ensemble, cfgs.method)
    wo_res = wo_outliers(profiles, cfgs.wo)
    wo_flagged = {ids[i] for i in np.nonzero(wo_res.flags)[0]}
    ranking = rank(ensemble, cfgs.msbd)
    msbd_flags = msbd_outliers(ensemble, ranking, cfgs.msbd_rule)
    msbd_flagged = {ids[i] for i in np.nonzero(msbd_flags)[0]}
    rmd_res = rmd_outliers(profiles, cfgs.rmd)
    rmd_flagged = {ids[i] for i in np.nonzero(rmd_res.flags)[0]}
    return {
        "WO": _rates(wo_flagged, truth, ids),
        "MSBD": _rates(msbd_flagged, truth, ids),
        "RMD": _rates(rmd_flagged, truth, ids),
    }


def benchmark(
    spec: ModelSpec,
    replicates: int,
    cfgs: DetectorConfigs = DetectorConfigs(),
    contamination: ClosedCurveConfig = ClosedCurveConfig(),
    threads: int = 1,
) -> BenchmarkResult:
    """pc/pf means and standard deviations over seeded replicates.

    Replicate r uses the seed stream spawned from (master seed, r), so
    results are independent of execution order and thread count.
    """
    if replicates < 2:
        raise ValidationError("need at least 2 replicates")

    def one(r: int) -> dict[str, tuple[float, float]]:
        child = np.random.SeedSequence(entropy=spec.seed.seed, spawn_key=(r,))
        rep_seed = RandomSeed(int(child.generate_state(1, np.uint64)[0]))
        rep_spec = ModelSpec(spec.model, spec.k, rep_seed, contaminate=True)
        return run_replicate(rep_spec, cfgs, contamination)

    if threads and threads != 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(replicates)))
    else:
        results = [one(r) for r in range(replicates)]

    rates = {}
    for method in ("WO", "MSBD", "RMD"):
        pcs = np.array([res[method][0] for res in results])
        pfs = np.array([res[method][1] for res in results])
        rates[method] = MethodRates(
            float(pcs.mean()), float(pcs.std(ddof=1)),
            float(pfs.mean()), float(pfs.std(ddof=1)),
        )
    return BenchmarkResult(rates=rates, replicates=replicates)
