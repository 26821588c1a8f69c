"""Cross-sectional (fixed-time) outlyingness, medians and simplex containment.

These are the building blocks for directional outlyingness and for the
simplicial band depth: everything here sees a single time slice of the
ensemble, an n x p point cloud.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import NumericalError, ValidationError

#: Relative guard below which a spread is treated as exactly degenerate.
EPS_REL = 1e-12
#: Outlyingness assigned to a point that deviates along a zero-spread direction.
CAPPED_OUTLYINGNESS = 1e12
#: Consistency constant making the MAD estimate sigma at the normal model.
MAD_SCALE = 1.4826
_RIDGE_REL = 1e-10


class DegenerateSection(NumericalError):
    """Cross-section too degenerate for the requested depth method."""


@dataclass(frozen=True)
class Projection:
    """Projection outlyingness over a fixed fan of directions.

    For p = 2 the fan is `directions` equally spaced unit vectors on the
    half-circle [0, pi); deterministic, no RNG involved.
    """

    directions: int = 180

    def __post_init__(self):
        if self.directions < 8:
            raise ValidationError("projection needs at least 8 directions")


@dataclass(frozen=True)
class Mahalanobis:
    """Mahalanobis outlyingness 1/d - 1 from the classical covariance."""


PointwiseDepthMethod = Projection | Mahalanobis


@dataclass(frozen=True)
class CrossSection:
    """The ensemble evaluated at one time point: an n x p cloud."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2:
            raise ValidationError("cross-section must be an n x p matrix")
        n, p = pts.shape
        if n < p + 2:
            raise ValidationError(f"cross-section needs n >= p + 2, got n={n}, p={p}")
        if not np.all(np.isfinite(pts)):
            raise ValidationError("cross-section contains non-finite values")

    @property
    def n(self) -> int:
        return self.points.shape[0]

    @property
    def p(self) -> int:
        return self.points.shape[1]


def _section_scale(points: np.ndarray) -> float:
    return max(1.0, float(np.max(np.abs(points))) if points.size else 0.0)


def cross2(u: np.ndarray, v: np.ndarray):
    """z-component of the cross product of planar vectors (broadcasting)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    return u[..., 0] * v[..., 1] - u[..., 1] * v[..., 0]


def _projection_directions(p: int, count: int) -> np.ndarray:
    if p == 1:
        return np.ones((1, 1))
    if p == 2:
        phi = np.pi * np.arange(count) / count
        return np.column_stack([np.cos(phi), np.sin(phi)])
    raise ValidationError(f"projection outlyingness supports p in {{1, 2}}, got p={p}")


def _projection_outlyingness(points: np.ndarray, queries: np.ndarray, count: int) -> np.ndarray:
    """Max over directions of |proj(query) - med| / MAD for each query row."""
    dirs = _projection_directions(points.shape[1], count)
    eps = EPS_REL * _section_scale(points)
    proj = points @ dirs.T  # (n, D)
    med = np.median(proj, axis=0)
    mad = MAD_SCALE * np.median(np.abs(proj - med), axis=0)
    dev = np.abs(queries @ dirs.T - med)  # (q, D)
    ok = mad >= eps
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = dev / mad
    # Degenerate direction: no contribution unless the point actually leaves
    # the axis, in which case a large capped value flags it.
    ratio[:, ~ok] = np.where(dev[:, ~ok] < eps, 0.0, CAPPED_OUTLYINGNESS)
    return ratio.max(axis=1)


def _mahalanobis_stats(points: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Mean and ridge-regularized inverse covariance of the section."""
    n, p = points.shape
    mean = points.mean(axis=0)
    centered = points - mean
    cov = centered.T @ centered / (n - 1)
    tr = float(np.trace(cov))
    if tr <= 0.0:
        return mean, np.full((p, p), np.nan)
    cov = cov + (_RIDGE_REL * tr / p) * np.eye(p)
    try:
        inv = np.linalg.inv(cov)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - ridge prevents this
        raise DegenerateSection("covariance singular beyond ridge tolerance") from exc
    return mean, inv


def _mahalanobis_outlyingness(points: np.ndarray, queries: np.ndarray) -> np.ndarray:
    mean, inv = _mahalanobis_stats(points)
    if not np.all(np.isfinite(inv)):
        # Zero-spread cloud: queries on the cloud have maximal depth,
        # anything else cannot be scored.
        dev = np.linalg.norm(queries - mean, axis=1)
        eps = EPS_REL * _section_scale(points)
        if np.any(dev >= eps):
            raise DegenerateSection("zero-spread section with an off-cloud query")
        return np.zeros(len(queries))
    centered = queries - mean
    return np.einsum("ij,jk,ik->i", centered, inv, centered)


def _outlyingness_batch(
    points: np.ndarray, queries: np.ndarray, method: PointwiseDepthMethod
) -> np.ndarray:
    if isinstance(method, Mahalanobis):
        return _mahalanobis_outlyingness(points, queries)
    return _projection_outlyingness(points, queries, method.directions)


def pointwise_outlyingness(
    section: CrossSection, query: np.ndarray, method: PointwiseDepthMethod
) -> float:
    """Outlyingness o(query) >= 0 of a p-vector w.r.t. the section.

    Projection: max over the direction fan of |u.q - med(u.x)| / MAD(u.x).
    Mahalanobis: 1/d - 1 with d = 1 / (1 + (q - mean)' S^-1 (q - mean)),
    S the classical covariance with a small ridge.
    """
    query = np.asarray(query, dtype=float).reshape(1, -1)
    if query.shape[1] != section.p:
        raise ValidationError("query dimension does not match the section")
    return float(_outlyingness_batch(section.points, query, method)[0])


def pointwise_median(section: CrossSection, method: PointwiseDepthMethod) -> np.ndarray:
    """The sample point of minimal outlyingness; ties go to the lowest row."""
    o = _outlyingness_batch(section.points, section.points, method)
    return section.points[int(np.argmin(o))].copy()


def pointwise_median_index(section: CrossSection, method: PointwiseDepthMethod) -> int:
    o = _outlyingness_batch(section.points, section.points, method)
    return int(np.argmin(o))


def _triangle_scale(vertices: np.ndarray) -> float:
    d01 = np.linalg.norm(vertices[0] - vertices[1])
    d02 = np.linalg.norm(vertices[0] - vertices[2])
    d12 = np.linalg.norm(vertices[1] - vertices[2])
    return float(max(d01, d02, d12))


def _segment_distance(a: np.ndarray, b: np.ndarray, q: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    if denom == 0.0:
        return float(np.linalg.norm(q - a))
    t = float(np.clip((q - a) @ ab / denom, 0.0, 1.0))
    return float(np.linalg.norm(q - (a + t * ab)))


def simplex_contains(vertices: np.ndarray, query: np.ndarray, tol: float | None = None) -> bool:
    """Closed containment of `query` in the simplex spanned by p + 1 vertices.

    p = 1 is interval containment, p = 2 a barycentric triangle test with all
    coordinates >= -tol relative to the triangle scale.  A collinear-within-tol
    triangle degrades to: query within tol of the covering segment.  The
    default tol is 1e-12 times the triangle scale.
    """
    vertices = np.asarray(vertices, dtype=float)
    query = np.asarray(query, dtype=float).reshape(-1)
    p = query.size
    if vertices.shape != (p + 1, p):
        raise ValidationError(f"expected {p + 1} x {p} vertices, got {vertices.shape}")
    if p == 1:
        lo, hi = float(vertices.min()), float(vertices.max())
        t = (EPS_REL * max(abs(lo), abs(hi), 1.0)) if tol is None else tol
        return lo - t <= query[0] <= hi + t
    if p != 2:
        raise ValidationError("simplex containment supports p in {1, 2} only")

    scale = _triangle_scale(vertices)
    t = (EPS_REL * scale) if tol is None else float(tol)
    a, b, c = vertices
    if scale == 0.0:
        return float(np.linalg.norm(query - a)) <= t
    area2 = float(cross2(b - a, c - a))
    # Collinear within tol: the triangle's smallest height is |area2| / scale.
    if abs(area2) <= t * scale:
        pairs = ((a, b), (a, c), (b, c))
        lengths = [np.linalg.norm(v - u) for u, v in pairs]
        u, v = pairs[int(np.argmax(lengths))]
        return _segment_distance(u, v, query) <= t
    l1 = float(cross2(b - query, c - query)) / area2
    l2 = float(cross2(c - query, a - query)) / area2
    l3 = 1.0 - l1 - l2
    rel = t / scale
    return l1 >= -rel and l2 >= -rel and l3 >= -rel


def simplex_contains_batch(
    vertices: np.ndarray, queries: np.ndarray, tol: float | None = None
) -> np.ndarray:
    """Vectorized triangle containment: (m, 3, 2) triangles x (m, 2) queries.

    Applies the same closed/degenerate rules as :func:`simplex_contains`,
    pairing triangle i with query i.
    """
    vertices = np.asarray(vertices, dtype=float)
    queries = np.asarray(queries, dtype=float)
    a, b, c = vertices[:, 0], vertices[:, 1], vertices[:, 2]
    e_ab = np.linalg.norm(b - a, axis=1)
    e_ac = np.linalg.norm(c - a, axis=1)
    e_bc = np.linalg.norm(c - b, axis=1)
    scale = np.maximum(np.maximum(e_ab, e_ac), e_bc)
    t = (EPS_REL * scale) if tol is None else np.full(len(scale), float(tol))

    area2 = cross2(b - a, c - a)
    degen = np.abs(area2) <= t * scale
    out = np.zeros(len(scale), dtype=bool)

    good = ~degen
    if good.any():
        qa, qb, qc = a[good], b[good], c[good]
        q = queries[good]
        ar = area2[good]
        l1 = cross2(qb - q, qc - q) / ar
        l2 = cross2(qc - q, qa - q) / ar
        l3 = 1.0 - l1 - l2
        rel = t[good] / scale[good]
        out[good] = (l1 >= -rel) & (l2 >= -rel) & (l3 >= -rel)

    if degen.any():
        idx = np.nonzero(degen)[0]
        for i in idx:
            out[i] = simplex_contains(vertices[i], queries[i], float(t[i]))
    return out
