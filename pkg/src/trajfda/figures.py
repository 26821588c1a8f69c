"""Figure models and deterministic SVG/JSON emitters.

The trajectory functional boxplot renders raw curves colored by band
membership (black median, purple/magenta/pink bands, gray outer curves,
dashed red outliers); the companion plot is a scatter of (depth, WO)
points in the same colors.  Emitters are pure byte functions of their
inputs: identical figures give identical files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import TrajectoryEnsemble, ValidationError
from .depthrank import BandAssignment
from .io import dumps_report

COLORS = {
    "median": "#000000",
    "b25": "#800080",
    "b50": "#FF00FF",
    "b75": "#FFC0CB",
    "outer": "#BBBBBB",
    "outlier": "#FF0000",
}

#: bottom-to-top paint order; outliers end up topmost
DRAW_ORDER = ("outer", "b75", "b50", "b25", "median", "outlier")


def categorize(bands: BandAssignment, outlier_ids: list[str]) -> dict[str, str]:
    """Disjoint category per id from the nested band prefixes."""
    cat = {cid: "outlier" for cid in outlier_ids}
    b25 = set(bands.bands[25])
    b50 = set(bands.bands[50])
    b75 = set(bands.bands[75])
    for cid in bands.bands[75]:
        if cid == bands.median_id:
            cat[cid] = "median"
        elif cid in b25:
            cat[cid] = "b25"
        elif cid in b50:
            cat[cid] = "b50"
        elif cid in b75:
            cat[cid] = "b75"
    for cid in bands.outer_ids:
        cat[cid] = "outer"
    return cat


@dataclass(frozen=True)
class BoxplotFigure:
    median_id: str
    band_members: dict[int, list[str]]
    outlier_ids: list[str]
    outer_ids: list[str]
    curves: dict[str, np.ndarray]  # id -> (k, 2) polyline
    categories: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        cats = self.categories or categorize(
            BandAssignment(self.median_id, self.band_members, list(self.outer_ids)),
            list(self.outlier_ids),
        )
        object.__setattr__(self, "categories", cats)
        missing = set(self.curves) - set(cats)
        if missing:
            raise ValidationError(f"curves without a category: {sorted(missing)}")


@dataclass(frozen=True)
class MsbdWoFigure:
    points: list[tuple[str, float, float, str]]  # (id, msbd, wo, category)

    def __post_init__(self):
        for _, _, _, cat in self.points:
            if cat not in COLORS:
                raise ValidationError(f"unknown category {cat!r}")


def boxplot_figure(ensemble: TrajectoryEnsemble, bands: BandAssignment,
                   outlier_ids: list[str]) -> BoxplotFigure:
    if ensemble.p != 2:
        raise ValidationError("boxplot figures need planar (p = 2) curves")
    return BoxplotFigure(
        median_id=bands.median_id,
        band_members={k: list(v) for k, v in bands.bands.items()},
        outlier_ids=list(outlier_ids),
        outer_ids=list(bands.outer_ids),
        curves={tr.id: tr.values for tr in ensemble.trajectories},
    )


def msbdwo_figure(ranking_entries, profiles, categories: dict[str, str]) -> MsbdWoFigure:
    depth = dict(ranking_entries)
    pts = []
    for pr in profiles:
        cat = categories.get(pr.curve_id, "outer")
        pts.append((pr.curve_id, float(depth.get(pr.curve_id, 0.0)), float(pr.wo), cat))
    return MsbdWoFigure(pts)


def _f(v: float) -> str:
    return format(float(v), ".6f").rstrip("0").rstrip(".")


class _Canvas:
    """Fixed-size SVG canvas with margins and data-range axes."""

    W, H, M = 800.0, 560.0, 60.0

    def __init__(self, xlim, ylim):
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim
        if self.x1 <= self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 <= self.y0:
            self.y1 = self.y0 + 1.0
        self.parts: list[str] = []

    def px(self, x):
        return self.M + (np.asarray(x) - self.x0) / (self.x1 - self.x0) * (self.W - 2 * self.M)

    def py(self, y):
        return self.H - self.M - (np.asarray(y) - self.y0) / (self.y1 - self.y0) * (self.H - 2 * self.M)

    def polyline(self, xy: np.ndarray, color: str, dashed: bool = False, width: float = 1.2):
        pts = " ".join(f"{_f(a)},{_f(b)}" for a, b in zip(self.px(xy[:, 0]), self.py(xy[:, 1])))
        dash = ' stroke-dasharray="6,4"' if dashed else ""
        self.parts.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{_f(width)}"{dash} points="{pts}"/>'
        )

    def circle(self, x, y, color: str, r: float = 4.0):
        self.parts.append(
            f'<circle cx="{_f(self.px(x))}" cy="{_f(self.py(y))}" r="{_f(r)}" fill="{color}"/>'
        )

    def axes(self):
        m, w, h = self.M, self.W, self.H
        self.parts.append(
            f'<rect x="{_f(m)}" y="{_f(m)}" width="{_f(w - 2 * m)}" height="{_f(h - 2 * m)}" '
            'fill="none" stroke="#333333" stroke-width="1"/>'
        )
        for i in range(5):
            fx = self.x0 + i * (self.x1 - self.x0) / 4
            fy = self.y0 + i * (self.y1 - self.y0) / 4
            px, py = self.px(fx), self.py(fy)
            self.parts.append(
                f'<line x1="{_f(px)}" y1="{_f(h - m)}" x2="{_f(px)}" y2="{_f(h - m + 5)}" stroke="#333333"/>'
                f'<text x="{_f(px)}" y="{_f(h - m + 18)}" font-size="11" text-anchor="middle">{format(fx, ".4g")}</text>'
                f'<line x1="{_f(m - 5)}" y1="{_f(py)}" x2="{_f(m)}" y2="{_f(py)}" stroke="#333333"/>'
                f'<text x="{_f(m - 8)}" y="{_f(py + 4)}" font-size="11" text-anchor="end">{format(fy, ".4g")}</text>'
            )

    def render(self) -> bytes:
        head = (
            '<?xml version="1.0" encoding="UTF-8"?>\n'
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_f(self.W)}" height="{_f(self.H)}" '
            f'viewBox="0 0 {_f(self.W)} {_f(self.H)}">\n'
        )
        return (head + "\n".join(self.parts) + "\n</svg>\n").encode("utf-8")


def emit_boxplot_svg(figure: BoxplotFigure) -> bytes:
    """Standalone SVG of the trajectory functional boxplot.

    Curves are painted outer, 75%, 50%, 25%, median, then outliers (dashed
    red, topmost); byte output is deterministic.
    """
    all_xy = np.concatenate([c for c in figure.curves.values()])
    canvas = _Canvas(
        (float(all_xy[:, 0].min()), float(all_xy[:, 0].max())),
        (float(all_xy[:, 1].min()), float(all_xy[:, 1].max())),
    )
    canvas.axes()
    for cat in DRAW_ORDER:
        ids = sorted(cid for cid, c in figure.categories.items() if c == cat)
        for cid in ids:
            canvas.polyline(
                figure.curves[cid],
                COLORS[cat],
                dashed=(cat == "outlier"),
                width=2.0 if cat == "median" else 1.2,
            )
    return canvas.render()


def emit_msbdwo(figure: MsbdWoFigure, fmt: str = "json") -> bytes:
    """MSBD-WO scatter as JSON (stable order, 12 digits) or SVG."""
    if fmt == "json":
        return dumps_report(
            {
                "points": [
                    {"id": cid, "msbd": m, "wo": w, "category": cat}
                    for cid, m, w, cat in figure.points
                ]
            }
        )
    if fmt != "svg":
        raise ValidationError(f"unknown figure format {fmt!r}")
    ms = np.array([p[1] for p in figure.points])
    ws = np.array([p[2] for p in figure.points])
    canvas = _Canvas((float(ms.min()), float(ms.max())), (float(ws.min()), float(ws.max())))
    canvas.axes()
    for cat in DRAW_ORDER:
        for cid, m, w, c in sorted(p for p in figure.points if p[3] == cat):
            canvas.circle(m, w, COLORS[cat], r=5.0 if cat == "median" else 4.0)
    return canvas.render()
