"""CSV ingestion and JSON report serialization.

Ensemble CSV format: header ``id,t,<c1>,<c2>,...``; one row per (curve,
time) pair; '.' decimal, UTF-8.  Rows are written sorted by (id, t) with
shortest round-trip float formatting.  Report JSON carries ``config``,
``ranking``, ``detection`` and ``bands`` top-level keys with floats fixed
to 12 significant digits.
"""

from __future__ import annotations

import io as _io
import json
import math
import os
import tempfile
from typing import IO

import numpy as np

from .core import TimeGrid, Trajectory, TrajectoryEnsemble, ValidationError
from .preprocess import RawTrack


class MalformedRow(ValidationError):
    def __init__(self, line_no: int, reason: str = ""):
        self.line_no = line_no
        msg = f"malformed row at line {line_no}"
        super().__init__(f"{msg}: {reason}" if reason else msg)


class NonMonotoneTime(ValidationError):
    def __init__(self, track_id: str):
        self.track_id = track_id
        super().__init__(f"track {track_id!r} has duplicate or non-increasing times")


class EmptyInput(ValidationError):
    def __init__(self):
        super().__init__("no data rows in input")


def ingest_csv(source: str | os.PathLike | IO[str]) -> list[RawTrack]:
    """Parse tracks from a CSV path or text stream.

    Rows are grouped by id (order of first appearance) and sorted by t
    within each track; duplicate (id, t) pairs raise NonMonotoneTime.
    """
    if isinstance(source, (str, os.PathLike)):
        with open(source, "r", encoding="utf-8", newline="") as fh:
            return ingest_csv(fh)
    header = source.readline()
    if not header:
        raise EmptyInput()
    cols = [c.strip() for c in header.strip().split(",")]
    if len(cols) < 3 or cols[0] != "id" or cols[1] != "t":
        raise MalformedRow(1, "header must be id,t,<coordinate columns>")
    p = len(cols) - 2

    order: list[str] = []
    rows: dict[str, list[tuple[float, list[float]]]] = {}
    line_no = 1
    for line in source:
        line_no += 1
        line = line.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != p + 2:
            raise MalformedRow(line_no, f"expected {p + 2} fields, got {len(parts)}")
        cid = parts[0]
        try:
            t = float(parts[1])
            coords = [float(v) for v in parts[2:]]
        except ValueError:
            raise MalformedRow(line_no, "non-numeric value") from None
        if cid not in rows:
            rows[cid] = []
            order.append(cid)
        rows[cid].append((t, coords))
    if not order:
        raise EmptyInput()

    tracks = []
    for cid in order:
        entries = sorted(rows[cid], key=lambda e: e[0])
        ts = np.array([e[0] for e in entries])
        if np.any(np.diff(ts) <= 0):
            raise NonMonotoneTime(cid)
        coords = np.array([e[1] for e in entries])
        tracks.append(RawTrack(cid, ts, coords))
    return tracks


def coordinate_names(p: int) -> list[str]:
    return ["x", "y"][:p] if p <= 2 else [f"c{i + 1}" for i in range(p)]


def write_ensemble_csv(ensemble: TrajectoryEnsemble, path: str | os.PathLike,
                       names: list[str] | None = None) -> None:
    """Write an ensemble as a (id, t)-sorted CSV, atomically."""
    names = names or coordinate_names(ensemble.p)
    buf = _io.StringIO()
    buf.write("id,t," + ",".join(names) + "\n")
    for tr in sorted(ensemble.trajectories, key=lambda tr: tr.id):
        for t, row in zip(ensemble.grid.points, tr.values):
            buf.write(
                f"{tr.id},{float(t)!r}," + ",".join(repr(float(v)) for v in row) + "\n"
            )
    atomic_write_text(path, buf.getvalue())


def ensemble_from_tracks(tracks: list[RawTrack]) -> TrajectoryEnsemble:
    """Build an ensemble directly from tracks already on one shared grid."""
    first = tracks[0]
    grid = TimeGrid(first.t)
    trajs = []
    for tr in tracks:
        if tr.t.shape != first.t.shape or not np.allclose(tr.t, first.t, rtol=0, atol=1e-9):
            raise ValidationError(
                f"track {tr.id!r} is not on the shared grid; run the ingest "
                "subcommand (smoothing) first"
            )
        trajs.append(Trajectory(tr.id, tr.coords))
    return TrajectoryEnsemble(grid, tuple(trajs))


def write_labels(path: str | os.PathLike, ids: list[str], outlier_ids: list[str]) -> None:
    out = set(outlier_ids)
    lines = [f"{cid} {'outlier' if cid in out else 'clean'}" for cid in ids]
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_labels(path: str | os.PathLike) -> dict[str, bool]:
    labels = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            cid, flag = line.split()
            labels[cid] = flag == "outlier"
    return labels


def _round12(obj):
    """Fix floats to 12 significant digits for stable golden output."""
    if isinstance(obj, float):
        if math.isinf(obj):
            return "Infinity" if obj > 0 else "-Infinity"
        if math.isnan(obj):
            return "NaN"
        return float(f"{obj:.12g}")
    if isinstance(obj, dict):
        return {k: _round12(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_round12(v) for v in obj]
    if isinstance(obj, (np.floating,)):
        return _round12(float(obj))
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.ndarray):
        return _round12(obj.tolist())
    return obj


def dumps_report(obj: dict) -> bytes:
    """Deterministic JSON bytes: 12 significant digits, stable field order."""
    return (json.dumps(_round12(obj), indent=2, allow_nan=False) + "\n").encode("utf-8")


def parse_report(data: bytes | str) -> dict:
    def revive(o):
        if isinstance(o, str):
            if o == "Infinity":
                return math.inf
            if o == "-Infinity":
                return -math.inf
            if o == "NaN":
                return math.nan
            return o
        if isinstance(o, dict):
            return {k: revive(v) for k, v in o.items()}
        if isinstance(o, list):
            return [revive(v) for v in o]
        return o

    return revive(json.loads(data))


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_bytes(path: str | os.PathLike, data: bytes) -> None:
    path = os.fspath(path)
    d = os.path.dirname(path) or "."
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
