"""Output file formats: trajectory and envelope CSV, JSON records, SVG plots.

Floats are written with ``repr`` so files are exact and byte-reproducible.
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np

from .exceptions import ParseError

TRAJECTORY_COLUMNS = ("s", "e_y", "e_psi", "beta1", "e_y_aux", "kappa", "x", "y", "heading")
ENVELOPE_COLUMNS = ("s", "left", "right")


def _fmt(value):
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return ""
    return repr(float(value))


def trajectory_rows(traj):
    """Rows of the trajectory CSV; the last sample has no applied curvature."""
    tt = traj.kind == "tt"
    for i in range(len(traj)):
        st = traj.states[i]
        beta = st[2] if tt else None
        kappa = traj.kappa[i] if i < traj.kappa.size else None
        x, y, heading = traj.poses[i]
        yield [_fmt(traj.s[i]), _fmt(st[0]), _fmt(st[1]), _fmt(beta), _fmt(st[-1]),
               _fmt(kappa), _fmt(x), _fmt(y), _fmt(heading)]


def _write_rows(target, header, rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    text = buf.getvalue()
    if target is None:
        return text
    Path(target).write_text(text, encoding="utf-8")
    return text


def write_trajectory_csv(traj, target=None):
    """Write ``s,e_y,e_psi,beta1,e_y_aux,kappa,x,y,heading``; returns the text."""
    return _write_rows(target, TRAJECTORY_COLUMNS, trajectory_rows(traj))


def write_envelope_csv(envelope, target=None):
    rows = ([_fmt(s), _fmt(lft), _fmt(rgt)] for s, lft, rgt in envelope.rows())
    return _write_rows(target, ENVELOPE_COLUMNS, rows)


def read_csv_table(source, columns):
    """Parse a CSV with exactly ``columns``; empty cells become NaN."""
    text = Path(source).read_text(encoding="utf-8") if isinstance(source, (str, Path)) \
        else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise ParseError("empty CSV") from None
    if tuple(header) != tuple(columns):
        raise ParseError(f"unexpected header {header}, expected {list(columns)}")
    data = []
    for lineno, row in enumerate(reader, start=2):
        if len(row) != len(columns):
            raise ParseError(f"line {lineno}: expected {len(columns)} fields")
        try:
            data.append([float(v) if v != "" else np.nan for v in row])
        except ValueError:
            raise ParseError(f"line {lineno}: non-numeric field") from None
    return np.array(data, dtype=float).reshape(-1, len(columns))


def dump_json(obj, target=None):
    """Deterministic JSON (sorted keys, exact floats); returns the text."""
    text = json.dumps(_jsonable(obj), indent=2, sort_keys=True, allow_nan=False) + "\n"
    if target is not None:
        Path(target).write_text(text, encoding="utf-8")
    return text


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _polyline(points):
    return " ".join(f"{x:.3f},{y:.3f}" for x, y in points)


def render_svg(geometry, trajectory=None, envelope=None, width_px=800):
    """Static plot: road edges, centerline, swept band and driven rear-axle path."""
    road = geometry.road
    s = road.s
    center = geometry.point(s, np.zeros_like(s))
    left = geometry.point(s, road.w_left)
    right = geometry.point(s, -road.w_right)
    layers = [
        ("road-left", left, "#444", 0.15, None),
        ("road-right", right, "#444", 0.15, None),
        ("centerline", center, "#999", 0.08, "0.6,0.4"),
    ]
    extra = [left, right]
    band = None
    if envelope is not None and envelope.covered.any():
        idx = np.flatnonzero(envelope.covered)
        outer = geometry.point(envelope.s[idx], envelope.left[idx])
        inner = geometry.point(envelope.s[idx], envelope.right[idx])
        band = np.vstack((outer, inner[::-1]))
        extra.append(band)
    if trajectory is not None:
        path = trajectory.poses[:, :2]
        layers.append(("rear-axle", path, "#c00", 0.1, None))
        extra.append(path)
    allpts = np.vstack(extra)
    lo = allpts.min(axis=0) - 2.0
    hi = allpts.max(axis=0) + 2.0
    span = hi - lo
    height_px = int(round(width_px * span[1] / span[0])) if span[0] > 0 else width_px
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width_px}" height="{height_px}" '
        f'viewBox="{lo[0]:.3f} {-hi[1]:.3f} {span[0]:.3f} {span[1]:.3f}">',
        '<g transform="scale(1,-1)">',
    ]
    if band is not None:
        parts.append(f'<polygon id="envelope" points="{_polyline(band)}" '
                     'fill="#f4a000" fill-opacity="0.45" stroke="none"/>')
    for name, pts, color, stroke, dash in layers:
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        parts.append(f'<polyline id="{name}" points="{_polyline(pts)}" fill="none" '
                     f'stroke="{color}" stroke-width="{stroke}"{dash_attr}/>')
    parts += ["</g>", "</svg>", ""]
    return "\n".join(parts)
