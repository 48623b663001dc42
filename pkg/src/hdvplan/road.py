"""Reference path (lane center) representation, global reconstruction and projection.

The road is sampled on a uniform arc-length grid ``s_i = i * delta_s`` with a
piecewise-linear curvature profile.  Global geometry is recovered by integrating
the heading with a midpoint rule on a sub-step grid and interpolating the dense
nodes with quintic Hermite segments, which keeps the reconstructed path C2 so
that projections and their finite differences are smooth.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from ._validation import check_scalar
from .exceptions import OutOfRange, ParseError, ProjectionDiverged, ValidationError

DEFAULT_HALF_WIDTH = 1.75
KAPPA_SANITY_BOUND = 1.0
GRID_TOL = 1e-9


def normalize_angle(angle):
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(float(angle), 2.0 * math.pi)
    return math.pi if wrapped == -math.pi else wrapped


class RoadSample(NamedTuple):
    s: float
    kappa_gamma: float
    w_left: float
    w_right: float


class GlobalPose(NamedTuple):
    x: float
    y: float
    heading: float

    @classmethod
    def make(cls, x, y, heading):
        return cls(float(x), float(y), normalize_angle(heading))


def _frozen(arr):
    arr = np.array(arr, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class RoadPath:
    """Uniformly sampled reference path.

    Use :meth:`from_arrays` to build one; it enforces the grid invariants.
    """

    s: np.ndarray
    kappa: np.ndarray
    w_left: np.ndarray
    w_right: np.ndarray
    delta_s: float
    anchor: GlobalPose = GlobalPose(0.0, 0.0, 0.0)
    kappa_bound: float = field(default=KAPPA_SANITY_BOUND)

    @classmethod
    def from_arrays(cls, kappa, delta_s, w_left=None, w_right=None, anchor=None,
                    kappa_bound=KAPPA_SANITY_BOUND):
        delta_s = check_scalar(delta_s, "delta_s", min_val=0.0, include_min=False)
        kappa = np.asarray(kappa, dtype=float)
        if kappa.ndim != 1 or kappa.size < 2:
            raise ValidationError("a road needs at least 2 samples")
        n = kappa.size
        w_left = np.full(n, DEFAULT_HALF_WIDTH) if w_left is None else np.broadcast_to(
            np.asarray(w_left, dtype=float), (n,))
        w_right = np.full(n, DEFAULT_HALF_WIDTH) if w_right is None else np.broadcast_to(
            np.asarray(w_right, dtype=float), (n,))
        bad = np.flatnonzero(~np.isfinite(kappa))
        if bad.size:
            raise ValidationError("curvature must be finite", index=int(bad[0]))
        bad = np.flatnonzero(np.abs(kappa) > kappa_bound)
        if bad.size:
            raise ValidationError(
                f"|kappa| exceeds sanity bound {kappa_bound} 1/m", index=int(bad[0]))
        for name, w in (("w_left", w_left), ("w_right", w_right)):
            bad = np.flatnonzero(~(w > 0) | ~np.isfinite(w))
            if bad.size:
                raise ValidationError(f"{name} must be strictly positive", index=int(bad[0]))
        if anchor is None:
            anchor = GlobalPose(0.0, 0.0, 0.0)
        else:
            anchor = GlobalPose.make(*anchor)
        s = np.arange(n) * delta_s
        return cls(_frozen(s), _frozen(kappa), _frozen(w_left), _frozen(w_right),
                   delta_s, anchor, float(kappa_bound))

    @property
    def N(self):
        """Number of grid intervals (sample count minus one)."""
        return self.s.size - 1

    @property
    def length(self):
        return float(self.s[-1])

    @property
    def samples(self):
        return [RoadSample(float(a), float(b), float(c), float(d))
                for a, b, c, d in zip(self.s, self.kappa, self.w_left, self.w_right)]

    def window(self, start, stop):
        """Sub-road covering samples ``start..stop`` inclusive, re-anchored there."""
        if not 0 <= start < stop <= self.N:
            raise OutOfRange(f"window [{start}, {stop}] outside 0..{self.N}")
        poses = reconstruct_global(self)
        return RoadPath.from_arrays(self.kappa[start:stop + 1], self.delta_s,
                                    self.w_left[start:stop + 1], self.w_right[start:stop + 1],
                                    anchor=poses[start], kappa_bound=self.kappa_bound)

    def __len__(self):
        return self.s.size


def build_road(kappa_fn, length, delta_s=0.5, w_left=DEFAULT_HALF_WIDTH,
               w_right=DEFAULT_HALF_WIDTH, anchor=None):
    """Sample ``kappa_fn(s)`` on ``[0, length]``; ``length`` must be a multiple of ``delta_s``."""
    n = int(round(length / delta_s))
    if abs(n * delta_s - length) > GRID_TOL * max(1.0, length):
        raise ValidationError("length must be an integer multiple of delta_s")
    s = np.arange(n + 1) * delta_s
    kappa = np.array([kappa_fn(v) for v in s], dtype=float)
    return RoadPath.from_arrays(kappa, delta_s, w_left, w_right, anchor)


def piecewise_kappa(segments):
    """Curvature function for consecutive ``(length, kappa_start, kappa_end)`` segments.

    Curvature varies linearly inside each segment (straight, arc or clothoid).
    """
    bounds = np.cumsum([0.0] + [seg[0] for seg in segments])

    def kappa_fn(s):
        for (seg_len, k0, k1), start in zip(segments, bounds[:-1]):
            if s <= start + seg_len + 1e-12:
                t = min(max((s - start) / seg_len, 0.0), 1.0) if seg_len > 0 else 1.0
                return k0 + (k1 - k0) * t
        return segments[-1][2]

    return kappa_fn, float(bounds[-1])


def roundabout_road(radius=20.0, arc_length=150.0, lead_in=40.0, transition=10.0,
                    lead_out=140.0, delta_s=0.5, half_width=3.5, right_turn=False):
    """Straight, clothoid, constant-radius arc, clothoid, straight."""
    k = (-1.0 if right_turn else 1.0) / radius
    fn, length = piecewise_kappa([
        (lead_in, 0.0, 0.0), (transition, 0.0, k), (arc_length, k, k),
        (transition, k, 0.0), (lead_out, 0.0, 0.0)])
    return build_road(fn, length, delta_s, half_width, half_width)


# ---------------------------------------------------------------------------
# I/O

_CSV_COLUMNS = ("s", "kappa", "w_left", "w_right")
_JSON_KEYS = {"delta_s", "anchor", "samples"}
_JSON_SAMPLE_KEYS = set(_CSV_COLUMNS)


def _check_grid(s, delta_s=None):
    s = np.asarray(s, dtype=float)
    if s.size < 2:
        raise ValidationError("a road needs at least 2 samples")
    if delta_s is None:
        delta_s = s[1] - s[0]
    if not delta_s > 0:
        raise ValidationError("arc length must be strictly increasing", index=1)
    expected = np.arange(s.size) * delta_s
    off = np.abs(s - expected) > GRID_TOL * np.maximum(1.0, np.abs(expected))
    bad = np.flatnonzero(off)
    if bad.size:
        i = int(bad[0])
        raise ValidationError(
            f"non-uniform s grid at sample {i}: s={s[i]!r}, expected {expected[i]!r}", index=i)
    return float(delta_s)


def _parse_float(text, row, col):
    try:
        return float(text)
    except (TypeError, ValueError):
        raise ParseError(f"row {row}: column {col!r} is not a number: {text!r}") from None


def load_road(source, format="csv"):
    """Parse a road from a text or byte stream (or a string holding the content).

    ``format`` is ``"csv"`` or ``"json"``.
    """
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        text = source.read()
        if isinstance(text, (bytes, bytearray)):
            text = text.decode("utf-8")
    if format == "csv":
        return _load_csv(text)
    if format == "json":
        return _load_json(text)
    raise ParseError(f"unknown road format {format!r}")


def load_road_file(path):
    path = str(path)
    fmt = "json" if path.lower().endswith(".json") else "csv"
    with open(path, "rb") as fh:
        return load_road(fh, fmt)


def _load_csv(text):
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("empty road file") from None
    if header[:2] != ["s", "kappa"] or not set(header) <= set(_CSV_COLUMNS) \
            or len(set(header)) != len(header):
        raise ParseError(f"bad header {header}; expected s,kappa[,w_left][,w_right]")
    cols = {name: [] for name in header}
    for lineno, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise ParseError(f"row {lineno}: expected {len(header)} fields, got {len(row)}")
        for name, cell in zip(header, row):
            cols[name].append(_parse_float(cell.strip(), lineno, name))
    delta_s = _check_grid(cols["s"])
    return RoadPath.from_arrays(cols["kappa"], delta_s, cols.get("w_left"), cols.get("w_right"))


def _load_json(text):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ParseError("road JSON must be an object")
    unknown = set(doc) - _JSON_KEYS
    if unknown:
        raise ParseError(f"unknown keys in road JSON: {sorted(unknown)}")
    samples = doc.get("samples")
    if not isinstance(samples, list):
        raise ParseError("road JSON needs a 'samples' list")
    cols = {name: [] for name in _CSV_COLUMNS}
    for i, item in enumerate(samples):
        if not isinstance(item, dict):
            raise ParseError(f"sample {i} is not an object")
        unknown = set(item) - _JSON_SAMPLE_KEYS
        if unknown:
            raise ParseError(f"sample {i}: unknown keys {sorted(unknown)}")
        for name in ("s", "kappa"):
            if name not in item:
                raise ParseError(f"sample {i}: missing {name!r}")
        for name in _CSV_COLUMNS:
            value = item.get(name, DEFAULT_HALF_WIDTH if name.startswith("w_") else None)
            if isinstance(value, bool) or not isinstance(value, (int, float)):
                raise ParseError(f"sample {i}: {name!r} must be a number")
            cols[name].append(float(value))
    delta_s = doc.get("delta_s")
    if delta_s is not None and (isinstance(delta_s, bool) or not isinstance(delta_s, (int, float))):
        raise ParseError("'delta_s' must be a number")
    delta_s = _check_grid(cols["s"], delta_s)
    anchor = doc.get("anchor")
    if anchor is not None:
        if not (isinstance(anchor, list) and len(anchor) == 3
                and all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in anchor)):
            raise ParseError("'anchor' must be [x, y, heading]")
    return RoadPath.from_arrays(cols["kappa"], delta_s, cols["w_left"], cols["w_right"], anchor)


def dump_road(road, format="csv"):
    """Serialize a road to CSV or JSON text (round-trips through :func:`load_road`)."""
    if format == "csv":
        lines = ["s,kappa,w_left,w_right"]
        lines += [f"{s!r},{k!r},{wl!r},{wr!r}" for s, k, wl, wr in
                  zip(road.s.tolist(), road.kappa.tolist(), road.w_left.tolist(),
                      road.w_right.tolist())]
        return "\n".join(lines) + "\n"
    if format == "json":
        doc = {
            "delta_s": road.delta_s,
            "anchor": list(road.anchor),
            "samples": [{"s": s, "kappa": k, "w_left": wl, "w_right": wr} for s, k, wl, wr in
                        zip(road.s.tolist(), road.kappa.tolist(), road.w_left.tolist(),
                            road.w_right.tolist())],
        }
        return json.dumps(doc, indent=1)
    raise ParseError(f"unknown road format {format!r}")


# ---------------------------------------------------------------------------
# Geometry


def curvature_at(road, s):
    """Road curvature at arc length ``s`` (linear between samples)."""
    s = float(s)
    if not 0.0 <= s <= road.length:
        raise OutOfRange(f"s={s} outside [0, {road.length}]")
    return float(np.interp(s, road.s, road.kappa))


def _heading_table(road):
    """Heading at every grid sample, integrating the piecewise-linear curvature exactly."""
    inc = 0.5 * road.delta_s * (road.kappa[:-1] + road.kappa[1:])
    return road.anchor.heading + np.concatenate(([0.0], np.cumsum(inc)))


def _heading_exact(road, theta_grid, s):
    """Heading at arbitrary arc lengths inside the road."""
    ds = road.delta_s
    i = np.clip(np.floor(s / ds).astype(int), 0, road.N - 1)
    t = s - road.s[i]
    k0 = road.kappa[i]
    dk = road.kappa[i + 1] - k0
    return theta_grid[i] + k0 * t + dk * t * t / (2.0 * ds)


def _integrate_dense(road, substeps):
    """Midpoint-rule positions on the sub-step grid ``h = delta_s / substeps``."""
    n_sub = road.N * substeps
    h = road.delta_s / substeps
    theta_grid = _heading_table(road)
    sd = np.arange(n_sub + 1) * h
    sd[-1] = road.length
    theta = _heading_exact(road, theta_grid, sd)
    mid = _heading_exact(road, theta_grid, sd[:-1] + 0.5 * h)
    x = road.anchor.x + np.concatenate(([0.0], np.cumsum(h * np.cos(mid))))
    y = road.anchor.y + np.concatenate(([0.0], np.cumsum(h * np.sin(mid))))
    kd = np.interp(sd, road.s, road.kappa)
    return sd, x, y, theta, kd


def reconstruct_global(road, substeps=10):
    """Global pose of every grid sample; pose 0 equals the anchor."""
    _, x, y, theta, _ = _integrate_dense(road, substeps)
    idx = np.arange(road.N + 1) * substeps
    return [GlobalPose.make(x[i], y[i], theta[i]) for i in idx]


class RoadGeometry:
    """Continuous global geometry of a road, used for placement and projection.

    Outside ``[0, length]`` the path continues straight along the end tangents.
    """

    def __init__(self, road, substeps=10):
        self.road = road
        self.substeps = int(substeps)
        self.h = road.delta_s / self.substeps
        sd, x, y, theta, kd = _integrate_dense(road, self.substeps)
        self._sd = sd
        self._p = np.column_stack((x, y))
        self._theta = theta
        self._t = np.column_stack((np.cos(theta), np.sin(theta)))
        self._n = np.column_stack((-np.sin(theta), np.cos(theta)))
        self._kd = kd
        self._nseg = sd.size - 1

    @property
    def length(self):
        return self.road.length

    def evaluate(self, s):
        """Position, first and second arc-length derivatives at ``s`` (vectorized)."""
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        pos = np.empty((flat.size, 2))
        d1 = np.empty((flat.size, 2))
        d2 = np.zeros((flat.size, 2))

        lo = flat < 0.0
        hi = flat > self.length
        mid = ~(lo | hi)
        if lo.any():
            pos[lo] = self._p[0] + flat[lo, None] * self._t[0]
            d1[lo] = self._t[0]
        if hi.any():
            pos[hi] = self._p[-1] + (flat[hi, None] - self.length) * self._t[-1]
            d1[hi] = self._t[-1]
        if mid.any():
            sm = flat[mid]
            k = np.minimum((sm / self.h).astype(int), self._nseg - 1)
            t = (sm - self._sd[k]) / self.h
            h = self.h
            t2, t3 = t * t, t * t * t
            t4, t5 = t3 * t, t3 * t2
            b = np.stack([
                1 - 10 * t3 + 15 * t4 - 6 * t5,
                t - 6 * t3 + 8 * t4 - 3 * t5,
                0.5 * t2 - 1.5 * t3 + 1.5 * t4 - 0.5 * t5,
                0.5 * t3 - t4 + 0.5 * t5,
                -4 * t3 + 7 * t4 - 3 * t5,
                10 * t3 - 15 * t4 + 6 * t5,
            ])
            db = np.stack([
                -30 * t2 + 60 * t3 - 30 * t4,
                1 - 18 * t2 + 32 * t3 - 15 * t4,
                t - 4.5 * t2 + 6 * t3 - 2.5 * t4,
                1.5 * t2 - 4 * t3 + 2.5 * t4,
                -12 * t2 + 28 * t3 - 15 * t4,
                30 * t2 - 60 * t3 + 30 * t4,
            ]) / h
            ddb = np.stack([
                -60 * t + 180 * t2 - 120 * t3,
                -36 * t + 96 * t2 - 60 * t3,
                1 - 9 * t + 18 * t2 - 10 * t3,
                3 * t - 12 * t2 + 10 * t3,
                -24 * t + 84 * t2 - 60 * t3,
                60 * t - 180 * t2 + 120 * t3,
            ]) / (h * h)
            ctrl = np.stack([
                self._p[k],
                h * self._t[k],
                h * h * self._kd[k, None] * self._n[k],
                h * h * self._kd[k + 1, None] * self._n[k + 1],
                h * self._t[k + 1],
                self._p[k + 1],
            ])
            pos[mid] = np.einsum("jm,jmd->md", b, ctrl)
            d1[mid] = np.einsum("jm,jmd->md", db, ctrl)
            d2[mid] = np.einsum("jm,jmd->md", ddb, ctrl)
        shape = s.shape + (2,)
        return pos.reshape(shape), d1.reshape(shape), d2.reshape(shape)

    def frame(self, s):
        """Position, unit tangent, unit left normal and heading at ``s``."""
        pos, d1, _ = self.evaluate(s)
        tangent = d1 / np.linalg.norm(d1, axis=-1, keepdims=True)
        normal = np.stack((-tangent[..., 1], tangent[..., 0]), axis=-1)
        heading = np.arctan2(tangent[..., 1], tangent[..., 0])
        return pos, tangent, normal, heading

    def point(self, s, lateral=0.0):
        pos, _, normal, _ = self.frame(s)
        return pos + np.asarray(lateral, dtype=float)[..., None] * normal

    def project(self, points, hints, window=None, max_iter=60, tol=1e-11):
        """Project global points onto the path with a safeguarded Newton iteration.

        Returns ``(s, lateral)`` arrays; lateral is positive to the left of the
        path tangent.  Raises :class:`ProjectionDiverged` when any point has no
        local distance minimum within its search window.
        """
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        hints = np.broadcast_to(np.asarray(hints, dtype=float), (pts.shape[0],)).copy()
        if not np.all(np.isfinite(pts)) or not np.all(np.isfinite(hints)):
            raise ProjectionDiverged("non-finite point or hint")
        pos, _, _ = self.evaluate(hints)
        dist0 = np.linalg.norm(pts - pos, axis=1)
        guard = np.max(np.maximum(self.road.w_left, self.road.w_right)) + 50.0
        if window is None:
            window = 2.0 * self.road.delta_s + 2.0 * dist0
        window = np.broadcast_to(np.asarray(window, dtype=float), hints.shape)
        trust = 2.0 * self.road.delta_s
        s = hints.copy()
        step = np.full_like(s, np.inf)
        for _ in range(max_iter):
            pos, d1, d2 = self.evaluate(s)
            r = pos - pts
            f = np.einsum("md,md->m", r, d1)
            fp = np.einsum("md,md->m", d1, d1) + np.einsum("md,md->m", r, d2)
            step = np.where(fp > 0, f / np.where(fp > 0, fp, 1.0), np.sign(f) * trust)
            step = np.clip(step, -trust, trust)
            s = s - step
            if np.max(np.abs(step)) <= tol:
                break
        pos, d1, d2 = self.evaluate(s)
        r = pts - pos
        fp = np.einsum("md,md->m", d1, d1) - np.einsum("md,md->m", r, d2)
        speed = np.linalg.norm(d1, axis=1)
        lateral = (d1[:, 0] * r[:, 1] - d1[:, 1] * r[:, 0]) / speed
        bad = (np.abs(step) > 1e3 * tol) | (fp <= 0) | (np.abs(s - hints) > window) \
            | (np.abs(lateral) > guard)
        if bad.any():
            i = int(np.flatnonzero(bad)[0])
            raise ProjectionDiverged(
                f"no local projection for point {pts[i].tolist()} near s={hints[i]:.3f}")
        return s, lateral


def project_point(geometry, p, hint_s, window=None):
    """Project one global point; returns ``(s, lateral)`` as floats."""
    s, lat = geometry.project(np.asarray(p, dtype=float)[None, :], [hint_s], window)
    return float(s[0]), float(lat[0])
