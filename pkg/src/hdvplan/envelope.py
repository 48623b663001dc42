"""Swept envelope of the vehicle body along a driven trajectory.

Body rectangles are placed at every trajectory pose, their outlines are
sampled densely, every sample is projected onto the road and the extreme
lateral offsets are collected per arc-length bin of the road grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .exceptions import GeometryInfeasible, ValidationError
from .road import RoadGeometry
from .tuning import KAPPA_STRAIGHT, optimal_K

DEFAULT_SPACING = 0.05
DEFAULT_MARGIN = 20.0
_CHUNK = 200_000


@dataclass(frozen=True, eq=False)
class BodyOutline:
    """Rectangle in a body frame (x forward, y left), corners counter-clockwise."""

    corners: np.ndarray

    @classmethod
    def rectangle(cls, rear, front, width):
        if not (front > rear and width > 0):
            raise ValidationError("body outline needs positive length and width")
        h = 0.5 * width
        return cls(np.array([[rear, -h], [front, -h], [front, h], [rear, h]], dtype=float))

    @property
    def area(self):
        x, y = self.corners[:, 0], self.corners[:, 1]
        return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))

    def sample(self, spacing=DEFAULT_SPACING):
        """Boundary points with at most ``spacing`` between neighbours (corners included)."""
        pts = []
        for a, b in zip(self.corners, np.roll(self.corners, -1, axis=0)):
            n = max(1, math.ceil(np.linalg.norm(b - a) / spacing))
            t = np.arange(n)[:, None] / n
            pts.append(a + t * (b - a))
        return np.vstack(pts)


def tractor_outline(params):
    """Bus or tractor rectangle around the rear axle."""
    return BodyOutline.rectangle(-params.L1r, params.L1 + params.L1f, params.W)


def trailer_outline(params):
    """Trailer rectangle around the trailer axle, front edge at the hitch."""
    return BodyOutline.rectangle(-params.L2r, params.L2, params.aux_width)


@dataclass(frozen=True, eq=False)
class SweptEnvelope:
    """Per-bin lateral extremes; ``NaN`` where no body sample fell into the bin."""

    s: np.ndarray
    left: np.ndarray
    right: np.ndarray
    spacing: float

    @property
    def covered(self):
        return ~np.isnan(self.left)

    @property
    def max_left_width(self):
        return float(np.nanmax(self.left)) if self.covered.any() else 0.0

    @property
    def max_right_width(self):
        return float(-np.nanmin(self.right)) if self.covered.any() else 0.0

    @property
    def imbalance(self):
        return abs(self.max_left_width - self.max_right_width)

    def restrict(self, mask):
        """Envelope with bins outside ``mask`` cleared."""
        mask = np.asarray(mask, dtype=bool)
        return SweptEnvelope(self.s, np.where(mask, self.left, np.nan),
                             np.where(mask, self.right, np.nan), self.spacing)

    def contains(self, other, tol=0.0):
        """True if ``other`` lies pointwise inside this envelope on shared bins."""
        both = other.covered
        if np.any(both & ~self.covered):
            return False
        return bool(np.all(other.left[both] <= self.left[both] + tol)
                    and np.all(other.right[both] >= self.right[both] - tol))

    def rows(self):
        """``(s, left, right)`` rows for covered bins."""
        idx = np.flatnonzero(self.covered)
        return [(float(self.s[i]), float(self.left[i]), float(self.right[i])) for i in idx]


def _place(points, poses):
    """Body-frame points placed at each pose -> array ``(T * P, 2)``."""
    c = np.cos(poses[:, 2])[:, None]
    sn = np.sin(poses[:, 2])[:, None]
    x = poses[:, 0, None] + c * points[None, :, 0] - sn * points[None, :, 1]
    y = poses[:, 1, None] + sn * points[None, :, 0] + c * points[None, :, 1]
    return np.stack((x, y), axis=-1).reshape(-1, 2)


def _hints(geometry, s_ref, pts):
    """First-order arc-length guess: tangential offset from the reference sample."""
    pos, tangent, _, _ = geometry.frame(s_ref)
    return s_ref + np.einsum("md,md->m", pts - pos, tangent)


def swept_envelope(road, geometry, trajectory, params, spacing=DEFAULT_SPACING):
    """Swept left/right extents of the vehicle body binned on the road grid.

    Parameters
    ----------
    road : RoadPath
    geometry : RoadGeometry or None
        Reconstructed geometry of ``road``; built when ``None``.
    trajectory : Trajectory
    params : BusParams or TractorTrailerParams
    spacing : float
        Maximum distance between outline samples in meters.

    Returns
    -------
    SweptEnvelope
        Bins are centred on road samples with width ``road.delta_s``; samples
        projecting beyond the road ends are ignored.
    """
    if not spacing > 0:
        raise ValidationError("spacing must be positive")
    geometry = geometry or RoadGeometry(road)
    bodies = [(tractor_outline(params).sample(spacing), trajectory.poses)]
    if params.kind == "tt":
        bodies.append((trailer_outline(params).sample(spacing),
                       trajectory.trailer_poses(params)))
    n = road.s.size
    left = np.full(n, -np.inf)
    right = np.full(n, np.inf)
    for outline, poses in bodies:
        per_pose = outline.shape[0]
        step = max(1, _CHUNK // per_pose)
        for a in range(0, poses.shape[0], step):
            chunk = poses[a:a + step]
            pts = _place(outline, chunk)
            s_ref = np.repeat(trajectory.s[a:a + step], per_pose)
            s_proj, lat = geometry.project(pts, _hints(geometry, s_ref, pts))
            b = np.rint(s_proj / road.delta_s).astype(np.int64)
            keep = (b >= 0) & (b < n)
            np.maximum.at(left, b[keep], lat[keep])
            np.minimum.at(right, b[keep], lat[keep])
    empty = ~np.isfinite(left)
    left[empty] = np.nan
    right[empty] = np.nan
    return SweptEnvelope(road.s.copy(), left, right, float(spacing))


def steady_interval(road, margin_m=DEFAULT_MARGIN):
    """Longest constant-curvature run of ``road`` shrunk by ``margin_m`` at both ends.

    Returns ``(start, stop, kappa)`` sample indices (inclusive) or ``None``
    when nothing remains after removing the margins.
    """
    k = road.kappa
    best = (0, 0)
    i = 0
    while i < k.size:
        j = i
        while j + 1 < k.size and abs(k[j + 1] - k[i]) <= 1e-12:
            j += 1
        if j - i > best[1] - best[0]:
            best = (i, j)
        i = j + 1
    m = int(round(margin_m / road.delta_s))
    start, stop = best[0] + m, best[1] - m
    if start > stop:
        return None
    return start, stop, float(k[best[0]])


def expected_widths(kappa, params):
    """Balanced left/right widths predicted by the geometric solution.

    Straight roads give half the widest body.  Returns ``(left, right)``.
    """
    if abs(kappa) < KAPPA_STRAIGHT:
        half = 0.5 * max(params.W, params.aux_width)
        return half, half
    sol = optimal_K(1.0 / kappa, params)
    inner = abs(sol.R_road - sol.R_left)
    outer = abs(sol.R_right - sol.R_road)
    return (inner, outer) if kappa > 0 else (outer, inner)


def envelope_report(envelope, road=None, params=None, margin_m=DEFAULT_MARGIN):
    """Summary metrics of an envelope.

    Steady-interior widths use the longest constant-curvature stretch of
    ``road`` (or the covered extent of the envelope when no road is given)
    with ``margin_m`` removed at entry and exit.
    """
    report = {
        "max_left_width": envelope.max_left_width,
        "max_right_width": envelope.max_right_width,
        "imbalance": envelope.imbalance,
        "spacing": envelope.spacing,
        "margin_m": float(margin_m),
    }
    mask = None
    kappa = None
    if road is not None:
        interval = steady_interval(road, margin_m)
        if interval is not None:
            start, stop, kappa = interval
            mask = np.zeros(envelope.s.size, dtype=bool)
            mask[start:stop + 1] = True
            report["steady_s"] = [float(envelope.s[start]), float(envelope.s[stop])]
            report["road_kappa"] = kappa
    else:
        idx = np.flatnonzero(envelope.covered)
        if idx.size:
            spacing = envelope.s[1] - envelope.s[0] if envelope.s.size > 1 else 1.0
            m = int(round(margin_m / spacing))
            mask = np.zeros(envelope.s.size, dtype=bool)
            mask[idx[0] + m:idx[-1] - m + 1] = True
    if mask is not None and np.any(mask & envelope.covered):
        steady = envelope.restrict(mask)
        report["steady_left_width"] = steady.max_left_width
        report["steady_right_width"] = steady.max_right_width
        report["steady_imbalance"] = steady.imbalance
    if kappa is not None and params is not None:
        try:
            exp_left, exp_right = expected_widths(kappa, params)
            report["expected_left_width"] = exp_left
            report["expected_right_width"] = exp_right
        except GeometryInfeasible as exc:
            report["expected_width_error"] = str(exc)
    return report
