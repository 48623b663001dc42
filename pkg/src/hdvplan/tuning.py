"""Geometric tuning of the lateral-error weight K.

For a road of constant radius the vehicle is placed in its steady circular
configuration such that the swept area extends equally far to both sides of
the lane center.  The resulting rear-axle and auxiliary errors fix the weight
``K`` that makes ``K * e_y + e_y_aux`` vanish in that configuration.

All formulas are evaluated for a left turn with ``|R_road|``; right turns are
mirrored (errors and joint angle change sign, ``K`` is unchanged).  Differences
of nearly equal radii are rewritten in cancellation-free form so the solution
stays accurate on very large radii.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .exceptions import GeometryInfeasible, NoConvergence

KAPPA_STRAIGHT = 1e-4
K_DEFAULT = 1.0
MIN_TRAILER_LENGTH = 1e-3


@dataclass(frozen=True)
class GeometricSolution:
    """Balanced steady-state configuration on a road of constant radius.

    Radii are signed like ``R_road`` (positive for left turns).  ``R_left`` is
    the inner swept radius and ``R_right`` the outer one.
    """

    kind: str
    R_road: float
    R1: float
    R_left: float
    R_right: float
    e_y: float
    e_y_aux: float
    K: float
    R2: Optional[float] = None
    beta1: Optional[float] = None

    @property
    def kappa(self):
        """Tractor/bus curvature of the balanced configuration."""
        return 1.0 / self.R1

    @property
    def swept_width(self):
        """Common swept width on each side of the lane center."""
        return abs(self.R_road - self.R_left)

    def to_dict(self):
        return asdict(self)


def _check_radius(R_road):
    R_road = float(R_road)
    if not math.isfinite(R_road) or R_road == 0.0:
        raise GeometryInfeasible(f"road radius must be finite and nonzero, got {R_road}")
    return abs(R_road), math.copysign(1.0, R_road)


def _sqrt_excess(x, c):
    """``sqrt(x**2 + c) - x`` without cancellation (``x > 0``)."""
    return c / (math.sqrt(x * x + c) + x)


def _bus_offset(R, W, L):
    """Rear-axle offset ``R_road - R1`` of the balanced bus."""
    return L * L / (4.0 * R + 2.0 * W)


def bus_optimal_radius(R_road, params):
    """Bus turning radius that balances the swept area about the lane center.

    Closed-form positive root of the balance equation; signed like ``R_road``.
    """
    R, sign = _check_radius(R_road)
    W = params.W
    L = params.L1 + params.L1f
    if not R > W / 2.0:
        raise GeometryInfeasible(f"|R_road|={R} must exceed W/2={W / 2}")
    R1 = R - _bus_offset(R, W, L)
    if not R1 > W / 2.0:
        raise GeometryInfeasible(f"turning radius R1={R1:.4f} must exceed W/2={W / 2}")
    if R1 * params.kappa_max < 1.0 - 1e-12:
        raise GeometryInfeasible(
            f"turning radius R1={R1:.4f} below minimum 1/kappa_max={1 / params.kappa_max:.4f}")
    return sign * R1


def bus_optimal_K(R_road, params):
    """Full balanced bus configuration and the weight ``K_bus``."""
    R, sign = _check_radius(R_road)
    W, L1 = params.W, params.L1
    L = L1 + params.L1f
    R1 = abs(bus_optimal_radius(R, params))
    e_y = _bus_offset(R, W, L)
    # R_road - sqrt(L1^2 + R1^2) = e_y - (sqrt(R1^2 + L1^2) - R1)
    e_aux = e_y - _sqrt_excess(R1, L1 * L1)
    if not e_y > 0.0:
        raise GeometryInfeasible("degenerate bus geometry: zero rear-axle offset")
    K = -e_aux / e_y
    if not K > 0.0:
        raise GeometryInfeasible(
            f"front overhang too long for a positive weight (K={K:.4g})")
    R_left = R1 - W / 2.0
    R_right = math.hypot(R1 + W / 2.0, L)
    return GeometricSolution("bus", sign * R, sign * R1, sign * R_left, sign * R_right,
                             sign * e_y, sign * e_aux, K)


def _tt_offset_residual(e, R, W, L, c1):
    """Balance residual written in the rear-axle offset ``e = R_road - R1``.

    Equals ``RHS(R1) - 2 R_road`` of the balance equation; strictly decreasing in ``e``.
    """
    R1 = R - e
    return -2.0 * e + _sqrt_excess(R1, c1) + _sqrt_excess(R1 + W / 2.0, L * L)


def tt_balance_rhs(R1, params):
    """Right-hand side ``sqrt(R1^2+M1^2-L2^2) - W/2 + sqrt((R1+W/2)^2+(L1+L1f)^2)``."""
    W = params.W
    L = params.L1 + params.L1f
    return (math.sqrt(R1 * R1 + params.M1 ** 2 - params.L2 ** 2) - W / 2.0
            + math.sqrt((R1 + W / 2.0) ** 2 + L * L))


def tt_optimal_radius(R_road, params, tol=1e-10, max_iter=200):
    """Tractor turning radius balancing the tractor-trailer swept area.

    The balance equation has no convenient closed form; it is solved by a
    bracketed Newton iteration that falls back to bisection whenever a Newton
    step leaves the bracket.  Signed like ``R_road``.
    """
    R, sign = _check_radius(R_road)
    return sign * (R - _tt_offset(R, params, tol, max_iter))


def _tt_offset(R, params, tol=1e-10, max_iter=200):
    W = params.W
    L = params.L1 + params.L1f
    c1 = params.M1 ** 2 - params.L2 ** 2
    lower = max(math.sqrt(max(0.0, -c1)) + W / 2.0 + 1e-6, 1.0 / params.kappa_max)
    upper = 2.0 * R + L + W
    if not lower < upper:
        raise GeometryInfeasible(f"no feasible bracket for |R_road|={R}")

    def g(e):
        return _tt_offset_residual(e, R, W, L, c1)

    # bracket in the offset variable: e = R - R1 decreases as R1 grows
    e_hi, e_lo = R - lower, R - upper
    g_hi, g_lo = g(e_hi), g(e_lo)
    if not (g_hi < 0.0 < g_lo):
        raise GeometryInfeasible(
            f"|R_road|={R} admits no balanced configuration with R1 >= {lower:.4f}")
    e = 0.5 * (e_lo + e_hi)
    for _ in range(max_iter):
        val = g(e)
        if abs(val) < 1e-13:
            break
        if val > 0.0:
            e_lo = e
        else:
            e_hi = e
        R1 = R - e
        r2 = math.sqrt(R1 * R1 + c1)
        r3 = math.hypot(R1 + W / 2.0, L)
        # dg/de = -2 + (1 - R1/r2) + (1 - (R1 + W/2)/r3)
        slope = -R1 / r2 - (R1 + W / 2.0) / r3
        e_new = e - val / slope
        if not e_lo < e_new < e_hi:
            e_new = 0.5 * (e_lo + e_hi)
        converged = abs(e_new - e) <= 1e-15 * max(1.0, R)
        e = e_new
        if converged:
            break
    else:
        raise NoConvergence(f"balance equation did not converge for R_road={R}")
    if abs(g(e)) > tol:
        raise NoConvergence(f"balance residual {abs(g(e)):.3g} above {tol}")
    return e


def tt_optimal_K(R_road, params):
    """Full balanced tractor-trailer configuration and the weight ``K_tt``."""
    R, sign = _check_radius(R_road)
    if params.L2 < MIN_TRAILER_LENGTH:
        raise GeometryInfeasible(f"trailer length L2={params.L2} below {MIN_TRAILER_LENGTH} m")
    W = params.W
    L = params.L1 + params.L1f
    c1 = params.M1 ** 2 - params.L2 ** 2
    e_y = _tt_offset(R, params)
    R1 = R - e_y
    R2 = math.sqrt(R1 * R1 + c1)
    if not R2 > W / 2.0:
        raise GeometryInfeasible(f"trailer axle radius R2={R2:.4f} must exceed W/2")
    # R_road - R2 = e_y - (R2 - R1)
    e_aux = e_y - _sqrt_excess(R1, c1)
    if not (e_y < 0.0 < e_aux):
        raise GeometryInfeasible(
            f"unexpected error signs (e_y={e_y:.4g}, e_y_tt={e_aux:.4g}); K would not be positive")
    K = -e_aux / e_y
    beta1 = math.atan(params.M1 / R1) + math.atan(params.L2 / R2)
    R_left = R2 - W / 2.0
    R_right = math.hypot(R1 + W / 2.0, L)
    return GeometricSolution("tt", sign * R, sign * R1, sign * R_left, sign * R_right,
                             sign * e_y, sign * e_aux, K, sign * R2, sign * beta1)


def optimal_K(R_road, params):
    if params.kind == "bus":
        return bus_optimal_K(R_road, params)
    return tt_optimal_K(R_road, params)


@dataclass(frozen=True, eq=False)
class KSchedule:
    values: np.ndarray
    kind: str

    def __len__(self):
        return self.values.size

    def __getitem__(self, item):
        return self.values[item]


def k_schedule(road, params, kappa_straight=KAPPA_STRAIGHT, k_default=K_DEFAULT):
    """Per-sample weight from the local road curvature.

    Samples with ``|kappa| < kappa_straight`` get ``k_default``.
    """
    values = np.empty(road.s.size)
    cache = {}
    for i, kg in enumerate(road.kappa):
        if abs(kg) < kappa_straight:
            values[i] = k_default
            continue
        key = abs(float(kg))
        if key not in cache:
            try:
                cache[key] = optimal_K(1.0 / key, params).K
            except GeometryInfeasible as exc:
                raise GeometryInfeasible(f"sample {i} (s={road.s[i]:.2f}): {exc}", i) from None
        values[i] = cache[key]
    values.flags.writeable = False
    return KSchedule(values, params.kind)
