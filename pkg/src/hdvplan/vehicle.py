"""Road-aligned kinematics of a bus and a tractor-trailer in the spatial domain.

State layout (arrays, last axis):

* bus: ``[e_y, e_psi, e_y_bus]``
* tractor-trailer: ``[e_y, e_psi, beta1, e_y_tt]``

The first two (three) entries are the *kinematic* part integrated with Euler
steps along the arc length; the last entry is the auxiliary lateral error of
the bus front axle or the trailer axle, evaluated by projection onto the road.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np

from ._validation import check_scalar, check_state
from .exceptions import DomainError, ValidationError
from .road import GlobalPose, RoadGeometry

FD_STEP = 1e-4


@dataclass(frozen=True)
class BusParams:
    """Rigid bus geometry (meters) and curvature limits.

    ``kappa_rate_max`` is expressed per meter traveled.
    """

    L1: float
    L1f: float
    L1r: float
    W: float
    kappa_max: float
    kappa_rate_max: float

    kind = "bus"

    def __post_init__(self):
        check_scalar(self.L1, "L1", min_val=0.0, include_min=False)
        check_scalar(self.L1f, "L1f", min_val=0.0)
        check_scalar(self.L1r, "L1r", min_val=0.0)
        check_scalar(self.W, "W", min_val=0.0, include_min=False)
        check_scalar(self.kappa_max, "kappa_max", min_val=0.0, include_min=False)
        check_scalar(self.kappa_rate_max, "kappa_rate_max", min_val=0.0, include_min=False)
        if not 1.0 / self.kappa_max > self.W / 2.0:
            raise ValidationError("minimum turning radius 1/kappa_max must exceed W/2")

    @property
    def tractor(self):
        return self

    @property
    def state_size(self):
        return 3

    @property
    def aux_width(self):
        return self.W


@dataclass(frozen=True)
class TractorTrailerParams:
    """Tractor (as :class:`BusParams`) plus a single trailer.

    ``M1`` is the signed hitch offset behind the tractor rear axle (negative
    when the hitch sits in front of the axle).
    """

    tractor: BusParams
    L2: float
    L2r: float
    M1: float
    W_trailer: Optional[float] = None

    kind = "tt"

    def __post_init__(self):
        if not isinstance(self.tractor, BusParams):
            raise ValidationError("tractor must be a BusParams instance")
        check_scalar(self.L2, "L2", min_val=0.0, include_min=False)
        check_scalar(self.L2r, "L2r", min_val=0.0)
        check_scalar(self.M1, "M1")
        if self.W_trailer is None:
            object.__setattr__(self, "W_trailer", self.tractor.W)
        check_scalar(self.W_trailer, "W_trailer", min_val=0.0, include_min=False)
        if not self.L2 > abs(self.M1):
            raise ValidationError("L2 must exceed |M1|")

    @property
    def L1(self):
        return self.tractor.L1

    @property
    def L1f(self):
        return self.tractor.L1f

    @property
    def L1r(self):
        return self.tractor.L1r

    @property
    def W(self):
        return self.tractor.W

    @property
    def kappa_max(self):
        return self.tractor.kappa_max

    @property
    def kappa_rate_max(self):
        return self.tractor.kappa_rate_max

    @property
    def state_size(self):
        return 4

    @property
    def aux_width(self):
        return self.W_trailer


def params_from_dict(doc):
    """Build vehicle parameters from a plain mapping (the CLI/JSON vehicle schema)."""
    doc = dict(doc)
    kind = doc.pop("kind", "tt" if "tractor" in doc else "bus")
    try:
        if kind == "bus":
            return BusParams(**doc)
        if kind == "tt":
            tractor = doc.pop("tractor")
            if isinstance(tractor, dict):
                tractor = BusParams(**tractor)
            return TractorTrailerParams(tractor=tractor, **doc)
    except TypeError as exc:
        raise ValidationError(f"bad vehicle parameters: {exc}") from None
    raise ValidationError(f"unknown vehicle kind {kind!r}")


def params_to_dict(params):
    if params.kind == "bus":
        return {"kind": "bus", "L1": params.L1, "L1f": params.L1f, "L1r": params.L1r,
                "W": params.W, "kappa_max": params.kappa_max,
                "kappa_rate_max": params.kappa_rate_max}
    tractor = params_to_dict(params.tractor)
    del tractor["kind"]
    return {"kind": "tt", "tractor": tractor, "L2": params.L2, "L2r": params.L2r,
            "M1": params.M1, "W_trailer": params.W_trailer}


# Reference vehicles used by the CLI presets and the test fixtures.
CITY_BUS = BusParams(L1=4.0, L1f=1.0, L1r=2.0, W=2.5, kappa_max=0.2, kappa_rate_max=0.05)
TRACTOR_TRAILER = TractorTrailerParams(
    tractor=BusParams(L1=3.8, L1f=1.4, L1r=1.0, W=2.5, kappa_max=0.2, kappa_rate_max=0.05),
    L2=7.0, L2r=1.5, M1=-0.3)
PRESETS = {"bus": CITY_BUS, "tt": TRACTOR_TRAILER, "tractor_trailer": TRACTOR_TRAILER}


class BusState(NamedTuple):
    e_y: float
    e_psi: float
    e_y_bus: float


class TractorTrailerState(NamedTuple):
    e_y: float
    e_psi: float
    beta1: float
    e_y_tt: float


def _state_type(params):
    return BusState if params.kind == "bus" else TractorTrailerState


# ---------------------------------------------------------------------------
# Spatial kinematics


def _check_domain(e_y, e_psi, kappa_gamma, beta1=None, index=None):
    if not 1.0 - e_y * kappa_gamma > 0.0:
        raise DomainError(f"1 - e_y*kappa_gamma <= 0 (e_y={e_y}, kappa_gamma={kappa_gamma})",
                          index)
    if not abs(e_psi) < 0.5 * math.pi:
        raise DomainError(f"|e_psi| >= pi/2 (e_psi={e_psi})", index)
    if beta1 is not None and not abs(beta1) < 0.5 * math.pi:
        raise DomainError(f"jackknife: |beta1| >= pi/2 (beta1={beta1})", index)


def spatial_deriv_bus(state, kappa, kappa_gamma):
    """Arc-length derivatives ``(e_y', e_psi')`` of the rear-axle errors."""
    e_y, e_psi = float(state[0]), float(state[1])
    _check_domain(e_y, e_psi, kappa_gamma)
    scale = 1.0 - e_y * kappa_gamma
    return scale * math.tan(e_psi), scale / math.cos(e_psi) * kappa - kappa_gamma


def spatial_deriv_tt(state, kappa, kappa_gamma, params):
    """Arc-length derivatives ``(e_y', e_psi', beta1')`` of the tractor-trailer."""
    e_y, e_psi, beta1 = float(state[0]), float(state[1]), float(state[2])
    _check_domain(e_y, e_psi, kappa_gamma, beta1)
    scale = 1.0 - e_y * kappa_gamma
    ratio = scale / math.cos(e_psi)
    dbeta = ratio * (kappa - math.sin(beta1) / params.L2
                     + params.M1 / params.L2 * math.cos(beta1) * kappa)
    return scale * math.tan(e_psi), ratio * kappa - kappa_gamma, dbeta


def kinematic_rates(kin, kappa, kappa_gamma, params):
    """Vectorized spatial derivatives of the kinematic sub-state (no domain checks)."""
    kin = np.asarray(kin, dtype=float)
    e_y, e_psi = kin[..., 0], kin[..., 1]
    scale = 1.0 - e_y * kappa_gamma
    ratio = scale / np.cos(e_psi)
    out = np.empty_like(kin)
    out[..., 0] = scale * np.tan(e_psi)
    out[..., 1] = ratio * kappa - kappa_gamma
    if params.kind == "tt":
        beta1 = kin[..., 2]
        out[..., 2] = ratio * (kappa - np.sin(beta1) / params.L2
                               + params.M1 / params.L2 * np.cos(beta1) * kappa)
    return out


def euler_kin(kin, kappa, kappa_gamma, delta_s, params):
    """One Euler-forward step of the kinematic sub-state."""
    kin = np.asarray(kin, dtype=float)
    return kin + delta_s * kinematic_rates(kin, kappa, kappa_gamma, params)


def steering_to_curvature(phi, params):
    return math.tan(phi) / params.L1


def curvature_to_steering(kappa, params):
    return math.atan(kappa * params.L1)


# ---------------------------------------------------------------------------
# Auxiliary lateral errors


def rear_axle_frame(geometry, s, e_y, e_psi):
    """Rear-axle position and unit heading vector for road-aligned errors."""
    pos, tangent, normal, _ = geometry.frame(s)
    e_y = np.asarray(e_y, dtype=float)[..., None]
    c = np.cos(e_psi)[..., None]
    sn = np.sin(e_psi)[..., None]
    return pos + e_y * normal, c * tangent + sn * normal


def _aux_points(geometry, s, kin, params):
    """Global position of the tracked auxiliary point plus a projection hint."""
    s = np.asarray(s, dtype=float)
    kin = np.asarray(kin, dtype=float)
    e_y, e_psi = kin[..., 0], kin[..., 1]
    rear, u = rear_axle_frame(geometry, s, e_y, e_psi)
    if params.kind == "bus":
        return rear + params.L1 * u, s + params.L1 * np.cos(e_psi)
    beta1 = kin[..., 2]
    cb, sb = np.cos(beta1)[..., None], np.sin(beta1)[..., None]
    # trailer heading = tractor heading - beta1
    u2 = cb * u + sb * np.stack((u[..., 1], -u[..., 0]), axis=-1)
    axle = rear - params.M1 * u - params.L2 * u2
    return axle, s - params.M1 * np.cos(e_psi) - params.L2 * np.cos(e_psi - beta1)


def aux_errors(geometry, s, kin, params):
    """Vectorized exact auxiliary errors for arrays of arc lengths and kinematic states."""
    s = np.asarray(s, dtype=float)
    kin = np.asarray(kin, dtype=float)
    pts, hints = _aux_points(geometry, s, kin, params)
    _, lateral = geometry.project(pts.reshape(-1, 2), hints.ravel())
    return lateral.reshape(s.shape)


def aux_error_bus(geometry, s, e_y, e_psi, params):
    """Signed lateral error of the bus front axle."""
    return float(aux_errors(geometry, np.array([s]), np.array([[e_y, e_psi]]), params)[0])


def aux_error_tt(geometry, s, e_y, e_psi, beta1, params):
    """Signed lateral error of the trailer axle."""
    return float(aux_errors(geometry, np.array([s]), np.array([[e_y, e_psi, beta1]]),
                            params)[0])


@dataclass(frozen=True)
class AuxErrorModel:
    """Affine model of the auxiliary error around a linearization point."""

    base: float
    d_dey: float
    d_depsi: float
    d_dbeta1: Optional[float] = None
    point: tuple = field(default=(), repr=False)

    @property
    def gradient(self):
        g = [self.d_dey, self.d_depsi]
        if self.d_dbeta1 is not None:
            g.append(self.d_dbeta1)
        return np.array(g)

    def predict(self, kin):
        kin = np.asarray(kin, dtype=float)[:len(self.point)]
        return self.base + float(self.gradient @ (kin - np.asarray(self.point)))


def linearize_aux_batch(geometry, s, kin, params, h=FD_STEP):
    """Exact values and central-difference gradients of the auxiliary error.

    ``s`` has shape ``(M,)`` and ``kin`` ``(M, nk)``.  Returns ``(base, grad)``
    with shapes ``(M,)`` and ``(M, nk)``.
    """
    s = np.asarray(s, dtype=float)
    kin = np.asarray(kin, dtype=float)
    m, nk = kin.shape
    pert = np.repeat(kin[:, None, :], 2 * nk + 1, axis=1)
    for j in range(nk):
        pert[:, 1 + 2 * j, j] += h
        pert[:, 2 + 2 * j, j] -= h
    vals = aux_errors(geometry, np.repeat(s[:, None], 2 * nk + 1, axis=1), pert, params)
    grad = (vals[:, 1::2] - vals[:, 2::2]) / (2.0 * h)
    return vals[:, 0], grad


def linearize_aux(geometry, s, state, params, h=FD_STEP):
    nk = params.state_size - 1
    kin = check_state(state, params.state_size)[:nk] if len(state) == params.state_size \
        else check_state(state, nk)
    base, grad = linearize_aux_batch(geometry, np.array([s]), kin[None, :], params, h)
    g = grad[0]
    return AuxErrorModel(float(base[0]), float(g[0]), float(g[1]),
                         float(g[2]) if nk == 3 else None, tuple(kin.tolist()))


# ---------------------------------------------------------------------------
# Discrete model


@dataclass(frozen=True)
class DynamicsLinearization:
    """``z_next ~= A z + B kappa + c`` for one discrete step.

    Only the kinematic rows are meaningful; the auxiliary row and column are
    zero because the auxiliary error is tied to the kinematic state separately
    through :class:`AuxErrorModel`.
    """

    A: np.ndarray
    B: np.ndarray
    c: np.ndarray


def linearize_dynamics_batch(kin, kappa, kappa_gamma, delta_s, params, h=FD_STEP):
    """Central-difference Jacobians of the Euler step for many steps at once.

    Returns ``A (M, nk, nk)``, ``B (M, nk)`` and ``c (M, nk)``.
    """
    kin = np.atleast_2d(np.asarray(kin, dtype=float))
    kappa = np.asarray(kappa, dtype=float)
    kappa_gamma = np.asarray(kappa_gamma, dtype=float)
    m, nk = kin.shape
    A = np.empty((m, nk, nk))
    for j in range(nk):
        dp = kin.copy()
        dm = kin.copy()
        dp[:, j] += h
        dm[:, j] -= h
        A[:, :, j] = (euler_kin(dp, kappa, kappa_gamma, delta_s, params)
                      - euler_kin(dm, kappa, kappa_gamma, delta_s, params)) / (2.0 * h)
    B = (euler_kin(kin, kappa + h, kappa_gamma, delta_s, params)
         - euler_kin(kin, kappa - h, kappa_gamma, delta_s, params)) / (2.0 * h)
    nominal = euler_kin(kin, kappa, kappa_gamma, delta_s, params)
    c = nominal - np.einsum("mij,mj->mi", A, kin) - B * kappa[:, None]
    return A, B, c


def linearize_dynamics(state, kappa, kappa_gamma, delta_s, params, h=FD_STEP):
    nz = params.state_size
    z = check_state(state, nz)
    _check_domain(z[0], z[1], kappa_gamma, z[2] if nz == 4 else None)
    A, B, c = linearize_dynamics_batch(z[None, :nz - 1], np.array([kappa]),
                                       np.array([kappa_gamma]), delta_s, params, h)
    Af = np.zeros((nz, nz))
    Af[:nz - 1, :nz - 1] = A[0]
    Bf = np.zeros(nz)
    Bf[:nz - 1] = B[0]
    cf = np.zeros(nz)
    cf[:nz - 1] = c[0]
    return DynamicsLinearization(Af, Bf, cf)


def initial_state(geometry, index, params, e_y=0.0, e_psi=0.0, beta1=0.0):
    """State at grid sample ``index`` with the auxiliary error filled in exactly."""
    s = geometry.road.s[index]
    kin = [e_y, e_psi] if params.kind == "bus" else [e_y, e_psi, beta1]
    aux = float(aux_errors(geometry, np.array([s]), np.array([kin]), params)[0])
    return _state_type(params)(*kin, aux)


def step(state, kappa, geometry, index, params):
    """Advance one grid interval from sample ``index``.

    The kinematic part is Euler-integrated; the auxiliary error is refreshed
    by exact projection at the new state.
    """
    nz = params.state_size
    z = check_state(state, nz)
    road = geometry.road
    if not 0 <= index < road.N:
        raise ValidationError(f"step index {index} outside 0..{road.N - 1}")
    kg = road.kappa[index]
    _check_domain(z[0], z[1], kg, z[2] if nz == 4 else None, index)
    kin = euler_kin(z[:nz - 1], kappa, kg, road.delta_s, params)
    kg_next = road.kappa[index + 1]
    _check_domain(kin[0], kin[1], kg_next, kin[2] if nz == 4 else None, index + 1)
    aux = aux_errors(geometry, np.array([road.s[index + 1]]), kin[None, :], params)[0]
    return _state_type(params)(*kin.tolist(), float(aux))


@dataclass(frozen=True, eq=False)
class Trajectory:
    """States on consecutive grid samples with the controls applied between them.

    ``poses`` holds the rear-axle global pose ``(x, y, heading)`` per sample.
    """

    s: np.ndarray
    states: np.ndarray
    kappa: np.ndarray
    poses: np.ndarray
    kind: str
    start_index: int = 0

    def __len__(self):
        return self.s.size

    def state(self, i):
        cls = BusState if self.kind == "bus" else TractorTrailerState
        return cls(*self.states[i].tolist())

    def global_poses(self):
        return [GlobalPose.make(*p) for p in self.poses]

    def trailer_poses(self, params):
        """Trailer-axle poses ``(x, y, heading)`` derived from the joint angle."""
        if self.kind != "tt":
            raise ValidationError("trailer poses exist only for tractor-trailers")
        x, y, th = self.poses.T
        th2 = th - self.states[:, 2]
        hx = x - params.M1 * np.cos(th)
        hy = y - params.M1 * np.sin(th)
        return np.column_stack((hx - params.L2 * np.cos(th2), hy - params.L2 * np.sin(th2),
                                np.arctan2(np.sin(th2), np.cos(th2))))

    def concat(self, other):
        """Join a trajectory that starts where this one ends."""
        if other.start_index != self.start_index + len(self) - 1:
            raise ValidationError("trajectories are not contiguous")
        return Trajectory(np.concatenate((self.s, other.s[1:])),
                          np.vstack((self.states, other.states[1:])),
                          np.concatenate((self.kappa, other.kappa)),
                          np.vstack((self.poses, other.poses[1:])),
                          self.kind, self.start_index)


def rollout_kinematics(kin0, controls, kappa_gamma, delta_s, params, start_index=0):
    """Euler rollout of the kinematic sub-state with domain checks at every sample."""
    nk = len(kin0)
    out = np.empty((len(controls) + 1, nk))
    out[0] = kin0
    tt = params.kind == "tt"
    for i, k in enumerate(controls):
        cur = out[i]
        _check_domain(cur[0], cur[1], kappa_gamma[i], cur[2] if tt else None, start_index + i)
        out[i + 1] = euler_kin(cur, k, kappa_gamma[i], delta_s, params)
    last = out[-1]
    _check_domain(last[0], last[1], kappa_gamma[len(controls)], last[2] if tt else None,
                  start_index + len(controls))
    return out


def poses_for(geometry, s, kin):
    rear, u = rear_axle_frame(geometry, s, kin[:, 0], kin[:, 1])
    return np.column_stack((rear, np.arctan2(u[:, 1], u[:, 0])))


def simulate(geometry, z0, controls, params, start_index=0):
    """Apply a curvature sequence from sample ``start_index``.

    Equivalent to repeated :func:`step` calls: the kinematics are integrated
    first and every auxiliary error is then refreshed by one batched projection.
    """
    road = geometry.road
    nz = params.state_size
    z0 = check_state(z0, nz, "z0")
    controls = np.asarray(controls, dtype=float).ravel()
    n = controls.size
    if start_index < 0 or start_index + n > road.N:
        raise ValidationError(
            f"{n} controls from sample {start_index} run past the road end ({road.N})")
    idx = np.arange(start_index, start_index + n + 1)
    kin = rollout_kinematics(z0[:nz - 1], controls, road.kappa[idx], road.delta_s, params,
                             start_index)
    states = np.empty((n + 1, nz))
    states[:, :nz - 1] = kin
    states[0, nz - 1] = z0[nz - 1]
    if n:
        states[1:, nz - 1] = aux_errors(geometry, road.s[idx[1:]], kin[1:], params)
    return Trajectory(road.s[idx].copy(), states, controls.copy(),
                      poses_for(geometry, road.s[idx], kin), params.kind, start_index)


__all__ = [
    "AuxErrorModel", "BusParams", "BusState", "CITY_BUS", "DynamicsLinearization", "PRESETS",
    "RoadGeometry", "TRACTOR_TRAILER", "TractorTrailerParams", "TractorTrailerState",
    "Trajectory", "aux_error_bus", "aux_error_tt", "aux_errors", "curvature_to_steering",
    "euler_kin", "initial_state", "linearize_aux", "linearize_aux_batch",
    "linearize_dynamics", "linearize_dynamics_batch", "params_from_dict", "params_to_dict",
    "simulate", "spatial_deriv_bus", "spatial_deriv_tt", "step", "steering_to_curvature",
]
