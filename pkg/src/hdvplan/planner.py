"""Road-aligned path planning by sequential quadratic programming.

The planning problem over a horizon of ``N`` grid intervals is::

    minimize    omega * sum_{i=1}^{N-1} (kappa_i - kappa_{i-1})^2
                + sum_{i=1}^{N} (K_i * e_y,i + e_aux,i)^2
    subject to  Euler-discretized spatial kinematics,
                e_aux,i = exact auxiliary lateral error of the state,
                initial state fixed, |kappa_0 - kappa_start| <= rate * ds,
                lateral corridors on e_y and e_aux,
                |kappa_i| <= kappa_max, |kappa_i - kappa_{i-1}| <= rate * ds.

Each SQP iteration linearizes the kinematics and the auxiliary error around
the current iterate and solves one sparse multiple-shooting QP with
:func:`hdvplan.qp.solve_qp`.  Iterates are always nonlinear rollouts of a
curvature sequence, so every accepted plan is dynamically consistent.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field, fields, replace
from typing import Optional

import numpy as np
import scipy.sparse as sp

from ._validation import check_choice, check_scalar, check_state
from .exceptions import (DomainError, HdvPlanError, InfeasibleDetected, LinearizationFailed,
                         ValidationError)
from .qp import DUAL_INFEASIBLE, PRIMAL_INFEASIBLE, QpProblem, QpSettings, solve_qp
from .road import RoadGeometry
from .tuning import k_schedule as make_k_schedule
from .vehicle import (FD_STEP, Trajectory, initial_state, linearize_aux_batch,
                      linearize_dynamics_batch, simulate)

logger = logging.getLogger(__name__)

MODES = ("sqp", "rti")
OBJECTIVES = ("tuned", "rear_axle")
_GRID_TOL = 1e-9


@dataclass(frozen=True)
class PlanConfig:
    """Planner settings; lengths in meters.

    ``objective="rear_axle"`` selects the baseline that only centers the rear
    axle (lateral term ``sum e_y^2``, no corridor on the auxiliary error).
    """

    horizon_m: float = 100.0
    delta_s: float = 0.5
    execute_m: float = 5.0
    omega_kappa: float = 100.0
    mode: str = "sqp"
    sqp_tol: float = 1e-6
    sqp_max_iter: int = 30
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    qp_max_iter: int = 4000
    objective: str = "tuned"

    def __post_init__(self):
        check_scalar(self.horizon_m, "horizon_m", min_val=0.0, include_min=False)
        check_scalar(self.delta_s, "delta_s", min_val=0.0, include_min=False)
        check_scalar(self.execute_m, "execute_m", min_val=0.0, include_min=False)
        check_scalar(self.omega_kappa, "omega_kappa", min_val=0.0, include_min=False)
        check_scalar(self.sqp_tol, "sqp_tol", min_val=0.0, include_min=False)
        check_choice(self.mode, "mode", MODES)
        check_choice(self.objective, "objective", OBJECTIVES)
        for name in ("sqp_max_iter", "qp_max_iter"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        for name in ("horizon_m", "execute_m"):
            ratio = getattr(self, name) / self.delta_s
            if abs(ratio - round(ratio)) > _GRID_TOL * max(1.0, ratio):
                raise ValidationError(f"{name} must be an integer multiple of delta_s")
        if self.execute_m > self.horizon_m:
            raise ValidationError("execute_m must not exceed horizon_m")

    @property
    def N(self):
        return int(round(self.horizon_m / self.delta_s))

    @property
    def n_execute(self):
        return int(round(self.execute_m / self.delta_s))

    def qp_settings(self):
        return QpSettings(eps_abs=self.eps_abs, eps_rel=self.eps_rel,
                          max_iter=int(self.qp_max_iter))

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @classmethod
    def from_dict(cls, doc):
        known = {f.name for f in fields(cls)}
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown PlanConfig keys: {sorted(unknown)}")
        return cls(**doc)


@dataclass(frozen=True, eq=False)
class PlanProblem:
    """One horizon of the planning problem.

    The horizon covers road samples ``start .. start + N`` of ``geometry.road``.
    ``k_values`` and both corridors are slices of length ``N + 1``; corridor
    arrays have columns ``(lower, upper)``.
    """

    geometry: RoadGeometry
    start: int
    N: int
    z_start: np.ndarray
    kappa_start: float
    k_values: np.ndarray
    corridor_ey: np.ndarray
    corridor_aux: np.ndarray
    params: object

    @property
    def kind(self):
        return self.params.kind

    @property
    def indices(self):
        return np.arange(self.start, self.start + self.N + 1)

    @property
    def s(self):
        return self.geometry.road.s[self.indices]

    @property
    def kappa_gamma(self):
        return self.geometry.road.kappa[self.indices]

    @property
    def road_window(self):
        return self.geometry.road.window(self.start, self.start + self.N)


def corridors(road, params, start=0, stop=None):
    """Lateral bounds keeping the relevant body half-width inside the road."""
    stop = road.N if stop is None else stop
    sl = slice(start, stop + 1)
    half = 0.5 * params.W
    half_aux = 0.5 * params.aux_width
    ey = np.column_stack((-road.w_right[sl] + half, road.w_left[sl] - half))
    aux = np.column_stack((-road.w_right[sl] + half_aux, road.w_left[sl] - half_aux))
    return ey, aux


def make_problem(geometry, start, N, z_start, kappa_start, k_values, params):
    """Assemble a :class:`PlanProblem` for samples ``start .. start + N``.

    ``k_values`` is the full-road weight array (or a :class:`KSchedule`).
    The auxiliary error of ``z_start`` is recomputed from the geometry, so
    callers only need to supply the kinematic part.
    """
    road = geometry.road
    if not (0 <= start and start + N <= road.N and N >= 1):
        raise ValidationError(f"horizon [{start}, {start + N}] does not fit road 0..{road.N}")
    z_start = check_state(z_start, params.state_size, "z_start").copy()
    z_start[-1] = initial_state(geometry, start, params, *z_start[:-1])[-1]
    kappa_start = check_scalar(kappa_start, "kappa_start")
    k_all = np.asarray(getattr(k_values, "values", k_values), dtype=float)
    if k_all.size != road.N + 1:
        raise ValidationError("k_values must cover every road sample")
    ey, aux = corridors(road, params, start, start + N)
    bad = np.flatnonzero(~(ey[:, 0] < ey[:, 1]) | ~(aux[:, 0] < aux[:, 1]))
    if bad.size:
        raise ValidationError("road narrower than the vehicle", index=int(start + bad[0]))
    return PlanProblem(geometry, int(start), int(N), z_start, kappa_start,
                       k_all[start:start + N + 1].copy(), ey, aux, params)


@dataclass(frozen=True, eq=False)
class PlanResult:
    kappa: np.ndarray
    states: np.ndarray
    objective: float
    stats: dict
    trajectory: Trajectory
    qp_warm: Optional[tuple] = field(default=None, repr=False)

    @property
    def converged(self):
        return bool(self.stats["converged"])


# ---------------------------------------------------------------------------
# Objective


def _lateral_weights(k_values, nz, objective):
    """Row vectors ``v_i`` such that the lateral term is ``sum (v_i . z_i)^2``."""
    v = np.zeros((k_values.size, nz))
    if objective == "rear_axle":
        v[:, 0] = 1.0
    else:
        v[:, 0] = k_values
        v[:, nz - 1] = 1.0
    return v


def objective_terms(states, kappa, k_values, omega_kappa, objective="tuned"):
    """Smoothness and lateral parts of the planning objective."""
    states = np.asarray(states, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    k_values = np.asarray(k_values, dtype=float)
    if states.shape[0] != kappa.size + 1 or k_values.size != states.shape[0]:
        raise ValidationError("states, kappa and k_values lengths are inconsistent")
    v = _lateral_weights(k_values, states.shape[1], objective)
    lateral = np.einsum("ij,ij->i", v[1:], states[1:])
    smooth = float(omega_kappa * np.sum(np.diff(kappa) ** 2))
    return smooth, float(np.sum(lateral ** 2))


def objective_eval(states, kappa, k_values, omega_kappa, objective="tuned"):
    """``omega * sum (kappa_i - kappa_{i-1})^2 + sum_{i>=1} (K_i e_y,i + e_aux,i)^2``."""
    smooth, lateral = objective_terms(states, kappa, k_values, omega_kappa, objective)
    return smooth + lateral


# ---------------------------------------------------------------------------
# QP assembly


@dataclass(frozen=True)
class QpLayout:
    """Index bookkeeping of the stage-interleaved variables ``[z_0, k_0, ..., z_N]``."""

    N: int
    nz: int

    @property
    def n(self):
        return self.N * (self.nz + 1) + self.nz

    def z(self, i):
        return i * (self.nz + 1)

    def k(self, i):
        return i * (self.nz + 1) + self.nz

    def z_index(self):
        return np.arange(self.N + 1)[:, None] * (self.nz + 1) + np.arange(self.nz)[None, :]

    def k_index(self):
        return np.arange(self.N) * (self.nz + 1) + self.nz

    def pack(self, states, kappa):
        x = np.empty(self.n)
        x[self.z_index()] = states
        x[self.k_index()] = kappa
        return x

    def unpack(self, x):
        return x[self.z_index()], x[self.k_index()]


def _check_iterate(problem, states, kappa):
    kg = problem.kappa_gamma
    tt = problem.kind == "tt"
    for i in range(problem.N + 1):
        e_y, e_psi = states[i, 0], states[i, 1]
        if not np.all(np.isfinite(states[i])) or not 1.0 - e_y * kg[i] > 0.0 \
                or not abs(e_psi) < 0.5 * np.pi or (tt and not abs(states[i, 2]) < 0.5 * np.pi):
            raise LinearizationFailed(f"iterate outside the model domain at step {i}", i)
    if not np.all(np.isfinite(kappa)):
        raise LinearizationFailed("non-finite curvature in iterate",
                                  int(np.flatnonzero(~np.isfinite(kappa))[0]))


def build_qp(problem, states, kappa, config=None, h=FD_STEP):
    """Multiple-shooting QP linearized around ``(states, kappa)``.

    Row order: initial kinematic state, kinematic dynamics per step, one
    auxiliary-error row per sample, corridors on ``e_y`` and ``e_aux`` for
    samples ``1..N``, curvature bounds, curvature-rate bounds (the first one
    relative to ``kappa_start``).  The auxiliary corridor is omitted for the
    rear-axle baseline objective.

    Returns
    -------
    qp : QpProblem
    layout : QpLayout
    n_eq : int
        Number of leading equality rows.
    """
    config = config or PlanConfig()
    params = problem.params
    N, nz = problem.N, params.state_size
    nk = nz - 1
    states = np.asarray(states, dtype=float)
    kappa = np.asarray(kappa, dtype=float)
    if states.shape != (N + 1, nz) or kappa.shape != (N,):
        raise ValidationError("iterate shape does not match the problem horizon")
    _check_iterate(problem, states, kappa)
    lay = QpLayout(N, nz)
    kin = states[:, :nk]
    kg = problem.kappa_gamma
    ds = problem.geometry.road.delta_s
    Ad, Bd, cd = linearize_dynamics_batch(kin[:-1], kappa, kg[:-1], ds, params, h)
    try:
        aux_base, aux_grad = linearize_aux_batch(problem.geometry, problem.s, kin, params, h)
    except HdvPlanError as exc:
        raise LinearizationFailed(f"auxiliary error linearization failed: {exc}") from exc
    if not (np.all(np.isfinite(Ad)) and np.all(np.isfinite(aux_grad))):
        raise LinearizationFailed("non-finite Jacobian")

    rows, cols, vals = [], [], []
    lo, hi = [], []
    r = 0

    def add(row_cols, row_vals, lower, upper):
        nonlocal r
        rows.extend([r] * len(row_cols))
        cols.extend(row_cols)
        vals.extend(row_vals)
        lo.append(lower)
        hi.append(upper)
        r += 1

    for j in range(nk):
        add([lay.z(0) + j], [1.0], states[0, j], states[0, j])
    for i in range(N):
        for j in range(nk):
            cc = [lay.z(i + 1) + j] + [lay.z(i) + t for t in range(nk)] + [lay.k(i)]
            vv = [1.0] + list(-Ad[i, j]) + [-Bd[i, j]]
            add(cc, vv, cd[i, j], cd[i, j])
    for i in range(N + 1):
        g = aux_grad[i]
        rhs = aux_base[i] - float(g @ kin[i])
        add([lay.z(i) + nk] + [lay.z(i) + t for t in range(nk)], [1.0] + list(-g), rhs, rhs)
    n_eq = r
    for i in range(1, N + 1):
        add([lay.z(i)], [1.0], problem.corridor_ey[i, 0], problem.corridor_ey[i, 1])
    if config.objective == "tuned":
        for i in range(1, N + 1):
            add([lay.z(i) + nk], [1.0], problem.corridor_aux[i, 0], problem.corridor_aux[i, 1])
    kmax = params.kappa_max
    for i in range(N):
        add([lay.k(i)], [1.0], -kmax, kmax)
    dk = params.kappa_rate_max * ds
    add([lay.k(0)], [1.0], problem.kappa_start - dk, problem.kappa_start + dk)
    for i in range(1, N):
        add([lay.k(i), lay.k(i - 1)], [1.0, -1.0], -dk, dk)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(r, lay.n))

    v = _lateral_weights(problem.k_values, nz, config.objective)
    zi = lay.z_index()
    prow, pcol, pval = [], [], []
    for i in range(1, N + 1):
        idx = zi[i]
        block = 2.0 * np.outer(v[i], v[i])
        nzr, nzc = np.nonzero(block)
        prow.extend(idx[nzr])
        pcol.extend(idx[nzc])
        pval.extend(block[nzr, nzc])
    w2 = 2.0 * config.omega_kappa
    for i in range(1, N):
        a, b = lay.k(i), lay.k(i - 1)
        prow += [a, b, a, b]
        pcol += [a, b, b, a]
        pval += [w2, w2, -w2, -w2]
    P = sp.csc_matrix((pval, (prow, pcol)), shape=(lay.n, lay.n))
    qp = QpProblem(P, np.zeros(lay.n), A, np.array(lo), np.array(hi))
    return qp, lay, n_eq


# ---------------------------------------------------------------------------
# Iterates


def rollout(problem, kappa):
    """Nonlinear rollout of a curvature sequence from ``z_start``."""
    return simulate(problem.geometry, problem.z_start, kappa, problem.params, problem.start)


def initial_controls(problem):
    """Road curvature clipped to the curvature bound and rate-limited from ``kappa_start``."""
    params = problem.params
    dk = params.kappa_rate_max * problem.geometry.road.delta_s
    target = np.clip(problem.kappa_gamma[:-1], -params.kappa_max, params.kappa_max)
    out = np.empty(problem.N)
    prev = problem.kappa_start
    for i, k in enumerate(target):
        prev = float(np.clip(k, prev - dk, prev + dk))
        out[i] = prev
    return out


def shift_controls(kappa, n_shift, N):
    """Drop ``n_shift`` executed controls and repeat the last one for the new tail."""
    kappa = np.asarray(kappa, dtype=float)
    tail = kappa[n_shift:]
    if tail.size >= N:
        return tail[:N].copy()
    fill = tail[-1] if tail.size else kappa[-1]
    return np.concatenate((tail, np.full(N - tail.size, fill)))


def constraint_violation(problem, traj, config):
    """Infinity norm of curvature, rate and corridor violations of a trajectory."""
    params = problem.params
    dk = params.kappa_rate_max * problem.geometry.road.delta_s
    k = traj.kappa
    viol = [np.abs(k) - params.kappa_max,
            np.abs(np.diff(np.concatenate(([problem.kappa_start], k)))) - dk]
    e = traj.states[1:, 0]
    viol += [problem.corridor_ey[1:, 0] - e, e - problem.corridor_ey[1:, 1]]
    if config.objective == "tuned":
        a = traj.states[1:, -1]
        viol += [problem.corridor_aux[1:, 0] - a, a - problem.corridor_aux[1:, 1]]
    return float(max(0.0, max(np.max(v, initial=0.0) for v in viol)))


def dynamics_residual(problem, traj, h=FD_STEP):
    """Defect of the trajectory in its own linearized dynamics (zero up to rounding)."""
    nk = problem.params.state_size - 1
    kin = traj.states[:, :nk]
    A, B, c = linearize_dynamics_batch(kin[:-1], traj.kappa, problem.kappa_gamma[:-1],
                                       problem.geometry.road.delta_s, problem.params, h)
    pred = np.einsum("mij,mj->mi", A, kin[:-1]) + B * traj.kappa[:, None] + c
    return float(np.max(np.abs(kin[1:] - pred), initial=0.0))


def _try_rollout(problem, kappa):
    try:
        return rollout(problem, kappa)
    except DomainError:
        return None


def _objective(problem, traj, config):
    return objective_eval(traj.states, traj.kappa, problem.k_values, config.omega_kappa,
                          config.objective)


def _qp_step(problem, traj, config, warm):
    qp, lay, _ = build_qp(problem, traj.states, traj.kappa, config)
    sol = solve_qp(qp, config.qp_settings(), warm_start=warm, raise_on_failure=False)
    if sol.status in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE):
        raise InfeasibleDetected(f"planning QP is {sol.status.replace('_', ' ')} "
                                 f"(horizon start {problem.start})", sol)
    states_qp, kappa_qp = lay.unpack(sol.x)
    step = max(float(np.max(np.abs(states_qp - traj.states))),
               float(np.max(np.abs(kappa_qp - traj.kappa))))
    return sol, kappa_qp, step


def _result(problem, traj, config, *, sqp_iters, qp_iters, qp_failures, converged, t0,
            step_norm, warm, alphas):
    obj = _objective(problem, traj, config)
    smooth, lateral = objective_terms(traj.states, traj.kappa, problem.k_values,
                                      config.omega_kappa, config.objective)
    stats = {
        "sqp_iters": sqp_iters,
        "qp_iters": qp_iters,
        "qp_max_iter_hits": qp_failures,
        "converged": bool(converged),
        "step_norm": float(step_norm),
        "constraint_violation": constraint_violation(problem, traj, config),
        "dynamics_residual": dynamics_residual(problem, traj),
        "objective_smooth": smooth,
        "objective_lateral": lateral,
        "step_sizes": list(alphas),
        "solve_time": time.perf_counter() - t0,
    }
    return PlanResult(traj.kappa.copy(), traj.states.copy(), obj, stats, traj, warm)


def sqp_solve(problem, config=None, warm_start=None):
    """Solve the planning problem by SQP with two-level step damping.

    Parameters
    ----------
    problem : PlanProblem
    config : PlanConfig
    warm_start : array_like or PlanResult, optional
        Initial curvature sequence (length ``N``).  Defaults to
        :func:`initial_controls`.

    Returns
    -------
    PlanResult
        ``stats["converged"]`` is false when the iteration limit is reached
        or no damped step decreases the objective; the best iterate is kept.
    """
    config = config or PlanConfig()
    t0 = time.perf_counter()
    kappa0, warm = _warm_controls(problem, warm_start)
    traj = rollout(problem, kappa0)
    obj = _objective(problem, traj, config)
    qp_iters = qp_failures = 0
    converged = False
    step = np.inf
    alphas = []
    it = 0
    for it in range(1, int(config.sqp_max_iter) + 1):
        sol, kappa_qp, step = _qp_step(problem, traj, config, warm)
        qp_iters += sol.iterations
        qp_failures += sol.status != "solved"
        warm = (sol.x, sol.y)
        if step < config.sqp_tol:
            candidate = _try_rollout(problem, kappa_qp)
            if candidate is not None and _objective(problem, candidate, config) <= obj:
                traj = candidate
                obj = _objective(problem, traj, config)
            converged = True
            alphas.append(1.0)
            break
        accepted = False
        for alpha in (1.0, 0.5):
            candidate = _try_rollout(problem, traj.kappa + alpha * (kappa_qp - traj.kappa))
            if candidate is None:
                continue
            cand_obj = _objective(problem, candidate, config)
            if cand_obj <= obj:
                traj, obj = candidate, cand_obj
                alphas.append(alpha)
                accepted = True
                break
        if not accepted:
            logger.debug("SQP stalled at iteration %d (step %.3g)", it, step)
            break
    return _result(problem, traj, config, sqp_iters=it, qp_iters=qp_iters,
                   qp_failures=qp_failures, converged=converged, t0=t0, step_norm=step,
                   warm=warm, alphas=alphas)


def rti_step(problem, config=None, warm_start=None):
    """Real-time iteration: exactly one QP around the warm-started iterate.

    The full QP step is applied to the curvature sequence and rolled out; if
    that rollout leaves the model domain the half step is used instead, and
    the warm start itself as a last resort.
    """
    config = config or PlanConfig()
    t0 = time.perf_counter()
    kappa0, warm = _warm_controls(problem, warm_start)
    traj = rollout(problem, kappa0)
    sol, kappa_qp, step = _qp_step(problem, traj, config, warm)
    alphas = []
    for alpha in (1.0, 0.5):
        candidate = _try_rollout(problem, traj.kappa + alpha * (kappa_qp - traj.kappa))
        if candidate is not None:
            traj = candidate
            alphas.append(alpha)
            break
    return _result(problem, traj, config, sqp_iters=1, qp_iters=sol.iterations,
                   qp_failures=int(sol.status != "solved"), converged=step < config.sqp_tol,
                   t0=t0, step_norm=step, warm=(sol.x, sol.y), alphas=alphas)


def _warm_controls(problem, warm_start):
    if warm_start is None:
        return initial_controls(problem), None
    if isinstance(warm_start, PlanResult):
        return warm_start.kappa.copy(), warm_start.qp_warm
    kappa = np.asarray(warm_start, dtype=float)
    if kappa.shape != (problem.N,):
        raise ValidationError(f"warm start needs {problem.N} controls, got {kappa.shape}")
    return kappa.copy(), None


def plan(problem, config=None, warm_start=None):
    """Dispatch to :func:`sqp_solve` or :func:`rti_step` according to ``config.mode``."""
    config = config or PlanConfig()
    solver = sqp_solve if config.mode == "sqp" else rti_step
    return solver(problem, config, warm_start)


# ---------------------------------------------------------------------------
# Receding horizon


@dataclass(frozen=True, eq=False)
class DriveResult:
    """Driven trajectory plus one stats record per replanning step."""

    trajectory: Trajectory
    steps: list
    config: PlanConfig

    def summary(self):
        """Deterministic aggregate statistics (no wall-clock quantities)."""
        iters = [st["sqp_iters"] for st in self.steps]
        return {
            "mode": self.config.mode,
            "objective": self.config.objective,
            "replans": len(self.steps),
            "sqp_iters_total": int(sum(iters)),
            "sqp_iters_max": int(max(iters, default=0)),
            "qp_solves": int(sum(iters)),
            "qp_iters_total": int(sum(st["qp_iters"] for st in self.steps)),
            "qp_max_iter_hits": int(sum(st["qp_max_iter_hits"] for st in self.steps)),
            "all_converged": all(st["converged"] for st in self.steps),
            "not_converged_steps": [st["window_start"] for st in self.steps
                                    if not st["converged"]],
            "max_constraint_violation": max((st["constraint_violation"] for st in self.steps),
                                            default=0.0),
            "driven_length_m": float(self.trajectory.s[-1] - self.trajectory.s[0]),
        }

    def timing(self):
        times = np.array([st["solve_time"] for st in self.steps])
        return {
            "mode": self.config.mode,
            "mean_solve_s": float(times.mean()) if times.size else 0.0,
            "max_solve_s": float(times.max()) if times.size else 0.0,
            "solve_times_s": times.tolist(),
        }


def receding_horizon_run(road, z0, params, config=None, *, geometry=None, k_values=None,
                         kappa_start=None, start_index=0, callback=None):
    """Plan, execute the first ``execute_m`` meters, shift and replan.

    The loop stops once fewer than ``horizon_m`` meters of road remain ahead.
    Each plan is warm-started from the shifted previous plan (RTI mode
    requires it; SQP benefits from it).  Errors are re-raised with the window
    start index attached to the message.

    Parameters
    ----------
    road : RoadPath
    z0 : array_like or None
        Initial state at ``start_index``; ``None`` starts on the centerline
        with zero heading error and joint angle equal to zero.
    params : BusParams or TractorTrailerParams
    config : PlanConfig
    geometry, k_values : optional precomputed road geometry and K weights.
    kappa_start : float, optional
        Curvature applied before the start; defaults to the road curvature
        there clipped to ``kappa_max``.
    """
    config = config or PlanConfig()
    if abs(config.delta_s - road.delta_s) > _GRID_TOL:
        raise ValidationError(f"config delta_s={config.delta_s} differs from road grid "
                              f"{road.delta_s}")
    N, n_exec = config.N, config.n_execute
    if road.N - start_index < N:
        raise ValidationError(f"road ({road.length} m) shorter than the planning horizon")
    geometry = geometry or RoadGeometry(road)
    if k_values is None:
        k_values = make_k_schedule(road, params).values
    z = initial_state(geometry, start_index, params) if z0 is None \
        else check_state(z0, params.state_size, "z0")
    if kappa_start is None:
        kappa_start = float(np.clip(road.kappa[start_index], -params.kappa_max,
                                    params.kappa_max))
    i0 = start_index
    driven = None
    steps = []
    prev = None
    while i0 + N <= road.N:
        try:
            problem = make_problem(geometry, i0, N, z, kappa_start, k_values, params)
            warm = None
            if prev is not None:
                warm = shift_controls(prev.kappa, n_exec, N)
            result = plan(problem, config, warm)
        except HdvPlanError as exc:
            raise type(exc)(f"window starting at sample {i0}: {exc}",
                            *_error_extra(exc)) from exc
        stats = dict(result.stats, window_start=i0)
        steps.append(stats)
        executed = simulate(geometry, z, result.kappa[:n_exec], params, i0)
        driven = executed if driven is None else driven.concat(executed)
        if callback is not None:
            callback(i0, result)
        z = executed.states[-1]
        kappa_start = float(result.kappa[n_exec - 1])
        prev = result
        i0 += n_exec
    return DriveResult(driven, steps, config)


def _error_extra(exc):
    if isinstance(exc, (InfeasibleDetected,)):
        return (exc.solution,)
    for attr in ("index", "step"):
        if hasattr(exc, attr):
            return (getattr(exc, attr),)
    return ()


def with_mode(config, mode):
    return replace(config, mode=mode)
