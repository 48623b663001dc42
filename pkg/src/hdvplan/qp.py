"""Sparse convex QP solver based on the alternating direction method of multipliers.

Solves::

    minimize    0.5 x'Px + q'x
    subject to  l <= Ax <= u

with the operator-splitting scheme popularized by OSQP: Ruiz equilibration,
a cached factorization of the reduced KKT matrix ``P + sigma I + A' R A``,
over-relaxation, residual-balancing penalty updates, infeasibility
certificates and an active-set polish that recovers a high-accuracy
solution once the active set has been identified.  The polish corrects its
active-set guess for a few rounds and is also tried at regular checkpoints
where the guess has stopped changing, which ends the slow tail ADMM shows on
problems with many tight bounds.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .exceptions import InfeasibleDetected, MaxIterations, ValidationError

logger = logging.getLogger(__name__)

INF = 1e20

SOLVED = "solved"
MAX_ITER = "max_iter"
PRIMAL_INFEASIBLE = "primal_infeasible"
DUAL_INFEASIBLE = "dual_infeasible"


@dataclass
class QpSettings:
    eps_abs: float = 1e-6
    eps_rel: float = 1e-6
    max_iter: int = 4000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    scaling_iter: int = 10
    adaptive_rho: bool = True
    adaptive_rho_interval: int = 25
    adaptive_rho_tolerance: float = 5.0
    check_interval: int = 5
    eps_prim_inf: float = 1e-5
    eps_dual_inf: float = 1e-5
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine_iter: int = 5
    polish_active_rounds: int = 8
    early_polish_interval: int = 200


@dataclass(eq=False)
class QpProblem:
    """QP data; ``P`` must be symmetric positive semidefinite (full, not triangular)."""

    P: sp.csc_matrix
    q: np.ndarray
    A: sp.csc_matrix
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        self.P = sp.csc_matrix(self.P, dtype=float)
        self.A = sp.csc_matrix(self.A, dtype=float)
        self.q = np.asarray(self.q, dtype=float).ravel()
        self.l = np.maximum(np.asarray(self.l, dtype=float).ravel(), -INF)
        self.u = np.minimum(np.asarray(self.u, dtype=float).ravel(), INF)
        n = self.q.size
        m = self.l.size
        if self.P.shape != (n, n):
            raise ValidationError(f"P has shape {self.P.shape}, expected {(n, n)}")
        if self.A.shape != (m, n) or self.u.size != m:
            raise ValidationError("A, l and u dimensions disagree")
        if np.any(self.l > self.u):
            raise ValidationError("lower bound above upper bound",
                                  index=int(np.flatnonzero(self.l > self.u)[0]))

    @property
    def n(self):
        return self.q.size

    @property
    def m(self):
        return self.l.size

    def objective(self, x):
        return float(0.5 * x @ (self.P @ x) + self.q @ x)


@dataclass(eq=False)
class QpSolution:
    x: np.ndarray
    y: np.ndarray
    z: np.ndarray
    status: str
    iterations: int
    prim_res: float
    dual_res: float
    objective: float
    polished: bool = False
    rho_updates: int = 0
    info: dict = field(default_factory=dict)

    @property
    def solved(self):
        return self.status == SOLVED


def qp_residuals(problem, x, y):
    """Primal (constraint violation) and dual (stationarity) residual infinity norms."""
    Ax = problem.A @ x
    z = np.clip(Ax, problem.l, problem.u)
    prim = float(np.max(np.abs(Ax - z), initial=0.0))
    dual = float(np.max(np.abs(problem.P @ x + problem.q + problem.A.T @ y), initial=0.0))
    return prim, dual


def _inf_norm(v):
    return float(np.max(np.abs(v), initial=0.0))


def _col_inf_norms(M):
    M = sp.csc_matrix(abs(M))
    out = np.zeros(M.shape[1])
    nz = np.diff(M.indptr) > 0
    if M.nnz:
        out[nz] = np.maximum.reduceat(M.data, M.indptr[:-1][nz])
    return out


def _ruiz(problem, iters):
    """Equilibrate the KKT matrix; returns scaled data and scaling factors."""
    n, m = problem.n, problem.m
    P = problem.P.copy()
    A = problem.A.copy()
    q = problem.q.copy()
    D = np.ones(n)
    E = np.ones(m)
    for _ in range(iters):
        col = np.maximum(_col_inf_norms(P), _col_inf_norms(A)) if m else _col_inf_norms(P)
        dD = 1.0 / np.sqrt(np.clip(np.where(col < 1e-4, 1.0, col), 1e-4, 1e4))
        if m:
            row = _col_inf_norms(A.T.tocsc())
            dE = 1.0 / np.sqrt(np.clip(np.where(row < 1e-4, 1.0, row), 1e-4, 1e4))
        else:
            dE = np.ones(0)
        SD = sp.diags(dD)
        P = (SD @ P @ SD).tocsc()
        A = (sp.diags(dE) @ A @ SD).tocsc()
        q = dD * q
        D *= dD
        E *= dE
    pcol = _col_inf_norms(P)
    cost = max(float(np.mean(pcol)) if n else 0.0, _inf_norm(q))
    c = 1.0 / np.clip(cost, 1e-4, 1e4) if cost > 1e-4 else 1.0
    return P * c, q * c, A, D, E, c


class _Workspace:
    def __init__(self, problem, settings):
        self.problem = problem
        self.settings = settings
        s = settings
        P, q, A, D, E, c = _ruiz(problem, s.scaling_iter)
        self.P, self.q, self.A = P, q, A
        self.AT = A.T.tocsc()
        self.D, self.E, self.c = D, E, c
        l, u = problem.l, problem.u
        self.l = np.where(l <= -INF, -INF, E * l)
        self.u = np.where(u >= INF, INF, E * u)
        self.eq = (u - l) < 1e-12
        self.loose = (l <= -INF) & (u >= INF)
        self.rho = s.rho
        self._set_rho_vec()
        self.factor()

    def _set_rho_vec(self):
        rv = np.full(self.problem.m, self.rho)
        rv[self.eq] = 1e3 * self.rho
        rv[self.loose] = 1e-6
        self.rho_vec = rv

    def factor(self):
        n = self.problem.n
        K = self.P + self.settings.sigma * sp.identity(n, format="csc")
        if self.problem.m:
            K = K + self.AT @ sp.diags(self.rho_vec) @ self.A
        self.lu = spla.splu(sp.csc_matrix(K), permc_spec="MMD_AT_PLUS_A")

    # unscaled views
    def unscale(self, x, y, z):
        return self.D * x, self.E * y / self.c, z / self.E

    def residual_check(self, x, y, z):
        """Unscaled residuals and tolerances."""
        Dinv = 1.0 / self.D
        Einv = 1.0 / self.E
        Ax = self.A @ x
        prim = _inf_norm(Einv * (Ax - z))
        Px = self.P @ x
        ATy = self.AT @ y
        dual = _inf_norm(Dinv * (Px + self.q + ATy)) / self.c
        s = self.settings
        eps_p = s.eps_abs + s.eps_rel * max(_inf_norm(Einv * Ax), _inf_norm(Einv * z))
        eps_d = s.eps_abs + s.eps_rel * max(_inf_norm(Dinv * Px), _inf_norm(Dinv * ATy),
                                            _inf_norm(Dinv * self.q)) / self.c
        return prim, dual, eps_p, eps_d, Ax, Px, ATy

    def primal_infeasible(self, dy):
        s = self.settings
        Edy = self.E * dy
        norm = _inf_norm(Edy)
        if norm < 1e-30:
            return False
        if _inf_norm((1.0 / self.D) * (self.AT @ dy)) > s.eps_prim_inf * norm:
            return False
        pos, neg = dy > 0, dy < 0
        if np.any(pos & (self.u >= INF)) or np.any(neg & (self.l <= -INF)):
            return False
        support = float(self.u[pos] @ dy[pos] + self.l[neg] @ dy[neg])
        return support < -s.eps_prim_inf * norm

    def dual_infeasible(self, dx):
        s = self.settings
        Ddx = self.D * dx
        norm = _inf_norm(Ddx)
        if norm < 1e-30:
            return False
        if float(self.q @ dx) >= -self.c * s.eps_dual_inf * norm:
            return False
        if _inf_norm((1.0 / self.D) * (self.P @ dx)) > self.c * s.eps_dual_inf * norm:
            return False
        Adx = (1.0 / self.E) * (self.A @ dx)
        tol = s.eps_dual_inf * norm
        upper_ok = (self.u >= INF) | (Adx <= tol)
        lower_ok = (self.l <= -INF) | (Adx >= -tol)
        return bool(np.all(upper_ok & lower_ok))


def _within_tolerance(problem, x, y, settings):
    """Whether ``(x, y)`` meets the termination tolerances in unscaled units."""
    prim, dual = qp_residuals(problem, x, y)
    Ax = problem.A @ x
    eps_p = settings.eps_abs + settings.eps_rel * _inf_norm(Ax)
    eps_d = settings.eps_abs + settings.eps_rel * max(
        _inf_norm(problem.P @ x), _inf_norm(problem.A.T @ y), _inf_norm(problem.q))
    return prim <= eps_p and dual <= eps_d


def _active_guess(problem, y, z):
    """Rows the iterate treats as active: ``(lower, upper)`` boolean masks."""
    l, u = problem.l, problem.u
    eq = (u - l) < 1e-12
    low = (eq | (z - l < -y)) & (l > -INF)
    upp = ~eq & (u - z < y) & (u < INF)
    return low, upp


def _kkt_solve(problem, low, upp, settings):
    """Regularized KKT solve with rows ``low`` at ``l`` and ``upp`` at ``u``."""
    n = problem.n
    rows = np.flatnonzero(low | upp)
    b = np.where(low[rows], problem.l[rows], problem.u[rows])
    Ared = problem.A[rows]
    k = rows.size
    delta = settings.polish_delta
    K0 = sp.bmat([[problem.P, Ared.T], [Ared, None]], format="csc") if k else problem.P.tocsc()
    reg = sp.diags(np.concatenate((np.full(n, delta), np.full(k, -delta))), format="csc")
    rhs = np.concatenate((-problem.q, b))
    try:
        lu = spla.splu(sp.csc_matrix(K0 + reg))
    except RuntimeError:
        return None
    sol = lu.solve(rhs)
    for _ in range(settings.polish_refine_iter):
        sol = sol + lu.solve(rhs - K0 @ sol)
    if not np.all(np.isfinite(sol)):
        return None
    yp = np.zeros(problem.m)
    yp[rows] = sol[n:]
    return sol[:n], yp


def _polish(problem, x, y, z, settings):
    """Active-set polish seeded by the ADMM iterate.

    The guessed active set is corrected for a few rounds: rows the polished
    point violates are added, and multipliers whose sign contradicts their
    bound are released.  Returns ``(x, y)`` or ``None``.
    """
    l, u = problem.l, problem.u
    eq = (u - l) < 1e-12
    low, upp = _active_guess(problem, y, z)
    for _ in range(settings.polish_active_rounds):
        result = _kkt_solve(problem, low, upp, settings)
        if result is None:
            return None
        xp, yp = result
        Ax = problem.A @ xp
        scale = max(1.0, _inf_norm(Ax))
        below = ~low & (Ax < l - settings.eps_abs * 1e-3 * scale)
        above = ~upp & (Ax > u + settings.eps_abs * 1e-3 * scale)
        tol = 1e-9 * max(1.0, _inf_norm(yp))
        wrong = (low & ~eq & (yp > tol)) | (upp & (yp < -tol))
        if below.any() or above.any():
            low |= below
            upp |= above
        elif wrong.any():
            low &= ~wrong | eq
            upp &= ~wrong
        else:
            return xp, yp
    return None


def solve_qp(problem, settings=None, warm_start=None, raise_on_failure=True):
    """Solve a convex QP.

    Parameters
    ----------
    problem : QpProblem
    settings : QpSettings, optional
    warm_start : tuple, optional
        ``(x, y)`` primal/dual guess in unscaled units; ``y`` may be ``None``.
    raise_on_failure : bool
        Raise :class:`MaxIterations` or :class:`InfeasibleDetected` (carrying
        the solution record) instead of returning a non-solved status.

    Returns
    -------
    QpSolution
        Deterministic for identical inputs and settings.
    """
    settings = settings or QpSettings()
    ws = _Workspace(problem, settings)
    n, m = problem.n, problem.m
    if warm_start is not None:
        x0, y0 = warm_start
        x = np.asarray(x0, dtype=float) / ws.D
        y = ws.c * np.asarray(y0, dtype=float) / ws.E if y0 is not None else np.zeros(m)
        z = np.clip(ws.A @ x, ws.l, ws.u)
    else:
        x = np.zeros(n)
        y = np.zeros(m)
        z = np.zeros(m)
    s = settings
    alpha, sigma = s.alpha, s.sigma
    status = MAX_ITER
    rho_updates = 0
    it = 0
    last_guess = None
    early = None
    for it in range(1, s.max_iter + 1):
        x_prev, y_prev = x, y
        rhs = sigma * x - ws.q + ws.AT @ (ws.rho_vec * z - y)
        xt = ws.lu.solve(rhs)
        zt = ws.A @ xt
        x = alpha * xt + (1.0 - alpha) * x_prev
        zr = alpha * zt + (1.0 - alpha) * z
        z_new = np.clip(zr + y_prev / ws.rho_vec, ws.l, ws.u)
        y = y_prev + ws.rho_vec * (zr - z_new)
        z = z_new

        check = it % s.check_interval == 0 or it == s.max_iter
        adapt = s.adaptive_rho and it % s.adaptive_rho_interval == 0
        if not (check or adapt):
            continue
        prim, dual, eps_p, eps_d, Ax, Px, ATy = ws.residual_check(x, y, z)
        if prim <= eps_p and dual <= eps_d:
            status = SOLVED
            break
        if m and ws.primal_infeasible(y - y_prev):
            status = PRIMAL_INFEASIBLE
            break
        if ws.dual_infeasible(x - x_prev):
            status = DUAL_INFEASIBLE
            break
        if s.polish and m and it % s.early_polish_interval == 0:
            xu, yu, zu = ws.unscale(x, y, z)
            guess = np.concatenate(_active_guess(problem, yu, zu))
            if last_guess is not None and np.array_equal(guess, last_guess):
                result = _polish(problem, xu, yu, zu, s)
                if result is not None and _within_tolerance(problem, *result, s):
                    early = result
                    status = SOLVED
                    break
            last_guess = guess
        if adapt and m:
            p_norm = prim / max(_inf_norm((1 / ws.E) * Ax), _inf_norm((1 / ws.E) * z), 1e-10)
            d_norm = dual / max(_inf_norm((1 / ws.D) * Px) / ws.c,
                                _inf_norm((1 / ws.D) * ATy) / ws.c,
                                _inf_norm((1 / ws.D) * ws.q) / ws.c, 1e-10)
            new_rho = float(np.clip(ws.rho * np.sqrt(p_norm / max(d_norm, 1e-10)), 1e-6, 1e6))
            if new_rho > ws.rho * s.adaptive_rho_tolerance or \
                    new_rho < ws.rho / s.adaptive_rho_tolerance:
                ws.rho = new_rho
                ws._set_rho_vec()
                ws.factor()
                rho_updates += 1

    xu, yu, zu = ws.unscale(x, y, z)
    polished = False
    if early is not None:
        xu, yu = early
        zu = np.clip(problem.A @ xu, problem.l, problem.u)
        polished = True
    elif status in (SOLVED, MAX_ITER) and s.polish:
        result = _polish(problem, xu, yu, zu, s)
        if result is not None:
            xp, yp = result
            p0, d0 = qp_residuals(problem, xu, yu)
            p1, d1 = qp_residuals(problem, xp, yp)
            if max(p1, d1) <= max(p0, d0) or (p1 <= s.eps_abs and d1 <= s.eps_abs):
                xu, yu = xp, yp
                zu = np.clip(problem.A @ xu, problem.l, problem.u)
                polished = True
                if status == MAX_ITER and _within_tolerance(problem, xp, yp, s):
                    status = SOLVED
    if status == PRIMAL_INFEASIBLE:
        xu = np.full(n, np.nan)
        yu = (ws.E * (y - y_prev)) / ws.c
    elif status == DUAL_INFEASIBLE:
        xu = ws.D * (x - x_prev)
        yu = np.full(m, np.nan)
    prim, dual = qp_residuals(problem, xu, yu) if status in (SOLVED, MAX_ITER) \
        else (np.inf, np.inf)
    obj = problem.objective(xu) if status in (SOLVED, MAX_ITER) else np.nan
    if status != SOLVED:
        logger.debug("QP finished with status %s after %d iterations", status, it)
    sol = QpSolution(xu, yu, zu, status, it, prim, dual, obj, polished, rho_updates)
    if raise_on_failure and status == MAX_ITER:
        raise MaxIterations(f"QP not solved in {it} iterations "
                            f"(prim {prim:.2e}, dual {dual:.2e})", sol)
    if raise_on_failure and status in (PRIMAL_INFEASIBLE, DUAL_INFEASIBLE):
        raise InfeasibleDetected(f"QP is {status.replace('_', ' ')}", sol)
    return sol
