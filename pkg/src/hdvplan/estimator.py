"""Estimator-style wrappers around the planner and the envelope analysis.

``fit`` binds an estimator to a road (geometry reconstruction and weight
schedule are computed once); ``predict`` drives the road and ``transform``
turns a driven trajectory into its swept envelope.  Hyper-parameters live in
``__init__`` so ``get_params``/``set_params``/``clone`` work as usual.
"""
from __future__ import annotations

from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.exceptions import NotFittedError
from sklearn.utils.validation import check_is_fitted

from .envelope import DEFAULT_MARGIN, DEFAULT_SPACING, envelope_report, swept_envelope
from .exceptions import ValidationError
from .planner import PlanConfig, make_problem, plan, receding_horizon_run
from .road import RoadGeometry, RoadPath
from .tuning import KAPPA_STRAIGHT, K_DEFAULT, k_schedule
from .vehicle import CITY_BUS

__all__ = ["RoadPathPlanner", "EnvelopeTransformer", "NotFittedError"]


def _check_road(road):
    if not isinstance(road, RoadPath):
        raise ValidationError(f"expected a RoadPath, got {type(road).__name__}")
    return road


class RoadPathPlanner(BaseEstimator):
    """Receding-horizon planner bound to one road.

    Parameters
    ----------
    params : BusParams or TractorTrailerParams
    horizon_m, execute_m, omega_kappa, mode, sqp_tol, sqp_max_iter,
    eps_abs, eps_rel, qp_max_iter, objective
        Forwarded to :class:`PlanConfig`; ``delta_s`` is taken from the road.
    kappa_straight, k_default
        Weight schedule settings, see :func:`hdvplan.tuning.k_schedule`.

    Attributes
    ----------
    geometry_ : RoadGeometry
    k_schedule_ : KSchedule
    config_ : PlanConfig
    result_ : DriveResult
        Set by :meth:`predict`.
    """

    def __init__(self, params=CITY_BUS, horizon_m=100.0, execute_m=5.0, omega_kappa=100.0,
                 mode="sqp", sqp_tol=1e-6, sqp_max_iter=30, eps_abs=1e-6, eps_rel=1e-6,
                 qp_max_iter=4000, objective="tuned", kappa_straight=KAPPA_STRAIGHT,
                 k_default=K_DEFAULT):
        self.params = params
        self.horizon_m = horizon_m
        self.execute_m = execute_m
        self.omega_kappa = omega_kappa
        self.mode = mode
        self.sqp_tol = sqp_tol
        self.sqp_max_iter = sqp_max_iter
        self.eps_abs = eps_abs
        self.eps_rel = eps_rel
        self.qp_max_iter = qp_max_iter
        self.objective = objective
        self.kappa_straight = kappa_straight
        self.k_default = k_default

    def _config(self, delta_s):
        return PlanConfig(horizon_m=self.horizon_m, delta_s=delta_s, execute_m=self.execute_m,
                          omega_kappa=self.omega_kappa, mode=self.mode, sqp_tol=self.sqp_tol,
                          sqp_max_iter=self.sqp_max_iter, eps_abs=self.eps_abs,
                          eps_rel=self.eps_rel, qp_max_iter=self.qp_max_iter,
                          objective=self.objective)

    def fit(self, road, y=None):
        road = _check_road(road)
        self.config_ = self._config(road.delta_s)
        self.road_ = road
        self.geometry_ = RoadGeometry(road)
        self.k_schedule_ = k_schedule(road, self.params, self.kappa_straight, self.k_default)
        return self

    def plan(self, z_start, kappa_start=0.0, start=0, warm_start=None):
        """Single horizon plan from sample ``start``."""
        check_is_fitted(self, "geometry_")
        problem = make_problem(self.geometry_, start, self.config_.N, z_start, kappa_start,
                               self.k_schedule_, self.params)
        return plan(problem, self.config_, warm_start)

    def predict(self, z0=None, kappa_start=None):
        """Drive the fitted road; returns the driven :class:`Trajectory`."""
        check_is_fitted(self, "geometry_")
        self.result_ = receding_horizon_run(self.road_, z0, self.params, self.config_,
                                            geometry=self.geometry_,
                                            k_values=self.k_schedule_.values,
                                            kappa_start=kappa_start)
        return self.result_.trajectory


class EnvelopeTransformer(TransformerMixin, BaseEstimator):
    """Maps a driven trajectory on the fitted road to its swept envelope."""

    def __init__(self, params=CITY_BUS, spacing=DEFAULT_SPACING, margin_m=DEFAULT_MARGIN):
        self.params = params
        self.spacing = spacing
        self.margin_m = margin_m

    def fit(self, road, y=None):
        road = _check_road(road)
        self.road_ = road
        self.geometry_ = RoadGeometry(road)
        return self

    def transform(self, trajectory):
        check_is_fitted(self, "geometry_")
        return swept_envelope(self.road_, self.geometry_, trajectory, self.params, self.spacing)

    def report(self, envelope):
        check_is_fitted(self, "geometry_")
        return envelope_report(envelope, self.road_, self.params, self.margin_m)
