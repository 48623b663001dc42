"""Road-aligned path planning for buses and tractor-trailers.

The lane-centering objective trades the rear-axle lateral error against the
front-axle (bus) or trailer-axle (tractor-trailer) error with a weight that is
tuned geometrically so the swept area is balanced about the lane center.
"""
from .envelope import BodyOutline, SweptEnvelope, envelope_report, swept_envelope
from .estimator import EnvelopeTransformer, RoadPathPlanner
from .exceptions import (DomainError, GeometryInfeasible, HdvPlanError, InfeasibleDetected,
                         LinearizationFailed, MaxIterations, NoConvergence, OutOfRange,
                         ParseError, ProjectionDiverged, ValidationError)
from .planner import (PlanConfig, PlanProblem, PlanResult, build_qp, make_problem,
                      objective_eval, receding_horizon_run, rti_step, sqp_solve)
from .qp import QpProblem, QpSettings, QpSolution, solve_qp
from .road import (GlobalPose, RoadGeometry, RoadPath, RoadSample, build_road, load_road,
                   load_road_file, reconstruct_global, roundabout_road)
from .tuning import GeometricSolution, k_schedule, optimal_K
from .vehicle import (CITY_BUS, TRACTOR_TRAILER, BusParams, TractorTrailerParams, Trajectory,
                      simulate)

__version__ = "0.1.0"
