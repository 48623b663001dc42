"""Command-line interface: ``hdvplan {tune,plan,drive,envelope,compare}``.

Settings come from an optional JSON config document; command-line flags
override its keys.  Exit codes: 0 success, 1 input/usage/I-O errors,
2 infeasible geometry, 3 solver non-convergence (outputs are still written).
Log verbosity is taken from the ``HDVPLAN_LOG`` environment variable.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .envelope import DEFAULT_MARGIN, DEFAULT_SPACING, envelope_report, swept_envelope
from .exceptions import (GeometryInfeasible, HdvPlanError, InfeasibleDetected, NoConvergence,
                         ParseError, ValidationError)
from .io import (TRAJECTORY_COLUMNS, dump_json, read_csv_table, render_svg,
                 write_envelope_csv, write_trajectory_csv)
from .planner import PlanConfig, make_problem, plan, receding_horizon_run
from .road import RoadGeometry, load_road_file
from .tuning import KAPPA_STRAIGHT, K_DEFAULT, k_schedule, optimal_K
from .vehicle import PRESETS, Trajectory, initial_state, params_from_dict, params_to_dict

logger = logging.getLogger("hdvplan")

EXIT_OK = 0
EXIT_IO = 1
EXIT_INFEASIBLE = 2
EXIT_NO_CONVERGENCE = 3

LOG_ENV = "HDVPLAN_LOG"

_PLAN_FIELDS = {f.name for f in fields(PlanConfig)}
_EXTRA_KEYS = {"road", "vehicle", "output_dir", "margin_m", "spacing", "svg", "radius",
               "start", "e_y", "e_psi", "beta1", "kappa_start", "timing_out"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_IO, f"{self.prog}: error: {message}\n")


class _Failure(Exception):
    def __init__(self, code, message):
        super().__init__(message)
        self.code = code


def _add_common(p, *, road=True, out=True, planning=False):
    p.add_argument("--config", help="JSON config document; flags override its keys")
    if road:
        p.add_argument("--road", help="road file (.csv or .json)")
    p.add_argument("--vehicle", help="preset name (bus, tt) or path to a JSON params file")
    if out:
        p.add_argument("--output-dir", dest="output_dir", help="directory for output files")
    if planning:
        g = p.add_argument_group("planner")
        g.add_argument("--horizon-m", dest="horizon_m", type=float)
        g.add_argument("--execute-m", dest="execute_m", type=float)
        g.add_argument("--omega-kappa", dest="omega_kappa", type=float)
        g.add_argument("--mode", choices=["sqp", "rti"])
        g.add_argument("--objective", choices=["tuned", "rear_axle"])
        g.add_argument("--sqp-tol", dest="sqp_tol", type=float)
        g.add_argument("--sqp-max-iter", dest="sqp_max_iter", type=int)
        g.add_argument("--eps-abs", dest="eps_abs", type=float)
        g.add_argument("--eps-rel", dest="eps_rel", type=float)
        g.add_argument("--qp-max-iter", dest="qp_max_iter", type=int)
        p.add_argument("--svg", action="store_const", const=True, default=None,
                       help="also write plot.svg")


def _add_envelope_opts(p):
    p.add_argument("--margin-m", dest="margin_m", type=float,
                   help=f"steady-interior margin (default {DEFAULT_MARGIN} m)")
    p.add_argument("--spacing", type=float,
                   help=f"outline sampling spacing (default {DEFAULT_SPACING} m)")


def build_parser():
    parser = _Parser(prog="hdvplan", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("tune", help="balanced geometric solution and weight K")
    _add_common(p)
    p.add_argument("--radius", type=float, help="road radius in m (inf for a straight road)")

    p = sub.add_parser("plan", help="solve one planning horizon")
    _add_common(p, planning=True)
    p.add_argument("--start", type=int, help="first road sample of the horizon")
    p.add_argument("--e-y", dest="e_y", type=float)
    p.add_argument("--e-psi", dest="e_psi", type=float)
    p.add_argument("--beta1", type=float)
    p.add_argument("--kappa-start", dest="kappa_start", type=float)

    p = sub.add_parser("drive", help="receding-horizon drive plus swept envelope")
    _add_common(p, planning=True)
    _add_envelope_opts(p)
    p.add_argument("--timing-out", dest="timing_out",
                   help="write wall-clock solve times to this JSON file")

    p = sub.add_parser("envelope", help="swept envelope of a trajectory CSV")
    _add_common(p)
    _add_envelope_opts(p)
    p.add_argument("--trajectory", required=True, help="trajectory CSV written by drive/plan")
    p.add_argument("--svg", action="store_const", const=True, default=None)

    p = sub.add_parser("compare", help="rear-axle baseline versus tuned objective")
    _add_common(p, planning=True)
    _add_envelope_opts(p)
    return parser


# ---------------------------------------------------------------------------
# Settings


def _load_config(path):
    if path is None:
        return {}
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot read config {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise _Failure(EXIT_IO, f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise _Failure(EXIT_IO, f"config {path} must be a JSON object")
    unknown = set(doc) - _PLAN_FIELDS - _EXTRA_KEYS
    if unknown:
        raise _Failure(EXIT_IO, f"unknown config keys: {sorted(unknown)}")
    return doc


def _settings(args):
    cfg = _load_config(getattr(args, "config", None))
    for key, value in vars(args).items():
        if key in ("config", "command") or value is None:
            continue
        cfg[key] = value
    return cfg


def _vehicle(cfg):
    choice = cfg.get("vehicle", "bus")
    if isinstance(choice, dict):
        return params_from_dict(choice)
    if choice in PRESETS:
        return PRESETS[choice]
    path = Path(choice)
    if not path.exists():
        raise _Failure(EXIT_IO, f"unknown vehicle preset or missing file: {choice}")
    try:
        return params_from_dict(json.loads(path.read_text(encoding="utf-8")))
    except json.JSONDecodeError as exc:
        raise _Failure(EXIT_IO, f"vehicle file {choice} is not valid JSON: {exc}") from None


def _road(cfg):
    path = cfg.get("road")
    if path is None:
        raise _Failure(EXIT_IO, "a road file is required (--road)")
    if not Path(path).is_file():
        raise _Failure(EXIT_IO, f"road file not found: {path}")
    return load_road_file(path)


def _plan_config(cfg, road):
    doc = {k: cfg[k] for k in _PLAN_FIELDS if k in cfg}
    if "delta_s" in doc and abs(doc["delta_s"] - road.delta_s) > 1e-9:
        raise _Failure(EXIT_IO, f"config delta_s={doc['delta_s']} differs from road grid "
                                f"{road.delta_s}")
    doc["delta_s"] = road.delta_s
    return PlanConfig.from_dict(doc)


def _output_dir(cfg):
    out = Path(cfg.get("output_dir", "."))
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise _Failure(EXIT_IO, f"cannot create output directory {out}: {exc.strerror}") \
            from None
    return out


def _deterministic_steps(steps):
    return [{k: v for k, v in st.items() if k != "solve_time"} for st in steps]


# ---------------------------------------------------------------------------
# Commands


def cmd_tune(cfg):
    params = _vehicle(cfg)
    if "radius" in cfg:
        radius = float(cfg["radius"])
        if math.isinf(radius) or radius == 0.0:
            doc = {"kind": params.kind, "K": K_DEFAULT, "straight": True,
                   "note": f"straight road: default weight K={K_DEFAULT}"}
        else:
            doc = optimal_K(radius, params).to_dict()
            doc["straight"] = False
    elif "road" in cfg:
        road = _road(cfg)
        sched = k_schedule(road, params)
        solutions = []
        for kappa in sorted(set(float(k) for k in road.kappa if abs(k) >= KAPPA_STRAIGHT)):
            solutions.append(optimal_K(1.0 / kappa, params).to_dict())
        doc = {"kind": params.kind, "k_default": K_DEFAULT, "kappa_straight": KAPPA_STRAIGHT,
               "straight_samples": int(np.sum(np.abs(road.kappa) < KAPPA_STRAIGHT)),
               "k_min": float(sched.values.min()), "k_max": float(sched.values.max()),
               "solutions": solutions}
        if not solutions:
            doc["note"] = f"straight road: default weight K={K_DEFAULT}"
    else:
        raise _Failure(EXIT_IO, "tune needs --radius or --road")
    doc["vehicle"] = params_to_dict(params)
    text = dump_json(doc)
    if "output_dir" in cfg:
        (_output_dir(cfg) / "tune.json").write_text(text, encoding="utf-8")
    sys.stdout.write(text)
    return EXIT_OK


def cmd_plan(cfg):
    params = _vehicle(cfg)
    road = _road(cfg)
    config = _plan_config(cfg, road)
    out = _output_dir(cfg)
    geometry = RoadGeometry(road)
    start = int(cfg.get("start", 0))
    z0 = initial_state(geometry, start, params, cfg.get("e_y", 0.0), cfg.get("e_psi", 0.0),
                       cfg.get("beta1", 0.0))
    kappa_start = cfg.get("kappa_start",
                          float(np.clip(road.kappa[start], -params.kappa_max, params.kappa_max)))
    problem = make_problem(geometry, start, config.N, z0, kappa_start,
                           k_schedule(road, params), params)
    result = plan(problem, config)
    write_trajectory_csv(result.trajectory, out / "trajectory.csv")
    stats = {k: v for k, v in result.stats.items() if k != "solve_time"}
    stats.update(mode=config.mode, objective_value=result.objective, config=config.to_dict())
    dump_json(stats, out / "stats.json")
    if cfg.get("svg"):
        (out / "plot.svg").write_text(render_svg(geometry, result.trajectory), encoding="utf-8")
    print(f"plan [{config.mode}] objective={result.objective:.6g} "
          f"sqp_iters={result.stats['sqp_iters']} converged={result.converged} "
          f"solve_time={result.stats['solve_time']:.3f}s")
    if _failed(result.stats, config):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def _failed(stats, config):
    if stats.get("qp_max_iter_hits", 0):
        return True
    return config.mode == "sqp" and not stats.get("converged", stats.get("all_converged"))


def _drive_and_write(cfg, params, road, geometry, config, out):
    result = receding_horizon_run(road, None, params, config, geometry=geometry)
    envelope = swept_envelope(road, geometry, result.trajectory, params,
                              cfg.get("spacing", DEFAULT_SPACING))
    metrics = envelope_report(envelope, road, params, cfg.get("margin_m", DEFAULT_MARGIN))
    out.mkdir(parents=True, exist_ok=True)
    write_trajectory_csv(result.trajectory, out / "trajectory.csv")
    write_envelope_csv(envelope, out / "envelope.csv")
    dump_json(metrics, out / "metrics.json")
    stats = dict(result.summary(), config=config.to_dict(),
                 steps=_deterministic_steps(result.steps))
    dump_json(stats, out / "stats.json")
    if cfg.get("svg"):
        (out / "plot.svg").write_text(render_svg(geometry, result.trajectory, envelope),
                                      encoding="utf-8")
    return result, metrics


def _summary_table(label, result, metrics):
    timing = result.timing()
    summary = result.summary()
    lines = [
        f"{label}",
        f"  mode                {summary['mode']}",
        f"  replans             {summary['replans']}",
        f"  QP solves           {summary['qp_solves']}",
        f"  mean solve time [s] {timing['mean_solve_s']:.4f}",
        f"  max solve time [s]  {timing['max_solve_s']:.4f}",
        f"  max left width [m]  {metrics['max_left_width']:.4f}",
        f"  max right width [m] {metrics['max_right_width']:.4f}",
        f"  imbalance [m]       {metrics['imbalance']:.4f}",
    ]
    if "steady_imbalance" in metrics:
        lines.append(f"  steady imbalance [m] {metrics['steady_imbalance']:.4f}")
    return "\n".join(lines)


def cmd_drive(cfg):
    params = _vehicle(cfg)
    road = _road(cfg)
    config = _plan_config(cfg, road)
    out = _output_dir(cfg)
    geometry = RoadGeometry(road)
    result, metrics = _drive_and_write(cfg, params, road, geometry, config, out)
    if cfg.get("timing_out"):
        dump_json(result.timing(), cfg["timing_out"])
    print(_summary_table(f"drive ({params.kind}, {config.objective})", result, metrics))
    summary = result.summary()
    if summary["qp_max_iter_hits"] or (config.mode == "sqp" and not summary["all_converged"]):
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def trajectory_from_csv(path, road, kind):
    """Rebuild a :class:`Trajectory` from the trajectory CSV schema."""
    table = read_csv_table(path, TRAJECTORY_COLUMNS)
    if table.shape[0] < 1:
        raise ParseError(f"{path}: no trajectory rows")
    s = table[:, 0]
    if kind == "tt":
        states = table[:, [1, 2, 3, 4]]
    else:
        states = table[:, [1, 2, 4]]
    if not np.all(np.isfinite(states)):
        raise ParseError(f"{path}: missing state values for a {kind} trajectory")
    start = int(round(s[0] / road.delta_s))
    return Trajectory(s, states, table[:-1, 5], table[:, 6:9], kind, start)


def cmd_envelope(cfg):
    params = _vehicle(cfg)
    road = _road(cfg)
    out = _output_dir(cfg)
    path = cfg["trajectory"]
    if not Path(path).is_file():
        raise _Failure(EXIT_IO, f"trajectory file not found: {path}")
    traj = trajectory_from_csv(path, road, params.kind)
    geometry = RoadGeometry(road)
    envelope = swept_envelope(road, geometry, traj, params, cfg.get("spacing", DEFAULT_SPACING))
    metrics = envelope_report(envelope, road, params, cfg.get("margin_m", DEFAULT_MARGIN))
    write_envelope_csv(envelope, out / "envelope.csv")
    dump_json(metrics, out / "metrics.json")
    if cfg.get("svg"):
        (out / "plot.svg").write_text(render_svg(geometry, traj, envelope), encoding="utf-8")
    print(f"max left {metrics['max_left_width']:.4f} m, max right "
          f"{metrics['max_right_width']:.4f} m, imbalance {metrics['imbalance']:.4f} m")
    return EXIT_OK


def cmd_compare(cfg):
    params = _vehicle(cfg)
    road = _road(cfg)
    out = _output_dir(cfg)
    geometry = RoadGeometry(road)
    base_cfg = dict(cfg, objective="rear_axle")
    tuned_cfg = dict(cfg, objective="tuned")
    runs = {}
    code = EXIT_OK
    for label, run_cfg in (("baseline", base_cfg), ("tuned", tuned_cfg)):
        config = _plan_config(run_cfg, road)
        result, metrics = _drive_and_write(run_cfg, params, road, geometry, config, out / label)
        runs[label] = metrics
        summary = result.summary()
        if summary["qp_max_iter_hits"] or (config.mode == "sqp"
                                           and not summary["all_converged"]):
            code = EXIT_NO_CONVERGENCE
        print(_summary_table(f"{label} ({params.kind})", result, metrics))
    doc = {
        "baseline": runs["baseline"],
        "tuned": runs["tuned"],
        "imbalance_delta": runs["baseline"]["imbalance"] - runs["tuned"]["imbalance"],
    }
    if "steady_imbalance" in runs["baseline"] and "steady_imbalance" in runs["tuned"]:
        doc["steady_imbalance_delta"] = (runs["baseline"]["steady_imbalance"]
                                         - runs["tuned"]["steady_imbalance"])
    dump_json(doc, out / "compare.json")
    print(f"imbalance delta (baseline - tuned): {doc['imbalance_delta']:.4f} m")
    return code


COMMANDS = {"tune": cmd_tune, "plan": cmd_plan, "drive": cmd_drive,
            "envelope": cmd_envelope, "compare": cmd_compare}


def _configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    _configure_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _settings(args)
        return COMMANDS[args.command](cfg)
    except _Failure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except GeometryInfeasible as exc:
        print(f"infeasible geometry: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (NoConvergence, InfeasibleDetected) as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    except (HdvPlanError, ValidationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
