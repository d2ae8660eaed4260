"""Command-line interface: ``adaptalloc run | verify | sweep``.

Exit status: 0 success, 1 failed check or sweep row, 2 invalid
configuration, 3 integration fault.
"""
import argparse
import csv
import io
import itertools
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import yaml

from . import verify as vf
from .control_sim import (CASES, DEG, ControllerGains, Pulse, ReferenceSignal,
                          SimSettings, build_scenario, format_metrics,
                          metrics, run_scenario)
from .exceptions import IntegrationFault, ValidationError
from .plant import ActuatorLimits, PlantModel, admire_model
from .projection import ProjectionBounds

OUT_ENV = "ADAPTALLOC_OUT"
DEFAULT_OUT = "out"

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_FAULT = 3

# config section -> allowed keys; values are checked when applied
SCHEMA = {
    "case": None,
    "seed": None,
    "simulation": {"dt", "duration"},
    "allocator": {"gamma", "a_m", "q", "theta_safety", "rate_safety",
                  "tol_fraction", "bound_weighting"},
    "soft_saturation": {"M", "L"},
    "fault": {"time", "level"},
    "controller": {"state_weights", "integral_weights", "input_weights",
                   "setpoint_weight", "k_y", "k_i", "k_x"},
    "reference": {"pulses"},
    "plant": {"A", "B", "B_v", "u_min_deg", "u_max_deg", "rate_min_deg",
              "rate_max_deg"},
    "verify": {"sample_count", "lipschitz_pairs", "signals", "theta_lower",
               "theta_upper", "zeta", "y_lower", "y_upper", "eps"},
    "sweep": None,
}
PULSE_KEYS = {"channel", "amplitude_deg", "start", "duration"}
CHANNEL_NAMES = {"p": 0, "q": 1, "r": 2}

# sweepable settings and how a grid value maps onto SimSettings
SWEEP_KEYS = {
    "gamma": lambda v: {"gamma": float(v)},
    "a_m": lambda v: {"a_m": float(v)},
    "q": lambda v: {"q": float(v)},
    "fault_time": lambda v: {"fault_time": float(v)},
    "fault_level": lambda v: {"fault_level": (float(v),) * 4},
    "fault_magnitude": lambda v: {"fault_level": (1.0 - float(v),) * 4},
    "tol_fraction": lambda v: {"tol_fraction": float(v)},
    "setpoint_weight": lambda v: {"setpoint_weight": float(v)},
}


@dataclass
class RunConfig:
    """Everything a command needs, after parsing and type checks."""

    case: str = "III"
    settings: SimSettings = field(default_factory=SimSettings)
    model: PlantModel = None
    limits: ActuatorLimits = None
    seed: int = 0
    verify: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.model is None or self.limits is None:
            self.model, self.limits = admire_model()


# ---------------------------------------------------------------------------
# configuration

def _vector(value, name, length=None):
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        arr = np.full(length or 1, float(arr))
    if arr.ndim != 1 or (length is not None and arr.size != length):
        raise ValidationError(f"{name} must be a list of {length} numbers")
    return arr


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(f"{name} must be a number, got {value!r}")
    return float(value)


def _check_keys(section, data, allowed):
    if not isinstance(data, dict):
        raise ValidationError(f"section {section!r} must be a mapping")
    unknown = sorted(set(data) - allowed)
    if unknown:
        raise ValidationError(f"unknown key(s) in {section!r}: {unknown}")


def _parse_pulses(items):
    if not isinstance(items, list):
        raise ValidationError("reference.pulses must be a list")
    pulses = []
    for i, item in enumerate(items):
        _check_keys(f"reference.pulses[{i}]", item, PULSE_KEYS)
        missing = PULSE_KEYS - set(item)
        if missing:
            raise ValidationError(
                f"reference.pulses[{i}] is missing {sorted(missing)}")
        ch = item["channel"]
        ch = CHANNEL_NAMES.get(ch, ch)
        if ch not in (0, 1, 2):
            raise ValidationError(f"pulse channel must be p, q or r: {ch!r}")
        pulses.append(Pulse(ch,
                            _number(item["amplitude_deg"], "amplitude_deg") * DEG,
                            _number(item["start"], "start"),
                            _number(item["duration"], "duration")))
    return pulses


def _parse_plant(data):
    model0, lim0 = admire_model()
    model = PlantModel(data.get("A", model0.A), data.get("B_v", model0.B_v),
                       data.get("B", model0.B))
    m = model.m

    def lim(key, default):
        if key not in data:
            if default.size != m:
                raise ValidationError(f"plant.{key} is required when m != 4")
            return default
        return _vector(data[key], f"plant.{key}", m) * DEG
    limits = ActuatorLimits(lim("u_min_deg", lim0.u_min),
                            lim("u_max_deg", lim0.u_max),
                            lim("rate_min_deg", lim0.rate_min),
                            lim("rate_max_deg", lim0.rate_max))
    return model, limits


def load_config(source=None):
    """Build a :class:`RunConfig` from a YAML path, a mapping or nothing.

    Unknown sections or keys raise :class:`ValidationError`.
    """
    if source is None:
        data = {}
    elif isinstance(source, dict):
        data = source
    else:
        try:
            with open(source) as fh:
                data = yaml.safe_load(fh)
        except OSError as exc:
            raise ValidationError(f"cannot read config: {exc}") from exc
        except yaml.YAMLError as exc:
            raise ValidationError(f"config is not valid YAML: {exc}") from exc
        data = {} if data is None else data
    if not isinstance(data, dict):
        raise ValidationError("config must be a mapping at top level")
    unknown = sorted(set(data) - set(SCHEMA))
    if unknown:
        raise ValidationError(f"unknown config section(s): {unknown}")
    for section, allowed in SCHEMA.items():
        if allowed is not None and section in data:
            _check_keys(section, data[section], allowed)

    cfg = RunConfig()
    if "plant" in data:
        cfg.model, cfg.limits = _parse_plant(data["plant"])
    r, m = cfg.model.r, cfg.model.m
    kw = {}
    sim = data.get("simulation", {})
    for key in ("dt", "duration"):
        if key in sim:
            kw[key] = _number(sim[key], f"simulation.{key}")
    for key, val in data.get("allocator", {}).items():
        if key == "bound_weighting":
            kw[key] = str(val)
        else:
            kw[key] = _number(val, f"allocator.{key}")
    for key, val in data.get("soft_saturation", {}).items():
        kw[key] = tuple(_vector(val, f"soft_saturation.{key}", r))
    fault = data.get("fault", {})
    if "time" in fault:
        kw["fault_time"] = _number(fault["time"], "fault.time")
    if "level" in fault:
        kw["fault_level"] = tuple(_vector(fault["level"], "fault.level", m))
    elif m != 4:
        kw["fault_level"] = (kw.get("fault_level", (0.7,))[0],) * m

    ctrl = data.get("controller", {})
    explicit = {"k_y", "k_i", "k_x"} & set(ctrl)
    if explicit and explicit != {"k_y", "k_i", "k_x"}:
        raise ValidationError("controller needs all of k_y, k_i, k_x or none")
    for key in ("state_weights", "integral_weights", "input_weights"):
        if key in ctrl:
            kw[key] = tuple(_vector(ctrl[key], f"controller.{key}"))
    if "setpoint_weight" in ctrl:
        kw["setpoint_weight"] = _number(ctrl["setpoint_weight"],
                                        "controller.setpoint_weight")
    if explicit:
        kw["gains"] = ControllerGains(ctrl["k_y"], ctrl["k_i"], ctrl["k_x"],
                                      kw.get("setpoint_weight", 0.0))

    duration = kw.get("duration", SimSettings.duration)
    if "reference" in data and "pulses" in data["reference"]:
        kw["reference"] = ReferenceSignal(
            tuple(_parse_pulses(data["reference"]["pulses"])), duration)
    try:
        cfg.settings = SimSettings(**kw)
    except TypeError as exc:
        raise ValidationError(str(exc)) from exc

    if "case" in data:
        cfg.case = str(data["case"])
    if "seed" in data:
        cfg.seed = int(_number(data["seed"], "seed"))
    cfg.verify = dict(data.get("verify", {}))
    sweep = data.get("sweep", {}) or {}
    if not isinstance(sweep, dict):
        raise ValidationError("sweep must map parameter names to lists")
    cfg.sweep = {k: _sweep_values(k, v) for k, v in sweep.items()}
    return cfg


def _sweep_values(key, values):
    if key not in SWEEP_KEYS:
        raise ValidationError(
            f"cannot sweep {key!r}; choose from {sorted(SWEEP_KEYS)}")
    if not isinstance(values, list) or not values:
        raise ValidationError(f"sweep.{key} must be a non-empty list")
    return [_number(v, f"sweep.{key}") for v in values]


def _apply_overrides(cfg, args):
    kw = {}
    if getattr(args, "dt", None) is not None:
        kw["dt"] = args.dt
    if getattr(args, "duration", None) is not None:
        kw["duration"] = args.duration
        # keep the default reference when only the horizon changes
        ref = cfg.settings.reference
        kw["reference"] = ReferenceSignal(ref.pulses, args.duration)
    if kw:
        cfg.settings = replace(cfg.settings, **kw)
    if getattr(args, "case", None) is not None:
        cfg.case = args.case
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if cfg.case not in CASES:
        raise ValidationError(f"unknown case {cfg.case!r}; use I, II or III")
    return cfg


def _out_dir(args):
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        os.makedirs(out, exist_ok=True)
    except OSError as exc:
        raise ValidationError(f"cannot create output directory: {exc}") from exc
    if not os.access(out, os.W_OK):
        raise ValidationError(f"output directory {out!r} is not writable")
    return out


# ---------------------------------------------------------------------------
# commands

def simulate(case, settings, model=None, limits=None):
    """Build and run one scenario; returns ``(trajectory, metrics)``."""
    sc = build_scenario(case, settings, model, limits)
    traj = run_scenario(sc)
    return traj, metrics(traj)


def cmd_run(args):
    cfg = _apply_overrides(load_config(args.config), args)
    out = _out_dir(args)
    traj, result = simulate(cfg.case, cfg.settings, cfg.model, cfg.limits)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    with open(os.path.join(out, "metrics.txt"), "w") as fh:
        fh.write(format_metrics(result))
    print(f"case {cfg.case}: {len(traj)} samples written to {out}")
    return EXIT_OK


def _verify_bounds(cfg):
    keys = ("theta_lower", "theta_upper", "zeta", "y_lower", "y_upper", "eps")
    given = [k for k in keys if k in cfg.verify]
    if not given:
        return vf.default_bounds()
    if len(given) != len(keys):
        raise ValidationError(f"verify bounds need all of {keys}")
    return ProjectionBounds(*(cfg.verify[k] for k in keys))


def verify_report(cfg, only=None):
    """Run the checks and return ``(all_passed, report_text)``."""
    opts = cfg.verify
    reports = vf.run_all(
        _verify_bounds(cfg), seed=cfg.seed, only=only,
        sample_count=int(opts.get("sample_count", 100_000)),
        lipschitz_pairs=int(opts.get("lipschitz_pairs", 1_000_000)),
        n_signals=int(opts.get("signals", 100)))
    text = "".join(r.line() + "\n" for r in reports)
    return all(r.passed for r in reports), text


def cmd_verify(args):
    cfg = _apply_overrides(load_config(args.config), args)
    only = None
    if args.only:
        only = [name for item in args.only for name in item.split(",") if name]
    passed, text = verify_report(cfg, only)
    sys.stdout.write(text)
    if args.out is not None or os.environ.get(OUT_ENV):
        with open(os.path.join(_out_dir(args), "verify.txt"), "w") as fh:
            fh.write(text)
    return EXIT_OK if passed else EXIT_FAILED


def parse_grid(items):
    """``["gamma=20,200", "fault_level=1,0.7"]`` -> ``{"gamma": [...], ...}``."""
    grid = {}
    for item in items or []:
        key, sep, vals = item.partition("=")
        if not sep:
            raise ValidationError(f"grid entry must be key=v1,v2: {item!r}")
        try:
            values = [float(v) for v in vals.split(",") if v.strip()]
        except ValueError as exc:
            raise ValidationError(f"bad grid values in {item!r}") from exc
        grid[key.strip()] = _sweep_values(key.strip(), values)
    return grid


def _sweep_row(job):
    case, settings, model, limits = job
    try:
        _, result = simulate(case, settings, model, limits)
        return "ok", result
    except (IntegrationFault, ValidationError) as exc:
        return "error", str(exc)


SWEEP_METRICS = ("post_fault_rms", "oscillation_total", "f_max", "h_max",
                 "e2_residual", "max_tracking_ratio", "max_rate_applied")


def _sweep_columns(result):
    ratios = [p["ratio"] for p in result["pulses"]]
    return {
        "post_fault_rms": result["post_fault_rms"],
        "oscillation_total": result["oscillation_total"],
        "f_max": result["f_max"],
        "h_max": result["h_max"],
        "e2_residual": result["e2_residual"],
        "max_tracking_ratio": max(ratios) if ratios else 0.0,
        "max_rate_applied": float(np.max(result["max_rate_applied"])),
    }


def run_sweep(cfg, grid, jobs=1):
    """Run every grid point; returns ``(csv_text, n_failed)``."""
    keys = list(grid)
    points = list(itertools.product(*(grid[k] for k in keys))) if keys else [()]
    work = []
    for point in points:
        kw = {}
        for k, v in zip(keys, point):
            kw.update(SWEEP_KEYS[k](v))
        if "fault_level" in kw:
            kw["fault_level"] = kw["fault_level"][:1] * cfg.model.m
        work.append((cfg.case, replace(cfg.settings, **kw), cfg.model,
                     cfg.limits))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_row, work))
    else:
        results = [_sweep_row(w) for w in work]

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["row", "case", *keys, "status", *SWEEP_METRICS, "error"])
    failed = 0
    for i, (point, (status, res)) in enumerate(zip(points, results)):
        if status == "ok":
            cols = _sweep_columns(res)
            vals = [repr(float(cols[k])) for k in SWEEP_METRICS]
            err = ""
        else:
            failed += 1
            vals = [""] * len(SWEEP_METRICS)
            err = res
        writer.writerow([i, cfg.case, *(repr(float(v)) for v in point),
                         status, *vals, err])
    return buf.getvalue(), failed


def cmd_sweep(args):
    cfg = _apply_overrides(load_config(args.config), args)
    grid = dict(cfg.sweep)
    grid.update(parse_grid(args.grid))
    out = _out_dir(args)
    text, failed = run_sweep(cfg, grid, jobs=args.jobs)
    with open(os.path.join(out, "sweep.csv"), "w", newline="") as fh:
        fh.write(text)
    n_rows = text.count("\n") - 1
    print(f"{n_rows} sweep rows written to {out} ({failed} failed)")
    return EXIT_FAILED if failed else EXIT_OK


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(
        prog="adaptalloc",
        description="Adaptive control allocation with rate-bounded "
                    "projection: simulate, verify, sweep.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--out", help=f"output directory (default ${OUT_ENV} "
                                     f"or ./{DEFAULT_OUT})")
        p.add_argument("--seed", type=int, help="random seed")

    def sim_flags(p):
        p.add_argument("--case", choices=sorted(CASES),
                       help="I: conventional, II: conventional + rate "
                            "limits, III: modified + rate limits")
        p.add_argument("--dt", type=float, help="step size in seconds")
        p.add_argument("--duration", type=float, help="horizon in seconds")

    p_run = sub.add_parser("run", help="simulate one case")
    common(p_run)
    sim_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_ver = sub.add_parser("verify", help="run the sampled projection checks")
    common(p_ver)
    p_ver.add_argument("--only", action="append",
                       help=f"run only these checks ({', '.join(vf.CHECKS)}); "
                            "repeat or comma-separate")
    p_ver.set_defaults(func=cmd_verify)

    p_sw = sub.add_parser("sweep", help="run a parameter grid")
    common(p_sw)
    sim_flags(p_sw)
    p_sw.add_argument("--grid", action="append", metavar="KEY=V1,V2",
                      help=f"grid axis; keys: {', '.join(sorted(SWEEP_KEYS))}")
    p_sw.add_argument("--jobs", type=int, default=1,
                      help="worker processes (default 1)")
    p_sw.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except IntegrationFault as exc:
        print(f"error: integration fault at t = {exc.time:.6g} s: {exc}",
              file=sys.stderr)
        return EXIT_FAULT


if __name__ == "__main__":
    sys.exit(main())
