"""Closed-loop scenario engine.

Signal flow per sample ``t_k``::

    ref -> controller -> soft saturation (v_s) -> allocator (u = theta^T v_s)
        -> actuator limits -> plant, with B Lambda u fed back to the allocator

The controller, soft saturation and actuator limiter update at sample
boundaries and are held over the step; plant, allocator and the controller
integrator are integrated with fixed-step RK4.

The controller is an LQR-designed PI law on ``(p, q, r)`` with extra
feedback from ``alpha`` and ``beta``.  It is a stand-in for whatever flight
controller sits upstream of the allocator; the allocator and projection do
not depend on it.
"""
import csv
import io
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_are

from .allocator import (CONVENTIONAL, MODIFIED, AllocatorConfig,
                        allocation_command, ideal_theta, initial_theta,
                        project, pseudo_inverse_weights, regressor,
                        size_bounds)
from .exceptions import IntegrationFault, ValidationError
from .plant import (ADMIRE_FAULT_LEVEL, ADMIRE_FAULT_TIME, ActuatorBankState,
                    EffectivenessSchedule, achieved_virtual, admire_model,
                    apply_actuator_limits, lambda_at)

__all__ = [
    "Pulse",
    "ReferenceSignal",
    "ControllerGains",
    "SimSettings",
    "Scenario",
    "Trajectory",
    "controller",
    "lqr_gains",
    "soft_saturate",
    "rk4_step",
    "build_scenario",
    "run_scenario",
    "metrics",
    "format_metrics",
    "CASES",
]

DEG = math.pi / 180.0
CHANNELS = ("p", "q", "r")

# LQR weights on (alpha, beta, p, q, r), on the rate-error integrals, and on v
DEFAULT_STATE_WEIGHTS = (20.0, 2.0, 10.0, 2.0, 2.0)
DEFAULT_INTEGRAL_WEIGHTS = (100.0, 200.0, 100.0)
DEFAULT_INPUT_WEIGHTS = (1.0, 1.0, 10.0)

# case -> (projection kind, rate limiting enabled)
CASES = {
    "I": (CONVENTIONAL, False),
    "II": (CONVENTIONAL, True),
    "III": (MODIFIED, True),
}


@dataclass(frozen=True)
class Pulse:
    """Constant ``amplitude`` (rad/s) on ``[start, start + duration)``."""

    channel: int
    amplitude: float
    start: float
    duration: float

    @property
    def end(self):
        return self.start + self.duration


@dataclass(frozen=True)
class ReferenceSignal:
    """Pulse-train references for the roll, pitch and yaw rates."""

    pulses: tuple
    duration: float

    def __post_init__(self):
        pulses = tuple(p if isinstance(p, Pulse) else Pulse(*p)
                       for p in self.pulses)
        for p in pulses:
            if p.channel not in (0, 1, 2):
                raise ValidationError(f"pulse channel must be 0..2: {p}")
            if p.start < 0 or p.duration <= 0:
                raise ValidationError(f"pulse times must be nonnegative: {p}")
        for ch in range(3):
            own = sorted((p for p in pulses if p.channel == ch),
                         key=lambda p: p.start)
            for a, b in zip(own, own[1:]):
                if b.start < a.end:
                    raise ValidationError(
                        f"overlapping pulses on channel {CHANNELS[ch]}")
        if self.duration <= 0:
            raise ValidationError("reference duration must be positive")
        object.__setattr__(self, "pulses", pulses)

    @classmethod
    def doublets(cls, duration=15.0):
        """Roll doublet of +-10 deg/s on [1, 5] s, pitch doublet of
        +-5 deg/s on [8, 12] s, zero yaw-rate command."""
        return cls((
            Pulse(0, 10 * DEG, 1.0, 2.0), Pulse(0, -10 * DEG, 3.0, 2.0),
            Pulse(1, 5 * DEG, 8.0, 2.0), Pulse(1, -5 * DEG, 10.0, 2.0),
        ), duration)

    def __call__(self, t):
        out = np.zeros(3)
        for p in self.pulses:
            if p.start <= t < p.end:
                out[p.channel] += p.amplitude
        return out


@dataclass(frozen=True, eq=False)
class ControllerGains:
    """Gains of ``v = K_y (b ref - y) + K_i * integral - K_x x``.

    ``k_y`` and ``k_i`` are ``r x r``; ``k_x`` is ``r x n`` and acts on the
    full plant state (its columns for the measured outputs are normally
    zero, that part lives in ``k_y``).  ``setpoint_weight`` is ``b``; with
    the default ``b = 0`` a reference step enters only through the
    integrator, so ``v`` has no jump for the soft saturation to clip.
    """

    k_y: np.ndarray
    k_i: np.ndarray
    k_x: np.ndarray
    setpoint_weight: float = 0.0

    def __post_init__(self):
        for name in ("k_y", "k_i", "k_x"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 2 or not np.all(np.isfinite(a)):
                raise ValidationError(
                    f"controller gain {name} must be a finite matrix")
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        r = self.k_y.shape[0]
        if self.k_y.shape != (r, r) or self.k_i.shape != (r, r):
            raise ValidationError("k_y and k_i must be r x r")
        if self.k_x.shape[0] != r:
            raise ValidationError("k_x must have r rows")
        if not 0.0 <= self.setpoint_weight <= 1.0:
            raise ValidationError("setpoint_weight must be in [0, 1]")

    @classmethod
    def diagonal(cls, k_y, k_i, n, setpoint_weight=1.0):
        """Decoupled PI gains without auxiliary state feedback."""
        k_y = np.diag(np.asarray(k_y, dtype=float))
        return cls(k_y, np.diag(np.asarray(k_i, dtype=float)),
                   np.zeros((k_y.shape[0], n)), setpoint_weight)


def lqr_gains(model, state_weights=DEFAULT_STATE_WEIGHTS,
              integral_weights=DEFAULT_INTEGRAL_WEIGHTS,
              input_weights=DEFAULT_INPUT_WEIGHTS, setpoint_weight=0.0):
    """LQR design with integral action on the nominal plant.

    The plant is taken as ``x' = A x + B_v v`` (perfect allocation) with the
    last ``r`` states measured, augmented with ``z' = ref - y``.  The state
    gain is split so that its output part multiplies ``ref - y``.
    """
    n, r = model.n, model.r
    C = np.zeros((r, n))
    C[:, n - r:] = np.eye(r)
    A_aug = np.block([[model.A, np.zeros((n, r))], [-C, np.zeros((r, r))]])
    B_aug = np.vstack([model.B_v, np.zeros((r, r))])
    Qw = np.diag(np.concatenate([np.asarray(state_weights, dtype=float),
                                 np.asarray(integral_weights, dtype=float)]))
    Rw = np.diag(np.asarray(input_weights, dtype=float))
    if Qw.shape != (n + r, n + r) or Rw.shape != (r, r):
        raise ValidationError("LQR weight vectors have the wrong length")
    S = solve_continuous_are(A_aug, B_aug, Qw, Rw)
    K = np.linalg.solve(Rw, B_aug.T @ S)
    k_x = K[:, :n].copy()
    k_y = k_x[:, n - r:].copy()
    k_x[:, n - r:] = 0.0
    return ControllerGains(k_y=k_y, k_i=-K[:, n:], k_x=k_x,
                           setpoint_weight=setpoint_weight)


def controller(y, ref, integral, gains, x=None):
    """Total control input ``v = K_y (b ref - y) + K_i * integral - K_x x``.

    ``integral`` is the running integral of ``ref - y``; ``x`` is the full
    plant state and may be omitted when ``K_x`` is zero.
    """
    err = (gains.setpoint_weight * np.asarray(ref, dtype=float)
           - np.asarray(y, dtype=float))
    v = gains.k_y @ err + gains.k_i @ np.asarray(integral, dtype=float)
    if x is not None:
        v = v - gains.k_x @ np.asarray(x, dtype=float)
    return v


def soft_saturate(v, prev_vs, dt, M, L):
    """Smooth magnitude limit ``M tanh(v / M)`` followed by a rate clamp.

    Guarantees ``|v_s| <= M`` and ``|v_s - prev_vs| <= L dt`` provided
    ``|prev_vs| <= M``.
    """
    M = np.asarray(M, dtype=float)
    L = np.asarray(L, dtype=float)
    if dt <= 0 or np.any(M <= 0) or np.any(L <= 0):
        raise ValidationError("need dt > 0 and positive M, L")
    prev = np.asarray(prev_vs, dtype=float)
    shaped = M * np.tanh(np.asarray(v, dtype=float) / M)
    return np.clip(shaped, prev - L * dt, prev + L * dt)


def rk4_step(derivative_fn, y, t, dt):
    """One classical fourth-order Runge-Kutta step of ``y' = f(t, y)``.

    Raises
    ------
    IntegrationFault
        If any stage derivative is not finite.
    """
    # overflow shows up as non-finite stages and is reported below
    with np.errstate(over="ignore", invalid="ignore"):
        k1 = derivative_fn(t, y)
        k2 = derivative_fn(t + 0.5 * dt, y + 0.5 * dt * k1)
        k3 = derivative_fn(t + 0.5 * dt, y + 0.5 * dt * k2)
        k4 = derivative_fn(t + dt, y + dt * k3)
    if not (np.all(np.isfinite(k1)) and np.all(np.isfinite(k2))
            and np.all(np.isfinite(k3)) and np.all(np.isfinite(k4))):
        raise IntegrationFault("non-finite derivative", t)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass(frozen=True)
class SimSettings:
    """Tunable numbers from which a :class:`Scenario` is built.

    The defaults are the documented benchmark configuration; none of these
    values come from a reference controller.  ``gains`` overrides the LQR
    design from the three weight vectors when given.
    """

    dt: float = 1e-3
    duration: float = 15.0
    gamma: float = 400.0
    a_m: float = -5.0
    q: float = 1.0
    M: tuple = (0.9, 0.9, 0.13)
    L: tuple = (0.9, 0.9, 0.13)
    theta_safety: float = 0.95
    rate_safety: float = 0.95
    tol_fraction: float = 0.05
    bound_weighting: str = "pseudo_inverse"
    fault_time: float = ADMIRE_FAULT_TIME
    fault_level: tuple = (ADMIRE_FAULT_LEVEL,) * 4
    state_weights: tuple = DEFAULT_STATE_WEIGHTS
    integral_weights: tuple = DEFAULT_INTEGRAL_WEIGHTS
    input_weights: tuple = DEFAULT_INPUT_WEIGHTS
    setpoint_weight: float = 0.0
    gains: ControllerGains = None
    reference: ReferenceSignal = None

    def __post_init__(self):
        if self.reference is None:
            object.__setattr__(self, "reference",
                               ReferenceSignal.doublets(self.duration))
        if self.dt <= 0 or self.duration <= 0:
            raise ValidationError("dt and duration must be positive")


@dataclass(frozen=True, eq=False)
class Scenario:
    case_id: str
    projection_kind: str
    enable_rate_limit: bool
    reference: ReferenceSignal
    schedule: EffectivenessSchedule
    dt: float
    duration: float
    allocator_config: AllocatorConfig
    M: np.ndarray
    L: np.ndarray
    gains: ControllerGains
    model: object
    limits: object
    fault_time: float = ADMIRE_FAULT_TIME

    def __post_init__(self):
        if self.case_id not in CASES:
            raise ValidationError(f"unknown case {self.case_id!r}")
        if CASES[self.case_id] != (self.projection_kind, self.enable_rate_limit):
            raise ValidationError(
                f"case {self.case_id} requires projection/rate-limit "
                f"{CASES[self.case_id]}")
        if self.allocator_config.projection_kind != self.projection_kind:
            raise ValidationError("allocator projection kind disagrees with case")
        if self.dt <= 0 or self.duration <= 0:
            raise ValidationError("dt and duration must be positive")
        steps = self.duration / self.dt
        if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
            raise ValidationError("duration must be a whole number of steps")

    @property
    def n_steps(self):
        return int(round(self.duration / self.dt))


def build_scenario(case_id, settings=None, model=None, limits=None):
    """Scenario for case ``"I"``, ``"II"`` or ``"III"`` from ``settings``."""
    if case_id not in CASES:
        raise ValidationError(f"unknown case {case_id!r}; use I, II or III")
    settings = SimSettings() if settings is None else settings
    if model is None or limits is None:
        model, limits = admire_model()
    kind, rate_on = CASES[case_id]
    gains = settings.gains
    if gains is None:
        gains = lqr_gains(model, settings.state_weights,
                          settings.integral_weights, settings.input_weights,
                          settings.setpoint_weight)
    r, m = model.r, model.m
    M = np.asarray(settings.M, dtype=float)
    L = np.asarray(settings.L, dtype=float)
    if M.shape != (r,) or L.shape != (r,):
        raise ValidationError(f"M and L need {r} entries")
    if settings.bound_weighting == "uniform":
        weights = None
    elif settings.bound_weighting == "pseudo_inverse":
        weights = pseudo_inverse_weights(model.B, M)
    else:
        raise ValidationError(
            f"unknown bound_weighting {settings.bound_weighting!r}")
    bounds = size_bounds(limits, M, L, settings.gamma, weights=weights,
                         theta_safety=settings.theta_safety,
                         rate_safety=settings.rate_safety,
                         tol_fraction=settings.tol_fraction, r=r)
    config = AllocatorConfig(
        A_m=settings.a_m * np.eye(r),
        Q=settings.q * np.eye(r),
        Gamma=np.full(r, settings.gamma),
        bounds=bounds,
        theta_init=initial_theta(model.B, bounds),
        B=model.B,
        projection_kind=kind,
    )
    schedule = EffectivenessSchedule.step_fault(
        m, settings.fault_time, np.broadcast_to(settings.fault_level, (m,)))
    return Scenario(
        case_id=case_id, projection_kind=kind, enable_rate_limit=rate_on,
        reference=settings.reference, schedule=schedule, dt=settings.dt,
        duration=settings.duration, allocator_config=config, M=M, L=L,
        gains=gains, model=model, limits=limits,
        fault_time=settings.fault_time)


@dataclass(eq=False)
class Trajectory:
    """Uniformly sampled closed-loop record, one row per sample."""

    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    xi_m: np.ndarray
    theta: np.ndarray        # (N, r, m)
    v: np.ndarray
    v_s: np.ndarray
    u_cmd: np.ndarray
    u_app: np.ndarray
    f_max: np.ndarray
    h_max: np.ndarray
    lam: np.ndarray
    scenario: Scenario = None

    def __len__(self):
        return self.t.size

    @property
    def columns(self):
        n, r, m = self.x.shape[1], self.xi.shape[1], self.u_cmd.shape[1]
        cols = ["t"]
        cols += [f"x{i + 1}" for i in range(n)]
        cols += [f"xi{i + 1}" for i in range(r)]
        cols += [f"xim{i + 1}" for i in range(r)]
        cols += [f"th_{i + 1}_{j + 1}" for i in range(r) for j in range(m)]
        cols += [f"v{i + 1}" for i in range(r)]
        cols += [f"vs{i + 1}" for i in range(r)]
        cols += [f"ucmd{j + 1}" for j in range(m)]
        cols += [f"uapp{j + 1}" for j in range(m)]
        cols += ["f_max", "h_max"]
        return cols

    def as_array(self):
        N = len(self)
        return np.column_stack([
            self.t, self.x, self.xi, self.xi_m, self.theta.reshape(N, -1),
            self.v, self.v_s, self.u_cmd, self.u_app, self.f_max, self.h_max])

    def to_csv(self, path_or_buf):
        """Write the trajectory as CSV with full ``repr`` precision."""
        rows = self.as_array()
        own = isinstance(path_or_buf, (str, bytes)) or hasattr(
            path_or_buf, "__fspath__")
        fh = open(path_or_buf, "w", newline="") if own else path_or_buf
        try:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(self.columns)
            for row in rows:
                writer.writerow([repr(float(v)) for v in row])
        finally:
            if own:
                fh.close()

    def to_csv_string(self):
        buf = io.StringIO()
        self.to_csv(buf)
        return buf.getvalue()


def run_scenario(scenario):
    """Simulate ``scenario`` and return its :class:`Trajectory`.

    Raises
    ------
    IntegrationFault
        If the state stops being finite; the message carries the time.
    """
    sc = scenario
    model, cfg, limits = sc.model, sc.allocator_config, sc.limits
    n, r, m = model.n, model.r, model.m
    dt, N = sc.dt, sc.n_steps
    A_m, P, Bn = cfg.A_m, cfg.P, cfg.B
    gamma = cfg.Gamma[:, None]
    bounds = cfg.bounds
    A = model.A
    B_v = model.B_v

    # bundle layout: x | xi | xi_m | theta | controller integral
    sx = slice(0, n)
    sxi = slice(n, n + r)
    sxm = slice(n + r, n + 2 * r)
    sth = slice(n + 2 * r, n + 2 * r + r * m)
    sz = slice(n + 2 * r + r * m, n + 3 * r + r * m)
    y_idx = np.arange(n - r, n)      # measured outputs are the last r states

    bundle = np.zeros(n + 3 * r + r * m)
    bundle[sth] = cfg.theta_init.ravel()

    out = {
        "x": np.empty((N + 1, n)), "xi": np.empty((N + 1, r)),
        "xi_m": np.empty((N + 1, r)), "theta": np.empty((N + 1, r, m)),
        "v": np.empty((N + 1, r)), "v_s": np.empty((N + 1, r)),
        "u_cmd": np.empty((N + 1, m)), "u_app": np.empty((N + 1, m)),
        "f_max": np.empty(N + 1), "h_max": np.empty(N + 1),
        "lam": np.empty((N + 1, m)),
    }
    t_arr = np.arange(N + 1) * dt
    bank = ActuatorBankState.zeros(m)
    prev_vs = np.zeros(r)

    def derivative(_t, b, held):
        v_s, u_app, lam, ref = held
        x = b[sx]
        xi = b[sxi]
        xi_m = b[sxm]
        theta = b[sth].reshape(r, m)
        achieved = achieved_virtual(u_app, lam, model)
        d = np.empty_like(b)
        d[sx] = A @ x + B_v @ achieved
        d[sxi] = A_m @ xi + achieved - v_s
        d[sxm] = A_m @ xi_m
        Y = regressor(v_s, xi - xi_m, P, Bn)
        d[sth] = (gamma * project(theta, Y, cfg)).ravel()
        d[sz] = ref - x[y_idx]
        return d

    for k in range(N + 1):
        t = t_arr[k]
        x = bundle[sx]
        theta = bundle[sth].reshape(r, m)
        ref = sc.reference(t)
        v = controller(x[y_idx], ref, bundle[sz], sc.gains, x)
        v_s = soft_saturate(v, prev_vs, dt, sc.M, sc.L)
        u_cmd = allocation_command(theta, v_s)
        bank, u_app = apply_actuator_limits(bank, u_cmd, dt, limits,
                                            sc.enable_rate_limit)
        lam = lambda_at(t, sc.schedule)
        Y = regressor(v_s, bundle[sxi] - bundle[sxm], P, Bn)

        out["x"][k] = x
        out["xi"][k] = bundle[sxi]
        out["xi_m"][k] = bundle[sxm]
        out["theta"][k] = theta
        out["v"][k] = v
        out["v_s"][k] = v_s
        out["u_cmd"][k] = u_cmd
        out["u_app"][k] = u_app
        out["f_max"][k] = np.max(bounds.barrier_theta(theta))
        out["h_max"][k] = np.max(bounds.barrier_y(Y))
        out["lam"][k] = lam

        if not np.all(np.isfinite(bundle)) or not np.all(np.isfinite(u_cmd)):
            raise IntegrationFault("non-finite closed-loop state", t)
        if k == N:
            break
        held = (v_s, u_app, lam, ref)
        bundle = rk4_step(lambda tt, b: derivative(tt, b, held), bundle, t, dt)
        prev_vs = v_s

    return Trajectory(t=t_arr, scenario=sc, **out)


# ---------------------------------------------------------------------------
# metrics

def total_variation(series):
    """Sum of absolute increments along axis 0."""
    series = np.asarray(series, dtype=float)
    if series.shape[0] < 2:
        return np.zeros(series.shape[1:])
    return np.sum(np.abs(np.diff(series, axis=0)), axis=0)


def metrics(traj, ref=None):
    """Summary numbers for a trajectory.

    Returns a dict with

    * ``rms_error`` -- per reference pulse, RMS of ``ref - y`` over the second
      half of the pulse, with the pulse amplitude and their ratio;
    * ``max_rate_applied`` / ``max_rate_cmd`` -- ``max |du|/dt`` per actuator;
    * ``oscillation_index`` -- total variation of the applied ``u`` after the
      fault time, per actuator, and its sum;
    * ``post_fault_rms`` -- RMS norm of the rate tracking error after the
      fault time;
    * ``f_max``, ``h_max`` -- largest barrier values over the run;
    * ``e2_residual`` -- largest ``||e||^2 - 2 ||theta~||_F^2 ||Y_MAX||_F /
      lambda_min(Q)`` over the final second (<= 0 means inside the set).
    """
    if traj is None or len(traj) == 0:
        raise ValidationError("empty trajectory")
    sc = traj.scenario
    ref = sc.reference if ref is None else ref
    dt = sc.dt
    t = traj.t
    y = traj.x[:, -3:]

    pulses = []
    for p in ref.pulses:
        mid = p.start + 0.5 * p.duration
        win = (t >= mid - 1e-9) & (t < p.end - 1e-9)
        if not win.any():
            continue
        err = ref_values(ref, t[win])[:, p.channel] - y[win, p.channel]
        rms = float(np.sqrt(np.mean(err ** 2)))
        pulses.append({
            "channel": CHANNELS[p.channel], "start": p.start, "end": p.end,
            "amplitude": p.amplitude, "rms": rms,
            "ratio": rms / abs(p.amplitude),
        })

    rate_app = np.max(np.abs(np.diff(traj.u_app, axis=0)) / dt, axis=0)
    rate_cmd = np.max(np.abs(np.diff(traj.u_cmd, axis=0)) / dt, axis=0)
    after = t >= sc.fault_time
    osc = total_variation(traj.u_app[after])
    if after.any():
        post_err = ref_values(ref, t[after]) - y[after]
        post_rms = float(np.sqrt(np.mean(np.sum(post_err ** 2, axis=1))))
    else:
        post_rms = 0.0

    cfg = sc.allocator_config
    lam_min_q = float(np.min(np.linalg.eigvalsh(cfg.Q)))
    y_max_norm = float(np.linalg.norm(cfg.bounds.y_abs_max))
    final = t >= t[-1] - 1.0 - 1e-9
    e = traj.xi[final] - traj.xi_m[final]
    e2 = np.sum(e ** 2, axis=1)
    rhs = np.empty_like(e2)
    for idx, (th, lam) in enumerate(zip(traj.theta[final], traj.lam[final])):
        theta_star = ideal_theta(cfg.B, lam)
        rhs[idx] = 2.0 * np.sum((th - theta_star) ** 2) * y_max_norm / lam_min_q

    return {
        "case": sc.case_id,
        "projection": sc.projection_kind,
        "rate_limit": sc.enable_rate_limit,
        "samples": len(traj),
        "pulses": pulses,
        "max_rate_applied": rate_app,
        "max_rate_cmd": rate_cmd,
        "rate_limit_value": sc.limits.rate_max.copy(),
        "oscillation_index": osc,
        "oscillation_total": float(np.sum(osc)),
        "post_fault_rms": post_rms,
        "f_max": float(np.max(traj.f_max)),
        "h_max": float(np.max(traj.h_max)),
        "e2_residual": float(np.max(e2 - rhs)),
        "u_cmd_min": traj.u_cmd.min(axis=0),
        "u_cmd_max": traj.u_cmd.max(axis=0),
        "u_app_min": traj.u_app.min(axis=0),
        "u_app_max": traj.u_app.max(axis=0),
    }


def ref_values(ref, times):
    return np.array([ref(tt) for tt in times]).reshape(len(times), 3)


def _fmt(v):
    if isinstance(v, np.ndarray):
        return " ".join(repr(float(a)) for a in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def format_metrics(result):
    """Render :func:`metrics` output as ``key = value`` lines."""
    lines = []
    for key, val in result.items():
        if key == "pulses":
            for i, p in enumerate(val):
                lines.append(
                    f"pulse.{i}.{p['channel']} = start {p['start']!r} "
                    f"end {p['end']!r} amplitude {p['amplitude']!r} "
                    f"rms {p['rms']!r} ratio {p['ratio']!r}")
        else:
            lines.append(f"{key} = {_fmt(val)}")
    return "\n".join(lines) + "\n"
