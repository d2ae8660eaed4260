"""Linear over-actuated plant, actuator bank and the ADMIRE benchmark.

The plant is ``xdot = A x + B_v B diag(lambda) u`` where ``lambda`` is the
(unknown to the allocator) actuator effectiveness.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "PlantModel",
    "EffectivenessSchedule",
    "ActuatorLimits",
    "ActuatorBankState",
    "plant_derivatives",
    "achieved_virtual",
    "apply_actuator_limits",
    "admire_model",
    "lambda_at",
    "ADMIRE_A",
    "ADMIRE_B",
    "ADMIRE_FAULT_TIME",
    "ADMIRE_FAULT_LEVEL",
]

DEG = np.pi / 180.0

# state x = [alpha, beta, p, q, r]; inputs u = [canard, right elevon,
# left elevon, rudder]
ADMIRE_A = (
    (-0.5432, 0.0137, 0.0, 0.9778, 0.0),
    (0.0, -0.1179, 0.2215, 0.0, -0.9661),
    (0.0, -10.5123, -0.9967, 0.0, 0.6176),
    (2.6221, -0.0030, 0.0, -0.5057, 0.0),
    (0.0, 0.7075, -0.0939, 0.0, -0.2127),
)
ADMIRE_B = (
    (0.0, -4.2423, 4.2423, 1.4871),
    (1.6532, -1.2735, -1.2735, 0.0024),
    (0.0, -0.2805, 0.2805, -0.8823),
)
ADMIRE_FAULT_TIME = 6.0
ADMIRE_FAULT_LEVEL = 0.7


def _matrix(a, name, ndim=2):
    a = np.array(a, dtype=float)
    if a.ndim != ndim:
        raise ValidationError(f"{name} must be {ndim}-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValidationError(f"{name} has non-finite entries")
    return a


@dataclass(frozen=True, eq=False)
class PlantModel:
    """``xdot = A x + B_v B Lambda u`` with ``rank(B) = rank(B_v) = r``."""

    A: np.ndarray
    B_v: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        A = _matrix(self.A, "A")
        B_v = _matrix(self.B_v, "B_v")
        B = _matrix(self.B, "B")
        n, r = B_v.shape
        if A.shape != (n, n):
            raise ValidationError(f"A must be {n}x{n}, got {A.shape}")
        if B.shape[0] != r:
            raise ValidationError(f"B must have {r} rows, got {B.shape}")
        if B.shape[1] < r:
            raise ValidationError("B must have at least as many columns as rows")
        if np.linalg.matrix_rank(B) != r or np.linalg.matrix_rank(B_v) != r:
            raise ValidationError("need rank(B) = rank(B_v) = r")
        for name, a in (("A", A), ("B_v", B_v), ("B", B)):
            a.setflags(write=False)
            object.__setattr__(self, name, a)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def r(self):
        return self.B.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    @property
    def B_u(self):
        return self.B_v @ self.B


@dataclass(frozen=True, eq=False)
class EffectivenessSchedule:
    """Piecewise-constant actuator effectiveness.

    ``segments`` is a sequence of ``(start_time, lambda_diag)`` pairs with
    strictly increasing start times, the first at ``t = 0``.  A segment is
    active from its start time inclusive.
    """

    segments: tuple

    def __post_init__(self):
        segs = []
        for start, lam in self.segments:
            lam = np.array(lam, dtype=float).ravel()
            if not np.all(lam > 0):
                raise ValidationError("effectiveness entries must be positive")
            lam.setflags(write=False)
            segs.append((float(start), lam))
        if not segs:
            raise ValidationError("schedule needs at least one segment")
        if segs[0][0] != 0.0:
            raise ValidationError("first segment must start at t = 0")
        starts = [s for s, _ in segs]
        if any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValidationError("segment start times must strictly increase")
        if len({lam.size for _, lam in segs}) != 1:
            raise ValidationError("all segments need the same actuator count")
        object.__setattr__(self, "segments", tuple(segs))

    @classmethod
    def step_fault(cls, m, fault_time=ADMIRE_FAULT_TIME,
                   level=ADMIRE_FAULT_LEVEL):
        """Nominal effectiveness, then ``level`` on every actuator."""
        level = np.broadcast_to(np.asarray(level, dtype=float), (m,))
        if fault_time <= 0:
            return cls(((0.0, level),))
        return cls(((0.0, np.ones(m)), (fault_time, level)))

    @classmethod
    def nominal(cls, m):
        return cls(((0.0, np.ones(m)),))

    @property
    def m(self):
        return self.segments[0][1].size


def lambda_at(t, schedule):
    """Diagonal of the effectiveness matrix active at time ``t``."""
    if t < 0:
        raise ValidationError(f"time must be nonnegative, got {t}")
    active = schedule.segments[0][1]
    for start, lam in schedule.segments:
        if t >= start:
            active = lam
        else:
            break
    return active.copy()


@dataclass(frozen=True, eq=False)
class ActuatorLimits:
    """Per-actuator magnitude (rad) and rate (rad/s) limits."""

    u_min: np.ndarray
    u_max: np.ndarray
    rate_min: np.ndarray
    rate_max: np.ndarray

    def __post_init__(self):
        vals = {}
        for name in ("u_min", "u_max", "rate_min", "rate_max"):
            a = _matrix(getattr(self, name), name, ndim=1)
            a.setflags(write=False)
            vals[name] = a
        if len({a.size for a in vals.values()}) != 1:
            raise ValidationError("limit vectors must have equal length")
        if not (np.all(vals["u_min"] < 0) and np.all(vals["u_max"] > 0)):
            raise ValidationError("need u_min < 0 < u_max")
        if not (np.all(vals["rate_min"] < 0) and np.all(vals["rate_max"] > 0)):
            raise ValidationError("need rate_min < 0 < rate_max")
        for name, a in vals.items():
            object.__setattr__(self, name, a)

    @property
    def m(self):
        return self.u_min.size

    @property
    def magnitude(self):
        """Largest symmetric magnitude limit, ``min(|u_min|, u_max)``."""
        return np.minimum(-self.u_min, self.u_max)

    @property
    def rate(self):
        """Largest symmetric rate limit, ``min(|rate_min|, rate_max)``."""
        return np.minimum(-self.rate_min, self.rate_max)


@dataclass(frozen=True, eq=False)
class ActuatorBankState:
    """Positions currently applied by the actuator bank."""

    deflections: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @classmethod
    def zeros(cls, m):
        return cls(np.zeros(m))


def plant_derivatives(x, u_applied, lam, model):
    """``A x + B_v B diag(lam) u_applied``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.n,):
        raise ValidationError(f"x must have shape ({model.n},), got {x.shape}")
    return model.A @ x + model.B_v @ achieved_virtual(u_applied, lam, model)


def achieved_virtual(u_applied, lam, model):
    """Virtual control actually produced, ``B diag(lam) u``."""
    u = np.asarray(u_applied, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if u.shape != (model.m,) or lam.shape != (model.m,):
        raise ValidationError(
            f"u and lambda must have shape ({model.m},), "
            f"got {u.shape} and {lam.shape}")
    return model.B @ (lam * u)


def apply_actuator_limits(bank, u_cmd, dt, limits, enable_rate=True):
    """Saturate a command in magnitude and (optionally) in rate.

    Returns ``(new_bank, u_applied)``.  With rate limiting the output moves
    at most ``rate * dt`` away from the previous applied position.
    """
    if dt <= 0:
        raise ValidationError("dt must be positive")
    u = np.clip(np.asarray(u_cmd, dtype=float), limits.u_min, limits.u_max)
    if enable_rate:
        prev = bank.deflections
        u = np.clip(u, prev + limits.rate_min * dt, prev + limits.rate_max * dt)
        u = np.clip(u, limits.u_min, limits.u_max)
        u = _pull_inside_rate(u, prev, dt, limits)
    return ActuatorBankState(u), u


def _pull_inside_rate(u, prev, dt, limits):
    # prev + rate*dt can round one ulp past the limit; step back toward prev
    # until (u - prev)/dt satisfies the bound in floating point.
    u = u.copy()
    for _ in range(8):
        rate = (u - prev) / dt
        bad = (rate > limits.rate_max) | (rate < limits.rate_min)
        if not bad.any():
            break
        u[bad] = np.nextafter(u[bad], prev[bad])
    return u


def admire_model():
    """ADMIRE linearised model and its actuator limits.

    Returns
    -------
    model : PlantModel
        ``n = 5`` states, ``r = 3`` virtual controls, ``m = 4`` surfaces.
    limits : ActuatorLimits
        Canard in [-55, 25] deg, elevons and rudder in [-30, 30] deg, all
        rates within +-40 deg/s.
    """
    B_v = np.vstack([np.zeros((2, 3)), np.eye(3)])
    model = PlantModel(np.array(ADMIRE_A), B_v, np.array(ADMIRE_B))
    limits = ActuatorLimits(
        u_min=np.array([-55.0, -30.0, -30.0, -30.0]) * DEG,
        u_max=np.array([25.0, 30.0, 30.0, 30.0]) * DEG,
        rate_min=np.full(4, -40.0) * DEG,
        rate_max=np.full(4, 40.0) * DEG,
    )
    return model, limits
