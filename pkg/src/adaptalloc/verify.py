"""Sampled checks of the projection operators' guarantees.

Each check draws from a seeded generator, evaluates an inequality over many
samples and returns a :class:`Report` with the worst sample found.  Nothing
here is used by the simulator; it exists to falsify the projection code.
"""
from dataclasses import dataclass, field

import numpy as np

from .exceptions import ValidationError
from .projection import (ProjectionBounds, proj_conventional_array,
                         proj_modified_array)

__all__ = [
    "REGIONS",
    "SampleSpec",
    "Report",
    "default_bounds",
    "lemma2_trace",
    "lemma6_trace",
    "lemma6_bound",
    "check_lemma2",
    "check_lemma6",
    "check_invariance",
    "probe_continuity",
    "estimate_lipschitz",
    "check_lipschitz",
    "run_all",
    "CHECKS",
]

REGIONS = ("inner", "full_feasible", "boundary_band")

EXACT_TOL = 1e-12
INVARIANCE_TOL = 1e-3
CONTINUITY_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class SampleSpec:
    """What to sample, how many samples, and from which seed.

    ``region`` selects where the adaptive parameter is drawn: the inner
    region, the whole feasible box, or the two tolerance bands.
    """

    bounds: ProjectionBounds
    sample_count: int = 100_000
    seed: int = 0
    region: str = "full_feasible"

    def __post_init__(self):
        if not isinstance(self.bounds, ProjectionBounds):
            raise ValidationError("bounds must be a ProjectionBounds")
        if int(self.sample_count) != self.sample_count or self.sample_count <= 0:
            raise ValidationError("sample_count must be a positive integer")
        if self.region not in REGIONS:
            raise ValidationError(f"region must be one of {REGIONS}")

    def rng(self, stream=0):
        return np.random.default_rng([self.seed, stream])


@dataclass(frozen=True)
class Report:
    """Outcome of one check.

    ``worst`` is the largest value of the checked quantity, ``limit`` the
    threshold it is compared with and ``margin = limit - worst`` (negative
    on failure).  ``witness`` describes the sample that produced ``worst``.
    """

    name: str
    passed: bool
    worst: float
    limit: float
    samples: int
    witness: dict = field(default_factory=dict)

    @property
    def margin(self):
        return self.limit - self.worst

    def line(self):
        status = "PASS" if self.passed else "FAIL"
        wit = " ".join(f"{k}={_fmt(v)}" for k, v in self.witness.items())
        return (f"{self.name:<22} {status}  worst={self.worst:.6e} "
                f"limit={self.limit:.6e} margin={self.margin:.6e} "
                f"n={self.samples}  witness[{wit}]")


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, np.ndarray):
        return "(" + ",".join(_fmt(x) for x in v.ravel()) + ")"
    if isinstance(v, tuple):
        return "(" + ",".join(_fmt(x) for x in v) + ")"
    return str(v)


def default_bounds():
    """Bounds used when no others are given.

    The parameter bounds are those of the default ADMIRE scenario.  The
    regressor bounds are asymmetric and scaled to the parameter range so that
    a unit-gain update can cross the parameter box within a few seconds.
    """
    from .control_sim import build_scenario
    b = build_scenario("III").allocator_config.bounds
    span = b.theta_upper - b.theta_lower
    y_lower, y_upper = -0.2 * span, 0.3 * span
    return ProjectionBounds(b.theta_lower, b.theta_upper, b.zeta,
                            y_lower, y_upper, 0.05 * (y_upper - y_lower))


# ---------------------------------------------------------------------------
# sampling helpers

def _uniform(rng, lo, hi, size):
    return lo + (hi - lo) * rng.random(size)


def _sample_theta(rng, bounds, region, size):
    lo, hi, z = bounds.theta_lower, bounds.theta_upper, bounds.zeta
    if region == "inner":
        return _uniform(rng, lo + z, hi - z, size)
    if region == "full_feasible":
        return _uniform(rng, lo, hi, size)
    upper_side = rng.random(size) < 0.5
    band = z * rng.random(size)
    return np.where(upper_side, hi - band, lo + band)


def _sample_theta_star(rng, bounds, size):
    lo, hi = bounds.theta_inner
    return _uniform(rng, lo, hi, size)


# ---------------------------------------------------------------------------
# energy-trace inequalities

def _trace_terms(proj, theta, theta_star, Y):
    return (theta - theta_star) * (proj - Y)


def lemma2_trace(theta, theta_star, Y, bounds):
    """``tr((theta - theta*)^T (Proj(theta, Y) - Y))`` for the conventional
    operator; batches along the leading axis."""
    proj = proj_conventional_array(theta, Y, bounds.theta_lower,
                                   bounds.theta_upper, bounds.zeta)
    return np.sum(_trace_terms(proj, theta, theta_star, Y), axis=(-2, -1))


def lemma6_trace(theta, theta_star, Y, bounds):
    """Same trace for the modified operator."""
    proj = proj_modified_array(theta, Y, bounds)
    return np.sum(_trace_terms(proj, theta, theta_star, Y), axis=(-2, -1))


def lemma6_bound(bounds):
    """``||theta_tilde_max||_F * ||Y_MAX||_F``."""
    return float(np.linalg.norm(bounds.theta_tilde_max)
                 * np.linalg.norm(bounds.y_abs_max))


def _trace_check(name, spec, operator, limit, y_scale):
    b = spec.bounds
    rng = spec.rng()
    size = (spec.sample_count,) + b.shape
    theta_star = _sample_theta_star(rng, b, size)
    theta = _sample_theta(rng, b, spec.region, size)
    y_mid = 0.5 * (b.y_upper + b.y_lower)
    y_half = 0.5 * y_scale * (b.y_upper - b.y_lower)
    Y = _uniform(rng, y_mid - y_half, y_mid + y_half, size)
    terms = _trace_terms(operator(theta, Y), theta, theta_star, Y)
    tr = terms.sum(axis=(1, 2))
    k = int(np.argmax(tr))
    worst = float(tr[k])
    i, j = np.unravel_index(int(np.argmax(terms[k])), b.shape)
    witness = {"sample": k, "cell": (int(i), int(j)),
               "theta": theta[k, i, j], "theta_star": theta_star[k, i, j],
               "Y": Y[k, i, j]}
    return Report(name, worst <= limit, worst, limit, spec.sample_count,
                  witness)


def check_lemma2(spec):
    """Conventional operator: the trace term never adds energy.

    ``Y`` is drawn from the regressor box widened by a factor 2, since the
    conventional operator does not look at regressor bounds.
    """
    b = spec.bounds

    def operator(theta, Y):
        return proj_conventional_array(theta, Y, b.theta_lower, b.theta_upper,
                                       b.zeta)
    return _trace_check("lemma2", spec, operator, EXACT_TOL, 2.0)


def check_lemma6(spec):
    """Modified operator: the trace term is bounded by
    :func:`lemma6_bound` for ``Y`` inside its box."""
    limit = lemma6_bound(spec.bounds) + EXACT_TOL
    return _trace_check("lemma6", spec,
                        lambda th, Y: proj_modified_array(th, Y, spec.bounds),
                        limit, 1.0)


# ---------------------------------------------------------------------------
# invariance of the parameter set under the projected flow

def _random_regressor_signals(rng, bounds, n_signals, n_segments):
    """Piecewise-constant signals in the regressor box.

    Each element keeps its sign for several segments (a flip with
    probability 0.15 per segment) so parameters are driven into the
    barriers rather than dithering around their start values.
    """
    shape = (n_signals,) + bounds.shape
    sign = np.where(rng.random(shape) < 0.5, -1.0, 1.0)
    out = np.empty((n_segments,) + shape)
    for s in range(n_segments):
        flip = rng.random(shape) < 0.15
        sign = np.where(flip, -sign, sign)
        mag = rng.random(shape)
        out[s] = np.where(sign > 0, mag * bounds.y_upper, -mag * bounds.y_lower)
        # occasionally sit exactly on the bound
        edge = rng.random(shape) < 0.05
        out[s] = np.where(edge, np.where(sign > 0, bounds.y_upper,
                                         bounds.y_lower), out[s])
    return out


def check_invariance(spec, dt=1e-3, duration=10.0, n_signals=100,
                     hold=0.25, gain=1.0):
    """Integrate ``theta' = gain * Proj(theta, Y(t))`` with RK4.

    Runs both operators on the same ``n_signals`` random regressor signals
    (held for ``hold`` seconds each) starting from ``theta(0)`` drawn from
    ``spec.region``.  Passes iff ``f <= 1 + 1e-3`` at every step for both
    operators and, for the modified operator, ``|theta'|`` never exceeds
    ``gain * max(|Y_min|, |Y_max|)`` element-wise.
    """
    b = spec.bounds
    if dt <= 0 or duration <= 0 or hold < dt:
        raise ValidationError("need 0 < dt <= hold and duration > 0")
    rng = spec.rng()
    n_steps = int(round(duration / dt))
    per_seg = int(round(hold / dt))
    n_segments = -(-n_steps // per_seg)
    theta0 = _sample_theta(rng, b, spec.region, (n_signals,) + b.shape)
    signals = _random_regressor_signals(rng, b, n_signals, n_segments)
    rate_cap = gain * b.y_abs_max

    def conventional(th, Y):
        return gain * proj_conventional_array(th, Y, b.theta_lower,
                                              b.theta_upper, b.zeta)

    def modified(th, Y):
        return gain * proj_modified_array(th, Y, b)

    worst_f = -np.inf
    worst_rate = -np.inf
    witness = {}
    for label, fn in (("conventional", conventional), ("modified", modified)):
        th = theta0.copy()
        f_run = b.barrier_theta(th).max(axis=(1, 2))
        rate_run = np.zeros(n_signals)
        for k in range(n_steps):
            Y = signals[k // per_seg]
            k1 = fn(th, Y)
            if label == "modified":
                rate_run = np.maximum(rate_run,
                                      (np.abs(k1) / rate_cap).max(axis=(1, 2)))
            k2 = fn(th + 0.5 * dt * k1, Y)
            k3 = fn(th + 0.5 * dt * k2, Y)
            k4 = fn(th + dt * k3, Y)
            th = th + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
            f_run = np.maximum(f_run, b.barrier_theta(th).max(axis=(1, 2)))
        s = int(np.argmax(f_run))
        if f_run[s] > worst_f:
            worst_f = float(f_run[s])
            witness = {"operator": label, "signal": s}
        if label == "modified":
            worst_rate = float(rate_run.max())
    limit = 1.0 + INVARIANCE_TOL
    witness["rate_ratio"] = worst_rate
    passed = worst_f <= limit and worst_rate <= 1.0
    return Report("invariance", passed, worst_f, limit, n_signals * 2,
                  witness)


# ---------------------------------------------------------------------------
# continuity across the subset boundaries

# S0: identity, S1: parameter barrier only, S2: regressor barrier only,
# S3: both barriers active.
CONTINUITY_PAIRS = ("S0/S1", "S0/S1@Y=0", "S0/S2", "S1/S3", "S2/S3",
                    "corner")


def _cells(bounds, rng, n):
    r, m = bounds.shape
    flat = rng.integers(0, r * m, n)
    return np.unravel_index(flat, (r, m))


def _gather(bounds, idx):
    """``(n, 1)`` bounds made of the cells ``idx``."""
    pick = lambda a: a[idx][:, None]  # noqa: E731
    return ProjectionBounds(pick(bounds.theta_lower), pick(bounds.theta_upper),
                            pick(bounds.zeta), pick(bounds.y_lower),
                            pick(bounds.y_upper), pick(bounds.eps))


def _boundary_points(pair, g, rng, n):
    """Boundary points ``(theta, y)`` and the direction in which to step.

    Returns ``theta, y, d_theta, d_y`` with ``d_*`` in ``{0, 1}``; the two
    sides are ``point +- distance * d``.
    """
    lo, hi, z = g.theta_lower[:, 0], g.theta_upper[:, 0], g.zeta[:, 0]
    ylo, yhi, eps = g.y_lower[:, 0], g.y_upper[:, 0], g.eps[:, 0]
    up = rng.random(n) < 0.5                      # which barrier side
    u = rng.uniform(0.05, 0.95, n)
    theta_edge = np.where(up, hi - z, lo + z)     # f = 0
    y_edge = np.where(up, yhi - eps, ylo + eps)   # h = 0 on the matching side
    theta_band = np.where(up, hi - u * z, lo + u * z)       # f in (0, 1)
    y_inner = np.where(up, u * (yhi - eps), u * (ylo + eps))  # h < 0, slope > 0
    y_band = np.where(up, yhi - u * eps, ylo + u * eps)     # h in (0, 1)
    theta_inner = (lo + z) + u * ((hi - z) - (lo + z))
    one, zero = np.ones(n), np.zeros(n)
    if pair == "S0/S1":
        return theta_edge, y_inner, one, zero
    if pair == "S0/S1@Y=0":
        return theta_band, zero, zero, one
    if pair == "S0/S2":
        return theta_inner, y_edge, zero, one
    if pair == "S1/S3":
        return theta_band, y_edge, zero, one
    if pair == "S2/S3":
        return theta_edge, y_band, one, zero
    if pair == "corner":
        return theta_edge, y_edge, one, one
    raise ValidationError(f"unknown subset pair {pair!r}")


def probe_continuity(bounds, approach_distance=1e-8, points=100, seed=0):
    """Evaluate the modified operator on both sides of every subset boundary.

    Returns one :class:`Report` per entry of ``CONTINUITY_PAIRS``.  For the
    corner all four quadrants around the point are compared.
    """
    if approach_distance <= 0:
        raise ValidationError("approach_distance must be positive")
    reports = []
    for p_idx, pair in enumerate(CONTINUITY_PAIRS):
        rng = np.random.default_rng([seed, 100 + p_idx])
        idx = _cells(bounds, rng, points)
        g = _gather(bounds, idx)
        th, y, dth, dy = _boundary_points(pair, g, rng, points)
        d = approach_distance
        if pair == "corner":
            vals = np.stack([
                proj_modified_array((th + s1 * d)[:, None],
                                    (y + s2 * d)[:, None], g)[:, 0]
                for s1 in (-1, 1) for s2 in (-1, 1)])
            diff = vals.max(axis=0) - vals.min(axis=0)
        else:
            a = proj_modified_array((th - d * dth)[:, None],
                                    (y - d * dy)[:, None], g)[:, 0]
            c = proj_modified_array((th + d * dth)[:, None],
                                    (y + d * dy)[:, None], g)[:, 0]
            diff = np.abs(a - c)
        k = int(np.argmax(diff))
        witness = {"cell": (int(idx[0][k]), int(idx[1][k])),
                   "theta": th[k], "Y": y[k]}
        reports.append(Report(f"continuity {pair}",
                              bool(diff[k] <= CONTINUITY_TOL),
                              float(diff[k]), CONTINUITY_TOL, points, witness))
    return reports


# ---------------------------------------------------------------------------
# local Lipschitz estimate

def estimate_lipschitz(bounds, spec, pair_scale):
    """Largest ``|Proj(a1) - Proj(a0)| / |a1 - a0|`` over sampled pairs.

    Each pair lives in one cell; ``a0 = (theta, Y)`` is drawn from
    ``spec.region`` for ``theta`` and the regressor box for ``Y``, and
    ``a1 = a0 + pair_scale * (span_theta cos phi, span_Y sin phi)`` with
    the spans of the cell's boxes, so pairs never coincide.  Samples whose
    partner would leave the box are reflected back inside.

    Returns ``(ratio, witness)``.
    """
    if pair_scale <= 0:
        raise ValidationError("pair_scale must be positive")
    rng = spec.rng(7)
    n = spec.sample_count
    idx = _cells(bounds, rng, n)
    g = _gather(bounds, idx)
    th0 = _sample_theta(rng, g, spec.region, (n, 1))[:, 0]
    y0 = _uniform(rng, g.y_lower, g.y_upper, (n, 1))[:, 0]
    phi = rng.uniform(0.0, 2.0 * np.pi, n)
    d_th = pair_scale * (g.theta_upper - g.theta_lower)[:, 0] * np.cos(phi)
    d_y = pair_scale * (g.y_upper - g.y_lower)[:, 0] * np.sin(phi)
    th1 = th0 + d_th
    y1 = y0 + d_y
    # keep partners inside the box by stepping the other way
    out_th = (th1 > g.theta_upper[:, 0]) | (th1 < g.theta_lower[:, 0])
    out_y = (y1 > g.y_upper[:, 0]) | (y1 < g.y_lower[:, 0])
    th1 = np.where(out_th, th0 - d_th, th1)
    y1 = np.where(out_y, y0 - d_y, y1)
    p0 = proj_modified_array(th0[:, None], y0[:, None], g)[:, 0]
    p1 = proj_modified_array(th1[:, None], y1[:, None], g)[:, 0]
    dist = np.hypot(th1 - th0, y1 - y0)
    ratio = np.abs(p1 - p0) / dist
    k = int(np.argmax(ratio))
    witness = {"cell": (int(idx[0][k]), int(idx[1][k])), "theta": th0[k],
               "Y": y0[k]}
    return float(ratio[k]), witness


def check_lipschitz(spec, scales=(1e-3, 1e-6)):
    """Pass iff the estimates at both scales are finite and within a
    factor 2 of each other.  ``worst`` is the larger-to-smaller ratio."""
    results = [estimate_lipschitz(spec.bounds, spec, s) for s in scales]
    values = np.array([v for v, _ in results])
    finite = bool(np.all(np.isfinite(values)) and np.all(values > 0))
    spread = float(values.max() / values.min()) if finite else np.inf
    witness = {f"L@{s:g}": v for s, v in zip(scales, values)}
    witness.update(results[int(np.argmax(values))][1])
    return Report("lipschitz", finite and spread <= 2.0, spread, 2.0,
                  spec.sample_count * len(scales), witness)


# ---------------------------------------------------------------------------

CHECKS = ("lemma2", "lemma6", "invariance", "continuity", "lipschitz")


def run_all(bounds=None, seed=0, only=None, sample_count=100_000,
            lipschitz_pairs=1_000_000, n_signals=100):
    """Run the named checks (all by default) and return their reports."""
    if bounds is None:
        bounds = default_bounds()
    names = CHECKS if only is None else tuple(only)
    unknown = set(names) - set(CHECKS)
    if unknown:
        raise ValidationError(f"unknown check(s): {sorted(unknown)}")
    reports = []
    for name in names:
        if name == "lemma2":
            reports.append(check_lemma2(SampleSpec(bounds, sample_count, seed)))
        elif name == "lemma6":
            reports.append(check_lemma6(SampleSpec(bounds, sample_count, seed)))
        elif name == "invariance":
            reports.append(check_invariance(
                SampleSpec(bounds, n_signals, seed, "inner"),
                n_signals=n_signals))
        elif name == "continuity":
            reports.extend(probe_continuity(bounds, seed=seed))
        elif name == "lipschitz":
            reports.append(check_lipschitz(
                SampleSpec(bounds, lipschitz_pairs, seed)))
    return reports

