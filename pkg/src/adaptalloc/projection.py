"""Barrier functions and element-wise projection operators.

Two operators are provided:

* the conventional projection, which keeps each adaptive parameter inside
  ``[lower, upper]`` by fading out the update inside a tolerance band;
* the modified projection, which additionally fades out the update when the
  regressor entry approaches its own bounds, so that the *rate* of the
  parameter is bounded as well as its magnitude.

Every operator exists as a scalar function (plain Python, one element) and
as a vectorised array function used by the allocator and the verification
harness.  The scalar versions are deliberately written separately so the two
can be checked against each other.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import ValidationError

__all__ = [
    "BoundSpec",
    "ProjectionBounds",
    "f_convex",
    "df_dtheta",
    "h_convex",
    "proj_conventional",
    "proj_modified",
    "barrier",
    "barrier_slope",
    "proj_conventional_array",
    "proj_modified_array",
    "proj_conventional_matrix",
    "proj_modified_matrix",
]


@dataclass(frozen=True)
class BoundSpec:
    """Bounds of one scalar quantity with a projection tolerance band.

    Parameters
    ----------
    lower, upper : float
        Hard bounds; ``lower < 0 < upper``.
    tolerance : float
        Width of the band inside each bound where projection is active.
    """

    lower: float
    upper: float
    tolerance: float

    def __post_init__(self):
        _check_bounds(
            np.asarray(self.lower, dtype=float),
            np.asarray(self.upper, dtype=float),
            np.asarray(self.tolerance, dtype=float),
            "BoundSpec",
        )

    @property
    def inner(self):
        """Inner region ``(lower + tolerance, upper - tolerance)``."""
        return self.lower + self.tolerance, self.upper - self.tolerance

    @property
    def abs_max(self):
        return max(abs(self.lower), abs(self.upper))


def _check_bounds(lower, upper, tol, what):
    if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))
            and np.all(np.isfinite(tol))):
        raise ValidationError(f"{what}: bounds must be finite")
    if np.any(upper <= 0) or np.any(lower >= 0):
        raise ValidationError(f"{what}: need lower < 0 < upper")
    if np.any(tol <= 0):
        raise ValidationError(f"{what}: tolerance must be positive")
    if np.any(tol >= 0.5 * (upper - lower)):
        raise ValidationError(f"{what}: tolerance must be < (upper - lower)/2")
    if np.any(upper - tol <= 0) or np.any(lower + tol >= 0):
        raise ValidationError(
            f"{what}: need upper - tolerance > 0 and lower + tolerance < 0")


@dataclass(frozen=True, eq=False)
class ProjectionBounds:
    """Element-wise bounds for an ``r x m`` parameter matrix and its regressor.

    All six arrays have shape ``(r, m)``.  ``zeta`` is the tolerance of the
    parameter bounds, ``eps`` the tolerance of the regressor bounds.
    """

    theta_lower: np.ndarray
    theta_upper: np.ndarray
    zeta: np.ndarray
    y_lower: np.ndarray
    y_upper: np.ndarray
    eps: np.ndarray

    def __post_init__(self):
        arrays = {}
        for name in ("theta_lower", "theta_upper", "zeta",
                     "y_lower", "y_upper", "eps"):
            a = np.array(getattr(self, name), dtype=float)
            if a.ndim != 2:
                raise ValidationError(f"{name} must be a 2-D array")
            a.setflags(write=False)
            arrays[name] = a
        shapes = {a.shape for a in arrays.values()}
        if len(shapes) != 1:
            raise ValidationError(
                f"bound grids have inconsistent shapes: {sorted(shapes)}")
        for name, a in arrays.items():
            object.__setattr__(self, name, a)
        _check_bounds(self.theta_lower, self.theta_upper, self.zeta,
                      "theta bounds")
        _check_bounds(self.y_lower, self.y_upper, self.eps, "regressor bounds")

    @classmethod
    def from_specs(cls, theta, regressor):
        """Build from two ``r x m`` nested lists of :class:`BoundSpec`."""
        def unpack(grid, attr):
            return np.array([[getattr(s, attr) for s in row] for row in grid],
                            dtype=float)
        return cls(unpack(theta, "lower"), unpack(theta, "upper"),
                   unpack(theta, "tolerance"), unpack(regressor, "lower"),
                   unpack(regressor, "upper"), unpack(regressor, "tolerance"))

    @classmethod
    def uniform(cls, shape, theta_spec, y_spec):
        """Same pair of specs in every cell."""
        full = lambda v: np.full(shape, float(v))  # noqa: E731
        return cls(full(theta_spec.lower), full(theta_spec.upper),
                   full(theta_spec.tolerance), full(y_spec.lower),
                   full(y_spec.upper), full(y_spec.tolerance))

    @property
    def shape(self):
        return self.theta_lower.shape

    def theta_spec(self, i, j):
        return BoundSpec(self.theta_lower[i, j], self.theta_upper[i, j],
                         self.zeta[i, j])

    def y_spec(self, i, j):
        return BoundSpec(self.y_lower[i, j], self.y_upper[i, j],
                         self.eps[i, j])

    @property
    def theta_inner(self):
        """``(low, high)`` arrays of the parameter inner region."""
        return self.theta_lower + self.zeta, self.theta_upper - self.zeta

    @property
    def y_abs_max(self):
        """Element-wise bound on ``|Y|`` over the regressor feasible set."""
        return np.maximum(np.abs(self.y_lower), np.abs(self.y_upper))

    @property
    def theta_tilde_max(self):
        """Element-wise bound on ``|theta - theta*|``.

        Valid for ``theta`` in ``[lower, upper]`` and ``theta*`` in the
        inner region.
        """
        return self.theta_upper - self.theta_lower - self.zeta

    def barrier_theta(self, theta):
        return barrier(theta, self.theta_lower, self.theta_upper, self.zeta)

    def barrier_y(self, y):
        return barrier(y, self.y_lower, self.y_upper, self.eps)


# ---------------------------------------------------------------------------
# scalar versions

def _valid(spec):
    if not isinstance(spec, BoundSpec):
        raise ValidationError(f"expected BoundSpec, got {type(spec).__name__}")
    return spec.lower, spec.upper, spec.tolerance


def f_convex(theta, spec):
    """Parameter barrier: <= 0 on the inner region, 1 at the hard bounds.

    >>> f_convex(1.0, BoundSpec(-1.0, 1.0, 0.25))
    1.0
    """
    lo, hi, z = _valid(spec)
    return (theta - lo - z) * (theta - hi + z) / ((hi - lo - z) * z)


def df_dtheta(theta, spec):
    """Derivative of :func:`f_convex` with respect to ``theta``."""
    lo, hi, z = _valid(spec)
    return (2.0 * theta - lo - hi) / ((hi - lo - z) * z)


def h_convex(y, spec):
    """Regressor barrier; same shape as :func:`f_convex` with ``eps``."""
    lo, hi, eps = _valid(spec)
    return (y - lo - eps) * (y - hi + eps) / ((hi - lo - eps) * eps)


def proj_conventional(theta, y, spec):
    """Conventional projection of one update ``y`` at parameter ``theta``."""
    f = f_convex(theta, spec)
    if f > 0 and y * df_dtheta(theta, spec) > 0:
        return y - y * f
    return y


def proj_modified(theta, y, theta_spec, y_spec):
    """Magnitude-and-rate projection of one update ``y``.

    The four branches are tested in order and the first match wins; values
    agree on the overlaps so the order only selects the code path.
    """
    f = f_convex(theta, theta_spec)
    h = h_convex(y, y_spec)
    slope = y * df_dtheta(theta, theta_spec)
    f_hat = min(1.0, f)
    h_hat = min(1.0, h)
    if f >= 0 and slope >= 0 and h >= 0:
        return y * (1.0 - f_hat) * (1.0 - h_hat)
    if f > 0 and slope > 0:
        return y * (1.0 - f_hat)
    if h > 0:
        return y * (1.0 - h_hat)
    return y


# ---------------------------------------------------------------------------
# array versions

def barrier(x, lower, upper, tol):
    """Vectorised barrier ``(x-lo-tol)(x-hi+tol) / ((hi-lo-tol) tol)``."""
    return (x - lower - tol) * (x - upper + tol) / ((upper - lower - tol) * tol)


def barrier_slope(x, lower, upper, tol):
    return (2.0 * x - lower - upper) / ((upper - lower - tol) * tol)


def proj_conventional_array(theta, y, lower, upper, tol):
    """Element-wise conventional projection on broadcastable arrays."""
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    f = barrier(theta, lower, upper, tol)
    active = (f > 0) & (y * barrier_slope(theta, lower, upper, tol) > 0)
    return np.where(active, y - y * f, y)


def proj_modified_array(theta, y, bounds):
    """Element-wise modified projection.

    ``theta`` and ``y`` may carry leading batch dimensions as long as their
    trailing dimensions broadcast against ``bounds.shape``.
    """
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    f = bounds.barrier_theta(theta)
    h = bounds.barrier_y(y)
    slope = y * barrier_slope(theta, bounds.theta_lower, bounds.theta_upper,
                              bounds.zeta)
    one_f = 1.0 - np.minimum(1.0, f)
    one_h = 1.0 - np.minimum(1.0, h)
    conditions = [
        (f >= 0) & (slope >= 0) & (h >= 0),
        (f > 0) & (slope > 0),
        h > 0,
    ]
    choices = [y * one_f * one_h, y * one_f, y * one_h]
    return np.select(conditions, choices, default=y)


def _check_matrix_args(theta, y, bounds):
    theta = np.asarray(theta, dtype=float)
    y = np.asarray(y, dtype=float)
    if theta.shape != bounds.shape or y.shape != bounds.shape:
        raise ValidationError(
            f"shape mismatch: theta {theta.shape}, Y {y.shape}, "
            f"bounds {bounds.shape}")
    return theta, y


def proj_conventional_matrix(theta, y, bounds):
    """Conventional projection of an ``r x m`` update (ignores Y bounds)."""
    theta, y = _check_matrix_args(theta, y, bounds)
    return proj_conventional_array(theta, y, bounds.theta_lower,
                                   bounds.theta_upper, bounds.zeta)


def proj_modified_matrix(theta, y, bounds):
    """Modified projection of an ``r x m`` update."""
    theta, y = _check_matrix_args(theta, y, bounds)
    return proj_modified_array(theta, y, bounds)
