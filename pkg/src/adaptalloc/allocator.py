"""Model-reference adaptive control allocation.

The allocator distributes a virtual control ``v_s`` over ``m`` redundant
actuators through ``u = theta_v^T v_s``.  Its state is

* ``xi``    -- virtual dynamics ``xi' = A_m xi + B Lambda u - v_s``,
* ``xi_m``  -- reference model ``xi_m' = A_m xi_m``,
* ``theta_v`` -- adaptive matrix, ``theta_v' = Gamma Proj(theta_v, Y)`` with
  regressor ``Y = -v_s e^T P B`` and ``e = xi - xi_m``.

``B Lambda u`` is taken as a measured input (``achieved``) so the allocator
never reads the effectiveness directly.
"""
from dataclasses import dataclass

import numpy as np

from .exceptions import SolverError, ValidationError
from .projection import (ProjectionBounds, barrier, proj_conventional_matrix,
                         proj_modified_matrix)

__all__ = [
    "CONVENTIONAL",
    "MODIFIED",
    "AllocatorConfig",
    "AllocatorState",
    "solve_lyapunov",
    "regressor",
    "allocation_command",
    "ideal_theta",
    "allocator_derivatives",
    "initial_theta",
    "size_bounds",
    "pseudo_inverse_weights",
]

CONVENTIONAL = "conventional"
MODIFIED = "modified"
PROJECTION_KINDS = (CONVENTIONAL, MODIFIED)


def solve_lyapunov(A_m, Q):
    """Solve ``A_m^T P + P A_m = -Q`` by Kronecker vectorisation.

    With row-major vectorisation ``vec(X B) = (I kron B^T) vec(X)`` and
    ``vec(A X) = (A kron I) vec(X)``, so the equation becomes one dense
    ``r^2 x r^2`` linear system.

    Raises
    ------
    SolverError
        If ``A_m`` is not Hurwitz or the result is not positive definite.
    """
    A_m = np.asarray(A_m, dtype=float)
    Q = np.asarray(Q, dtype=float)
    r = A_m.shape[0]
    if A_m.shape != (r, r) or Q.shape != (r, r):
        raise ValidationError(f"A_m and Q must be square and equal in size, "
                              f"got {A_m.shape} and {Q.shape}")
    if np.max(np.linalg.eigvals(A_m).real) >= 0:
        raise SolverError("A_m is not Hurwitz")
    eye = np.eye(r)
    K = np.kron(A_m.T, eye) + np.kron(eye, A_m.T)
    try:
        p = np.linalg.solve(K, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise SolverError(f"vectorised Lyapunov system is singular: {exc}")
    P = p.reshape(r, r)
    P = 0.5 * (P + P.T)
    if np.min(np.linalg.eigvalsh(P)) <= 0:
        raise SolverError("Lyapunov solution is not positive definite")
    return P


def regressor(v_s, e, P, B):
    """``Y = -v_s e^T P B`` (an ``r x m`` matrix of rank at most one)."""
    v_s = np.asarray(v_s, dtype=float)
    e = np.asarray(e, dtype=float)
    P = np.asarray(P, dtype=float)
    B = np.asarray(B, dtype=float)
    r = B.shape[0]
    if v_s.shape != (r,) or e.shape != (r,) or P.shape != (r, r):
        raise ValidationError(
            f"dimension mismatch: v_s {v_s.shape}, e {e.shape}, P {P.shape}, "
            f"B {B.shape}")
    return -np.outer(v_s, e @ P @ B)


def allocation_command(theta_v, v_s):
    """Actuator command ``u = theta_v^T v_s``."""
    theta_v = np.asarray(theta_v, dtype=float)
    v_s = np.asarray(v_s, dtype=float)
    if theta_v.ndim != 2 or v_s.shape != (theta_v.shape[0],):
        raise ValidationError(
            f"dimension mismatch: theta_v {theta_v.shape}, v_s {v_s.shape}")
    return theta_v.T @ v_s


def ideal_theta(B, Lambda):
    """Ideal parameter with ``B Lambda theta*^T = I`` (right pseudo-inverse).

    ``Lambda`` may be the ``m x m`` diagonal matrix or its diagonal.
    """
    B = np.asarray(B, dtype=float)
    lam = np.asarray(Lambda, dtype=float)
    if lam.ndim == 2:
        lam = np.diag(lam)
    if lam.shape != (B.shape[1],):
        raise ValidationError(f"Lambda does not match B with shape {B.shape}")
    BL = B * lam
    r = B.shape[0]
    if np.linalg.matrix_rank(BL) != r:
        raise ValidationError("B Lambda is not full row rank")
    # theta*^T = (B L)^T ((B L)(B L)^T)^-1
    theta_t = np.linalg.solve(BL @ BL.T, BL).T
    return theta_t.T


def initial_theta(B, bounds):
    """Nominal pseudo-inverse clipped into the parameter inner region."""
    lo, hi = bounds.theta_inner
    return np.clip(ideal_theta(B, np.ones(np.shape(B)[1])), lo, hi)


@dataclass(frozen=True, eq=False)
class AllocatorConfig:
    """Design parameters of the adaptive allocator.

    ``Gamma`` may be given as a diagonal matrix or as its diagonal.  ``B`` is
    the known (nominal) ``r x m`` control matrix used in the regressor.  The
    Lyapunov solution ``P`` is computed at construction.
    """

    A_m: np.ndarray
    Q: np.ndarray
    Gamma: np.ndarray
    bounds: ProjectionBounds
    theta_init: np.ndarray
    B: np.ndarray
    projection_kind: str = MODIFIED

    def __post_init__(self):
        A_m = np.array(self.A_m, dtype=float)
        Q = np.array(self.Q, dtype=float)
        gamma = np.array(self.Gamma, dtype=float)
        if gamma.ndim == 2:
            if np.any(gamma != np.diag(np.diag(gamma))):
                raise ValidationError("Gamma must be diagonal")
            gamma = np.diag(gamma).copy()
        r = A_m.shape[0]
        if gamma.shape != (r,):
            raise ValidationError(f"Gamma must have {r} diagonal entries")
        if np.any(gamma <= 0):
            raise ValidationError("Gamma entries must be positive")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12):
            raise ValidationError("Q must be symmetric")
        if np.min(np.linalg.eigvalsh(Q)) <= 0:
            raise ValidationError("Q must be positive definite")
        if A_m.shape != (r, r) or np.max(np.linalg.eigvals(A_m).real) >= 0:
            raise ValidationError("A_m must be square and Hurwitz")
        if self.bounds.shape[0] != r:
            raise ValidationError("bounds rows must match A_m")
        theta0 = np.array(self.theta_init, dtype=float)
        if theta0.shape != self.bounds.shape:
            raise ValidationError(
                f"theta_init has shape {theta0.shape}, "
                f"bounds have {self.bounds.shape}")
        if np.any(self.bounds.barrier_theta(theta0) > 1):
            raise ValidationError("theta_init lies outside the parameter bounds")
        B = np.array(self.B, dtype=float)
        if B.shape != self.bounds.shape:
            raise ValidationError(
                f"B has shape {B.shape}, bounds have {self.bounds.shape}")
        if self.projection_kind not in PROJECTION_KINDS:
            raise ValidationError(
                f"projection_kind must be one of {PROJECTION_KINDS}")
        object.__setattr__(self, "A_m", A_m)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Gamma", gamma)
        object.__setattr__(self, "theta_init", theta0)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "P", solve_lyapunov(A_m, Q))

    @property
    def r(self):
        return self.A_m.shape[0]

    @property
    def m(self):
        return self.bounds.shape[1]


@dataclass(frozen=True, eq=False)
class AllocatorState:
    xi: np.ndarray
    xi_m: np.ndarray
    theta_v: np.ndarray

    @classmethod
    def initial(cls, config, xi0=None, xi_m0=None):
        zeros = np.zeros(config.r)
        return cls(zeros if xi0 is None else np.asarray(xi0, dtype=float),
                   zeros.copy() if xi_m0 is None else np.asarray(xi_m0, dtype=float),
                   config.theta_init.copy())

    @property
    def e(self):
        return self.xi - self.xi_m


def project(theta_v, Y, config):
    """Projection selected by ``config.projection_kind`` (without Gamma)."""
    if config.projection_kind == MODIFIED:
        return proj_modified_matrix(theta_v, Y, config.bounds)
    return proj_conventional_matrix(theta_v, Y, config.bounds)


def allocator_derivatives(state, v_s, achieved, P, config):
    """Time derivative of :class:`AllocatorState`.

    Parameters
    ----------
    state : AllocatorState
    v_s : (r,) array
        Saturated virtual control fed to the allocator.
    achieved : (r,) array
        ``B Lambda u`` produced by the plant for the applied command.
    P : (r, r) array
        Lyapunov solution for ``config.A_m`` and ``config.Q``.
    config : AllocatorConfig
    """
    v_s = np.asarray(v_s, dtype=float)
    achieved = np.asarray(achieved, dtype=float)
    r = config.r
    if (v_s.shape != (r,) or achieved.shape != (r,) or state.xi.shape != (r,)
            or state.xi_m.shape != (r,)):
        raise ValidationError("allocator vector dimensions do not match r")
    Y = regressor(v_s, state.xi - state.xi_m, P, config.B)
    d_xi = config.A_m @ state.xi + achieved - v_s
    d_xi_m = config.A_m @ state.xi_m
    d_theta = config.Gamma[:, None] * project(state.theta_v, Y, config)
    return AllocatorState(d_xi, d_xi_m, d_theta)



def pseudo_inverse_weights(B, M, floor=0.1):
    """Row weights proportional to the demand each row places on an actuator.

    ``w[i, j]`` is proportional to ``M_i (|theta0[i, j]| + floor * max_i
    |theta0[i, j]|)`` with ``theta0`` the nominal pseudo-inverse, and each
    column sums to one.  The floor keeps every bound strictly positive.
    """
    M = np.asarray(M, dtype=float)
    theta0 = np.abs(ideal_theta(B, np.ones(np.shape(B)[1])))
    demand = M[:, None] * (theta0 + floor * theta0.max(axis=0))
    return demand / demand.sum(axis=0)


def size_bounds(limits, M, L, gamma, theta_safety=0.95, rate_safety=0.95,
                tol_fraction=0.05, weights=None, r=None):
    """Bounds that keep ``u = theta^T v_s`` inside the actuator limits.

    For ``|v_i| <= M_i`` and ``|v_i'| <= L_i`` each actuator's magnitude
    budget ``umag_j`` is split over the rows by ``weights`` (columns summing
    to one):

    * ``theta_max[i, j] = theta_safety * umag_j * w[i, j] / M_i``, so
      ``|u_j| <= sum_i theta_max[i, j] M_i = theta_safety * umag_j``;
    * ``Y_max[:, j]`` is the largest common value with
      ``sum_i gamma_i M_i Y_max + sum_i theta_max[i, j] L_i
      <= rate_safety * rate_j``, which bounds ``|u_j'|`` through
      ``u' = theta'^T v_s + theta^T v_s'``.

    ``weights=None`` means ``w[i, j] = M_i / sum(M)``, i.e. the same bound
    ``theta_safety * umag_j / sum(M)`` for every row.  ``umag_j`` and
    ``rate_j`` are the symmetric limits ``min(|lo|, hi)``.  Tolerances are
    ``tol_fraction`` of each bound's width.

    Raises
    ------
    ValidationError
        If ``L`` alone already exhausts an actuator's rate budget.
    """
    M = np.asarray(M, dtype=float)
    L = np.asarray(L, dtype=float)
    gamma = np.broadcast_to(np.asarray(gamma, dtype=float), M.shape)
    if M.ndim != 1 or L.shape != M.shape:
        raise ValidationError("M and L must be vectors of equal length")
    if np.any(M <= 0) or np.any(L <= 0) or np.any(gamma <= 0):
        raise ValidationError("M, L and gamma must be positive")
    if not (0 < theta_safety <= 1 and 0 < rate_safety <= 1):
        raise ValidationError("safety factors must lie in (0, 1]")
    if not 0 < tol_fraction < 0.5:
        raise ValidationError("tol_fraction must lie in (0, 0.5)")
    r = M.size if r is None else r
    m = limits.m
    if weights is None:
        weights = np.broadcast_to((M / M.sum())[:, None], (r, m))
    weights = np.asarray(weights, dtype=float)
    if weights.shape != (r, m) or np.any(weights <= 0):
        raise ValidationError(f"weights must be a positive {r}x{m} array")
    if not np.allclose(weights.sum(axis=0), 1.0):
        raise ValidationError("weight columns must sum to one")
    theta_max = theta_safety * limits.magnitude * weights / M[:, None]
    budget = rate_safety * limits.rate - L @ theta_max
    if np.any(budget <= 0):
        raise ValidationError(
            "virtual-control rate bound L leaves no rate budget for adaptation")
    y_max = np.broadcast_to(budget / np.dot(gamma, M), (r, m))
    return ProjectionBounds(
        -theta_max, theta_max, tol_fraction * 2 * theta_max,
        -y_max, y_max, tol_fraction * 2 * y_max)


def f_max(theta_v, bounds):
    """Largest parameter barrier value over all elements."""
    return float(np.max(barrier(theta_v, bounds.theta_lower,
                                bounds.theta_upper, bounds.zeta)))
