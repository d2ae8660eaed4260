"""Adaptive control allocation with magnitude- and rate-bounding projection."""
from .exceptions import IntegrationFault, SolverError, ValidationError
from .projection import (BoundSpec, ProjectionBounds, df_dtheta, f_convex,
                         h_convex, proj_conventional, proj_modified,
                         proj_modified_matrix)
from .allocator import (AllocatorConfig, AllocatorState, allocation_command,
                        allocator_derivatives, ideal_theta, regressor,
                        size_bounds, solve_lyapunov)
from .plant import (ActuatorLimits, EffectivenessSchedule, PlantModel,
                    admire_model, apply_actuator_limits, lambda_at)
from .control_sim import (ControllerGains, ReferenceSignal, Scenario,
                          SimSettings, Trajectory, build_scenario, lqr_gains,
                          metrics, run_scenario)
from . import verify

__version__ = "0.1.0"
