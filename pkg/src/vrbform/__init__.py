"""Distributed virtual-rigid-body formation planning with probabilistic collision avoidance."""

from .chance import (PairConstraintQuadratic, PositionBelief, ScaleConstraintSet,
                     assemble_constraints, hyperplane_probability, linearize,
                     mc_collision_probability, min_distance_bound, pair_quadratic,
                     xi_from_pcoll)
from .gaussian import normal_cdf, normal_quantile
from .obstacles import ObstacleMap
from .planner import (NeighborSnapshot, PlannerConfig, PlannerState,
                      apf_repulsion, compose_desired_velocity, consensus_term,
                      planner_tick, tracking_derivative, velocity_cap)
from .qp import ActiveSetSolution, ProjectionProblem, project_scale_derivative
from .scenario import (BusPolicy, CommandScript, Scenario, SigmaSchedule,
                       corridor_scenario, load_scenario, parse_scenario,
                       save_scenario)
from .sim import MetricsLog, WorldState, build_world, run_scenario, step_world
from .vrb import (BaseConfiguration, FormationParams, jacobian, pseudo_inverse,
                  recenter_base, rotation, transform_point)

__version__ = "0.1.0"
