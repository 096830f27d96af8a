"""Per-robot formation planning pipeline.

Each tick runs five steps: map the desired velocity into a parameter
derivative (tracking), pull the parameters toward the neighbours'
(consensus), project the scale derivative onto the collision-avoidance
rows (constraint satisfaction), cap the implied robot speed, and Euler
integrate.  The desired velocity itself combines an operator formation
rate with repulsion from nearby obstacles, so the formation deforms
autonomously even when the operator goes silent.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .chance import PositionBelief, assemble_constraints, lambda_max_2x2, xi_from_pcoll
from .obstacles import ObstacleMap
from .qp import (STATUS_OPTIMAL, ActiveSetSolution, ProjectionProblem,
                 project_scale_derivative)
from .vrb import (S_MIN_DEFAULT, BaseConfiguration, FormationParams, jacobian,
                  pseudo_inverse, transform_point)

# When consensus must drop a silent neighbour: reuse its last parameters for
# this many ticks, then leave it out of the sum.
STALE_LIMIT_TICKS = 5


class StaleSnapshotError(RuntimeError):
    """A robot required by the topology is missing from the snapshot."""


class InsideInflatedObstacleError(RuntimeError):
    """Desired position is inside an obstacle's inflated boundary."""


@dataclass
class PlannerConfig:
    """Gains and limits shared by every robot in the fleet.

    dt must not exceed 1: the projected scale step is feasible at unit
    step, and Euler with dt <= 1 lands on the segment between the current
    (feasible) scale and that point.
    """

    lambda_stiffness: float = 1.0   # 1/s, formation stiffness
    v_max: float = 1.0              # m/s
    dt: float = 0.05                # s
    epsilon: float = 0.1            # m, collision clearance
    p_coll_bound: float = 1.5e-3
    apf_strength: float = 0.5       # repulsive field strength
    apf_range: float = 2.0          # m, repulsion activation distance
    robot_radius: float = 0.25      # m

    def __post_init__(self):
        if not 0.0 < self.dt <= 1.0:
            raise ValueError(f"dt must be in (0, 1], got {self.dt}")
        for name in ("lambda_stiffness", "v_max", "apf_range", "robot_radius"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")
        if self.epsilon < 0.0 or self.apf_strength < 0.0:
            raise ValueError("epsilon and apf_strength must be nonnegative")
        if not 0.0 < self.p_coll_bound <= 0.5:
            raise ValueError("p_coll_bound must be in (0, 0.5]")

    @cached_property
    def xi(self) -> float:
        return xi_from_pcoll(self.p_coll_bound)


@dataclass
class PlannerState:
    """One robot's local view: its parameter copy and place in the formation."""

    eta: FormationParams
    base: BaseConfiguration
    self_index: int
    last_reference: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.last_reference is None:
            self.last_reference = transform_point(self.eta, self.base_point)
        self.last_reference = np.asarray(self.last_reference, dtype=float).reshape(2)

    @property
    def base_point(self) -> np.ndarray:
        return self.base.point(self.self_index)


@dataclass
class NeighborSnapshot:
    """Per-tick view of the other robots, as delivered by the exchange layer."""

    params: dict[int, FormationParams]
    beliefs: dict[int, PositionBelief]
    stamp: int


@dataclass
class PlannerTickResult:
    state: PlannerState
    reference: np.ndarray
    scale_active_pairs: list[tuple[int, int]] = field(default_factory=list)
    scale_status: str = STATUS_OPTIMAL
    vrb_speed: float = 0.0           # ||J d_eta|| after capping
    apf_violation: bool = False      # desired position breached the inflated boundary


def tracking_derivative(state: PlannerState, v_des) -> np.ndarray:
    """Parameter derivative that makes this robot's reference move at v_des."""
    v_des = np.asarray(v_des, dtype=float).reshape(2)
    J = jacobian(state.eta, state.base_point)
    return pseudo_inverse(J) @ v_des


def consensus_term(state: PlannerState, snapshot: NeighborSnapshot,
                   lambda_stiffness: float, topology=None) -> np.ndarray:
    """-lambda * sum_j (eta_i - eta_j) over the snapshot's neighbours.

    If a topology (iterable of robot indices) is given, every listed
    neighbour must be present; the caller decides how to thin the snapshot
    when robots go silent.
    """
    if topology is not None:
        missing = set(topology) - {state.self_index} - set(snapshot.params)
        if missing:
            raise StaleSnapshotError(f"snapshot missing robots {sorted(missing)}")
    eta_i = state.eta.as_vector()
    total = np.zeros(5)
    for j, eta_j in snapshot.params.items():
        if j == state.self_index:
            continue
        total += eta_i - eta_j.as_vector()
    return -lambda_stiffness * total


def apf_repulsion(p_des, obstacles: ObstacleMap, cfg: PlannerConfig,
                  xi: float, sigma_self) -> np.ndarray:
    """Repulsive velocity pushing the desired position away from obstacles.

    The obstacle distance is deflated by the clearance, the robot radius and
    xi times the largest position standard deviation, so an uncertain robot
    keeps a wider berth.  Zero outside the activation range; raises once the
    inflated boundary is breached.
    """
    p_des = np.asarray(p_des, dtype=float).reshape(2)
    if obstacles.is_empty:
        return np.zeros(2)
    sigma_self = np.asarray(sigma_self, dtype=float).reshape(2, 2)
    inflation = cfg.epsilon + cfg.robot_radius + xi * np.sqrt(
        max(lambda_max_2x2(sigma_self), 0.0))
    raw_dist, grad = obstacles.distance_and_gradient(p_des)
    rho = raw_dist - inflation
    if rho <= 0.0:
        raise InsideInflatedObstacleError(
            f"desired position {p_des} within inflated obstacle boundary (rho={rho:.4f})")
    if rho >= cfg.apf_range:
        return np.zeros(2)
    magnitude = cfg.apf_strength * (1.0 / rho - 1.0 / cfg.apf_range) / (rho * rho)
    return magnitude * grad


def compose_desired_velocity(state: PlannerState, operator_deta, v_rep) -> np.ndarray:
    """Operator formation rate mapped to this robot plus obstacle repulsion."""
    operator_deta = np.asarray(operator_deta, dtype=float).reshape(5)
    v_rep = np.asarray(v_rep, dtype=float).reshape(2)
    return jacobian(state.eta, state.base_point) @ operator_deta + v_rep


def velocity_cap(J: np.ndarray, deta, v_max: float) -> np.ndarray:
    """Scale the parameter derivative so the implied robot speed stays <= v_max."""
    deta = np.asarray(deta, dtype=float).reshape(5)
    speed = float(np.linalg.norm(J @ deta))
    if speed >= v_max:
        return (v_max / speed) * deta
    return deta


def planner_tick(state: PlannerState, snapshot: NeighborSnapshot, operator_deta,
                 obstacles: ObstacleMap, self_belief: PositionBelief,
                 cfg: PlannerConfig) -> PlannerTickResult:
    """Run one full planning step and return the new state and reference.

    Order: desired-velocity composition, tracking + consensus, constraint
    assembly at the current scale, scale projection (rotation and
    translation derivatives pass through), velocity cap, Euler update.
    If the desired position has breached an inflated obstacle boundary the
    tick still completes -- repulsion is evaluated at a floor distance and
    the result carries a violation flag for the caller to log.
    """
    i = state.self_index
    xi = cfg.xi
    J = jacobian(state.eta, state.base_point)
    p_des = transform_point(state.eta, state.base_point)

    apf_violation = False
    try:
        v_rep = apf_repulsion(p_des, obstacles, cfg, xi, self_belief.covariance)
    except InsideInflatedObstacleError:
        apf_violation = True
        _, grad = obstacles.distance_and_gradient(p_des)
        rho = 1e-3  # floored: push hard outward but keep the tick finite
        v_rep = cfg.apf_strength * (1.0 / rho - 1.0 / cfg.apf_range) / rho ** 2 * grad

    v_des = compose_desired_velocity(state, operator_deta, v_rep)
    deta = tracking_derivative(state, v_des) + consensus_term(
        state, snapshot, cfg.lambda_stiffness)

    beliefs, radii = [], []
    for j in range(state.base.n_robots):
        if j == i:
            beliefs.append(self_belief)
        else:
            if j not in snapshot.beliefs:
                raise StaleSnapshotError(f"no belief for robot {j}")
            beliefs.append(snapshot.beliefs[j])
        radii.append(cfg.robot_radius)

    s = state.eta.scale
    rows = assemble_constraints(s, beliefs, state.base, radii, cfg.epsilon, xi, i)
    solution: ActiveSetSolution = project_scale_derivative(
        ProjectionProblem(target=deta[1:3], current_scale=s, rows=rows))
    deta = deta.copy()
    deta[1:3] = solution.delta

    deta = velocity_cap(J, deta, cfg.v_max)
    vrb_speed = float(np.linalg.norm(J @ deta))

    eta_vec = state.eta.as_vector() + cfg.dt * deta
    # Keep strictly above the construction floor; reachable only for a lone
    # robot shrunk without any pair constraints.
    floor = np.nextafter(state.eta.s_min, np.inf)
    eta_vec[1:3] = np.maximum(eta_vec[1:3], floor)
    new_eta = FormationParams.from_vector(eta_vec, s_min=state.eta.s_min)

    reference = transform_point(new_eta, state.base_point)
    new_state = PlannerState(eta=new_eta, base=state.base, self_index=i,
                             last_reference=reference)
    return PlannerTickResult(
        state=new_state,
        reference=reference,
        scale_active_pairs=[rows.pairs[k] for k in solution.active_rows],
        scale_status=solution.status,
        vrb_speed=vrb_speed,
        apf_violation=apf_violation,
    )
