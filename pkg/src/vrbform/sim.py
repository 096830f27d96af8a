"""Deterministic lockstep world simulator.

Each tick: refresh position beliefs from the covariance schedule, exchange
parameters over the (possibly lossy/laggy) bus, run every robot's planner
against the same pre-tick snapshot, move the robots toward their new
references with first-order tracking, and append metrics.  All randomness
derives from the run seed keyed by (tick, robot), so reruns are
bit-identical and per-robot work could be parallelised without changing
the rollout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .chance import PositionBelief, lambda_max_2x2, min_distance_bound
from .planner import (STALE_LIMIT_TICKS, NeighborSnapshot, PlannerState,
                      PlannerTickResult, planner_tick)
from .scenario import Scenario
from .vrb import transform_point

_BUS_STREAM = 100_000  # rng stream offset separating bus draws from noise draws


class SimulationDivergedError(RuntimeError):
    def __init__(self, tick: int, message: str):
        super().__init__(f"tick {tick}: {message}")
        self.tick = tick


@dataclass
class RobotTruth:
    position: np.ndarray
    radius: float
    belief: PositionBelief

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=float).reshape(2)


@dataclass
class PairRecord:
    i: int
    j: int
    dist_true: float
    dist_belief: float
    bound: float
    active: bool


class MetricsLog:
    """Per-tick rollout record; one append per tick, export to CSV/JSONL."""

    STATES_HEADER = ("tick,robot,phi,s_x,s_y,t_x,t_y,ref_x,ref_y,"
                     "pos_x,pos_y,belief_x,belief_y,vrb_speed")
    PAIRS_HEADER = "tick,i,j,dist_true,dist_belief,bound,active"

    def __init__(self):
        self.ticks: list[int] = []
        self.etas: list[np.ndarray] = []        # (N, 5) per tick
        self.references: list[np.ndarray] = []  # (N, 2)
        self.positions: list[np.ndarray] = []   # (N, 2)
        self.belief_means: list[np.ndarray] = []
        self.vrb_speeds: list[np.ndarray] = []  # (N,)
        self.pairs: list[list[PairRecord]] = []
        self.apf_violations: list[list[int]] = []
        self.scale_frozen: list[list[int]] = []

    def append(self, tick, etas, references, positions, belief_means,
               vrb_speeds, pair_records, apf_violations, scale_frozen):
        if self.ticks and tick <= self.ticks[-1]:
            raise ValueError("tick stamps must be strictly increasing")
        self.ticks.append(tick)
        self.etas.append(etas)
        self.references.append(references)
        self.positions.append(positions)
        self.belief_means.append(belief_means)
        self.vrb_speeds.append(vrb_speeds)
        self.pairs.append(pair_records)
        self.apf_violations.append(apf_violations)
        self.scale_frozen.append(scale_frozen)

    def __len__(self) -> int:
        return len(self.ticks)

    def min_pair_distance_series(self) -> np.ndarray:
        return np.array([min((p.dist_true for p in recs), default=np.inf)
                         for recs in self.pairs])

    def pair_bound_series(self) -> np.ndarray:
        return np.array([max((p.bound for p in recs), default=0.0)
                         for recs in self.pairs])

    def first_activation_tick(self) -> int | None:
        for tick, recs in zip(self.ticks, self.pairs):
            if any(p.active for p in recs):
                return tick
        return None

    def states_csv(self) -> str:
        lines = [self.STATES_HEADER]
        for k, tick in enumerate(self.ticks):
            for r in range(self.etas[k].shape[0]):
                eta = self.etas[k][r]
                ref = self.references[k][r]
                pos = self.positions[k][r]
                bel = self.belief_means[k][r]
                lines.append(",".join(
                    [str(tick), str(r)]
                    + [repr(float(x)) for x in (*eta, *ref, *pos, *bel,
                                                self.vrb_speeds[k][r])]))
        return "\n".join(lines) + "\n"

    def pairs_csv(self) -> str:
        lines = [self.PAIRS_HEADER]
        for tick, recs in zip(self.ticks, self.pairs):
            for p in recs:
                lines.append(",".join([
                    str(tick), str(p.i), str(p.j),
                    repr(float(p.dist_true)), repr(float(p.dist_belief)),
                    repr(float(p.bound)), str(int(p.active))]))
        return "\n".join(lines) + "\n"

    def jsonl(self) -> str:
        lines = []
        for k, tick in enumerate(self.ticks):
            lines.append(json.dumps({
                "tick": tick,
                "eta": self.etas[k].tolist(),
                "ref": self.references[k].tolist(),
                "pos": self.positions[k].tolist(),
                "belief": self.belief_means[k].tolist(),
                "vrb_speed": self.vrb_speeds[k].tolist(),
                "pairs": [{"i": p.i, "j": p.j, "dist": p.dist_true,
                           "dist_belief": p.dist_belief, "bound": p.bound,
                           "active": p.active} for p in self.pairs[k]],
            }, sort_keys=True, separators=(",", ":")))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        min_dist = self.min_pair_distance_series()
        finite = min_dist[np.isfinite(min_dist)]
        return {
            "ticks": len(self.ticks),
            "min_pair_distance": float(finite.min()) if finite.size else None,
            "max_pair_bound": float(self.pair_bound_series().max()) if self.ticks else None,
            "first_activation_tick": self.first_activation_tick(),
            "apf_violation_ticks": sum(1 for v in self.apf_violations if v),
            "final_centroid": self.positions[-1].mean(axis=0).tolist() if self.ticks else None,
        }


@dataclass
class WorldState:
    scenario: Scenario
    tick: int
    robots: list[RobotTruth]
    planners: list[PlannerState]
    # inbox[receiver][sender] = (stamp, eta, belief): last delivered message
    inbox: list[dict[int, tuple]]
    history: list[list[tuple]] = field(default_factory=list)
    metrics: MetricsLog = field(default_factory=MetricsLog)


def build_world(scenario: Scenario) -> WorldState:
    n = scenario.n_robots
    cfg = scenario.config
    cov0 = scenario.sigma.covariance(0)
    robots, planners = [], []
    for i in range(n):
        state = PlannerState(eta=scenario.init_etas[i], base=scenario.base,
                             self_index=i)
        position = transform_point(state.eta, state.base_point)
        robots.append(RobotTruth(position=position, radius=cfg.robot_radius,
                                 belief=PositionBelief(position.copy(), cov0)))
        planners.append(state)
    inbox = []
    for i in range(n):
        inbox.append({j: (-1, planners[j].eta, robots[j].belief)
                      for j in range(n) if j != i})
    return WorldState(scenario=scenario, tick=0, robots=robots,
                      planners=planners, inbox=inbox)


def step_world(world: WorldState, operator_deta) -> WorldState:
    sc = world.scenario
    cfg = sc.config
    n = sc.n_robots
    t = world.tick
    operator_deta = np.asarray(operator_deta, dtype=float).reshape(5)

    for i in range(n):
        if not (np.all(np.isfinite(world.robots[i].position))
                and np.all(np.isfinite(world.planners[i].eta.as_vector()))):
            raise SimulationDivergedError(t, f"robot {i} state is not finite")

    # 1. Resample beliefs from the covariance schedule.
    variance = sc.sigma.value(t)
    cov = variance * np.eye(2)
    for i, robot in enumerate(world.robots):
        rng = np.random.default_rng([sc.seed, t, i])
        noise = np.sqrt(variance) * rng.standard_normal(2)
        robot.belief = PositionBelief(robot.position + noise, cov)

    # 2. Publish current state, deliver per bus policy.
    world.history.append([(world.planners[j].eta, world.robots[j].belief)
                          for j in range(n)])
    src_tick = t - sc.bus.delay_ticks
    for i in range(n):
        rng = np.random.default_rng([sc.seed, t, _BUS_STREAM + i])
        for j in range(n):
            if j == i:
                continue
            if sc.bus.drop_prob > 0.0 and rng.random() < sc.bus.drop_prob:
                continue
            if src_tick >= 0:
                eta_j, belief_j = world.history[src_tick][j]
                world.inbox[i][j] = (t, eta_j, belief_j)

    # 3. Plan: every robot reads the same pre-tick snapshot.
    results: list[PlannerTickResult] = []
    for i in range(n):
        params = {j: eta for j, (stamp, eta, _) in world.inbox[i].items()
                  if t - stamp <= STALE_LIMIT_TICKS}
        beliefs = {j: belief for j, (_, _, belief) in world.inbox[i].items()}
        snapshot = NeighborSnapshot(params=params, beliefs=beliefs, stamp=t)
        results.append(planner_tick(world.planners[i], snapshot, operator_deta,
                                    sc.obstacles, world.robots[i].belief, cfg))

    # 4. Apply plans, move robots toward the new references.
    references = np.zeros((n, 2))
    for i, res in enumerate(results):
        world.planners[i] = res.state
        references[i] = res.reference
        gap = res.reference - world.robots[i].position
        dist = float(np.linalg.norm(gap))
        if dist > 0.0:
            step = min(cfg.v_max * cfg.dt, dist)
            world.robots[i].position = world.robots[i].position + (step / dist) * gap

    # 5. Divergence guard.
    for i in range(n):
        if not (np.all(np.isfinite(world.robots[i].position))
                and np.all(np.isfinite(world.planners[i].eta.as_vector()))):
            raise SimulationDivergedError(t, f"robot {i} state is not finite")

    # 6. Metrics.
    xi = cfg.xi
    active_pairs = set()
    for res in results:
        for pair in res.scale_active_pairs:
            active_pairs.add(tuple(sorted(pair)))
    pair_records = []
    for i in range(n):
        for j in range(i + 1, n):
            lmax = lambda_max_2x2(world.robots[i].belief.covariance
                                  + world.robots[j].belief.covariance)
            pair_records.append(PairRecord(
                i=i, j=j,
                dist_true=float(np.linalg.norm(world.robots[j].position
                                               - world.robots[i].position)),
                dist_belief=float(np.linalg.norm(world.robots[j].belief.mean
                                                 - world.robots[i].belief.mean)),
                bound=float(min_distance_bound(cfg.robot_radius, cfg.robot_radius,
                                               cfg.epsilon, xi, lmax)),
                active=(i, j) in active_pairs,
            ))
    world.metrics.append(
        tick=t,
        etas=np.array([world.planners[i].eta.as_vector() for i in range(n)]),
        references=references,
        positions=np.array([world.robots[i].position for i in range(n)]),
        belief_means=np.array([world.robots[i].belief.mean for i in range(n)]),
        vrb_speeds=np.array([res.vrb_speed for res in results]),
        pair_records=pair_records,
        apf_violations=[i for i, res in enumerate(results) if res.apf_violation],
        scale_frozen=[i for i, res in enumerate(results)
                      if res.scale_status != "optimal"],
    )
    world.tick += 1
    return world


def run_scenario(scenario: Scenario) -> MetricsLog:
    """Full deterministic rollout of a scenario."""
    world = build_world(scenario)
    for t in range(scenario.duration_ticks):
        step_world(world, scenario.commands.value(t))
    return world.metrics
