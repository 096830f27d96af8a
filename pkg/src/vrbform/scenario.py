"""Scenario definitions, the scenario text format, and the corridor builder.

Scenario files are plain key = value text with units spelled out in the key
names; repeated keys build lists (walls, covariance breakpoints, command
steps).  Round-trips through format_scenario/parse_scenario exactly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .chance import min_distance_bound
from .obstacles import ObstacleMap
from .planner import PlannerConfig
from .vrb import BaseConfiguration, FormationParams, recenter_base

DEFAULT_SEED = 7


class ScenarioParseError(ValueError):
    pass


class ScenarioInfeasibleError(ValueError):
    pass


@dataclass
class SigmaSchedule:
    """Piecewise-linear isotropic position covariance over ticks.

    Breakpoints are (tick, variance) pairs; the covariance at tick t is
    value(t) * I.  A single breakpoint means a constant schedule.
    """

    breakpoints: list[tuple[int, float]] = field(default_factory=lambda: [(0, 0.0)])

    def __post_init__(self):
        if not self.breakpoints:
            raise ValueError("schedule needs at least one breakpoint")
        self.breakpoints = sorted((int(t), float(v)) for t, v in self.breakpoints)
        if any(v < 0.0 for _, v in self.breakpoints):
            raise ValueError("variances must be nonnegative")

    def value(self, tick: int) -> float:
        pts = self.breakpoints
        if tick <= pts[0][0]:
            return pts[0][1]
        if tick >= pts[-1][0]:
            return pts[-1][1]
        for (t0, v0), (t1, v1) in zip(pts, pts[1:]):
            if t0 <= tick <= t1:
                if t1 == t0:
                    return v1
                return v0 + (v1 - v0) * (tick - t0) / (t1 - t0)
        return pts[-1][1]

    def covariance(self, tick: int) -> np.ndarray:
        return self.value(tick) * np.eye(2)

    def max_value(self) -> float:
        return max(v for _, v in self.breakpoints)


@dataclass
class CommandScript:
    """Piecewise-constant operator formation rate: (tick, 5-vector) steps."""

    steps: list[tuple[int, np.ndarray]] = field(default_factory=list)

    def __post_init__(self):
        self.steps = sorted(
            ((int(t), np.asarray(v, dtype=float).reshape(5)) for t, v in self.steps),
            key=lambda s: s[0])

    def value(self, tick: int) -> np.ndarray:
        current = np.zeros(5)
        for t, v in self.steps:
            if t > tick:
                break
            current = v
        return current


@dataclass
class BusPolicy:
    """Parameter-exchange behaviour: lockstep by default, lossy/laggy on request."""

    drop_prob: float = 0.0
    delay_ticks: int = 0

    def __post_init__(self):
        if not 0.0 <= self.drop_prob < 1.0:
            raise ValueError("drop_prob must be in [0, 1)")
        if self.delay_ticks < 0:
            raise ValueError("delay_ticks must be nonnegative")


@dataclass
class Scenario:
    name: str
    base: BaseConfiguration
    init_etas: list[FormationParams]
    config: PlannerConfig
    obstacles: ObstacleMap
    sigma: SigmaSchedule
    commands: CommandScript
    duration_ticks: int
    seed: int = DEFAULT_SEED
    bus: BusPolicy = field(default_factory=BusPolicy)

    def __post_init__(self):
        if len(self.init_etas) != self.base.n_robots:
            raise ValueError("need one initial parameter vector per robot")
        if self.duration_ticks < 1:
            raise ValueError("duration must be at least one tick")

    @property
    def n_robots(self) -> int:
        return self.base.n_robots


def corridor_scenario(width: float, n_robots: int, cfg: PlannerConfig, *,
                      length: float = 4.0, start_x: float = -3.0,
                      push_rate: float = 0.3, duration_ticks: int = 1400,
                      sigma_variance: float = 0.0, seed: int = DEFAULT_SEED
                      ) -> Scenario:
    """Square formation driven east through a straight corridor.

    The corridor is two horizontal walls y = +/- width/2 spanning
    x in [0, length].  Feasibility: the narrowest abreast pair needs the
    pair distance bound between centres plus inflated clearance to each
    wall; a narrower corridor cannot be passed at the configured collision
    probability and is rejected.
    """
    if width <= 0.0:
        raise ScenarioInfeasibleError("corridor width must be positive")
    xi = cfg.xi
    inflation = cfg.robot_radius + cfg.epsilon + xi * np.sqrt(sigma_variance * 2.0)
    if n_robots >= 2:
        pair_bound = min_distance_bound(cfg.robot_radius, cfg.robot_radius,
                                        cfg.epsilon, xi, 2.0 * sigma_variance)
        width_min = pair_bound + 2.0 * inflation
    else:
        width_min = 2.0 * inflation
    if width <= width_min:
        raise ScenarioInfeasibleError(
            f"corridor width {width} m cannot be passed: needs > {width_min:.3f} m")

    base = recenter_base(_formation_points(n_robots))
    eta0 = FormationParams(0.0, np.ones(2), np.array([start_x, 0.0]))
    walls = [((0.0, width / 2.0), (length, width / 2.0)),
             ((0.0, -width / 2.0), (length, -width / 2.0))]
    return Scenario(
        name="corridor",
        base=base,
        init_etas=[FormationParams(0.0, eta0.scale.copy(), eta0.translation.copy())
                   for _ in range(n_robots)],
        config=cfg,
        obstacles=ObstacleMap(segments=walls),
        sigma=SigmaSchedule([(0, sigma_variance)]),
        commands=CommandScript([(0, np.array([0.0, 0.0, 0.0, push_rate, 0.0]))]),
        duration_ticks=duration_ticks,
        seed=seed,
    )


def _formation_points(n: int) -> np.ndarray:
    if n == 1:
        return np.zeros((1, 2))
    if n == 4:
        return np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    angles = 2.0 * np.pi * np.arange(n) / n
    return np.column_stack([np.cos(angles), np.sin(angles)])


# --- scenario text format ---------------------------------------------------

def format_scenario(sc: Scenario) -> str:
    cfg = sc.config
    lines = [
        f"name = {sc.name}",
        f"seed = {sc.seed}",
        f"duration_ticks = {sc.duration_ticks}",
        f"dt_s = {cfg.dt!r}",
        f"lambda_per_s = {cfg.lambda_stiffness!r}",
        f"v_max_m_per_s = {cfg.v_max!r}",
        f"epsilon_m = {cfg.epsilon!r}",
        f"p_coll_bound = {cfg.p_coll_bound!r}",
        f"apf_strength = {cfg.apf_strength!r}",
        f"apf_range_m = {cfg.apf_range!r}",
        f"robot_radius_m = {cfg.robot_radius!r}",
        "base_points_m = " + " ".join(_fmt_pt(p) for p in sc.base.points),
    ]
    for eta in sc.init_etas:
        lines.append("init_eta = " + " ".join(repr(float(x)) for x in eta.as_vector()))
    for p, q in sc.obstacles.segments:
        lines.append(f"wall_m = {_fmt_pt(p)} {_fmt_pt(q)}")
    for c, r in sc.obstacles.circles:
        lines.append(f"circle_m = {_fmt_pt(c)} {r!r}")
    for t, v in sc.sigma.breakpoints:
        lines.append(f"sigma_m2 = {t} {v!r}")
    for t, v in sc.commands.steps:
        lines.append(f"command = {t} " + " ".join(repr(float(x)) for x in v))
    lines.append(f"bus_drop_prob = {sc.bus.drop_prob!r}")
    lines.append(f"bus_delay_ticks = {sc.bus.delay_ticks}")
    return "\n".join(lines) + "\n"


def parse_scenario(text: str) -> Scenario:
    entries: list[tuple[str, str]] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ScenarioParseError(f"line {lineno}: expected 'key = value'")
        key, value = line.split("=", 1)
        entries.append((key.strip(), value.strip()))

    single = dict(entries)

    def need(key: str) -> str:
        if key not in single:
            raise ScenarioParseError(f"missing required key '{key}'")
        return single[key]

    def repeated(key: str) -> list[str]:
        return [v for k, v in entries if k == key]

    try:
        cfg = PlannerConfig(
            lambda_stiffness=float(need("lambda_per_s")),
            v_max=float(need("v_max_m_per_s")),
            dt=float(need("dt_s")),
            epsilon=float(need("epsilon_m")),
            p_coll_bound=float(need("p_coll_bound")),
            apf_strength=float(need("apf_strength")),
            apf_range=float(need("apf_range_m")),
            robot_radius=float(need("robot_radius_m")),
        )
        base = BaseConfiguration(np.array(_parse_points(need("base_points_m"))))
        eta_lines = repeated("init_eta")
        if not eta_lines:
            raise ScenarioParseError("missing required key 'init_eta'")
        etas = [FormationParams.from_vector([float(x) for x in line.split()])
                for line in eta_lines]
        if len(etas) == 1 and base.n_robots > 1:
            etas = [FormationParams.from_vector(etas[0].as_vector())
                    for _ in range(base.n_robots)]
        walls = []
        for line in repeated("wall_m"):
            pts = _parse_points(line)
            if len(pts) != 2:
                raise ScenarioParseError(f"wall needs two endpoints: '{line}'")
            walls.append((pts[0], pts[1]))
        circles = []
        for line in repeated("circle_m"):
            m = re.match(r"^(\([^)]*\))\s+(\S+)$", line)
            if not m:
                raise ScenarioParseError(f"circle needs '(x,y) radius': '{line}'")
            circles.append((_parse_points(m.group(1))[0], float(m.group(2))))
        sigma_points = []
        for line in repeated("sigma_m2"):
            t, v = line.split()
            sigma_points.append((int(t), float(v)))
        steps = []
        for line in repeated("command"):
            parts = line.split()
            if len(parts) != 6:
                raise ScenarioParseError(f"command needs 'tick d1..d5': '{line}'")
            steps.append((int(parts[0]), [float(x) for x in parts[1:]]))
        return Scenario(
            name=single.get("name", "scenario"),
            base=base,
            init_etas=etas,
            config=cfg,
            obstacles=ObstacleMap(circles=circles, segments=walls),
            sigma=SigmaSchedule(sigma_points or [(0, 0.0)]),
            commands=CommandScript(steps),
            duration_ticks=int(need("duration_ticks")),
            seed=int(single.get("seed", DEFAULT_SEED)),
            bus=BusPolicy(drop_prob=float(single.get("bus_drop_prob", 0.0)),
                          delay_ticks=int(single.get("bus_delay_ticks", 0))),
        )
    except ScenarioParseError:
        raise
    except (ValueError, KeyError) as exc:
        raise ScenarioParseError(f"bad scenario value: {exc}") from exc


def load_scenario(path) -> Scenario:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioParseError(f"cannot read scenario file {path}: {exc}") from exc
    return parse_scenario(text)


def save_scenario(sc: Scenario, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_scenario(sc))


def _fmt_pt(p) -> str:
    return f"({float(p[0])!r},{float(p[1])!r})"


def _parse_points(text: str) -> list[np.ndarray]:
    matches = re.findall(r"\(([^)]*)\)", text)
    if not matches:
        raise ScenarioParseError(f"expected '(x,y)' points in '{text}'")
    points = []
    for body in matches:
        parts = body.split(",")
        if len(parts) != 2:
            raise ScenarioParseError(f"point needs two coordinates: '({body})'")
        points.append(np.array([float(parts[0]), float(parts[1])]))
    return points
