"""Kinematic 2D simulation of two velocity-commanded robots carrying a rigid rod.

Each robot tracks commanded planar velocity and yaw rate with a first-order
lag; after free integration the positions and velocities are projected back
onto the rigid-link constraint. Rewards and costs follow the indicator
structure of the task: progress and arrival of the payload midpoint on the
reward side, opposed link commands and probe collisions on the cost side.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, Sequence

import numpy as np

from .geometry import max_penetration, segment_hits
from .scenario import EnvParams, ScenarioSpec


class EnvError(RuntimeError):
    pass


def wrap_angle(theta: float) -> float:
    """Wrap to (-pi, pi]."""
    wrapped = math.fmod(theta + math.pi, 2.0 * math.pi)
    if wrapped <= 0.0:
        wrapped += 2.0 * math.pi
    return wrapped - math.pi


@dataclass
class RobotState:
    position: np.ndarray       # (2,)
    prev_position: np.ndarray  # (2,)
    velocity: np.ndarray       # (2,)
    yaw: float
    yaw_rate: float
    probes: np.ndarray         # (4,) penetration depths, >= 0

    def copy(self) -> "RobotState":
        return RobotState(self.position.copy(), self.prev_position.copy(),
                          self.velocity.copy(), self.yaw, self.yaw_rate,
                          self.probes.copy())


@dataclass
class EnvState:
    robot_a: RobotState
    robot_b: RobotState
    link_length: float
    step_index: int = 0
    arrived: bool = False
    timed_out: bool = False

    @property
    def terminal(self) -> bool:
        # episodes run to the step cap; arrival is a sticky flag, not an exit,
        # so the destination reward keeps paying while the payload holds the goal
        return self.timed_out

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.robot_a.position + self.robot_b.position)

    def copy(self) -> "EnvState":
        return EnvState(self.robot_a.copy(), self.robot_b.copy(),
                        self.link_length, self.step_index,
                        self.arrived, self.timed_out)


@dataclass
class StepOutcome:
    reward: float
    cost: float
    collided: bool
    arrived: bool
    observations: np.ndarray   # (2, OBS_DIM), row 0 robot a, row 1 robot b
    terminal: bool = False
    info: dict = field(default_factory=dict)


OBS_DIM = 18
ACT_DIM = 3  # commanded (vx, vy, omega)

# body-frame probe offsets before yaw rotation: front, back, left, right
_PROBE_DIRS = np.array([(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)])


def reward_move_forward(p_t: np.ndarray, p_prev: np.ndarray, p_d: np.ndarray,
                        w_f: float) -> float:
    """w_f if the system moved strictly closer to the destination."""
    return w_f if np.linalg.norm(p_t - p_d) < np.linalg.norm(p_prev - p_d) else 0.0


def reward_destination(p_t: np.ndarray, p_d: np.ndarray, b: float, w_d: float) -> float:
    """w_d if the system is strictly within the arrival radius."""
    return w_d if np.linalg.norm(p_t - p_d) < b else 0.0


def cost_collaboration(al_a: float, al_b: float, w_m: float) -> float:
    """w_m when the commanded link-axis velocity components oppose each other."""
    return w_m if al_a * al_b < 0.0 else 0.0


def cost_collision(probes: np.ndarray, w_c: float) -> float:
    """w_c per probe with strictly positive penetration, over all 8 probes."""
    return w_c * float(np.count_nonzero(probes > 0.0))


def probe_points(robot: RobotState, probe_radius: float) -> np.ndarray:
    c, s = math.cos(robot.yaw), math.sin(robot.yaw)
    rot = np.array([[c, -s], [s, c]])
    return robot.position + probe_radius * (_PROBE_DIRS @ rot.T)


def detect_collisions(state: EnvState, scenario: ScenarioSpec,
                      probe_radius: float) -> tuple[np.ndarray, np.ndarray]:
    """Penetration depth at the 4 probe points of each robot."""
    out = []
    for robot in (state.robot_a, state.robot_b):
        pts = probe_points(robot, probe_radius)
        out.append(np.array([max_penetration(p, scenario.obstacles) for p in pts]))
    return out[0], out[1]


def enforce_link(state: EnvState) -> EnvState:
    """Project the pair back onto the rigid-rod constraint.

    Positions move symmetrically toward the midpoint so that the distance is
    exactly the link length; the relative velocity component along the link
    is removed in equal parts from both robots.
    """
    a, b = state.robot_a.copy(), state.robot_b.copy()
    delta = b.position - a.position
    dist = float(np.linalg.norm(delta))
    if dist == 0.0:
        raise EnvError("coincident robot positions: link direction undefined")
    u = delta / dist
    mid = 0.5 * (a.position + b.position)
    half = 0.5 * state.link_length
    a.position = mid - half * u
    b.position = mid + half * u
    s = 0.5 * float((b.velocity - a.velocity) @ u)
    a.velocity = a.velocity + s * u
    b.velocity = b.velocity - s * u
    return replace(state, robot_a=a, robot_b=b)


def observe(state: EnvState, scenario: ScenarioSpec) -> np.ndarray:
    """Per-robot observation rows: goal, own kinematics, probes, partner terms."""
    goal = np.asarray(scenario.goal, dtype=float)
    rows = []
    for robot, partner in ((state.robot_a, state.robot_b),
                           (state.robot_b, state.robot_a)):
        rel = partner.position - robot.position
        u = rel / np.linalg.norm(rel)
        rows.append(np.concatenate([
            goal, robot.position, robot.prev_position, robot.velocity,
            [robot.yaw_rate, robot.yaw], robot.probes, rel, u,
        ]))
    obs = np.stack(rows)
    if not np.all(np.isfinite(obs)):
        raise EnvError("non-finite observation")
    return obs


class TransportEnv:
    """Single scenario instance with its own RNG stream.

    Stepping is a pure function of (state, actions, scenario); the stream is
    consumed only by reset placement, so identical (scenario, seed, action
    sequence) reproduce bitwise-identical trajectories.
    """

    RESET_TRIES = 100

    def __init__(self, scenario: ScenarioSpec, params: Optional[EnvParams] = None,
                 rng: Optional[np.random.Generator] = None):
        self.scenario = scenario.validate()
        self.params = (params or EnvParams()).validate()
        self.rng = rng if rng is not None else np.random.default_rng()
        self.state: Optional[EnvState] = None

    def seed(self, seed: int) -> None:
        self.rng = np.random.default_rng(seed)

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        if seed is not None:
            self.seed(seed)
        sc, pp = self.scenario, self.params
        region = sc.start_region
        lo = np.array(region.center) - np.array(region.half_extents)
        hi = np.array(region.center) + np.array(region.half_extents)
        half = 0.5 * pp.link_length
        for _ in range(self.RESET_TRIES):
            mid = self.rng.uniform(lo, hi)
            phi = self.rng.uniform(-math.pi, math.pi)
            u = np.array([math.cos(phi), math.sin(phi)])
            yaws = self.rng.uniform(-math.pi, math.pi, size=2)
            robots = []
            for pos, yaw in ((mid - half * u, yaws[0]), (mid + half * u, yaws[1])):
                robots.append(RobotState(pos.copy(), pos.copy(), np.zeros(2),
                                         wrap_angle(yaw), 0.0, np.zeros(4)))
            state = EnvState(robots[0], robots[1], pp.link_length)
            pa, pb = detect_collisions(state, sc, pp.probe_radius)
            if pa.max() == 0.0 and pb.max() == 0.0:
                state.robot_a.probes = pa
                state.robot_b.probes = pb
                self.state = state
                return observe(state, sc)
        raise EnvError(
            f"no collision-free start found in {self.RESET_TRIES} tries "
            f"(scenario {sc.kind!r})")

    def step(self, actions: np.ndarray) -> StepOutcome:
        """Advance one control step. ``actions`` is (2, 3): [vx, vy, yaw_rate] per robot."""
        if self.state is None:
            raise EnvError("step before reset")
        if self.state.terminal:
            raise EnvError("step on terminal state; reset first")
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (2, 3):
            raise EnvError(f"actions must have shape (2, 3), got {actions.shape}")
        if not np.all(np.isfinite(actions)):
            raise EnvError("non-finite action")
        sc, pp = self.scenario, self.params
        state = self.state.copy()
        a_v = np.clip(actions[:, :2], -pp.v_max, pp.v_max)
        a_w = np.clip(actions[:, 2], -pp.omega_max, pp.omega_max)

        link = state.robot_b.position - state.robot_a.position
        u_link = link / np.linalg.norm(link)
        mid_prev = state.midpoint

        alpha = pp.dt / pp.tau
        for idx, robot in enumerate((state.robot_a, state.robot_b)):
            robot.prev_position = robot.position.copy()
            robot.velocity = robot.velocity + alpha * (a_v[idx] - robot.velocity)
            robot.yaw_rate = robot.yaw_rate + alpha * (float(a_w[idx]) - robot.yaw_rate)
            robot.position = robot.position + pp.dt * robot.velocity
            robot.yaw = wrap_angle(robot.yaw + pp.dt * robot.yaw_rate)

        state = enforce_link(state)
        pa, pb = detect_collisions(state, sc, pp.probe_radius)
        state.robot_a.probes = pa
        state.robot_b.probes = pb

        goal = np.asarray(sc.goal, dtype=float)
        mid = state.midpoint
        r_f = reward_move_forward(mid, mid_prev, goal, pp.w_f)
        r_d = reward_destination(mid, goal, sc.arrival_radius, pp.w_d)
        al_a = float(a_v[0] @ u_link)
        al_b = float(a_v[1] @ u_link)
        c_m = cost_collaboration(al_a, al_b, pp.w_m)
        probes = np.concatenate([pa, pb])
        c_c = cost_collision(probes, pp.w_c)
        collided = bool(probes.max() > 0.0)
        rod_contact = segment_hits(state.robot_a.position, state.robot_b.position,
                                   sc.obstacles)

        state.step_index += 1
        inside = r_d > 0.0 or (pp.w_d == 0.0 and
                               float(np.linalg.norm(mid - goal)) < sc.arrival_radius)
        state.arrived = state.arrived or inside
        state.timed_out = state.step_index >= sc.episode_cap
        self.state = state
        return StepOutcome(
            reward=r_f + r_d,
            cost=c_m + c_c,
            collided=collided,
            arrived=state.arrived,
            observations=observe(state, sc),
            terminal=state.terminal,
            info={"r_f": r_f, "r_d": r_d, "c_m": c_m, "c_c": c_c,
                  "rod_contact": rod_contact},
        )


class BatchEnv:
    """Fixed-order collection of environments with independent RNG streams.

    Terminal environments reset automatically during ``step``; the returned
    observation row then belongs to the fresh episode while reward, cost and
    flags describe the transition that ended the old one.
    """

    def __init__(self, scenario: ScenarioSpec, params: EnvParams, n_envs: int,
                 seed):
        if n_envs < 1:
            raise EnvError("need at least one environment")
        entropy = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
        streams = entropy.spawn(n_envs)
        self.envs = [TransportEnv(scenario, params, np.random.default_rng(s))
                     for s in streams]

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def reset_all(self) -> np.ndarray:
        return np.stack([env.reset() for env in self.envs])

    def step(self, actions: np.ndarray) -> tuple[np.ndarray, list[StepOutcome]]:
        actions = np.asarray(actions, dtype=float)
        if actions.shape != (self.n_envs, 2, 3):
            raise EnvError(f"batch actions must have shape ({self.n_envs}, 2, 3), "
                           f"got {actions.shape}")
        outcomes = []
        obs_rows = []
        for env, act in zip(self.envs, actions):
            outcome = env.step(act)
            if outcome.terminal:
                obs_rows.append(env.reset())
            else:
                obs_rows.append(outcome.observations)
            outcomes.append(outcome)
        return np.stack(obs_rows), outcomes


TRACE_COLUMNS = ["step", "x_a", "y_a", "theta_a", "x_b", "y_b", "theta_b",
                 "v_ax", "v_ay", "v_bx", "v_by", "reward", "cost",
                 "collided", "arrived"]


def write_trace(path, rows: Iterable[dict]) -> None:
    """Dump an episode trace as CSV with full-precision floats."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for row in rows:
            writer.writerow([row["step"]] + [repr(float(row[c])) for c in TRACE_COLUMNS[1:-2]]
                            + [int(row["collided"]), int(row["arrived"])])


def trace_row(step: int, state: EnvState, outcome: StepOutcome) -> dict:
    a, b = state.robot_a, state.robot_b
    return {"step": step,
            "x_a": a.position[0], "y_a": a.position[1], "theta_a": a.yaw,
            "x_b": b.position[0], "y_b": b.position[1], "theta_b": b.yaw,
            "v_ax": a.velocity[0], "v_ay": a.velocity[1],
            "v_bx": b.velocity[0], "v_by": b.velocity[1],
            "reward": outcome.reward, "cost": outcome.cost,
            "collided": outcome.collided, "arrived": outcome.arrived}
