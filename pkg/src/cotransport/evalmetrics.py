"""Deterministic policy evaluation: collisions, arrivals, straightness, timing.

Episodes run at the policy mean with no exploration noise, one spawned seed
per episode, so a report is a pure function of (checkpoint, scenario, n,
seed). Straightness divides the payload midpoint's displacement along the
start-to-goal axis by the arc length it actually travelled; failures count at
the capped wall-clock duration.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional

import numpy as np

from .env import TransportEnv, trace_row, write_trace
from .scenario import EnvParams, ScenarioSpec
from .trainer import load_policies


class EvalError(RuntimeError):
    pass


DEFAULT_TIME_CAP_S = 35.0


def straightness(trajectory: np.ndarray, p_start, p_goal) -> float:
    """Projected displacement over arc length for one midpoint polyline.

    1 for a straight run at the goal, smaller for detours, 0 for a closed
    loop, negative when the net motion points away from the goal.
    """
    traj = np.asarray(trajectory, dtype=np.float64)
    if traj.ndim != 2 or traj.shape[0] < 2 or traj.shape[1] != 2:
        raise EvalError("trajectory must hold at least two planar points")
    axis = np.asarray(p_goal, dtype=np.float64) - np.asarray(p_start, dtype=np.float64)
    axis_len = float(np.linalg.norm(axis))
    if axis_len == 0.0:
        raise EvalError("start and goal coincide; goal direction undefined")
    arc = float(np.sum(np.linalg.norm(np.diff(traj, axis=0), axis=1)))
    if arc == 0.0:
        raise EvalError("zero arc length")
    displacement = float((traj[-1] - traj[0]) @ (axis / axis_len))
    return displacement / arc


@dataclass
class EpisodeResult:
    index: int
    steps: int
    arrived: bool
    collided: bool
    arrival_step: Optional[int]
    dt: float
    total_cost: float
    straightness: Optional[float]

    def to_row(self) -> dict:
        return {"index": self.index, "steps": self.steps,
                "arrived": self.arrived, "collided": self.collided,
                "arrival_step": self.arrival_step,
                "total_cost": self.total_cost,
                "straightness": self.straightness}


def time_consumption(episode: EpisodeResult, cap_s: float) -> float:
    """Seconds to arrival; a non-arriving episode counts at the cap."""
    if cap_s <= 0.0:
        raise EvalError("time cap must be positive")
    if episode.arrived:
        return episode.arrival_step * episode.dt
    return cap_s


@dataclass
class EvalReport:
    n_episodes: int
    collision_rate: float
    arrival_rate: float
    mean_straightness: Optional[float]
    mean_time_s: float
    mean_episode_cost: float
    episodes: List[EpisodeResult] = field(repr=False, default_factory=list)

    def to_dict(self) -> dict:
        return {"n_episodes": self.n_episodes,
                "collision_rate": self.collision_rate,
                "arrival_rate": self.arrival_rate,
                "mean_straightness": self.mean_straightness,
                "mean_time_s": self.mean_time_s,
                "mean_episode_cost": self.mean_episode_cost,
                "episodes": [ep.to_row() for ep in self.episodes]}


def run_episode(env: TransportEnv, policy_a, policy_b, index: int = 0,
                trace_path=None) -> EpisodeResult:
    obs = env.reset()
    rows = []
    total_cost = 0.0
    collided = False
    arrival_step: Optional[int] = None
    midpoints = [env.state.midpoint.copy()]
    step = 0
    while True:
        actions = np.stack([policy_a.mean(obs[0]), policy_b.mean(obs[1])])
        outcome = env.step(actions)
        if trace_path is not None:
            rows.append(trace_row(step, env.state, outcome))
        obs = outcome.observations
        total_cost += outcome.cost
        collided = collided or outcome.collided
        midpoints.append(env.state.midpoint.copy())
        if outcome.arrived and arrival_step is None:
            arrival_step = step
        # measurement stops at first arrival; training episodes run on to the cap
        if arrival_step is not None or outcome.terminal:
            break
        step += 1
    if trace_path is not None:
        write_trace(trace_path, rows)
    arrived = arrival_step is not None
    path = np.asarray(midpoints)
    value: Optional[float] = None
    if arrived:
        value = straightness(path, path[0], env.scenario.goal)
    return EpisodeResult(index=index, steps=len(path) - 1, arrived=arrived,
                         collided=collided, arrival_step=arrival_step,
                         dt=env.params.dt, total_cost=total_cost,
                         straightness=value)


def run_eval(checkpoint, scenario: ScenarioSpec,
             env_params: Optional[EnvParams], n: int, seed: int,
             time_cap_s: float = DEFAULT_TIME_CAP_S,
             trace_dir=None, expect_scenario: bool = True) -> EvalReport:
    """Evaluate a trained checkpoint over ``n`` independent episodes."""
    if n < 1:
        raise EvalError("need at least one evaluation episode")
    policy_a, policy_b, meta = load_policies(checkpoint)
    trained_on = meta.get("scenario_kind")
    if expect_scenario and trained_on is not None and trained_on != scenario.kind:
        raise EvalError(f"checkpoint was trained on {trained_on!r} but the "
                        f"evaluation scenario is {scenario.kind!r}")
    params = (env_params or EnvParams()).validate()
    if trace_dir is not None:
        trace_dir = Path(trace_dir)
        trace_dir.mkdir(parents=True, exist_ok=True)
    episodes = []
    for index, child in enumerate(np.random.SeedSequence(seed).spawn(n)):
        env = TransportEnv(scenario, params, np.random.default_rng(child))
        trace_path = (None if trace_dir is None
                      else trace_dir / f"episode_{index:03d}.csv")
        episodes.append(run_episode(env, policy_a, policy_b, index,
                                    trace_path))
    arriving = [ep.straightness for ep in episodes if ep.arrived]
    mean_straight = (float(np.mean(arriving)) if arriving else None)
    return EvalReport(
        n_episodes=n,
        collision_rate=float(np.mean([ep.collided for ep in episodes])),
        arrival_rate=float(np.mean([ep.arrived for ep in episodes])),
        mean_straightness=mean_straight,
        mean_time_s=float(np.mean([time_consumption(ep, time_cap_s)
                                   for ep in episodes])),
        mean_episode_cost=float(np.mean([ep.total_cost for ep in episodes])),
        episodes=episodes)
