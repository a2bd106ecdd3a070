"""Scenario construction: gate, corridor, and forest layouts.

A scenario is the static world (obstacles, start region, goal) plus episode
bookkeeping; the physical constants live in EnvParams. Both can be read from
a flat key-value scenario file.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .geometry import Circle, Obstacle, Rect
from .kvfile import load_kv


class ScenarioError(ValueError):
    """Invalid scenario geometry or parameters."""


@dataclass(frozen=True)
class EnvParams:
    """Physical constants and reward/cost weights shared by all scenarios."""

    w_f: float = 1.0          # move-forward reward weight
    w_d: float = 10.0         # destination-reached reward weight
    w_m: float = 1.0          # collaboration cost weight
    w_c: float = 5.0          # collision cost weight per probe
    link_length: float = 1.2  # rigid payload rod (m)
    dt: float = 0.1           # control step (s)
    tau: float = 0.2          # velocity tracking time constant (s)
    v_max: float = 1.0        # per-axis linear command bound (m/s)
    omega_max: float = 1.5    # yaw rate command bound (rad/s)
    probe_radius: float = 0.35  # collision probe offset from body center (m)

    def validate(self) -> "EnvParams":
        if self.dt <= 0 or self.tau <= 0:
            raise ScenarioError("dt and tau must be positive")
        if self.v_max <= 0 or self.omega_max <= 0:
            raise ScenarioError("action bounds must be positive")
        if self.link_length <= 0:
            raise ScenarioError("link_length must be positive")
        if self.probe_radius <= 0:
            raise ScenarioError("probe_radius must be positive")
        if min(self.w_f, self.w_d, self.w_m, self.w_c) < 0:
            raise ScenarioError("reward/cost weights must be nonnegative")
        return self


@dataclass(frozen=True)
class ScenarioSpec:
    kind: str
    obstacles: tuple[Obstacle, ...]
    start_region: Rect
    goal: tuple[float, float]
    arrival_radius: float = 0.3
    episode_cap: int = 200
    params: dict = field(default_factory=dict, compare=False)  # constructor args, for file echo

    def validate(self) -> "ScenarioSpec":
        if self.arrival_radius <= 0:
            raise ScenarioError("arrival_radius must be positive")
        if self.episode_cap < 1:
            raise ScenarioError("episode_cap must be at least 1")
        goal = np.asarray(self.goal, dtype=float)
        for obs in self.obstacles:
            if obs.contains(goal):
                raise ScenarioError(f"goal {self.goal} lies inside obstacle {obs}")
        return self


def _frame(x_half: float, y_half: float, thickness: float = 0.3) -> list[Rect]:
    """Four boundary walls enclosing the interior box |x|<x_half, |y|<y_half."""
    t = thickness
    return [
        Rect((0.0, y_half + t / 2), (x_half + t, t / 2)),
        Rect((0.0, -(y_half + t / 2)), (x_half + t, t / 2)),
        Rect((-(x_half + t / 2), 0.0), (t / 2, y_half)),
        Rect((x_half + t / 2, 0.0), (t / 2, y_half)),
    ]


def make_gate(width: float = 1.5, depth: float = 0.8,
              arrival_radius: float = 0.3, episode_cap: int = 200) -> ScenarioSpec:
    """Two wall segments at x=0 leaving a centered opening of the given width.

    The arena interior is 8 m by 4.4 m; robots start left of the gate and the
    goal sits on the axis of symmetry to the right.
    """
    if width <= 0:
        raise ScenarioError("gate width must be positive")
    if depth <= 0:
        raise ScenarioError("gate depth must be positive")
    x_half, y_half = 4.0, 2.2
    if width / 2 >= y_half:
        raise ScenarioError("gate width exceeds the arena height")
    obstacles = _frame(x_half, y_half)
    seg_half = (y_half - width / 2) / 2
    seg_center = width / 2 + seg_half
    obstacles.append(Rect((0.0, seg_center), (depth / 2, seg_half)))
    obstacles.append(Rect((0.0, -seg_center), (depth / 2, seg_half)))
    spec = ScenarioSpec(
        kind="gate",
        obstacles=tuple(obstacles),
        start_region=Rect((-2.5, 0.0), (0.4, 0.8)),
        goal=(2.5, 0.0),
        arrival_radius=arrival_radius,
        episode_cap=episode_cap,
        params={"width": width, "depth": depth},
    )
    return spec.validate()


def make_corridor(length: float = 5.4, width: float = 1.3,
                  arrival_radius: float = 0.3, episode_cap: int = 200) -> ScenarioSpec:
    """A straight corridor joining two square rooms.

    The corridor is narrower than the robot pair side by side, forcing a
    front-rear formation in between.
    """
    if length <= 0 or width <= 0:
        raise ScenarioError("corridor length and width must be positive")
    room, room_half_y, t = 2.4, 1.2, 0.3
    hw = width / 2
    if hw >= room_half_y:
        raise ScenarioError("corridor width must be smaller than the rooms")
    half_l = length / 2
    x_outer = half_l + room
    obstacles = [
        Rect((-(x_outer + t / 2), 0.0), (t / 2, room_half_y + t)),
        Rect((x_outer + t / 2, 0.0), (t / 2, room_half_y + t)),
    ]
    for sy in (1.0, -1.0):
        # room ceilings/floors
        for sx in (1.0, -1.0):
            cx = sx * (half_l + room / 2)
            obstacles.append(Rect((cx, sy * (room_half_y + t / 2)), (room / 2 + t, t / 2)))
        # corridor side walls filling from the opening up to room height
        cy = sy * (hw + room_half_y + t) / 2
        obstacles.append(Rect((0.0, cy), (half_l, (room_half_y + t - hw) / 2)))
    spec = ScenarioSpec(
        kind="corridor",
        obstacles=tuple(obstacles),
        start_region=Rect((-(half_l + room / 2), 0.0), (0.15, 0.2)),
        goal=(half_l + room / 2, 0.0),
        arrival_radius=arrival_radius,
        episode_cap=episode_cap,
        params={"length": length, "width": width},
    )
    return spec.validate()


def make_forest(seed: int = 0, n_trees: int = 6, tree_radius: float = 0.25,
                clearance: float = 1.4, arrival_radius: float = 0.3,
                episode_cap: int = 200) -> ScenarioSpec:
    """Sparse circular trees inside a 7.2 m by 3.3 m field, seeded placement.

    Trees keep at least ``clearance`` between surfaces so the linked pair can
    thread the junctions. Entry and exit aprons extend the arena beyond the
    tree field for start and goal placement.
    """
    if n_trees < 0:
        raise ScenarioError("n_trees must be nonnegative")
    if tree_radius <= 0 or clearance < 0:
        raise ScenarioError("tree_radius must be positive and clearance nonnegative")
    x_half, y_half = 5.2, 1.65
    goal = np.array([4.0, 0.0])
    field_x = 3.6 - tree_radius
    field_y = 1.0
    min_center_dist = 2 * tree_radius + clearance
    rng = np.random.default_rng(seed)
    centers: list[np.ndarray] = []
    for _restart in range(200):
        centers = []
        ok = True
        for _ in range(n_trees):
            placed = False
            for _try in range(200):
                c = rng.uniform([-field_x, -field_y], [field_x, field_y])
                if np.hypot(*(c - goal)) < tree_radius + arrival_radius + 0.3:
                    continue
                if all(np.hypot(*(c - p)) >= min_center_dist for p in centers):
                    centers.append(c)
                    placed = True
                    break
            if not placed:
                ok = False
                break
        if ok:
            break
    else:
        raise ScenarioError(
            f"could not place {n_trees} trees with clearance {clearance} (seed {seed})")
    obstacles: list[Obstacle] = list(_frame(x_half, y_half))
    obstacles.extend(Circle((float(c[0]), float(c[1])), tree_radius) for c in centers)
    spec = ScenarioSpec(
        kind="forest",
        obstacles=tuple(obstacles),
        start_region=Rect((-4.0, 0.0), (0.1, 0.55)),
        goal=(4.0, 0.0),
        arrival_radius=arrival_radius,
        episode_cap=episode_cap,
        params={"seed": seed, "n_trees": n_trees, "tree_radius": tree_radius,
                "clearance": clearance},
    )
    return spec.validate()


_MAKERS = {"gate": make_gate, "corridor": make_corridor, "forest": make_forest}


def make_scenario(kind: str, **params) -> ScenarioSpec:
    if kind not in _MAKERS:
        raise ScenarioError(f"unknown scenario kind {kind!r}; expected one of {sorted(_MAKERS)}")
    try:
        return _MAKERS[kind](**params)
    except TypeError as exc:
        raise ScenarioError(f"bad parameters for scenario {kind!r}: {exc}") from exc


_SCENARIO_KEYS = {
    "gate": {"width": float, "depth": float},
    "corridor": {"length": float, "width": float},
    "forest": {"seed": int, "n_trees": int, "tree_radius": float, "clearance": float},
}

_ENV_KEYS = {
    "w_f": float, "w_d": float, "w_m": float, "w_c": float,
    "link_length": float, "dt": float, "tau": float,
    "v_max": float, "omega_max": float, "probe_radius": float,
}


def load_scenario(path) -> tuple[ScenarioSpec, EnvParams]:
    """Read a flat key-value scenario file into (ScenarioSpec, EnvParams)."""
    raw = load_kv(path)
    if "kind" not in raw:
        raise ScenarioError(f"{path}: missing required key 'kind'")
    kind = raw.pop("kind")
    if kind not in _MAKERS:
        raise ScenarioError(f"{path}: unknown scenario kind {kind!r}")
    sc_kwargs: dict = {}
    env_kwargs: dict = {}
    typed = dict(_SCENARIO_KEYS[kind])
    typed["arrival_radius"] = float
    typed["episode_cap"] = int
    for key, value in raw.items():
        if key in typed:
            sink, cast = sc_kwargs, typed[key]
        elif key in _ENV_KEYS:
            sink, cast = env_kwargs, _ENV_KEYS[key]
        else:
            raise ScenarioError(f"{path}: unknown key {key!r} for scenario kind {kind!r}")
        try:
            sink[key] = cast(value)
        except ValueError as exc:
            raise ScenarioError(f"{path}: key {key!r}: {exc}") from exc
    spec = make_scenario(kind, **sc_kwargs)
    params = EnvParams(**env_kwargs).validate()
    return spec, params


def scenario_text(spec: ScenarioSpec, params: Optional[EnvParams] = None) -> str:
    """Serialize a scenario back into the flat key-value format."""
    params = params or EnvParams()
    pairs = {"kind": spec.kind,
             "arrival_radius": repr(spec.arrival_radius),
             "episode_cap": str(spec.episode_cap)}
    for key, value in spec.params.items():
        pairs[key] = repr(value) if isinstance(value, float) else str(value)
    for key in _ENV_KEYS:
        pairs[key] = repr(getattr(params, key))
    from .kvfile import dump_kv
    return dump_kv(pairs)
