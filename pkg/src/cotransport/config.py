"""Flat experiment configuration: namespaced keys, defaults, range checks.

A config file uses the same ``key = value`` format as scenario files. Every
key lives in one of five namespaces (env, policy, trainer, allocator, eval),
unknown keys are rejected by name, and each value is checked against its
documented range when parsed, so a bad experiment file fails before anything
runs.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

from .allocator import AllocatorConfig
from .kvfile import dump_kv, load_kv, parse_kv_text
from .scenario import EnvParams, ScenarioSpec, make_scenario
from .trainer import MODES, TrainerConfig


class ConfigError(ValueError):
    pass


def _int_tuple(text: str) -> tuple:
    parts = [p.strip() for p in text.split(",") if p.strip()]
    if not parts:
        raise ValueError("expected a comma-separated list of sizes")
    return tuple(int(p) for p in parts)


@dataclass(frozen=True)
class Entry:
    default: object
    parse: Callable
    check: Callable
    bounds: str  # human-readable range, quoted in diagnostics


def _positive(v) -> bool:
    return v > 0


def _nonnegative(v) -> bool:
    return v >= 0


REGISTRY: Dict[str, Entry] = {
    "env.scenario": Entry("gate", str, lambda v: v in ("gate", "corridor", "forest"),
                          "one of gate, corridor, forest"),
    "env.episode_cap": Entry(200, int, lambda v: v >= 1, ">= 1"),
    "env.arrival_radius": Entry(0.3, float, _positive, "> 0"),
    "env.dt": Entry(0.1, float, _positive, "> 0"),
    "env.tau": Entry(0.2, float, _positive, "> 0"),
    "env.link_length": Entry(1.2, float, _positive, "> 0"),
    "env.v_max": Entry(1.0, float, _positive, "> 0"),
    "env.omega_max": Entry(1.5, float, _positive, "> 0"),
    "env.probe_radius": Entry(0.35, float, _positive, "> 0"),
    "env.w_f": Entry(1.0, float, _nonnegative, ">= 0"),
    "env.w_d": Entry(10.0, float, _nonnegative, ">= 0"),
    "env.w_m": Entry(1.0, float, _nonnegative, ">= 0"),
    "env.w_c": Entry(5.0, float, _nonnegative, ">= 0"),
    "policy.hidden": Entry((64, 64), _int_tuple,
                           lambda v: all(h >= 1 for h in v), "sizes >= 1"),
    "policy.log_std_init": Entry(-0.5, float, lambda v: -10.0 <= v <= 2.0,
                                 "in [-10, 2]"),
    "trainer.mode": Entry("full", str, lambda v: v in MODES,
                          "one of " + ", ".join(MODES)),
    "trainer.iterations": Entry(300, int, _nonnegative, ">= 0"),
    "trainer.n_envs": Entry(16, int, lambda v: v >= 1, ">= 1"),
    "trainer.horizon": Entry(256, int, lambda v: v >= 1, ">= 1"),
    "trainer.gamma": Entry(0.99, float, lambda v: 0.0 <= v < 1.0, "in [0, 1)"),
    "trainer.gae_lambda": Entry(0.95, float, lambda v: 0.0 <= v <= 1.0,
                                "in [0, 1]"),
    "trainer.epsilon": Entry(0.2, float, lambda v: 0.0 < v < 1.0, "in (0, 1)"),
    "trainer.kl_delta": Entry(0.02, float, _positive, "> 0"),
    "trainer.epochs": Entry(4, int, lambda v: v >= 1, ">= 1"),
    "trainer.minibatch": Entry(256, int, lambda v: v >= 1, ">= 1"),
    "trainer.policy_lr": Entry(3e-4, float, _positive, "> 0"),
    "trainer.critic_lr": Entry(1e-3, float, _positive, "> 0"),
    "trainer.alpha": Entry(0.05, float, _positive, "> 0"),
    "trainer.cost_limit": Entry(1.0, float, _nonnegative, ">= 0"),
    "trainer.checkpoint_every": Entry(50, int, lambda v: v >= 1, ">= 1"),
    "allocator.signal_var": Entry(1.0, float, _positive, "> 0"),
    "allocator.length_scale": Entry(0.2, float, _positive, "> 0"),
    "allocator.noise_var": Entry(0.01, float, _positive, "> 0"),
    "allocator.window": Entry(20, int, lambda v: v >= 1, ">= 1"),
    "allocator.grid_size": Entry(41, int, lambda v: v >= 2, ">= 2"),
    "allocator.w1": Entry(1.0, float, _nonnegative, ">= 0"),
    "allocator.w2": Entry(1.0, float, _nonnegative, ">= 0"),
    "allocator.cold_start": Entry(5, int, _nonnegative, ">= 0"),
    "eval.episodes": Entry(30, int, lambda v: v >= 1, ">= 1"),
    "eval.time_cap_s": Entry(35.0, float, _positive, "> 0"),
}


@dataclass(frozen=True)
class Config:
    values: tuple  # sorted (key, value) pairs; hashable and comparable

    def __getitem__(self, key: str):
        try:
            return dict(self.values)[key]
        except KeyError:
            raise ConfigError(f"unknown key {key!r}")

    def env_params(self) -> EnvParams:
        get = self.__getitem__
        return EnvParams(dt=get("env.dt"), tau=get("env.tau"),
                         link_length=get("env.link_length"),
                         v_max=get("env.v_max"), omega_max=get("env.omega_max"),
                         probe_radius=get("env.probe_radius"),
                         w_f=get("env.w_f"), w_d=get("env.w_d"),
                         w_m=get("env.w_m"), w_c=get("env.w_c"))

    def scenario(self) -> ScenarioSpec:
        return make_scenario(self["env.scenario"],
                             episode_cap=self["env.episode_cap"],
                             arrival_radius=self["env.arrival_radius"])

    def trainer_config(self, mode: Optional[str] = None) -> TrainerConfig:
        get = self.__getitem__
        return TrainerConfig(mode=mode or get("trainer.mode"),
                             iterations=get("trainer.iterations"),
                             n_envs=get("trainer.n_envs"),
                             horizon=get("trainer.horizon"),
                             gamma=get("trainer.gamma"),
                             gae_lambda=get("trainer.gae_lambda"),
                             clip_eps=get("trainer.epsilon"),
                             kl_delta=get("trainer.kl_delta"),
                             epochs=get("trainer.epochs"),
                             minibatch=get("trainer.minibatch"),
                             policy_lr=get("trainer.policy_lr"),
                             critic_lr=get("trainer.critic_lr"),
                             alpha=get("trainer.alpha"),
                             cost_limit=get("trainer.cost_limit"),
                             hidden=get("policy.hidden"),
                             log_std_init=get("policy.log_std_init"),
                             checkpoint_every=get("trainer.checkpoint_every"))

    def allocator_config(self) -> AllocatorConfig:
        get = self.__getitem__
        return AllocatorConfig(signal_var=get("allocator.signal_var"),
                               length_scale=get("allocator.length_scale"),
                               noise_var=get("allocator.noise_var"),
                               window=get("allocator.window"),
                               grid_size=get("allocator.grid_size"),
                               w1=get("allocator.w1"), w2=get("allocator.w2"),
                               cold_start=get("allocator.cold_start"))

    def serialize(self) -> str:
        return dump_kv({key: _format(value) for key, value in self.values})


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ",".join(str(v) for v in value)
    return str(value)


def _build(overrides: Dict[str, str], source: str) -> Config:
    values = {}
    for key, raw in overrides.items():
        if key not in REGISTRY:
            raise ConfigError(f"{source}: unknown key {key!r}")
        entry = REGISTRY[key]
        try:
            value = entry.parse(raw)
        except ValueError as exc:
            raise ConfigError(f"{source}: key {key!r}: {exc}") from exc
        if not entry.check(value):
            raise ConfigError(f"{source}: key {key!r} must be {entry.bounds}, "
                              f"got {raw!r}")
        values[key] = value
    for key, entry in REGISTRY.items():
        values.setdefault(key, entry.default)
    return Config(values=tuple(sorted(values.items())))


def default_config() -> Config:
    return _build({}, "<defaults>")


def parse_config_text(text: str, source: str = "<string>") -> Config:
    return _build(parse_kv_text(text, source), source)


def parse_config(path) -> Config:
    return _build(load_kv(path), str(path))
