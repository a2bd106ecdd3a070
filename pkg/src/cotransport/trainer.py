"""Training loop: sequential clipped updates with budget allocation and multipliers.

One iteration collects a batch from the vectorized simulator, estimates the
discounted return and cost, splits the remaining cost budget between the two
robots, updates each policy in a random order with a clipped surrogate minus
its multiplier-weighted cost surrogate, adjusts the multipliers from the
post-update cost surrogates, and regresses both critics. Baseline variants
rewire the same loop: costs folded into the reward, shared parameter blocks,
simultaneous instead of sequential updates, or a fixed even budget split.
"""
from __future__ import annotations

import os
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple

import numpy as np

from .allocator import AllocatorConfig, ConstraintAllocator, objective_F
from .autodiff import Tensor, minimum
from .env import ACT_DIM, OBS_DIM, BatchEnv
from .nets import (Adam, GaussianPolicy, ValueNet, diag_gauss_kl,
                   load_checkpoint, rng_state, save_checkpoint, set_rng_state)
from .rollout import (RATIO_CEIL, RATIO_FLOOR, collect, empirical_return, gae,
                      importance_ratio, normalize_advantages)
from .scenario import EnvParams, ScenarioSpec


class TrainerError(RuntimeError):
    pass


MODES = ("full", "uca", "penalty_only", "shared_params", "macpo_style")

REPORT_COLUMNS = ["iter", "J_R", "J_C", "d", "beta", "c_a", "c_b",
                  "lambda_a", "lambda_b", "L_C_a", "L_C_b",
                  "kl_a", "kl_b", "wall_ms"]
ALLOCATION_COLUMNS = ["iter", "beta", "y", "c_a", "c_b", "d"]

NAN = float("nan")


@dataclass
class ModeWiring:
    """Which pieces of the loop a mode turns on.

    allocation: "gp" (window model), "uniform" (even split), or "none".
    lagrangian: multipliers, cost surrogates, and the cost term in the loss.
    fold_costs: subtract costs from rewards before the advantage pass.
    """
    allocation: str
    lagrangian: bool
    fold_costs: bool
    shared_params: bool
    sequential: bool


_MODE_TABLE = {
    "full": ModeWiring("gp", True, False, False, True),
    "uca": ModeWiring("uniform", True, False, False, True),
    "penalty_only": ModeWiring("none", False, True, False, True),
    "shared_params": ModeWiring("none", False, True, True, False),
    "macpo_style": ModeWiring("gp", True, False, True, True),
}


def apply_mode(mode: str) -> ModeWiring:
    try:
        return _MODE_TABLE[mode]
    except KeyError:
        raise TrainerError(f"unknown mode {mode!r}; expected one of {MODES}")


@dataclass
class TrainerConfig:
    mode: str = "full"
    iterations: int = 100
    n_envs: int = 16
    horizon: int = 256
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    kl_delta: float = 0.02
    epochs: int = 4
    minibatch: int = 256
    policy_lr: float = 3e-4
    critic_lr: float = 1e-3
    alpha: float = 0.05
    cost_limit: float = 1.0
    hidden: Tuple[int, ...] = (64, 64)
    log_std_init: float = -0.5
    checkpoint_every: int = 50

    def validate(self) -> "TrainerConfig":
        if self.mode not in MODES:
            raise TrainerError(f"unknown mode {self.mode!r}")
        if self.cost_limit < 0.0:
            raise TrainerError("cost limit must be nonnegative")
        if self.alpha <= 0.0:
            raise TrainerError("multiplier step size must be positive")
        if not 0.0 < self.clip_eps < 1.0:
            raise TrainerError("clip range must lie in (0, 1)")
        if not 0.0 <= self.gamma < 1.0:
            raise TrainerError("gamma must lie in [0, 1)")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise TrainerError("gae lambda must lie in [0, 1]")
        if self.kl_delta <= 0.0:
            raise TrainerError("kl threshold must be positive")
        if self.iterations < 0:
            raise TrainerError("iteration count must be nonnegative")
        if min(self.n_envs, self.horizon, self.epochs, self.minibatch,
               self.checkpoint_every) < 1:
            raise TrainerError("n_envs, horizon, epochs, minibatch and "
                               "checkpoint_every must be positive")
        if min(self.policy_lr, self.critic_lr) <= 0.0:
            raise TrainerError("learning rates must be positive")
        if not all(h >= 1 for h in self.hidden):
            raise TrainerError("hidden sizes must be positive")
        return self


@dataclass
class LagrangeState:
    lam: float = 0.0
    budget: float = NAN
    residual: float = NAN


def compute_budget(u: float, J_C: float) -> float:
    """Remaining system cost budget; negative when the limit is exceeded."""
    return u - J_C


def sample_update_order(rng: np.random.Generator) -> Tuple[str, str]:
    return ("a", "b") if int(rng.integers(2)) == 0 else ("b", "a")


def lagrange_update(lam: float, alpha: float, L_C: float, c: float) -> float:
    """Projected ascent on the residual between cost surrogate and budget."""
    return max(0.0, lam + alpha * (L_C - c))


def policy_loss(policy: GaussianPolicy, obs: np.ndarray, act: np.ndarray,
                logp_old: np.ndarray, adv_r: np.ndarray,
                adv_c: Optional[np.ndarray], lam: float, eps: float) -> Tensor:
    """Negative clipped objective for one minibatch.

    The cost side clips pessimistically, keeping the larger of the raw and
    clipped estimates so the penalty never shrinks through the clip. A zero
    multiplier skips the term entirely, leaving the graph of a plain clipped
    update.
    """
    logp = policy.logprob_t(obs, act)
    ratio = (logp - logp_old).exp().clip(RATIO_FLOOR, RATIO_CEIL)
    clipped = ratio.clip(1.0 - eps, 1.0 + eps)
    loss = -(minimum(ratio * adv_r, clipped * adv_r).mean())
    if adv_c is not None and lam != 0.0:
        loss = loss - lam * minimum(ratio * (-adv_c), clipped * (-adv_c)).mean()
    return loss


def agent_update(policy: GaussianPolicy, optimizer: Adam, obs: np.ndarray,
                 act: np.ndarray, logp_old: np.ndarray, adv_r: np.ndarray,
                 adv_c: Optional[np.ndarray], lam: float,
                 config: TrainerConfig,
                 shuffle_rng: np.random.Generator) -> Tuple[float, float]:
    """Minibatch ascent on the clipped objective with a KL early stop.

    ``adv_r``/``adv_c`` are the advantage sources: plain estimates for the
    robot updated first, ratio-weighted ones for the robot updated second.
    After each epoch the exact divergence from the entry policy is averaged
    over the batch; an epoch that breaches the threshold is rolled back and
    the update stops, so committed parameters always satisfy the bound.
    Returns the post-update cost surrogate (nan when ``adv_c`` is None) and
    the divergence of the parameters actually kept.
    """
    mu_behavior = policy.mean(obs)
    ls_behavior = policy.log_std.data.copy()
    n = obs.shape[0]
    kl_kept = 0.0
    for _ in range(config.epochs):
        snapshot = [p.data.copy() for p in policy.params()]
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.minibatch):
            sel = perm[start:start + config.minibatch]
            loss = policy_loss(policy, obs[sel], act[sel], logp_old[sel],
                               adv_r[sel],
                               None if adv_c is None else adv_c[sel],
                               lam, config.clip_eps)
            if not np.isfinite(loss.data):
                raise TrainerError("non-finite policy loss")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            policy.clamp_log_std()
        kl = float(np.mean(diag_gauss_kl(mu_behavior, ls_behavior,
                                         policy.mean(obs),
                                         policy.log_std.data)))
        if kl > config.kl_delta:
            for p, saved in zip(policy.params(), snapshot):
                p.data[...] = saved
            break
        kl_kept = kl
    if adv_c is None:
        return NAN, kl_kept
    ratio = importance_ratio(policy.logprob(obs, act), logp_old)
    return float(np.mean(ratio * adv_c)), kl_kept


def critic_update(critic: ValueNet, optimizer: Adam, obs: np.ndarray,
                  targets: np.ndarray, config: TrainerConfig,
                  shuffle_rng: np.random.Generator) -> None:
    n = obs.shape[0]
    for _ in range(config.epochs):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, config.minibatch):
            sel = perm[start:start + config.minibatch]
            err = critic.value_t(obs[sel]) - targets[sel]
            loss = (err * err).mean()
            if not np.isfinite(loss.data):
                raise TrainerError("non-finite critic loss")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def append_csv_row(path: Path, columns, row: Dict) -> None:
    fresh = not path.exists()
    with open(path, "a") as fh:
        if fresh:
            fh.write(",".join(columns) + "\n")
        fh.write(",".join(_format_cell(row[c]) for c in columns) + "\n")


class Trainer:
    """Owns policies, critics, multipliers, allocator and all RNG streams.

    Every stream is spawned from one seed, so (config, seed) determines each
    logged number; wall-clock milliseconds are the only nondeterministic
    column. ``wiring`` normally comes from the mode name; tests may inject a
    custom one.
    """

    def __init__(self, scenario: ScenarioSpec, env_params: Optional[EnvParams],
                 config: TrainerConfig,
                 alloc_config: Optional[AllocatorConfig] = None,
                 seed: int = 0, out_dir=None,
                 wiring: Optional[ModeWiring] = None):
        self.config = config.validate()
        self.wiring = wiring if wiring is not None else apply_mode(config.mode)
        self.scenario = scenario.validate()
        self.env_params = (env_params or EnvParams()).validate()
        self.alloc_config = (alloc_config or AllocatorConfig()).validate()
        self.seed = int(seed)
        self.out_dir = Path(out_dir) if out_dir is not None else None

        root = np.random.SeedSequence(self.seed)
        env_ss, init_ss, act_ss, order_ss, shuf_ss, alloc_ss = root.spawn(6)
        self.envs = BatchEnv(self.scenario, self.env_params, config.n_envs,
                             seed=env_ss)
        self.action_rng = np.random.default_rng(act_ss)
        self.order_rng = np.random.default_rng(order_ss)
        self.shuffle_rng = np.random.default_rng(shuf_ss)
        self.alloc_rng = np.random.default_rng(alloc_ss)

        init = np.random.default_rng(init_ss)
        hid = tuple(config.hidden)
        self.policy_a = GaussianPolicy(init, OBS_DIM, ACT_DIM, hid,
                                       config.log_std_init)
        if self.wiring.shared_params:
            self.policy_b = self.policy_a
        else:
            self.policy_b = GaussianPolicy(init, OBS_DIM, ACT_DIM, hid,
                                           config.log_std_init)
        self.critic_r = ValueNet(init, 2 * OBS_DIM, hid)
        self.critic_c = ValueNet(init, 2 * OBS_DIM, hid)

        self.opt_a = Adam(self.policy_a.params(), config.policy_lr)
        self.opt_b = (self.opt_a if self.wiring.shared_params
                      else Adam(self.policy_b.params(), config.policy_lr))
        self.opt_cr = Adam(self.critic_r.params(), config.critic_lr)
        self.opt_cc = Adam(self.critic_c.params(), config.critic_lr)

        if self.wiring.lagrangian:
            self.lagrange = {"a": LagrangeState(), "b": LagrangeState()}
        else:
            self.lagrange = None
        self.allocator = (ConstraintAllocator(self.alloc_config)
                          if self.wiring.allocation == "gp" else None)
        self._pending_beta: Optional[float] = None
        self.iteration = 0
        self.report_rows = []

    def _policy(self, robot: str) -> GaussianPolicy:
        return self.policy_a if robot == "a" else self.policy_b

    def _optimizer(self, robot: str) -> Adam:
        return self.opt_a if robot == "a" else self.opt_b

    def _agent_samples(self, batch, robot: str):
        n = batch.horizon * batch.n_envs
        if robot == "a":
            obs, act, logp = batch.obs_a, batch.act_a, batch.logp_a
        else:
            obs, act, logp = batch.obs_b, batch.act_b, batch.logp_b
        return obs.reshape(n, -1), act.reshape(n, -1), logp.reshape(n)

    def train_iteration(self) -> Dict:
        t0 = time.perf_counter()
        cfg, wiring = self.config, self.wiring
        i = self.iteration

        batch = collect(self.envs, self.policy_a, self.policy_b,
                        self.critic_r, self.critic_c, cfg.horizon,
                        self.action_rng)
        try:
            J_R = empirical_return(batch.rewards, batch.terminals, cfg.gamma)
            J_C = empirical_return(batch.costs, batch.terminals, cfg.gamma)
        except ValueError as exc:
            raise TrainerError(
                "no episode finished inside the batch; raise the horizon "
                "above the episode cap") from exc

        d = compute_budget(cfg.cost_limit, J_C)
        beta, c_a, c_b = NAN, NAN, NAN
        if wiring.allocation == "gp":
            y = NAN
            if self._pending_beta is not None:
                y = objective_F(J_R, J_C, self.alloc_config.w1,
                                self.alloc_config.w2)
                self.allocator.record(self._pending_beta, y)
            alloc = self.allocator.propose(d, self.alloc_rng)
            beta, c_a, c_b = alloc.beta, alloc.c_a, alloc.c_b
            self._pending_beta = beta
            if self.out_dir is not None:
                append_csv_row(self.out_dir / "allocation.csv",
                               ALLOCATION_COLUMNS,
                               {"iter": i, "beta": beta, "y": y,
                                "c_a": c_a, "c_b": c_b, "d": d})
        elif wiring.allocation == "uniform":
            c_a = c_b = 0.5 * d

        signal = batch.rewards - batch.costs if wiring.fold_costs else batch.rewards
        adv_r, ret_r = gae(signal, batch.val_r, batch.terminals,
                           batch.last_val_r, cfg.gamma, cfg.gae_lambda)
        adv_r_flat = normalize_advantages(adv_r).reshape(-1)
        adv_c_flat, ret_c = None, None
        if not wiring.fold_costs:
            adv_c, ret_c = gae(batch.costs, batch.val_c, batch.terminals,
                               batch.last_val_c, cfg.gamma, cfg.gae_lambda)
            if wiring.lagrangian:
                adv_c_flat = adv_c.reshape(-1)

        budgets = {"a": c_a, "b": c_b}
        surrogates = {"a": NAN, "b": NAN}
        kls = {"a": NAN, "b": NAN}
        if wiring.sequential:
            order = sample_update_order(self.order_rng)
            src_r, src_c = adv_r_flat, adv_c_flat
            for position, robot in enumerate(order):
                obs_f, act_f, logp_f = self._agent_samples(batch, robot)
                lam = self.lagrange[robot].lam if self.lagrange else 0.0
                L_C, kl = agent_update(self._policy(robot),
                                       self._optimizer(robot),
                                       obs_f, act_f, logp_f, src_r, src_c,
                                       lam, cfg, self.shuffle_rng)
                surrogates[robot], kls[robot] = L_C, kl
                if position == 0:
                    ratio_first = importance_ratio(
                        self._policy(robot).logprob(obs_f, act_f), logp_f)
                    src_r = ratio_first * adv_r_flat
                    if adv_c_flat is not None:
                        src_c = ratio_first * adv_c_flat
        else:
            obs_a, act_a, logp_a = self._agent_samples(batch, "a")
            obs_b, act_b, logp_b = self._agent_samples(batch, "b")
            obs_f = np.concatenate([obs_a, obs_b])
            act_f = np.concatenate([act_a, act_b])
            logp_f = np.concatenate([logp_a, logp_b])
            adv_f = np.concatenate([adv_r_flat, adv_r_flat])
            _, kl = agent_update(self.policy_a, self.opt_a, obs_f, act_f,
                                 logp_f, adv_f, None, 0.0, cfg,
                                 self.shuffle_rng)
            kls["a"] = kls["b"] = kl

        if self.lagrange is not None:
            for robot in ("a", "b"):
                state = self.lagrange[robot]
                state.budget = budgets[robot]
                state.residual = surrogates[robot] - budgets[robot]
                state.lam = lagrange_update(state.lam, cfg.alpha,
                                            surrogates[robot], budgets[robot])

        joint_flat = batch.joint_obs.reshape(batch.horizon * batch.n_envs, -1)
        critic_update(self.critic_r, self.opt_cr, joint_flat,
                      ret_r.reshape(-1), cfg, self.shuffle_rng)
        if ret_c is not None:
            critic_update(self.critic_c, self.opt_cc, joint_flat,
                          ret_c.reshape(-1), cfg, self.shuffle_rng)

        self._check_finite()
        self.iteration += 1

        lam_a = self.lagrange["a"].lam if self.lagrange else NAN
        lam_b = self.lagrange["b"].lam if self.lagrange else NAN
        row = {"iter": i, "J_R": J_R, "J_C": J_C, "d": d, "beta": beta,
               "c_a": c_a, "c_b": c_b, "lambda_a": lam_a, "lambda_b": lam_b,
               "L_C_a": surrogates["a"], "L_C_b": surrogates["b"],
               "kl_a": kls["a"], "kl_b": kls["b"],
               "wall_ms": (time.perf_counter() - t0) * 1000.0}
        self.report_rows.append(row)
        if self.out_dir is not None:
            append_csv_row(self.out_dir / "report.csv", REPORT_COLUMNS, row)
        return row

    def _check_finite(self) -> None:
        blocks = {"policy_a": self.policy_a.params(),
                  "policy_b": self.policy_b.params(),
                  "critic_r": self.critic_r.params(),
                  "critic_c": self.critic_c.params()}
        for name, params in blocks.items():
            for p in params:
                if not np.all(np.isfinite(p.data)):
                    raise TrainerError(f"non-finite values in {name}")
        if self.lagrange is not None:
            for robot, state in self.lagrange.items():
                if not np.isfinite(state.lam):
                    raise TrainerError(f"non-finite multiplier for {robot}")

    def checkpoint_payload(self) -> Tuple[Dict[str, np.ndarray], Dict]:
        arrays = {}
        for prefix, module in (("policy_a", self.policy_a),
                               ("policy_b", self.policy_b),
                               ("critic_r", self.critic_r),
                               ("critic_c", self.critic_c)):
            for name, tensor in module.named_params(prefix).items():
                arrays[name] = tensor.data.copy()
        arrays.update(self.opt_a.state_arrays("opt_a"))
        if not self.wiring.shared_params:
            arrays.update(self.opt_b.state_arrays("opt_b"))
        arrays.update(self.opt_cr.state_arrays("opt_cr"))
        arrays.update(self.opt_cc.state_arrays("opt_cc"))

        cfg = asdict(self.config)
        cfg["hidden"] = list(cfg["hidden"])
        meta = {
            "iteration": self.iteration,
            "seed": self.seed,
            "config": cfg,
            "scenario_kind": self.scenario.kind,
            "shared_params": self.wiring.shared_params,
            "lagrange": None if self.lagrange is None else {
                robot: [state.lam, state.budget, state.residual]
                for robot, state in self.lagrange.items()},
            "pending_beta": self._pending_beta,
            "allocator": (None if self.allocator is None
                          else self.allocator.state_dict()),
            "rng": {"action": rng_state(self.action_rng),
                    "order": rng_state(self.order_rng),
                    "shuffle": rng_state(self.shuffle_rng),
                    "alloc": rng_state(self.alloc_rng),
                    "envs": [rng_state(env.rng) for env in self.envs.envs]},
        }
        return arrays, meta

    def save_checkpoint(self, path) -> Path:
        path = Path(path)
        arrays, meta = self.checkpoint_payload()
        tmp = path.with_name(path.name + ".tmp")
        save_checkpoint(tmp, arrays, meta)
        os.replace(tmp, path)
        return path

    def run(self) -> Dict:
        cfg = self.config
        checkpoint_path = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            for name in ("report.csv", "allocation.csv"):
                stale = self.out_dir / name
                if stale.exists():
                    stale.unlink()
            checkpoint_path = self.out_dir / "checkpoint.npz"
        try:
            for _ in range(cfg.iterations):
                self.train_iteration()
                if (checkpoint_path is not None
                        and self.iteration % cfg.checkpoint_every == 0):
                    self.save_checkpoint(checkpoint_path)
        except TrainerError:
            if self.out_dir is not None:
                self.save_checkpoint(self.out_dir / "checkpoint_diagnostic.npz")
            raise
        if checkpoint_path is not None:
            self.save_checkpoint(checkpoint_path)
        summary = {"iterations": self.iteration,
                   "checkpoint": checkpoint_path,
                   "report": (None if self.out_dir is None
                              else self.out_dir / "report.csv")}
        if self.report_rows:
            last = self.report_rows[-1]
            summary.update(J_R=last["J_R"], J_C=last["J_C"])
        return summary


def train(scenario: ScenarioSpec, env_params: Optional[EnvParams],
          config: TrainerConfig, alloc_config: Optional[AllocatorConfig],
          seed: int, out_dir) -> Dict:
    """Run a full training job and leave checkpoint + logs in ``out_dir``."""
    trainer = Trainer(scenario, env_params, config, alloc_config,
                      seed=seed, out_dir=out_dir)
    return trainer.run()


def _load_block(module, prefix: str, arrays: Dict[str, np.ndarray]) -> None:
    for name, tensor in module.named_params(prefix).items():
        stored = arrays[name]
        if stored.shape != tensor.data.shape:
            raise TrainerError(f"checkpoint block {name} has shape "
                               f"{stored.shape}, expected {tensor.data.shape}")
        tensor.data[...] = stored


def load_policies(path) -> Tuple[GaussianPolicy, GaussianPolicy, Dict]:
    """Rebuild both policies from a checkpoint; shared blocks stay shared."""
    arrays, meta = load_checkpoint(path)
    hidden = tuple(meta["config"]["hidden"])
    scratch = np.random.default_rng(0)
    policy_a = GaussianPolicy(scratch, OBS_DIM, ACT_DIM, hidden)
    _load_block(policy_a, "policy_a", arrays)
    if meta["shared_params"]:
        policy_b = policy_a
    else:
        policy_b = GaussianPolicy(scratch, OBS_DIM, ACT_DIM, hidden)
        _load_block(policy_b, "policy_b", arrays)
    return policy_a, policy_b, meta
