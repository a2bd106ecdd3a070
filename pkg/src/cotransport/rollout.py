"""Experience collection and advantage estimation.

The collector runs a batch of environments for a fixed horizon, recording
per-agent observations, actions, and behavior log densities along with the
shared reward and cost streams. Advantages come from generalized advantage
estimation run separately on each stream; reward advantages are normalized
per batch, cost advantages never are, because the multiplier update compares
them against an absolute budget.
"""
from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

from .env import BatchEnv
from .nets import GaussianPolicy, ValueNet


@dataclass
class RolloutBatch:
    """Time-major arrays, shape (T, N, ...) for N environments."""

    obs_a: np.ndarray       # (T, N, obs_dim)
    obs_b: np.ndarray
    joint_obs: np.ndarray   # (T, N, 2*obs_dim)
    act_a: np.ndarray       # (T, N, act_dim)
    act_b: np.ndarray
    logp_a: np.ndarray      # (T, N)
    logp_b: np.ndarray
    rewards: np.ndarray     # (T, N)
    costs: np.ndarray
    terminals: np.ndarray   # (T, N) bool
    val_r: np.ndarray       # (T, N) reward critic at joint obs
    val_c: np.ndarray
    last_val_r: np.ndarray  # (N,)
    last_val_c: np.ndarray

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    @property
    def n_envs(self) -> int:
        return self.rewards.shape[1]

    def save(self, path) -> None:
        np.savez(path, **{f.name: getattr(self, f.name) for f in fields(self)})

    @classmethod
    def load(cls, path) -> "RolloutBatch":
        with np.load(path, allow_pickle=False) as npz:
            return cls(**{f.name: npz[f.name] for f in fields(cls)})


def collect(envs: BatchEnv, policy_a: GaussianPolicy, policy_b: GaussianPolicy,
            critic_r: ValueNet, critic_c: ValueNet, horizon: int,
            rng: np.random.Generator) -> RolloutBatch:
    """Roll all environments forward, resetting them first.

    The fresh reset makes every environment's first recorded episode start at
    t=0, so a horizon at least as long as the episode cap guarantees each
    column contains at least one complete episode.
    """
    if horizon < 1:
        raise ValueError("horizon must be positive")
    obs = envs.reset_all()  # (N, 2, obs_dim)
    n = envs.n_envs
    store = {name: [] for name in ("obs_a", "obs_b", "joint_obs", "act_a",
                                   "act_b", "logp_a", "logp_b", "rewards",
                                   "costs", "terminals", "val_r", "val_c")}
    for _ in range(horizon):
        oa, ob = obs[:, 0, :], obs[:, 1, :]
        joint = np.concatenate([oa, ob], axis=1)
        aa, lpa = policy_a.sample(oa, rng)
        ab, lpb = policy_b.sample(ob, rng)
        actions = np.stack([aa, ab], axis=1)  # (N, 2, act_dim)
        obs, outcomes = envs.step(actions)
        store["obs_a"].append(oa)
        store["obs_b"].append(ob)
        store["joint_obs"].append(joint)
        store["act_a"].append(aa)
        store["act_b"].append(ab)
        store["logp_a"].append(lpa)
        store["logp_b"].append(lpb)
        store["val_r"].append(critic_r.value(joint))
        store["val_c"].append(critic_c.value(joint))
        store["rewards"].append(np.array([o.reward for o in outcomes]))
        store["costs"].append(np.array([o.cost for o in outcomes]))
        store["terminals"].append(np.array([o.terminal for o in outcomes]))
    last_joint = np.concatenate([obs[:, 0, :], obs[:, 1, :]], axis=1)
    return RolloutBatch(
        **{k: np.stack(v) for k, v in store.items()},
        last_val_r=critic_r.value(last_joint),
        last_val_c=critic_c.value(last_joint),
    )


def gae(rewards: np.ndarray, values: np.ndarray, terminals: np.ndarray,
        last_values: np.ndarray, gamma: float, lam: float
        ) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (T, N) arrays.

    Terminal flags cut both the bootstrap and the eligibility recursion, so
    episodes that end inside the batch never leak value across the reset.
    Returns (advantages, value targets).
    """
    T, N = rewards.shape
    adv = np.zeros((T, N))
    next_adv = np.zeros(N)
    next_val = np.asarray(last_values, dtype=float)
    for t in range(T - 1, -1, -1):
        live = 1.0 - terminals[t].astype(float)
        delta = rewards[t] + gamma * live * next_val - values[t]
        next_adv = delta + gamma * lam * live * next_adv
        adv[t] = next_adv
        next_val = values[t]
    return adv, adv + values


def normalize_advantages(adv: np.ndarray) -> np.ndarray:
    """Zero-mean unit-std rescale; degenerate batches collapse to zeros.

    No epsilon in the denominator: dividing by the exact standard deviation
    keeps the output variance exactly one, which downstream checks rely on.
    """
    std = float(adv.std())
    if std < 1e-12:
        return np.zeros_like(adv)
    return (adv - adv.mean()) / std


RATIO_FLOOR = 1e-8
RATIO_CEIL = 1e8


def importance_ratio(logp_new: np.ndarray, logp_old: np.ndarray) -> np.ndarray:
    # hard numerical guard; the PPO clip handles the statistically meaningful range
    return np.clip(np.exp(logp_new - logp_old), RATIO_FLOOR, RATIO_CEIL)


def clipped_surrogate(adv: np.ndarray, ratio: np.ndarray, eps: float) -> float:
    """Pessimistic clipped policy objective, to be maximized."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"clip range must be in (0, 1), got {eps}")
    unclipped = ratio * adv
    clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps) * adv
    return float(np.minimum(unclipped, clipped).mean())


def marginal_advantage_second(adv: np.ndarray, ratio_first: np.ndarray) -> np.ndarray:
    """Advantage signal handed to the agent that updates second.

    Weighting the shared advantage by the first agent's post-update ratio
    makes the second surrogate estimate the joint improvement on top of the
    first agent's step, not the stale pre-update objective.
    """
    return ratio_first * adv


def surrogate_cost(cost_adv: np.ndarray, ratio: np.ndarray) -> float:
    """Sampled estimate of the policy's cost-advantage surrogate."""
    return float(np.mean(ratio * cost_adv))


def empirical_return(rewards: np.ndarray, terminals: np.ndarray,
                     gamma: float) -> float:
    """Mean discounted return over episodes completed inside the batch.

    Requires columns that start on an episode boundary, which ``collect``
    guarantees by resetting. Trailing partial episodes are dropped.
    """
    T, N = rewards.shape
    totals = []
    for n in range(N):
        t0 = 0
        for t in range(T):
            if terminals[t, n]:
                seg = rewards[t0:t + 1, n]
                totals.append(float(seg @ (gamma ** np.arange(seg.size))))
                t0 = t + 1
    if not totals:
        raise ValueError("no completed episodes in batch; lengthen the horizon")
    return float(np.mean(totals))


def episode_stats(batch: RolloutBatch, gamma: float) -> dict:
    """Discounted return and cost plus completion counts for a batch."""
    return {
        "J_R": empirical_return(batch.rewards, batch.terminals, gamma),
        "J_C": empirical_return(batch.costs, batch.terminals, gamma),
        "episodes": int(batch.terminals.sum()),
    }
