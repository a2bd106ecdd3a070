"""Exact two-agent tabular games for checking advantage machinery.

Small joint-action Markov games with known transition tensors admit exact
policy evaluation by a direct linear solve. That gives ground truth for the
per-agent advantage decomposition and for the sampled surrogate estimators
used during training.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(frozen=True)
class TabularGame:
    transitions: np.ndarray  # (S, A1, A2, S), rows sum to 1
    rewards: np.ndarray      # (S, A1, A2)
    costs: np.ndarray        # (S, A1, A2), nonnegative
    gamma: float
    start: np.ndarray        # (S,) initial state distribution

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> tuple[int, int]:
        return self.transitions.shape[1], self.transitions.shape[2]

    def signal(self, which: str) -> np.ndarray:
        if which == "reward":
            return self.rewards
        if which == "cost":
            return self.costs
        raise ValueError(f"unknown signal {which!r}")

    def validate(self) -> "TabularGame":
        S, A1, A2, S2 = self.transitions.shape
        assert S == S2
        assert self.rewards.shape == (S, A1, A2)
        assert self.costs.shape == (S, A1, A2)
        np.testing.assert_allclose(self.transitions.sum(axis=-1), 1.0, atol=1e-12)
        np.testing.assert_allclose(self.start.sum(), 1.0, atol=1e-12)
        assert 0.0 <= self.gamma < 1.0
        assert np.all(self.costs >= 0.0)
        return self


def random_game(rng: np.random.Generator, n_states: int = 5,
                n_actions: tuple[int, int] = (3, 3),
                gamma: float = 0.9) -> TabularGame:
    """Dirichlet transition rows, rewards in [-1, 1], costs in [0, 1]."""
    A1, A2 = n_actions
    P = rng.dirichlet(np.ones(n_states), size=(n_states, A1, A2))
    r = rng.uniform(-1.0, 1.0, size=(n_states, A1, A2))
    c = rng.uniform(0.0, 1.0, size=(n_states, A1, A2))
    start = rng.dirichlet(np.ones(n_states))
    return TabularGame(P, r, c, gamma, start).validate()


def random_policy(rng: np.random.Generator, n_states: int, n_actions: int) -> np.ndarray:
    return rng.dirichlet(np.ones(n_actions), size=n_states)


def evaluate(game: TabularGame, pa: np.ndarray, pb: np.ndarray,
             signal: str = "reward") -> np.ndarray:
    """Exact state values under the product policy, by direct linear solve."""
    r = game.signal(signal)
    # joint policy weights per state: pi(s, a1, a2)
    pi = np.einsum("si,sj->sij", pa, pb)
    P_pi = np.einsum("sij,sijt->st", pi, game.transitions)
    r_pi = np.einsum("sij,sij->s", pi, r)
    V = np.linalg.solve(np.eye(game.n_states) - game.gamma * P_pi, r_pi)
    resid = np.max(np.abs((np.eye(game.n_states) - game.gamma * P_pi) @ V - r_pi))
    if resid > 1e-12:
        raise ArithmeticError(f"policy evaluation residual {resid:.3e}")
    return V


def q_values(game: TabularGame, V: np.ndarray, signal: str = "reward") -> np.ndarray:
    """One-step backup Q(s, a1, a2) from exact V."""
    r = game.signal(signal)
    return r + game.gamma * np.einsum("sijt,t->sij", game.transitions, V)


def marginal_q(Q: np.ndarray, other_policy: np.ndarray, first: str) -> np.ndarray:
    """Expected Q over the second agent's policy.

    ``first`` names the agent whose action is kept: "a" keeps axis 1 and
    averages axis 2 under robot b's policy, "b" the reverse.
    """
    if first == "a":
        return np.einsum("sij,sj->si", Q, other_policy)
    if first == "b":
        return np.einsum("sij,si->sj", Q, other_policy)
    raise ValueError(f"first must be 'a' or 'b', got {first!r}")


def advantage_terms(game: TabularGame, pa: np.ndarray, pb: np.ndarray,
                    first: str, signal: str = "reward") -> dict:
    """All pieces of the two-agent advantage split, each by its own route.

    Returns V, joint Q and A, the first agent's marginal Q and advantage, and
    the second agent's conditional advantage A_pair = Q - Q_first.
    """
    V = evaluate(game, pa, pb, signal)
    Q = q_values(game, V, signal)
    other = pb if first == "a" else pa
    Q_first = marginal_q(Q, other, first)
    A = Q - V[:, None, None]
    A_first = Q_first - V[:, None]
    if first == "a":
        A_pair = Q - Q_first[:, :, None]
    else:
        A_pair = Q - Q_first[:, None, :]
    return {"V": V, "Q": Q, "Q_first": Q_first,
            "A": A, "A_first": A_first, "A_pair": A_pair}


def verify_decomposition(game: TabularGame, pa: np.ndarray, pb: np.ndarray,
                         first: str, signal: str = "reward") -> float:
    """Max absolute residual of A against the summed per-agent terms.

    Also cross-checks that V is the policy average of Q, which ties the
    linear solve to the one-step backup through an independent identity.
    """
    t = advantage_terms(game, pa, pb, first, signal)
    if first == "a":
        total = t["A_first"][:, :, None] + t["A_pair"]
    else:
        total = t["A_first"][:, None, :] + t["A_pair"]
    resid = float(np.max(np.abs(t["A"] - total)))
    pi = np.einsum("si,sj->sij", pa, pb)
    v_from_q = np.einsum("sij,sij->s", pi, t["Q"])
    resid = max(resid, float(np.max(np.abs(v_from_q - t["V"]))))
    # the policy-averaged advantage must vanish as well
    a_mean = np.einsum("sij,sij->s", pi, t["A"])
    resid = max(resid, float(np.max(np.abs(a_mean))))
    return resid


def discounted_return(rewards: np.ndarray, gamma: float) -> float:
    """Sum of gamma^t r_t, evaluated backward for stability."""
    total = 0.0
    for r in reversed(np.asarray(rewards, dtype=float)):
        total = r + gamma * total
    return float(total)


def _sample_rows(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    # one categorical draw per row
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    return np.minimum((u[:, None] > cdf).sum(axis=1), probs.shape[1] - 1)


def mc_return(game: TabularGame, pa: np.ndarray, pb: np.ndarray,
              rng: np.random.Generator, n_episodes: int = 2000,
              horizon: int = 200, signal: str = "reward",
              start_states: Optional[np.ndarray] = None) -> tuple[float, float]:
    """Monte Carlo estimate of the discounted return from the start distribution.

    Returns (mean, standard error). Horizon truncation bias is bounded by
    gamma^horizon * max|r| / (1 - gamma); keep the horizon large enough that
    it is negligible next to the standard error.
    """
    r = game.signal(signal)
    if start_states is None:
        states = _sample_rows(rng, np.tile(game.start, (n_episodes, 1)))
    else:
        states = np.asarray(start_states, dtype=int).copy()
        n_episodes = states.shape[0]
    returns = np.zeros(n_episodes)
    disc = 1.0
    for _ in range(horizon):
        a1 = _sample_rows(rng, pa[states])
        a2 = _sample_rows(rng, pb[states])
        returns += disc * r[states, a1, a2]
        states = _sample_rows(rng, game.transitions[states, a1, a2])
        disc *= game.gamma
    se = float(returns.std(ddof=1) / np.sqrt(n_episodes))
    return float(returns.mean()), se
