"""Built-in verification: oracle comparisons printed as a residual table.

Each check recomputes a quantity two independent ways (closed form vs Monte
Carlo, factorized solve vs dense inverse, analytic gradient vs finite
differences, simulator invariant vs direct geometry) and reports the worst
residual against a fixed threshold. The expected-improvement routine is
injectable so a deliberately broken one trips the table in tests.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from .allocator import (AllocatorConfig, GPWindow, expected_improvement,
                        gp_fit, gp_posterior, rbf_kernel)
from .autodiff import as_tensor, check_gradients, gaussian_logprob
from .env import TransportEnv
from .evalmetrics import straightness
from .scenario import EnvParams, make_scenario
from .tabular import (advantage_terms, random_game, random_policy,
                      verify_decomposition)
from .trainer import lagrange_update


@dataclass
class CheckResult:
    name: str
    residual: float
    threshold: float

    @property
    def passed(self) -> bool:
        return self.residual <= self.threshold


def check_advantage_decomposition(seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(20):
        game = random_game(rng, n_states=4, n_actions=(3, 2), gamma=0.9)
        pa = random_policy(rng, 4, 3)
        pb = random_policy(rng, 4, 2)
        for signal in ("reward", "cost"):
            for first in ("a", "b"):
                worst = max(worst, verify_decomposition(game, pa, pb, first,
                                                        signal))
    return CheckResult("advantage decomposition", worst, 1e-10)


def check_value_consistency(seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        game = random_game(rng, n_states=5, n_actions=(2, 3), gamma=0.85)
        pa = random_policy(rng, 5, 2)
        pb = random_policy(rng, 5, 3)
        terms = advantage_terms(game, pa, pb, "a", "reward")
        v_from_q = np.einsum("sij,si,sj->s", terms["Q"], pa, pb)
        worst = max(worst, float(np.abs(v_from_q - terms["V"]).max()))
    return CheckResult("value from averaged Q", worst, 1e-10)


def check_gp_posterior(seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    config = AllocatorConfig(window=15)
    window = GPWindow(config.window)
    for beta in rng.random(12):
        window.push(float(beta), float(np.sin(6.0 * beta) + 0.1 * rng.normal()))
    model = gp_fit(window, config)
    grid = np.linspace(0.0, 1.0, 41)
    mu, var = gp_posterior(model, grid)
    x = window.betas
    y = window.ys
    k_xx = rbf_kernel(x, x, config.signal_var, config.length_scale)
    k_xx += config.noise_var * np.eye(len(x))
    k_sx = rbf_kernel(grid, x, config.signal_var, config.length_scale)
    inv = np.linalg.inv(k_xx)
    prior = float(np.mean(y))
    mu_ref = prior + k_sx @ inv @ (y - prior)
    var_ref = config.signal_var - np.einsum("ij,jk,ik->i", k_sx, inv, k_sx)
    resid = max(float(np.abs(mu - mu_ref).max()),
                float(np.abs(var - np.maximum(var_ref, 0.0)).max()))
    return CheckResult("GP posterior vs dense inverse", resid, 1e-8)


def check_expected_improvement(ei: Callable = expected_improvement,
                               seed: int = 3) -> CheckResult:
    rng = np.random.default_rng(seed)
    mu, sigma, best = 0.4, 0.7, 0.6
    closed = float(ei(np.array([mu]), np.array([sigma]), best)[0])
    draws = mu + sigma * rng.standard_normal(1_000_000)
    mc = float(np.mean(np.maximum(draws - best, 0.0)))
    return CheckResult("expected improvement vs Monte Carlo",
                       abs(closed - mc), 5e-3)


def check_ei_degenerate(ei: Callable = expected_improvement) -> CheckResult:
    # a zero-variance point carries no improvement value by convention
    value = float(np.asarray(ei(np.array([2.0]), np.array([0.0]), 1.0))[0])
    return CheckResult("expected improvement at zero variance",
                       abs(value), 0.0)


def check_policy_gradients(seed: int = 4) -> CheckResult:
    rng = np.random.default_rng(seed)
    obs = rng.normal(size=(12, 5))
    act = rng.normal(size=(12, 2))
    weight = rng.normal(size=(5, 2)) * 0.3
    log_std = rng.normal(size=2) * 0.2

    def build(leaves):
        w, ls = leaves
        mean = (as_tensor(obs) @ w).tanh()
        return gaussian_logprob(mean, ls, act).mean()

    worst = check_gradients(build, [weight, log_std])
    return CheckResult("log-density gradients vs finite differences",
                       float(worst), 1e-4)


def check_lagrange_arithmetic() -> CheckResult:
    resid = max(abs(lagrange_update(0.5, 0.1, 1.2, 1.0) - 0.52),
                abs(lagrange_update(0.05, 0.1, 0.0, 1.0)),
                abs(lagrange_update(0.3, 0.2, 1.0, 1.0) - 0.3))
    return CheckResult("multiplier update arithmetic", float(resid), 1e-12)


def check_straightness_semicircle() -> CheckResult:
    theta = np.linspace(np.pi, 0.0, 10_001)
    path = np.stack([1.0 + np.cos(theta), np.sin(theta)], axis=1)
    value = straightness(path, [0.0, 0.0], [2.0, 0.0])
    return CheckResult("semicircle straightness vs 2/pi",
                       abs(value - 2.0 / np.pi), 1e-3)


def check_rigid_link(seed: int = 5) -> CheckResult:
    params = EnvParams()
    env = TransportEnv(make_scenario("gate"), params,
                       np.random.default_rng(seed))
    rng = np.random.default_rng(seed + 1)
    env.reset()
    worst = 0.0
    for _ in range(200):
        actions = rng.uniform(-1.0, 1.0, size=(2, 3))
        outcome = env.step(actions)
        gap = np.linalg.norm(env.state.robot_a.position
                             - env.state.robot_b.position)
        worst = max(worst, abs(gap - params.link_length))
        if outcome.terminal:
            env.reset()
    return CheckResult("rigid link length drift", float(worst), 1e-9)


def run_selfcheck(ei: Callable = expected_improvement,
                  seed: int = 0) -> List[CheckResult]:
    return [check_advantage_decomposition(seed),
            check_value_consistency(seed + 1),
            check_gp_posterior(seed + 2),
            check_expected_improvement(ei, seed + 3),
            check_ei_degenerate(ei),
            check_policy_gradients(seed + 4),
            check_lagrange_arithmetic(),
            check_straightness_semicircle(),
            check_rigid_link(seed + 5)]


def format_table(results: List[CheckResult]) -> str:
    width = max(len(r.name) for r in results)
    lines = [f"{'check'.ljust(width)}  {'residual':>12}  {'threshold':>12}  status"]
    for r in results:
        status = "pass" if r.passed else "FAIL"
        lines.append(f"{r.name.ljust(width)}  {r.residual:>12.3e}  "
                     f"{r.threshold:>12.3e}  {status}")
    return "\n".join(lines)
