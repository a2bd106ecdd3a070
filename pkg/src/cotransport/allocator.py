"""Budget allocation between the two robots via Bayesian optimization.

The shared slack d is split as c_a = beta*d, c_b = d - c_a. A Gaussian
process over beta, fit to a sliding window of (beta, objective) pairs, scores
candidate splits by Expected Improvement; the argmax over a fixed grid wins.
Over-budget regimes (d <= 0) stay well defined because the search runs on the
fraction, not on the raw constraint values.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError
from scipy.stats import norm


class AllocatorError(RuntimeError):
    pass


@dataclass
class AllocatorConfig:
    signal_var: float = 1.0    # sigma_f^2
    length_scale: float = 0.2  # ell
    noise_var: float = 0.01    # sigma_n^2
    window: int = 20
    grid_size: int = 41
    w1: float = 1.0
    w2: float = 1.0
    cold_start: int = 5        # iterations of uniform grid sampling

    def validate(self) -> "AllocatorConfig":
        if self.signal_var <= 0 or self.length_scale <= 0:
            raise AllocatorError("kernel hyperparameters must be positive")
        if self.noise_var < 0:
            raise AllocatorError("noise variance must be nonnegative")
        if self.window < 1 or self.grid_size < 2:
            raise AllocatorError("window >= 1 and grid_size >= 2 required")
        if self.w1 < 0 or self.w2 < 0:
            raise AllocatorError("objective weights must be nonnegative")
        return self


def objective_F(J_R: float, J_C: float, w1: float, w2: float) -> float:
    """Scalar target for the allocator: trade reward against cost."""
    if w1 < 0 or w2 < 0:
        raise AllocatorError("objective weights must be nonnegative")
    return w1 * J_R - w2 * J_C


def rbf_kernel(x, xp, signal_var: float, length_scale: float):
    if length_scale <= 0:
        raise AllocatorError("length scale must be positive")
    x = np.asarray(x, dtype=float)
    xp = np.asarray(xp, dtype=float)
    diff = x[..., :, None] - xp[..., None, :] if x.ndim and xp.ndim else x - xp
    return signal_var * np.exp(-(diff ** 2) / (2.0 * length_scale ** 2))


class GPWindow:
    """FIFO window of (beta, y) observations."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise AllocatorError("window capacity must be positive")
        self.capacity = capacity
        self.entries: list[tuple[float, float]] = []

    def __len__(self) -> int:
        return len(self.entries)

    def push(self, beta: float, y: float) -> None:
        if not 0.0 <= beta <= 1.0:
            raise AllocatorError(f"beta must lie in [0, 1], got {beta}")
        self.entries.append((float(beta), float(y)))
        if len(self.entries) > self.capacity:
            del self.entries[0]

    @property
    def betas(self) -> np.ndarray:
        return np.array([b for b, _ in self.entries])

    @property
    def ys(self) -> np.ndarray:
        return np.array([y for _, y in self.entries])

    @property
    def y_best(self) -> float:
        if not self.entries:
            raise AllocatorError("empty window has no best observation")
        return float(self.ys.max())


@dataclass
class GPPosterior:
    x_train: np.ndarray
    y_train: np.ndarray
    prior_mean: float
    alpha: np.ndarray       # (K + sigma_n^2 I)^{-1} (y - m)
    chol: tuple             # cho_factor of the regularized kernel matrix
    config: AllocatorConfig
    jitter: float


def gp_fit(window: GPWindow, config: AllocatorConfig) -> GPPosterior:
    """Factorize the regularized kernel matrix, escalating jitter on failure."""
    if len(window) == 0:
        raise AllocatorError("cannot fit a posterior to an empty window")
    cfg = config.validate()
    x = window.betas
    y = window.ys
    m = float(y.mean())
    K = rbf_kernel(x, x, cfg.signal_var, cfg.length_scale)
    K[np.diag_indices_from(K)] += cfg.noise_var
    jitter = 0.0
    while True:
        try:
            chol = cho_factor(K + jitter * np.eye(len(x)), lower=True)
            break
        except LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
            if jitter > 1e-6:
                raise AllocatorError(
                    f"kernel matrix not positive definite at jitter 1e-6 "
                    f"(window size {len(x)})")
    alpha = cho_solve(chol, y - m)
    return GPPosterior(x, y, m, alpha, chol, cfg, jitter)


def gp_posterior(model: GPPosterior, beta_q) -> tuple[np.ndarray, np.ndarray]:
    """Posterior mean and variance at query fractions (scalar or array)."""
    cfg = model.config
    q = np.atleast_1d(np.asarray(beta_q, dtype=float))
    k_star = rbf_kernel(q, model.x_train, cfg.signal_var, cfg.length_scale)
    mu = model.prior_mean + k_star @ model.alpha
    solved = cho_solve(model.chol, k_star.T)
    var = cfg.signal_var - np.einsum("qn,nq->q", k_star, solved)
    var = np.maximum(var, 0.0)  # round-off guard
    if np.isscalar(beta_q) or np.asarray(beta_q).ndim == 0:
        return float(mu[0]), float(var[0])
    return mu, var


def expected_improvement(mu, sigma, y_best):
    """Closed-form EI for maximization; exactly zero wherever sigma is zero."""
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma < 0):
        raise AllocatorError("sigma must be nonnegative")
    imp = mu - y_best
    out = np.zeros(np.broadcast(mu, sigma).shape)
    pos = sigma > 0
    # near-zero sigma drives z huge; pdf/cdf saturate correctly, so the
    # intermediate overflow is harmless noise
    with np.errstate(over="ignore"):
        z = np.divide(imp, sigma, out=np.zeros_like(out), where=pos)
        vals = imp * norm.cdf(z) + sigma * norm.pdf(z)
    out = np.where(pos, vals, 0.0)
    if out.ndim == 0:
        return float(out)
    return out


@dataclass(frozen=True)
class Allocation:
    c_a: float
    c_b: float
    d: float
    beta: float


def _ulp_neighbors(x: float, k: int):
    lo = hi = x
    yield x
    for _ in range(k):
        lo = math.nextafter(lo, -math.inf)
        hi = math.nextafter(hi, math.inf)
        yield lo
        yield hi


def _split_exact(beta: float, d: float) -> tuple[float, float]:
    # the rounded sum must reproduce d bit for bit; beta*d is only the
    # starting point, because pinning c_a exactly can leave every nearby c_b
    # summing to a neighbor of d instead of d itself
    for c_a in _ulp_neighbors(beta * d, 4):
        for c_b in _ulp_neighbors(d - c_a, 4):
            if c_a + c_b == d:
                return c_a, c_b
    raise ArithmeticError(f"could not split {d} at beta {beta} exactly")


def allocate(model: GPPosterior, d: float, grid_size: int = 41) -> Allocation:
    """Grid argmax of EI over beta; ties break toward the smallest beta."""
    if grid_size < 2:
        raise AllocatorError("grid_size must be at least 2")
    grid = np.linspace(0.0, 1.0, grid_size)
    mu, var = gp_posterior(model, grid)
    ei = expected_improvement(mu, np.sqrt(var), model.y_train.max())
    beta = float(grid[int(np.argmax(ei))])  # argmax returns the first max
    c_a, c_b = _split_exact(beta, d)
    return Allocation(c_a=c_a, c_b=c_b, d=d, beta=beta)


class ConstraintAllocator:
    """Stateful wrapper owning the window and the cold-start schedule."""

    def __init__(self, config: Optional[AllocatorConfig] = None):
        self.config = (config or AllocatorConfig()).validate()
        self.window = GPWindow(self.config.window)
        self.iterations = 0

    def objective(self, J_R: float, J_C: float) -> float:
        return objective_F(J_R, J_C, self.config.w1, self.config.w2)

    def propose(self, d: float, rng: np.random.Generator) -> Allocation:
        """Next split: uniform grid draws during cold start, then EI argmax."""
        self.iterations += 1
        grid = np.linspace(0.0, 1.0, self.config.grid_size)
        if self.iterations <= self.config.cold_start or len(self.window) == 0:
            beta = float(grid[int(rng.integers(self.config.grid_size))])
            c_a, c_b = _split_exact(beta, d)
            return Allocation(c_a=c_a, c_b=c_b, d=d, beta=beta)
        model = gp_fit(self.window, self.config)
        return allocate(model, d, self.config.grid_size)

    def record(self, beta: float, y: float) -> None:
        self.window.push(beta, y)

    def state_dict(self) -> dict:
        return {"iterations": self.iterations,
                "entries": [list(e) for e in self.window.entries]}

    def load_state(self, state: dict) -> None:
        self.iterations = int(state["iterations"])
        self.window.entries = [(float(b), float(y)) for b, y in state["entries"]]
        if len(self.window.entries) > self.window.capacity:
            raise AllocatorError("stored window exceeds configured capacity")
