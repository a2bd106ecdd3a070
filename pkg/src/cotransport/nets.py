"""Policy and value networks, their optimizer, and checkpoint IO.

Policies are diagonal Gaussians: a small tanh MLP produces the mean, and a
single learnable log-std vector is shared across states. Critics are MLPs on
the concatenated observation of both robots. Everything is float64 and keeps
reproducibility guarantees: parameter init consumes a caller-supplied
generator, Adam is deterministic, and checkpoints round-trip bit for bit.
"""
from __future__ import annotations

import json
from typing import Optional, Sequence

import numpy as np

from .autodiff import LOG_2PI, Tensor, as_tensor, gaussian_logprob

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0


def orthogonal(rng: np.random.Generator, n_in: int, n_out: int,
               gain: float = 1.0) -> np.ndarray:
    """Orthogonal weight matrix via QR of a Gaussian draw."""
    flat = rng.normal(size=(max(n_in, n_out), min(n_in, n_out)))
    q, r = np.linalg.qr(flat)
    q = q * np.sign(np.diagonal(r))
    if n_in < n_out:
        q = q.T
    return gain * q[:n_in, :n_out]


class Dense:
    def __init__(self, rng: np.random.Generator, n_in: int, n_out: int,
                 gain: float):
        self.W = Tensor(orthogonal(rng, n_in, n_out, gain), requires_grad=True)
        self.b = Tensor(np.zeros(n_out), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.W + self.b


class MLP:
    """Tanh hidden layers, linear output."""

    def __init__(self, rng: np.random.Generator, sizes: Sequence[int],
                 out_gain: float):
        self.layers = []
        for k in range(len(sizes) - 1):
            last = k == len(sizes) - 2
            gain = out_gain if last else np.sqrt(2.0)
            self.layers.append(Dense(rng, sizes[k], sizes[k + 1], gain))

    def __call__(self, x) -> Tensor:
        h = as_tensor(x)
        for k, layer in enumerate(self.layers):
            h = layer(h)
            if k < len(self.layers) - 1:
                h = h.tanh()
        return h

    def forward_np(self, x: np.ndarray) -> np.ndarray:
        # tape-free forward for rollouts
        h = np.asarray(x, dtype=np.float64)
        for k, layer in enumerate(self.layers):
            h = h @ layer.W.data + layer.b.data
            if k < len(self.layers) - 1:
                h = np.tanh(h)
        return h

    def params(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out = {}
        for k, layer in enumerate(self.layers):
            out[f"{prefix}.{k}.W"] = layer.W
            out[f"{prefix}.{k}.b"] = layer.b
        return out


class GaussianPolicy:
    """State-dependent mean, state-independent learnable log-std."""

    def __init__(self, rng: np.random.Generator, obs_dim: int, act_dim: int,
                 hidden: Sequence[int] = (64, 64), log_std_init: float = -0.5):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.mean_net = MLP(rng, [obs_dim, *hidden, act_dim], out_gain=0.01)
        self.log_std = Tensor(np.full(act_dim, log_std_init), requires_grad=True)

    def mean(self, obs: np.ndarray) -> np.ndarray:
        return self.mean_net.forward_np(obs)

    def sample(self, obs: np.ndarray, rng: np.random.Generator
               ) -> tuple[np.ndarray, np.ndarray]:
        """Draw actions and their log densities without touching the tape."""
        mu = self.mean(obs)
        std = np.exp(self.log_std.data)
        acts = mu + std * rng.standard_normal(mu.shape)
        return acts, self.logprob(obs, acts)

    def logprob(self, obs: np.ndarray, actions: np.ndarray) -> np.ndarray:
        mu = self.mean(obs)
        z = (actions - mu) / np.exp(self.log_std.data)
        return (-0.5 * z * z - self.log_std.data - 0.5 * LOG_2PI).sum(axis=-1)

    def logprob_t(self, obs: np.ndarray, actions: np.ndarray) -> Tensor:
        return gaussian_logprob(self.mean_net(obs), self.log_std, actions)

    def entropy(self) -> float:
        return float(np.sum(self.log_std.data + 0.5 * (1.0 + LOG_2PI)))

    def kl_to(self, obs: np.ndarray, other: "GaussianPolicy") -> np.ndarray:
        """Closed-form KL(self || other) per observation."""
        return diag_gauss_kl(self.mean(obs), self.log_std.data,
                             other.mean(obs), other.log_std.data)

    def clamp_log_std(self) -> None:
        np.clip(self.log_std.data, LOG_STD_MIN, LOG_STD_MAX, out=self.log_std.data)

    def params(self) -> list[Tensor]:
        return self.mean_net.params() + [self.log_std]

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        out = self.mean_net.named_params(f"{prefix}.mean")
        out[f"{prefix}.log_std"] = self.log_std
        return out


class ValueNet:
    def __init__(self, rng: np.random.Generator, obs_dim: int,
                 hidden: Sequence[int] = (64, 64)):
        self.net = MLP(rng, [obs_dim, *hidden, 1], out_gain=1.0)

    def value(self, obs: np.ndarray) -> np.ndarray:
        return self.net.forward_np(obs)[..., 0]

    def value_t(self, obs: np.ndarray) -> Tensor:
        # collapse the trailing unit axis so losses see shape (N,)
        return self.net(obs).sum(axis=1)

    def params(self) -> list[Tensor]:
        return self.net.params()

    def named_params(self, prefix: str) -> dict[str, Tensor]:
        return self.net.named_params(prefix)


def diag_gauss_kl(mu_p: np.ndarray, log_std_p: np.ndarray,
                  mu_q: np.ndarray, log_std_q: np.ndarray) -> np.ndarray:
    """KL(p || q) for diagonal Gaussians, summed over the action axis."""
    var_p = np.exp(2.0 * log_std_p)
    var_q = np.exp(2.0 * log_std_q)
    terms = (log_std_q - log_std_p
             + (var_p + (mu_p - mu_q) ** 2) / (2.0 * var_q) - 0.5)
    return terms.sum(axis=-1)


class Adam:
    """Standard Adam with bias correction; parameters with no gradient stay put."""

    def __init__(self, params: Sequence[Tensor], lr: float,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1 ** self.t
        b2t = 1.0 - self.beta2 ** self.t
        for k, p in enumerate(self.params):
            if p.grad is None:
                continue
            g = np.asarray(p.grad, dtype=np.float64)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g * g
            p.data -= self.lr * (self.m[k] / b1t) / (np.sqrt(self.v[k] / b2t) + self.eps)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}.t": np.asarray(float(self.t))}
        for k in range(len(self.params)):
            out[f"{prefix}.m.{k}"] = self.m[k]
            out[f"{prefix}.v.{k}"] = self.v[k]
        return out

    def load_state_arrays(self, prefix: str, arrays: dict) -> None:
        self.t = int(arrays[f"{prefix}.t"])
        for k in range(len(self.params)):
            self.m[k] = np.asarray(arrays[f"{prefix}.m.{k}"], dtype=np.float64)
            self.v[k] = np.asarray(arrays[f"{prefix}.v.{k}"], dtype=np.float64)


def save_checkpoint(path, arrays: dict[str, np.ndarray], meta: dict) -> None:
    """Write arrays plus a JSON metadata blob into one npz file.

    Arrays are stored uncompressed float64, so loading returns bit-identical
    values. ``meta`` must be JSON-serializable; use it for hyperparameters,
    iteration counters, and generator states.
    """
    payload = {k: np.asarray(v) for k, v in arrays.items()}
    if "__meta__" in payload:
        raise ValueError("'__meta__' is reserved")
    payload["__meta__"] = np.asarray(json.dumps(meta, sort_keys=True))
    with open(path, "wb") as fh:
        np.savez(fh, **payload)


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], dict]:
    with np.load(path, allow_pickle=False) as npz:
        arrays = {k: npz[k] for k in npz.files if k != "__meta__"}
        meta = json.loads(str(npz["__meta__"][()]))
    return arrays, meta


def rng_state(rng: np.random.Generator) -> dict:
    return rng.bit_generator.state


def set_rng_state(rng: np.random.Generator, state: dict) -> None:
    rng.bit_generator.state = state
