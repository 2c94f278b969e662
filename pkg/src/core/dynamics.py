#!/usr/bin/env python3
"""
Dynamics Module

This module provides the Gaussian dynamics and reward model contracts used by
every planner, a small learned implementation of each (a two-hidden-layer tanh
network with hand-coded reverse-mode gradients), generic analytic models,
rollouts, the replay buffer and likelihood-based training.

Observations are the state: the latent model of the planner degenerates to a
Gaussian transition model p(z' | z, a) plus a reward regressor r(z).
"""

import logging
from abc import ABC, abstractmethod
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Callable, Deque, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.utils.errors import ContractViolationError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("dynamics")

LOG_2PI = float(np.log(2.0 * np.pi))
FD_STEP = 1e-5


def _check_vector(name: str, value: np.ndarray, size: int) -> np.ndarray:
    value = np.asarray(value, dtype=float)
    if value.ndim == 0 or value.shape[-1] != size:
        raise ContractViolationError(f"{name} must have trailing dimension {size}, got shape {value.shape}")
    if not np.all(np.isfinite(value)):
        raise ContractViolationError(f"{name} contains non-finite entries")
    return value


class GaussianDynamics(ABC):
    """
    Conditional diagonal Gaussian next-state model p(z' | z, a).

    All methods accept leading batch dimensions: z has shape (..., D_z) and a
    has shape (..., D_a); outputs keep the broadcast batch shape.

    Attributes:
        state_dim (int): State dimension D_z.
        action_dim (int): Action dimension D_a.
    """

    state_dim: int
    action_dim: int

    @abstractmethod
    def mean(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Mean of the next state, shape (..., D_z)."""

    @abstractmethod
    def std(self, z: np.ndarray, a: np.ndarray) -> np.ndarray:
        """Diagonal standard deviation of the next state, shape (..., D_z)."""

    @abstractmethod
    def jacobians(self, z: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Return (d mean / d z, d mean / d a) with shapes (..., D_z, D_z) and (..., D_z, D_a)."""

    def std_jacobians(self, z: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Return (d std / d z, d std / d a).

        The base implementation uses central finite differences; models with a
        closed form override it.
        """
        z = np.asarray(z, dtype=float)
        a = np.asarray(a, dtype=float)
        batch = np.broadcast_shapes(z.shape[:-1], a.shape[:-1])
        z = np.broadcast_to(z, batch + z.shape[-1:])
        a = np.broadcast_to(a, batch + a.shape[-1:])
        jz = np.stack([
            (self.std(z + FD_STEP * e, a) - self.std(z - FD_STEP * e, a)) / (2.0 * FD_STEP)
            for e in np.eye(self.state_dim)
        ], axis=-1)
        ja = np.stack([
            (self.std(z, a + FD_STEP * e) - self.std(z, a - FD_STEP * e)) / (2.0 * FD_STEP)
            for e in np.eye(self.action_dim)
        ], axis=-1)
        return jz, ja

    def sample(self, z: np.ndarray, a: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        """Draw z' = mean + std * xi with xi standard normal."""
        mean = self.mean(z, a)
        return mean + self.std(z, a) * rng.standard_normal(mean.shape)

    def check_inputs(self, z: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Validate dimensions and finiteness of a state/action pair."""
        return _check_vector("state", z, self.state_dim), _check_vector("action", a, self.action_dim)


class RewardModel(ABC):
    """
    Reward contract r(z) with an optional additive action term r_a(a).

    The per-step reward of a transition (z, a) -> z' is r(z') + r_a(a).
    """

    state_dim: int

    @abstractmethod
    def __call__(self, z: np.ndarray) -> np.ndarray:
        """Reward of a state, shape (...)."""

    @abstractmethod
    def grad(self, z: np.ndarray) -> np.ndarray:
        """Gradient of the state reward, shape (..., D_z)."""

    def action_reward(self, a: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(a)[:-1])

    def action_grad(self, a: np.ndarray) -> np.ndarray:
        return np.zeros(np.shape(a))

    def cost_hessian(self, z: np.ndarray) -> np.ndarray:
        """
        Curvature of the cost -r(z) used by iLQR.

        Defaults to the Gauss-Newton surrogate built from the gradient outer product.
        """
        g = self.grad(z)
        return g[..., :, None] * g[..., None, :]

    def action_cost_hessian(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        return np.zeros(a.shape + (a.shape[-1],))

    def step_reward(self, z_next: np.ndarray, a: np.ndarray) -> np.ndarray:
        return self(z_next) + self.action_reward(a)


class LinearGaussianDynamics(GaussianDynamics):
    """
    Linear-Gaussian model z' = A z + B a + c + N(0, noise_std^2).

    Attributes:
        A (np.ndarray): State matrix (D_z x D_z).
        B (np.ndarray): Input matrix (D_z x D_a).
        c (np.ndarray): Offset.
        noise_std (np.ndarray): Per-dimension noise standard deviation.
    """

    def __init__(self, A: np.ndarray, B: np.ndarray, c: Optional[np.ndarray] = None, noise_std=0.0):
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.state_dim = self.A.shape[0]
        self.action_dim = self.B.shape[1]
        if self.A.shape != (self.state_dim, self.state_dim) or self.B.shape[0] != self.state_dim:
            raise ContractViolationError(f"inconsistent shapes A={self.A.shape}, B={self.B.shape}")
        self.c = np.zeros(self.state_dim) if c is None else np.asarray(c, dtype=float)
        self.noise_std = np.broadcast_to(np.asarray(noise_std, dtype=float), (self.state_dim,)).copy()

    def mean(self, z, a):
        return np.asarray(z) @ self.A.T + np.asarray(a) @ self.B.T + self.c

    def std(self, z, a):
        shape = np.broadcast_shapes(np.shape(z)[:-1], np.shape(a)[:-1]) + (self.state_dim,)
        return np.broadcast_to(self.noise_std, shape).copy()

    def jacobians(self, z, a):
        batch = np.broadcast_shapes(np.shape(z)[:-1], np.shape(a)[:-1])
        return (np.broadcast_to(self.A, batch + self.A.shape).copy(),
                np.broadcast_to(self.B, batch + self.B.shape).copy())

    def std_jacobians(self, z, a):
        batch = np.broadcast_shapes(np.shape(z)[:-1], np.shape(a)[:-1])
        return (np.zeros(batch + (self.state_dim, self.state_dim)),
                np.zeros(batch + (self.state_dim, self.action_dim)))


class QuadraticReward(RewardModel):
    """r(z) = -(z - g)^T Q (z - g), r_a(a) = -a^T R a."""

    def __init__(self, Q: np.ndarray, R: Optional[np.ndarray] = None, target: Optional[np.ndarray] = None):
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.Q = 0.5 * (Q + Q.T)
        self.state_dim = self.Q.shape[0]
        self.R = None if R is None else np.atleast_2d(np.asarray(R, dtype=float))
        if self.R is not None:
            self.R = 0.5 * (self.R + self.R.T)
        self.target = np.zeros(self.state_dim) if target is None else np.asarray(target, dtype=float)

    def __call__(self, z):
        d = np.asarray(z, dtype=float) - self.target
        return -np.einsum("...i,ij,...j->...", d, self.Q, d)

    def grad(self, z):
        return -2.0 * (np.asarray(z, dtype=float) - self.target) @ self.Q

    def cost_hessian(self, z):
        batch = np.shape(z)[:-1]
        return np.broadcast_to(2.0 * self.Q, batch + self.Q.shape).copy()

    def action_reward(self, a):
        if self.R is None:
            return super().action_reward(a)
        a = np.asarray(a, dtype=float)
        return -np.einsum("...i,ij,...j->...", a, self.R, a)

    def action_grad(self, a):
        if self.R is None:
            return super().action_grad(a)
        return -2.0 * np.asarray(a, dtype=float) @ self.R

    def action_cost_hessian(self, a):
        if self.R is None:
            return super().action_cost_hessian(a)
        return np.broadcast_to(2.0 * self.R, np.shape(a)[:-1] + self.R.shape).copy()


class ConstantReward(RewardModel):
    """r(z) = value everywhere."""

    def __init__(self, state_dim: int, value: float = 0.0):
        self.state_dim = state_dim
        self.value = float(value)

    def __call__(self, z):
        return np.full(np.shape(z)[:-1], self.value)

    def grad(self, z):
        return np.zeros(np.shape(z))


class SmoothedGoalReward(RewardModel):
    """
    Heavy-tailed goal bump r(z) = height / (1 + |P z - g|^2 / scale^2).

    Stands in for a learned sparse-reward predictor: equal to `height` at the
    goal, small but with a non-vanishing gradient far away.

    Attributes:
        goal (np.ndarray): Goal in the selected coordinates.
        scale (float): Distance at which the bump halves.
        dims (Sequence[int]): State coordinates the bump looks at.
    """

    def __init__(self, state_dim: int, goal: Sequence[float], scale: float,
                 height: float = 1.0, dims: Optional[Sequence[int]] = None):
        self.state_dim = state_dim
        self.goal = np.asarray(goal, dtype=float)
        self.scale = float(scale)
        self.height = float(height)
        self.dims = list(range(len(self.goal))) if dims is None else list(dims)

    def __call__(self, z):
        d = np.asarray(z, dtype=float)[..., self.dims] - self.goal
        return self.height / (1.0 + np.sum(d * d, axis=-1) / self.scale ** 2)

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        d = z[..., self.dims] - self.goal
        u = 1.0 + np.sum(d * d, axis=-1) / self.scale ** 2
        g = np.zeros(z.shape)
        g[..., self.dims] = (-2.0 * self.height / self.scale ** 2) * d / (u * u)[..., None]
        return g


class SparseGoalReward(RewardModel):
    """
    Smoothed success indicator of a goal disc with a faint heavy tail.

    r(z) = height * ((1 - tail) * sigmoid((radius - |z - g|) / width) + tail / (1 + |z - g|^2 / radius^2))

    The indicator part is close to `height` inside the disc and decays
    exponentially outside it; the tail keeps a small gradient pointing at
    the goal from anywhere, the way a learned predictor smooths a 0/1 signal.

    Attributes:
        goal (np.ndarray): Goal position.
        radius (float): Success radius.
        width (float): Edge width of the indicator.
        tail (float): Weight of the heavy tail.
    """

    def __init__(self, state_dim: int, goal: Sequence[float], radius: float, width: Optional[float] = None,
                 tail: float = 0.05, height: float = 1.0):
        if radius <= 0:
            raise ContractViolationError(f"goal radius must be positive, got {radius!r}")
        if not 0.0 <= tail < 1.0:
            raise ContractViolationError(f"tail weight must lie in [0, 1), got {tail!r}")
        self.state_dim = state_dim
        self.goal = np.asarray(goal, dtype=float)
        self.radius = float(radius)
        self.width = self.radius / 4.0 if width is None else float(width)
        self.tail = float(tail)
        self.height = float(height)

    def _distance(self, z):
        d = np.asarray(z, dtype=float) - self.goal
        return d, np.linalg.norm(d, axis=-1)

    def __call__(self, z):
        _, dist = self._distance(z)
        core = expit((self.radius - dist) / self.width)
        return self.height * ((1.0 - self.tail) * core + self.tail / (1.0 + (dist / self.radius) ** 2))

    def grad(self, z):
        d, dist = self._distance(z)
        core = expit((self.radius - dist) / self.width)
        u = 1.0 + (dist / self.radius) ** 2
        core_slope = -(1.0 - self.tail) * core * (1.0 - core) / (self.width * np.maximum(dist, 1e-12))
        tail_slope = -2.0 * self.tail / (self.radius ** 2 * u * u)
        return self.height * (core_slope + tail_slope)[..., None] * d


def predict(model: GaussianDynamics, z: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Predict the next-state distribution.

    Args:
        model (GaussianDynamics): Dynamics model.
        z (np.ndarray): State, shape (..., D_z).
        a (np.ndarray): Action, shape (..., D_a).

    Returns:
        Tuple[np.ndarray, np.ndarray]: Mean and standard deviation.

    Raises:
        ContractViolationError: If dimensions do not match the model.
    """
    z, a = model.check_inputs(z, a)
    return model.mean(z, a), model.std(z, a)


def jacobians(model: GaussianDynamics, z: np.ndarray, a: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Validated access to d mean / d z and d mean / d a."""
    z, a = model.check_inputs(z, a)
    return model.jacobians(z, a)


def rollout_mean(model: GaussianDynamics, z1: np.ndarray, actions: np.ndarray) -> np.ndarray:
    """
    Unroll the mean dynamics.

    Args:
        model (GaussianDynamics): Dynamics model.
        z1 (np.ndarray): Initial state (D_z,) or batch (..., D_z).
        actions (np.ndarray): Actions (..., H, D_a); H may be zero.

    Returns:
        np.ndarray: States (..., H + 1, D_z) starting with z1.
    """
    actions = np.asarray(actions, dtype=float)
    z = np.broadcast_to(np.asarray(z1, dtype=float), actions.shape[:-2] + (model.state_dim,))
    states = [z]
    for t in range(actions.shape[-2]):
        z = model.mean(z, actions[..., t, :])
        states.append(z)
    return np.stack(states, axis=-2)


def rollout_sample(model: GaussianDynamics, z1: np.ndarray, actions: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
    """Unroll sampled transitions; deterministic given the generator state."""
    actions = np.asarray(actions, dtype=float)
    z = np.broadcast_to(np.asarray(z1, dtype=float), actions.shape[:-2] + (model.state_dim,))
    states = [z]
    for t in range(actions.shape[-2]):
        z = model.sample(z, actions[..., t, :], rng)
        states.append(z)
    return np.stack(states, axis=-2)


def _glorot(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_out, fan_in))


class _TanhTrunk:
    """Two tanh hidden layers shared by the learned dynamics and reward models."""

    params: "OrderedDict[str, np.ndarray]"

    def _trunk(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        h1 = np.tanh(x @ self.params["W1"].T + self.params["b1"])
        h2 = np.tanh(h1 @ self.params["W2"].T + self.params["b2"])
        return h1, h2

    def _trunk_jacobian(self, h1: np.ndarray, h2: np.ndarray) -> np.ndarray:
        """d h2 / d x, shape (..., hidden, D_in)."""
        dh1 = (1.0 - h1 * h1)[..., :, None] * self.params["W1"]
        return (1.0 - h2 * h2)[..., :, None] * np.einsum("ij,...jk->...ik", self.params["W2"], dh1)

    def _trunk_backward(self, x: np.ndarray, h1: np.ndarray, h2: np.ndarray,
                        dh2: np.ndarray, grads: Dict[str, np.ndarray]) -> None:
        da2 = dh2 * (1.0 - h2 * h2)
        grads["W2"] = da2.T @ h1
        grads["b2"] = da2.sum(axis=0)
        da1 = (da2 @ self.params["W2"]) * (1.0 - h1 * h1)
        grads["W1"] = da1.T @ x
        grads["b1"] = da1.sum(axis=0)

    def parameters(self) -> "OrderedDict[str, np.ndarray]":
        return self.params

    def load_parameters(self, params: Dict[str, np.ndarray]) -> None:
        for name, value in params.items():
            if name not in self.params or self.params[name].shape != np.shape(value):
                raise ContractViolationError(f"parameter {name} has unexpected shape {np.shape(value)}")
            self.params[name] = np.array(value, dtype=float)


class MlpGaussianDynamics(_TanhTrunk, GaussianDynamics):
    """
    Learned dynamics: (z, a) -> 64 -> 64 (tanh) -> mean head and log-std head.

    The log-std head is clamped to [LOG_STD_MIN, LOG_STD_MAX] and std = exp(log-std).
    """

    LOG_STD_MIN = -5.0
    LOG_STD_MAX = 2.0

    def __init__(self, state_dim: int, action_dim: int, hidden: int = 64,
                 rng: Optional[np.random.Generator] = None):
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.hidden = hidden
        rng = rng if rng is not None else np.random.default_rng(0)
        d_in = state_dim + action_dim
        self.params = OrderedDict([
            ("W1", _glorot(rng, hidden, d_in)), ("b1", np.zeros(hidden)),
            ("W2", _glorot(rng, hidden, hidden)), ("b2", np.zeros(hidden)),
            ("Wm", _glorot(rng, state_dim, hidden)), ("bm", np.zeros(state_dim)),
            ("Ws", _glorot(rng, state_dim, hidden)), ("bs", np.full(state_dim, -1.0)),
        ])

    def _forward(self, z, a):
        z = np.asarray(z, dtype=float)
        a = np.asarray(a, dtype=float)
        batch = np.broadcast_shapes(z.shape[:-1], a.shape[:-1])
        x = np.concatenate([np.broadcast_to(z, batch + z.shape[-1:]),
                            np.broadcast_to(a, batch + a.shape[-1:])], axis=-1)
        h1, h2 = self._trunk(x)
        mean = h2 @ self.params["Wm"].T + self.params["bm"]
        raw = h2 @ self.params["Ws"].T + self.params["bs"]
        return x, h1, h2, mean, raw

    def mean(self, z, a):
        return self._forward(z, a)[3]

    def log_std(self, z, a):
        return np.clip(self._forward(z, a)[4], self.LOG_STD_MIN, self.LOG_STD_MAX)

    def std(self, z, a):
        return np.exp(self.log_std(z, a))

    def jacobians(self, z, a):
        _, h1, h2, _, _ = self._forward(z, a)
        jx = np.einsum("ij,...jk->...ik", self.params["Wm"], self._trunk_jacobian(h1, h2))
        return jx[..., :self.state_dim], jx[..., self.state_dim:]

    def std_jacobians(self, z, a):
        _, h1, h2, _, raw = self._forward(z, a)
        active = (raw > self.LOG_STD_MIN) & (raw < self.LOG_STD_MAX)
        scale = np.exp(np.clip(raw, self.LOG_STD_MIN, self.LOG_STD_MAX)) * active
        jx = scale[..., :, None] * np.einsum("ij,...jk->...ik", self.params["Ws"], self._trunk_jacobian(h1, h2))
        return jx[..., :self.state_dim], jx[..., self.state_dim:]

    def nll_and_grads(self, z: np.ndarray, a: np.ndarray, z_next: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """
        Average Gaussian negative log-likelihood of a batch and its parameter gradients.

        Args:
            z (np.ndarray): States (N, D_z).
            a (np.ndarray): Actions (N, D_a).
            z_next (np.ndarray): Next states (N, D_z).

        Returns:
            Tuple[float, Dict[str, np.ndarray]]: NLL per transition (summed over
            dimensions) and gradients keyed like `parameters()`.
        """
        x, h1, h2, mean, raw = self._forward(z, a)
        n = x.shape[0]
        log_std = np.clip(raw, self.LOG_STD_MIN, self.LOG_STD_MAX)
        inv_var = np.exp(-2.0 * log_std)
        diff = z_next - mean
        loss = float(np.mean(np.sum(log_std + 0.5 * diff * diff * inv_var + 0.5 * LOG_2PI, axis=-1)))

        d_mean = -diff * inv_var / n
        active = (raw > self.LOG_STD_MIN) & (raw < self.LOG_STD_MAX)
        d_raw = (1.0 - diff * diff * inv_var) * active / n
        grads: Dict[str, np.ndarray] = {
            "Wm": d_mean.T @ h2, "bm": d_mean.sum(axis=0),
            "Ws": d_raw.T @ h2, "bs": d_raw.sum(axis=0),
        }
        dh2 = d_mean @ self.params["Wm"] + d_raw @ self.params["Ws"]
        self._trunk_backward(x, h1, h2, dh2, grads)
        return loss, grads


class MlpReward(_TanhTrunk, RewardModel):
    """Learned reward: z -> 64 -> 64 (tanh) -> scalar."""

    def __init__(self, state_dim: int, hidden: int = 64, rng: Optional[np.random.Generator] = None):
        self.state_dim = state_dim
        self.hidden = hidden
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params = OrderedDict([
            ("W1", _glorot(rng, hidden, state_dim)), ("b1", np.zeros(hidden)),
            ("W2", _glorot(rng, hidden, hidden)), ("b2", np.zeros(hidden)),
            ("Wo", _glorot(rng, 1, hidden)), ("bo", np.zeros(1)),
        ])

    def __call__(self, z):
        _, h2 = self._trunk(np.asarray(z, dtype=float))
        return (h2 @ self.params["Wo"].T + self.params["bo"])[..., 0]

    def grad(self, z):
        h1, h2 = self._trunk(np.asarray(z, dtype=float))
        return np.einsum("ij,...jk->...ik", self.params["Wo"], self._trunk_jacobian(h1, h2))[..., 0, :]

    def mse_and_grads(self, z: np.ndarray, r: np.ndarray) -> Tuple[float, Dict[str, np.ndarray]]:
        """Mean squared error of a batch and its parameter gradients."""
        z = np.asarray(z, dtype=float)
        h1, h2 = self._trunk(z)
        pred = (h2 @ self.params["Wo"].T + self.params["bo"])[..., 0]
        diff = pred - r
        n = z.shape[0]
        d_out = (2.0 * diff / n)[:, None]
        grads: Dict[str, np.ndarray] = {"Wo": d_out.T @ h2, "bo": d_out.sum(axis=0)}
        self._trunk_backward(z, h1, h2, d_out @ self.params["Wo"], grads)
        return float(np.mean(diff * diff)), grads


class AdamOptimizer:
    """
    Adam update over a dictionary of parameter arrays (updated in place).

    Attributes:
        lr (float): Step size.
        beta1 (float): First-moment decay.
        beta2 (float): Second-moment decay.
        eps (float): Denominator floor.
    """

    def __init__(self, params: Dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def step(self, grads: Dict[str, np.ndarray], ascent: bool = False) -> None:
        self.t += 1
        sign = 1.0 if ascent else -1.0
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for name, g in grads.items():
            self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * g * g
            self.params[name] += sign * self.lr * (self.m[name] / c1) / (np.sqrt(self.v[name] / c2) + self.eps)


@dataclass
class Episode:
    """
    One collected trajectory.

    Attributes:
        states (np.ndarray): Observed states o_{1:T}, shape (T, D_z).
        actions (np.ndarray): Executed actions a_{1:T-1}, shape (T-1, D_a).
        rewards (np.ndarray): Rewards r_{1:T-1}, received after each action.
        success (bool): Whether a sparse task was solved.
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    success: bool = False

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.actions = np.asarray(self.actions, dtype=float)
        if self.actions.ndim == 1:
            self.actions = self.actions.reshape(-1, 1)
        self.rewards = np.asarray(self.rewards, dtype=float).reshape(-1)
        if len(self.states) != len(self.actions) + 1 or len(self.rewards) != len(self.actions):
            raise ContractViolationError(
                f"episode needs |states| = |actions| + 1 = |rewards| + 1, got "
                f"{len(self.states)}, {len(self.actions)}, {len(self.rewards)}"
            )

    def __len__(self) -> int:
        return len(self.actions)

    @property
    def total_reward(self) -> float:
        return float(np.sum(self.rewards))


class ReplayBuffer:
    """
    FIFO buffer of episodes with uniform transition sampling.

    Attributes:
        capacity (int): Maximum number of episodes kept.
        episodes (Deque[Episode]): Stored episodes, oldest first.
    """

    def __init__(self, capacity: int = 1000):
        if capacity <= 0:
            raise ContractViolationError("replay buffer capacity must be positive")
        self.capacity = capacity
        self.episodes: Deque[Episode] = deque(maxlen=capacity)
        self._flat: Optional[Tuple[np.ndarray, ...]] = None

    def add(self, episode: Episode) -> None:
        self.episodes.append(episode)
        self._flat = None

    def __len__(self) -> int:
        return len(self.episodes)

    @property
    def num_transitions(self) -> int:
        return sum(len(e) for e in self.episodes)

    def transitions(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """All stored transitions as (z, a, z_next, r) arrays."""
        if self._flat is None:
            usable = [e for e in self.episodes if len(e) > 0]
            if not usable:
                raise ContractViolationError("replay buffer holds no transitions")
            self._flat = (
                np.concatenate([e.states[:-1] for e in usable]),
                np.concatenate([e.actions for e in usable]),
                np.concatenate([e.states[1:] for e in usable]),
                np.concatenate([e.rewards for e in usable]),
            )
        return self._flat

    def sample_transitions(self, batch: int, rng: np.random.Generator):
        z, a, z_next, r = self.transitions()
        idx = rng.integers(0, len(z), size=batch)
        return z[idx], a[idx], z_next[idx], r[idx]


def train_dynamics(buffer: ReplayBuffer, model: MlpGaussianDynamics, steps: int, lr: float,
                   batch: int, rng: np.random.Generator,
                   optimizer: Optional[AdamOptimizer] = None) -> float:
    """
    Fit the dynamics model by minimizing the transition Gaussian NLL with Adam.

    Args:
        buffer (ReplayBuffer): Training data.
        model (MlpGaussianDynamics): Model updated in place.
        steps (int): Gradient steps.
        lr (float): Adam step size (ignored when `optimizer` is given).
        batch (int): Transitions per minibatch.
        rng (np.random.Generator): Minibatch sampler.
        optimizer (Optional[AdamOptimizer]): Persistent optimizer state to continue from.

    Returns:
        float: NLL averaged over the last 10 steps (the initial loss when steps is 0).

    Raises:
        ContractViolationError: If the buffer is empty.
    """
    if len(buffer) == 0:
        raise ContractViolationError("cannot train dynamics on an empty replay buffer")
    optimizer = optimizer if optimizer is not None else AdamOptimizer(model.parameters(), lr=lr)
    losses = []
    for _ in range(steps):
        z, a, z_next, _ = buffer.sample_transitions(batch, rng)
        loss, grads = model.nll_and_grads(z, a, z_next)
        optimizer.step(grads)
        losses.append(loss)
    if not losses:
        z, a, z_next, _ = buffer.sample_transitions(batch, rng)
        return model.nll_and_grads(z, a, z_next)[0]
    final = float(np.mean(losses[-10:]))
    logger.debug(f"Dynamics training: {steps} steps, final NLL {final:.4f}")
    return final


def train_reward(buffer: ReplayBuffer, model: MlpReward, steps: int, lr: float,
                 batch: int, rng: np.random.Generator,
                 optimizer: Optional[AdamOptimizer] = None,
                 target_transform: Optional[Callable[[np.ndarray], np.ndarray]] = None) -> float:
    """
    Fit the reward model by least squares on (next state, reward) pairs.

    `target_transform` maps sampled rewards to regression targets (e.g. normalization).

    Returns:
        float: Mean squared error averaged over the last 10 steps.

    Raises:
        ContractViolationError: If the buffer is empty.
    """
    if len(buffer) == 0:
        raise ContractViolationError("cannot train reward on an empty replay buffer")
    optimizer = optimizer if optimizer is not None else AdamOptimizer(model.parameters(), lr=lr)
    losses = []
    for _ in range(steps):
        _, _, z_next, r = buffer.sample_transitions(batch, rng)
        if target_transform is not None:
            r = target_transform(r)
        loss, grads = model.mse_and_grads(z_next, r)
        optimizer.step(grads)
        losses.append(loss)
    if not losses:
        _, _, z_next, r = buffer.sample_transitions(batch, rng)
        if target_transform is not None:
            r = target_transform(r)
        return model.mse_and_grads(z_next, r)[0]
    final = float(np.mean(losses[-10:]))
    logger.debug(f"Reward training: {steps} steps, final MSE {final:.5f}")
    return final
