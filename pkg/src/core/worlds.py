#!/usr/bin/env python3
"""
Worlds Module

This module provides the analytic environments the planners are evaluated on:
the Lottery task, point-mass navigation with a parametric goal distance, a
torque-limited pendulum and a linear-quadratic system. Every environment
exposes reset/step semantics, its action bound, and its ground-truth Gaussian
dynamics and reward models (the "oracle" models).
"""

import csv
import logging
from abc import ABC, abstractmethod
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import expit

from src.core.dynamics import (
    Episode, GaussianDynamics, LinearGaussianDynamics, QuadraticReward,
    RewardModel, SmoothedGoalReward, SparseGoalReward,
)
from src.core.settings import EnvSpec
from src.utils.errors import ConfigurationError, ContractViolationError, EnvironmentStateError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("worlds")

BOUNDARY_TOLERANCE = 1e-9


def angle_wrap(theta):
    """Wrap angles to (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta, dtype=float), 2.0 * np.pi)


class Environment(ABC):
    """
    Base class for the analytic environments.

    Attributes:
        state_dim (int): State dimension.
        action_dim (int): Action dimension.
        action_bound (float): Elementwise action bound a_m.
        max_steps (int): Episode length.
        sparse (bool): Whether the reward is a sparse success signal.
    """

    state_dim: int
    action_dim: int
    action_bound: float
    max_steps: int
    sparse: bool = False

    def __init__(self):
        self.state: Optional[np.ndarray] = None
        self.t = 0
        self.done = True
        self.success = False
        self._rng = np.random.default_rng()

    def reset(self, seed: Optional[int] = None) -> np.ndarray:
        """
        Start a new episode.

        Args:
            seed (Optional[int]): Seed of the environment's random stream.

        Returns:
            np.ndarray: Initial state.
        """
        self._rng = np.random.default_rng(seed)
        self.t = 0
        self.done = False
        self.success = False
        self.state = self._initial_state()
        return self.state.copy()

    def step(self, action: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        """
        Apply one clamped action.

        Returns:
            Tuple[np.ndarray, float, bool]: Next state, reward and done flag.

        Raises:
            EnvironmentStateError: If the episode has already ended.
        """
        if self.done:
            raise EnvironmentStateError(f"{type(self).__name__}.step called after the episode ended")
        action = np.asarray(action, dtype=float).reshape(self.action_dim)
        if not np.all(np.isfinite(action)):
            raise ContractViolationError("action contains non-finite entries")
        action = self.clamp(action)
        self.state, reward, terminal = self._transition(self.state, action)
        self.t += 1
        self.done = bool(terminal or self.t >= self.max_steps)
        return self.state.copy(), float(reward), self.done

    def clamp(self, action: np.ndarray) -> np.ndarray:
        return np.clip(action, -self.action_bound, self.action_bound)

    @abstractmethod
    def _initial_state(self) -> np.ndarray:
        """Initial state drawn from the environment's random stream."""

    @abstractmethod
    def _transition(self, state: np.ndarray, action: np.ndarray) -> Tuple[np.ndarray, float, bool]:
        """Return (next state, reward, terminal) for a clamped action."""

    @abstractmethod
    def oracle_dynamics(self) -> GaussianDynamics:
        """Ground-truth Gaussian dynamics model."""

    @abstractmethod
    def oracle_reward(self) -> RewardModel:
        """Ground-truth (smoothed where sparse) reward model."""


# ---------------------------------------------------------------------------
# Point mass
# ---------------------------------------------------------------------------

class PointMassDynamics(GaussianDynamics):
    """z' = z + clip(a, -a_m, a_m) + N(0, noise_std^2)."""

    def __init__(self, action_bound: float, noise_std: float = 0.0, state_dim: int = 2):
        self.state_dim = state_dim
        self.action_dim = state_dim
        self.action_bound = float(action_bound)
        self.noise_std = float(noise_std)

    def mean(self, z, a):
        return np.asarray(z, dtype=float) + np.clip(a, -self.action_bound, self.action_bound)

    def std(self, z, a):
        shape = np.broadcast_shapes(np.shape(z), np.shape(a))
        return np.full(shape, self.noise_std)

    def jacobians(self, z, a):
        a = np.asarray(a, dtype=float)
        batch = np.broadcast_shapes(np.shape(z)[:-1], a.shape[:-1])
        inside = (np.abs(a) <= self.action_bound).astype(float)
        eye = np.eye(self.state_dim)
        ja = np.broadcast_to(inside[..., None, :] * eye, batch + eye.shape).copy()
        return np.broadcast_to(eye, batch + eye.shape).copy(), ja

    def std_jacobians(self, z, a):
        batch = np.broadcast_shapes(np.shape(z)[:-1], np.shape(a)[:-1])
        zeros = np.zeros(batch + (self.state_dim, self.state_dim))
        return zeros, zeros.copy()


class DistanceReward(RewardModel):
    """Dense point-mass reward r(z) = -|z - goal|."""

    def __init__(self, goal: Sequence[float]):
        self.goal = np.asarray(goal, dtype=float)
        self.state_dim = len(self.goal)

    def __call__(self, z):
        return -np.linalg.norm(np.asarray(z, dtype=float) - self.goal, axis=-1)

    def grad(self, z):
        d = np.asarray(z, dtype=float) - self.goal
        norm = np.linalg.norm(d, axis=-1, keepdims=True)
        return -d / np.maximum(norm, 1e-12)


class PointMassEnv(Environment):
    """
    2D point mass that must reach a goal at distance d to the right of the start.

    In the sparse variant a step succeeds once the mass is strictly inside the
    goal disc; a position on the radius, within BOUNDARY_TOLERANCE, is outside.

    Attributes:
        goal (np.ndarray): Goal position.
        goal_radius (float): Success radius tau.
        noise_std (float): Transition noise standard deviation.
    """

    state_dim = 2
    action_dim = 2

    def __init__(self, d: float = 0.4, sparse: bool = True, noise_std: float = 0.0,
                 goal_radius: float = 0.1, action_bound: float = 0.1, max_steps: int = 100,
                 start: Sequence[float] = (0.0, 0.0)):
        super().__init__()
        if not d > 0:
            raise ConfigurationError(f"goal distance must be positive, got {d!r}", "env.params.d")
        if noise_std < 0:
            raise ConfigurationError("must be non-negative", "env.params.noise_std")
        if goal_radius <= 0 or action_bound <= 0 or max_steps <= 0:
            raise ConfigurationError("goal_radius, action_bound and max_steps must be positive", "env.params")
        self.start = np.asarray(start, dtype=float).reshape(2)
        self.distance = float(d)
        self.goal = self.start + np.array([self.distance, 0.0])
        self.sparse = bool(sparse)
        self.noise_std = float(noise_std)
        self.goal_radius = float(goal_radius)
        self.action_bound = float(action_bound)
        self.max_steps = int(max_steps)
        self.goal_positions = [self.goal]

    def _initial_state(self):
        return self.start.copy()

    def _transition(self, state, action):
        position = state + action
        if self.noise_std > 0:
            position = position + self.noise_std * self._rng.standard_normal(2)
        distance = float(np.linalg.norm(position - self.goal))
        if not self.sparse:
            return position, -distance, False
        # The disc boundary counts as outside, also after rounding in summed steps.
        reached = distance < self.goal_radius - BOUNDARY_TOLERANCE
        self.success = self.success or reached
        return position, 1.0 if reached else 0.0, reached

    def oracle_dynamics(self):
        return PointMassDynamics(self.action_bound, self.noise_std)

    def oracle_reward(self):
        if self.sparse:
            return SparseGoalReward(2, self.goal, radius=self.goal_radius)
        return DistanceReward(self.goal)


# ---------------------------------------------------------------------------
# Pendulum
# ---------------------------------------------------------------------------

class PendulumDynamics(GaussianDynamics):
    """Noiseless semi-implicit Euler pendulum with theta = 0 upright."""

    state_dim = 2
    action_dim = 1

    def __init__(self, max_torque=2.0, dt=0.05, g=10.0, m=1.0, l=1.0):
        self.max_torque = max_torque
        self.dt = dt
        self.g = g
        self.m = m
        self.l = l

    def mean(self, z, a):
        z = np.asarray(z, dtype=float)
        u = np.clip(np.asarray(a, dtype=float)[..., 0], -self.max_torque, self.max_torque)
        thdot = z[..., 1] + self.dt * ((self.g / self.l) * np.sin(z[..., 0]) + u / (self.m * self.l ** 2))
        theta = angle_wrap(z[..., 0] + self.dt * thdot)
        return np.stack([theta, thdot], axis=-1)

    def std(self, z, a):
        return np.zeros(np.broadcast_shapes(np.shape(z)[:-1], np.shape(a)[:-1]) + (2,))

    def jacobians(self, z, a):
        z = np.asarray(z, dtype=float)
        a = np.asarray(a, dtype=float)
        batch = np.broadcast_shapes(z.shape[:-1], a.shape[:-1])
        k = self.dt * (self.g / self.l) * np.cos(z[..., 0])
        jz = np.zeros(batch + (2, 2))
        jz[..., 1, 0] = k
        jz[..., 1, 1] = 1.0
        jz[..., 0, 0] = 1.0 + self.dt * k
        jz[..., 0, 1] = self.dt
        inside = (np.abs(a[..., 0]) <= self.max_torque).astype(float)
        b = self.dt / (self.m * self.l ** 2) * inside
        ja = np.zeros(batch + (2, 1))
        ja[..., 1, 0] = b
        ja[..., 0, 0] = self.dt * b
        return jz, ja

    def std_jacobians(self, z, a):
        batch = np.broadcast_shapes(np.shape(z)[:-1], np.shape(a)[:-1])
        return np.zeros(batch + (2, 2)), np.zeros(batch + (2, 1))


class PendulumReward(RewardModel):
    """r = -(wrap(theta)^2 + 0.1 thdot^2), r_a = -0.001 u^2."""

    state_dim = 2

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        return -(angle_wrap(z[..., 0]) ** 2 + 0.1 * z[..., 1] ** 2)

    def grad(self, z):
        z = np.asarray(z, dtype=float)
        return np.stack([-2.0 * angle_wrap(z[..., 0]), -0.2 * z[..., 1]], axis=-1)

    def cost_hessian(self, z):
        return np.broadcast_to(np.diag([2.0, 0.2]), np.shape(z)[:-1] + (2, 2)).copy()

    def action_reward(self, a):
        return -0.001 * np.asarray(a, dtype=float)[..., 0] ** 2

    def action_grad(self, a):
        return -0.002 * np.asarray(a, dtype=float)

    def action_cost_hessian(self, a):
        return np.broadcast_to(np.array([[0.002]]), np.shape(a)[:-1] + (1, 1)).copy()


class PendulumEnv(Environment):
    """Torque-limited pendulum starting near the hanging position."""

    state_dim = 2
    action_dim = 1

    def __init__(self, max_torque: float = 2.0, dt: float = 0.05, g: float = 10.0, m: float = 1.0,
                 l: float = 1.0, max_steps: int = 200, start: Optional[Sequence[float]] = None,
                 perturbation: float = 0.05):
        super().__init__()
        if min(max_torque, dt, m, l, max_steps) <= 0:
            raise ConfigurationError("max_torque, dt, m, l and max_steps must be positive", "env.params")
        self.dynamics = PendulumDynamics(max_torque, dt, g, m, l)
        self.action_bound = float(max_torque)
        self.max_steps = int(max_steps)
        self.start = None if start is None else np.asarray(start, dtype=float).reshape(2)
        self.perturbation = float(perturbation)

    def _initial_state(self):
        if self.start is not None:
            return self.start.copy()
        return np.array([angle_wrap(np.pi + self.perturbation * self._rng.standard_normal()), 0.0])

    def _transition(self, state, action):
        next_state = self.dynamics.mean(state, action)
        reward = PendulumReward()
        return next_state, float(reward(next_state) + reward.action_reward(action)), False

    def oracle_dynamics(self):
        return self.dynamics

    def oracle_reward(self):
        return PendulumReward()


# ---------------------------------------------------------------------------
# Lottery
# ---------------------------------------------------------------------------

class LotteryDynamics(GaussianDynamics):
    """
    Gaussian fit of the Lottery transition on the state (x, y, outcome).

    The position moves deterministically. The outcome is drawn fresh on each
    step: with membership s of the new position in the bottom goal region it
    is +1 or -1 (mean 2p - 1), otherwise 0. The Gaussian matches the first two
    moments of that mixture, mean s (2p - 1) and variance s (1 - s (2p - 1)^2).

    Attributes:
        membership_width (float): Width of the logistic region membership.
    """

    state_dim = 3
    action_dim = 2

    def __init__(self, action_bound: float = 0.2, bottom_goal=(0.0, -0.8), goal_radius: float = 0.15,
                 win_probability: float = 0.65, membership_width: float = 0.05):
        self.action_bound = float(action_bound)
        self.bottom_goal = np.asarray(bottom_goal, dtype=float)
        self.goal_radius = float(goal_radius)
        self.outcome_mean = 2.0 * win_probability - 1.0
        self.membership_width = float(membership_width)

    def _position(self, z, a):
        raw = np.asarray(z, dtype=float)[..., :2] + np.clip(a, -self.action_bound, self.action_bound)
        return np.clip(raw, -1.0, 1.0), raw

    def _membership(self, p):
        d = p - self.bottom_goal
        dist = np.linalg.norm(d, axis=-1)
        s = expit((self.goal_radius - dist) / self.membership_width)
        ds_dp = (-(s * (1.0 - s)) / (self.membership_width * np.maximum(dist, 1e-12)))[..., None] * d
        return s, ds_dp

    def _outcome_std(self, s):
        return np.sqrt(np.maximum(s * (1.0 - s * self.outcome_mean ** 2), 0.0))

    def _position_jacobians(self, z, a):
        a = np.asarray(a, dtype=float)
        _, raw = self._position(z, a)
        keep = (np.abs(raw) <= 1.0).astype(float)
        inside = (np.abs(a) <= self.action_bound).astype(float)
        return keep, keep * inside

    def mean(self, z, a):
        p, _ = self._position(z, a)
        s, _ = self._membership(p)
        return np.concatenate([p, (self.outcome_mean * s)[..., None]], axis=-1)

    def std(self, z, a):
        p, _ = self._position(z, a)
        s, _ = self._membership(p)
        out = np.zeros(p.shape[:-1] + (3,))
        out[..., 2] = self._outcome_std(s)
        return out

    def jacobians(self, z, a):
        p, _ = self._position(z, a)
        _, ds_dp = self._membership(p)
        dp_dz, dp_da = self._position_jacobians(z, a)
        batch = p.shape[:-1]
        jz = np.zeros(batch + (3, 3))
        ja = np.zeros(batch + (3, 2))
        jz[..., 0, 0] = dp_dz[..., 0]
        jz[..., 1, 1] = dp_dz[..., 1]
        ja[..., 0, 0] = dp_da[..., 0]
        ja[..., 1, 1] = dp_da[..., 1]
        jz[..., 2, :2] = self.outcome_mean * ds_dp * dp_dz
        ja[..., 2, :] = self.outcome_mean * ds_dp * dp_da
        return jz, ja

    def std_jacobians(self, z, a):
        p, _ = self._position(z, a)
        s, ds_dp = self._membership(p)
        dp_dz, dp_da = self._position_jacobians(z, a)
        dsd_ds = (1.0 - 2.0 * s * self.outcome_mean ** 2) / (2.0 * np.maximum(self._outcome_std(s), 1e-12))
        dsd_dp = dsd_ds[..., None] * ds_dp
        batch = p.shape[:-1]
        jz = np.zeros(batch + (3, 3))
        ja = np.zeros(batch + (3, 2))
        jz[..., 2, :2] = dsd_dp * dp_dz
        ja[..., 2, :] = dsd_dp * dp_da
        return jz, ja


class LotteryReward(RewardModel):
    """
    Smooth Lottery reward: a bump at the top goal plus a gated outcome payoff.

    The payoff g(o) = 30 o - 10 o^2 equals 20 at o = +1 and -40 at o = -1 and
    only counts near the bottom goal, where the gate reaches 1. A point
    estimate of the outcome (o = 0.3) pays about 8.1, while under the mixture
    moments of LotteryDynamics the expected payoff is -s.
    """

    state_dim = 3

    def __init__(self, top_goal=(0.0, 0.8), bottom_goal=(0.0, -0.8), goal_radius: float = 0.15,
                 top_reward: float = 1.0):
        self.top = SmoothedGoalReward(3, top_goal, scale=goal_radius, height=top_reward, dims=[0, 1])
        self.gate = SmoothedGoalReward(3, bottom_goal, scale=goal_radius, height=1.0, dims=[0, 1])

    @staticmethod
    def payoff(o):
        o = np.asarray(o, dtype=float)
        return 30.0 * o - 10.0 * o * o

    def __call__(self, z):
        o = np.asarray(z, dtype=float)[..., 2]
        return self.top(z) + self.gate(z) * self.payoff(o)

    def grad(self, z):
        o = np.asarray(z, dtype=float)[..., 2]
        g = self.top.grad(z) + self.gate.grad(z) * self.payoff(o)[..., None]
        g[..., 2] = self.gate(z) * (30.0 - 20.0 * o)
        return g


class LotteryEnv(Environment):
    """
    Two goals: the top one pays 1, the bottom one pays 20 with probability 0.65 and -40 otherwise.

    The outcome of the bottom goal is written into the third state coordinate
    (0 until a goal is entered, then +1 or -1) so the stochasticity lives in
    the transition. Only one goal can pay out: entering either ends the episode.
    From the default start (-1, 0) four steps of |a| <= 0.2 per axis reach at
    most x = -0.2, which is 0.2 from either goal centre, so a goal takes at
    least five steps.
    """

    state_dim = 3
    action_dim = 2
    sparse = True

    def __init__(self, start: Sequence[float] = (-1.0, 0.0), goal_radius: float = 0.15,
                 action_bound: float = 0.2, max_steps: int = 30, win_probability: float = 0.65,
                 win_reward: float = 20.0, lose_reward: float = -40.0, top_reward: float = 1.0):
        super().__init__()
        if not 0.0 <= win_probability <= 1.0:
            raise ConfigurationError("must lie in [0, 1]", "env.params.win_probability")
        if goal_radius <= 0 or action_bound <= 0 or max_steps <= 0:
            raise ConfigurationError("goal_radius, action_bound and max_steps must be positive", "env.params")
        self.start = np.asarray(start, dtype=float).reshape(2)
        self.top_goal = np.array([0.0, 0.8])
        self.bottom_goal = np.array([0.0, -0.8])
        self.goal_radius = float(goal_radius)
        self.action_bound = float(action_bound)
        self.max_steps = int(max_steps)
        self.win_probability = float(win_probability)
        self.win_reward = float(win_reward)
        self.lose_reward = float(lose_reward)
        self.top_reward = float(top_reward)
        self.goal_positions = [self.top_goal, self.bottom_goal]

    def _initial_state(self):
        return np.array([self.start[0], self.start[1], 0.0])

    def _transition(self, state, action):
        position = np.clip(state[:2] + action, -1.0, 1.0)
        outcome = state[2]
        if np.linalg.norm(position - self.top_goal) <= self.goal_radius:
            self.success = True
            return np.array([position[0], position[1], outcome]), self.top_reward, True
        if np.linalg.norm(position - self.bottom_goal) <= self.goal_radius:
            won = self._rng.random() < self.win_probability
            self.success = bool(won)
            outcome = 1.0 if won else -1.0
            reward = self.win_reward if won else self.lose_reward
            return np.array([position[0], position[1], outcome]), reward, True
        return np.array([position[0], position[1], outcome]), 0.0, False

    def oracle_dynamics(self):
        return LotteryDynamics(self.action_bound, self.bottom_goal, self.goal_radius, self.win_probability)

    def oracle_reward(self):
        return LotteryReward(self.top_goal, self.bottom_goal, self.goal_radius, self.top_reward)


# ---------------------------------------------------------------------------
# Linear-quadratic
# ---------------------------------------------------------------------------

class LinearQuadraticEnv(Environment):
    """z' = A z + B a with reward -z'^T Q z' - a^T R a."""

    def __init__(self, A=((1.0,),), B=((1.0,),), Q=((1.0,),), R=((0.01,),),
                 start: Optional[Sequence[float]] = None, action_bound: float = 10.0, max_steps: int = 50):
        super().__init__()
        self.A = np.atleast_2d(np.asarray(A, dtype=float))
        self.B = np.atleast_2d(np.asarray(B, dtype=float))
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(R, dtype=float))
        self.state_dim = self.A.shape[0]
        self.action_dim = self.B.shape[1]
        if self.A.shape != (self.state_dim, self.state_dim) or self.B.shape[0] != self.state_dim \
                or self.Q.shape != self.A.shape or self.R.shape != (self.action_dim, self.action_dim):
            raise ConfigurationError("inconsistent A, B, Q, R shapes", "env.params")
        if action_bound <= 0 or max_steps <= 0:
            raise ConfigurationError("action_bound and max_steps must be positive", "env.params")
        self.start = np.ones(self.state_dim) if start is None else np.asarray(start, dtype=float).reshape(self.state_dim)
        self.action_bound = float(action_bound)
        self.max_steps = int(max_steps)

    def _initial_state(self):
        return self.start.copy()

    def _transition(self, state, action):
        next_state = self.A @ state + self.B @ action
        return next_state, float(self.oracle_reward().step_reward(next_state, action)), False

    def oracle_dynamics(self):
        return LinearGaussianDynamics(self.A, self.B)

    def oracle_reward(self):
        return QuadraticReward(self.Q, self.R)


ENVIRONMENTS = {
    "lottery": LotteryEnv,
    "pointmass": PointMassEnv,
    "pendulum": PendulumEnv,
    "linear": LinearQuadraticEnv,
}


def make_env(spec: Any, params: Optional[Dict[str, Any]] = None) -> Environment:
    """
    Build a freshly initialized environment from a descriptor.

    Args:
        spec: An EnvSpec, or an environment name (with `params`).
        params (Optional[Dict[str, Any]]): Constructor parameters when `spec` is a name.

    Returns:
        Environment: The environment, reset with seed 0.

    Raises:
        ConfigurationError: For unknown names or invalid parameters.
    """
    if isinstance(spec, EnvSpec):
        name, params = spec.name, spec.params
    else:
        name = spec
    params = dict(params or {})
    if name not in ENVIRONMENTS:
        raise ConfigurationError(f"unknown environment {name!r}, expected one of {sorted(ENVIRONMENTS)}", "env.name")
    try:
        env = ENVIRONMENTS[name](**params)
    except TypeError as e:
        raise ConfigurationError(f"invalid parameters for {name}: {e}", "env.params")
    env.reset(seed=0)
    logger.debug(f"Created environment {name} with params {params}")
    return env


def scripted_goal_episodes(env: Environment, n: int, rng: np.random.Generator,
                           noise: float = 0.3) -> List[Episode]:
    """
    Generate a seed dataset reaching each goal of `env` in equal proportion.

    Episodes alternate between goals; each steers straight at its goal with
    Gaussian action noise (relative to the action bound).

    Args:
        env (Environment): An environment listing `goal_positions`.
        n (int): Number of episodes.
        rng (np.random.Generator): Source of episode seeds and action noise.
        noise (float): Action noise standard deviation as a fraction of a_m.

    Returns:
        List[Episode]: The collected episodes.
    """
    goals = getattr(env, "goal_positions", None)
    if not goals:
        raise ConfigurationError(f"{type(env).__name__} has no goals to script", "train.seed_episodes")
    episodes = []
    for i in range(n):
        goal = goals[i % len(goals)]
        state = env.reset(seed=int(rng.integers(2 ** 31)))
        states, actions, rewards = [state], [], []
        done = False
        while not done:
            direction = goal - state[:len(goal)]
            action = np.zeros(env.action_dim)
            action[:len(goal)] = direction
            action = env.clamp(action + noise * env.action_bound * rng.standard_normal(env.action_dim))
            state, reward, done = env.step(action)
            states.append(state)
            actions.append(action)
            rewards.append(reward)
        episodes.append(Episode(np.array(states), np.array(actions), np.array(rewards), env.success))
    logger.info(f"Scripted {n} seed episodes over {len(goals)} goals")
    return episodes


def write_episode_trace(path: str, episodes: Sequence[Episode]) -> None:
    """
    Export episodes as CSV with columns episode, t, s0.., a0.., reward, done.

    The last row of every episode holds the final state with empty action and reward.
    """
    if not episodes:
        raise ContractViolationError("no episodes to export")
    state_dim = episodes[0].states.shape[1]
    action_dim = episodes[0].actions.shape[1]
    header = ["episode", "t"] + [f"s{i}" for i in range(state_dim)] + \
        [f"a{i}" for i in range(action_dim)] + ["reward", "done"]
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for index, episode in enumerate(episodes):
            steps = len(episode)
            for t in range(steps + 1):
                state = [repr(float(v)) for v in episode.states[t]]
                if t < steps:
                    row = [repr(float(v)) for v in episode.actions[t]] + [repr(float(episode.rewards[t])), 0]
                else:
                    row = [""] * action_dim + ["", 1]
                writer.writerow([index, t] + state + row)


def read_episode_trace(path: str) -> List[Episode]:
    """Load episodes written by `write_episode_trace`."""
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    if not rows:
        return []
    state_keys = sorted((k for k in rows[0] if k.startswith("s") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    action_keys = sorted((k for k in rows[0] if k.startswith("a") and k[1:].isdigit()), key=lambda k: int(k[1:]))
    grouped: Dict[str, List[Dict[str, str]]] = {}
    for row in rows:
        grouped.setdefault(row["episode"], []).append(row)
    episodes = []
    for key in sorted(grouped, key=int):
        group = sorted(grouped[key], key=lambda r: int(r["t"]))
        states = np.array([[float(r[k]) for k in state_keys] for r in group])
        body = group[:-1]
        actions = np.array([[float(r[k]) for k in action_keys] for r in body]).reshape(len(body), len(action_keys))
        rewards = np.array([float(r["reward"]) for r in body])
        episodes.append(Episode(states, actions, rewards, bool(len(rewards) and rewards.max() > 0)))
    return episodes
