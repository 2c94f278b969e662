#!/usr/bin/env python3
"""
Control Module

This module provides model-predictive execution of planned action sequences,
the online model-based training loop, planner construction with parallel
restarts, and the running reward normalization used on dense-reward tasks.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional

import numpy as np
from tqdm import tqdm

from src.core.dynamics import (
    AdamOptimizer, Episode, GaussianDynamics, MlpGaussianDynamics, MlpReward,
    ReplayBuffer, RewardModel, train_dynamics, train_reward,
)
from src.core.latco import PlanResult, latco_deterministic, latco_gaussian, select_best_restart
from src.core.settings import ExperimentConfig, MpcConfig, PLANNER_NAMES
from src.core.shooting import cem_plan, ilqr_plan, mppi_plan, shooting_gd_plan, shooting_gn_plan
from src.core.worlds import Environment, read_episode_trace, scripted_goal_episodes
from src.utils.errors import ConfigurationError, LatcoError, PlannerFailure

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("control")

RESTARTABLE = ("latco", "latco_gaussian", "shooting_gd", "shooting_gn")

Planner = Callable[..., PlanResult]


# ---------------------------------------------------------------------------
# Reward normalization
# ---------------------------------------------------------------------------

class RunningRewardStats:
    """
    Streaming mean and (population) variance of observed rewards.

    Attributes:
        count (int): Number of rewards folded in.
        mean (float): Running mean.
        std_floor (float): Lower bound applied to the standard deviation.
    """

    def __init__(self, std_floor: float = 1e-6):
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0
        self.std_floor = std_floor

    def update(self, r: float) -> None:
        self.count += 1
        delta = r - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (r - self.mean)

    @property
    def variance(self) -> float:
        return max(self._m2 / self.count, 0.0) if self.count else 0.0

    @property
    def std(self) -> float:
        return max(float(np.sqrt(self.variance)), self.std_floor)


def normalize_reward(stats: RunningRewardStats, r, update: bool = True):
    """
    Normalize a reward with the running statistics.

    Args:
        stats (RunningRewardStats): Statistics, updated in place when `update` is set.
        r: Reward (scalar or array; arrays are folded in elementwise).
        update (bool): Fold r into the statistics before normalizing.

    Returns:
        (r - mean) / max(std, floor).
    """
    if update:
        for value in np.ravel(r):
            stats.update(float(value))
    value = (np.asarray(r, dtype=float) - stats.mean) / stats.std
    return float(value) if value.ndim == 0 else value


# ---------------------------------------------------------------------------
# Planners and restarts
# ---------------------------------------------------------------------------

def restart_generators(rng: np.random.Generator, restarts: int) -> List[np.random.Generator]:
    """Independent child generators seeded from the master generator."""
    seeds = rng.integers(0, 2 ** 63 - 1, size=restarts)
    return [np.random.default_rng(int(s)) for s in seeds]


def plan_with_restarts(planner: Callable[[np.random.Generator], PlanResult], restarts: int,
                       rng: np.random.Generator, eps_dyn: float, workers: int = 1) -> PlanResult:
    """
    Run independently seeded planner invocations and keep the best.

    Args:
        planner (Callable): Planner invocation taking its own generator.
        restarts (int): Number of invocations R.
        rng (np.random.Generator): Master generator; child seeds are drawn from it.
        eps_dyn (float): Feasibility threshold passed to `select_best_restart`.
        workers (int): Threads running restarts concurrently.

    Returns:
        PlanResult: The selected result.

    Raises:
        PlannerFailure: If every restart fails.
    """
    if restarts < 1:
        raise ConfigurationError("must be at least 1", "restarts")
    generators = restart_generators(rng, restarts)

    def attempt(generator):
        try:
            return planner(generator)
        except LatcoError as e:
            logger.warning(f"Restart failed: {e}")
            return e

    if workers > 1 and restarts > 1:
        with ThreadPoolExecutor(max_workers=min(workers, restarts)) as pool:
            outcomes = list(pool.map(attempt, generators))
    else:
        outcomes = [attempt(g) for g in generators]
    results = [o for o in outcomes if isinstance(o, PlanResult)]
    if not results:
        raise PlannerFailure(f"all {restarts} restarts failed; last error: {outcomes[-1]}")
    return select_best_restart(results, eps_dyn)


def make_planner(name: str, cfg: ExperimentConfig, restarts: Optional[int] = None,
                 workers: int = 1) -> Planner:
    """
    Build a planner with the uniform signature
    planner(model, reward, z1, H, rng, a_m, init_actions=None) -> PlanResult.

    Args:
        name (str): Planner name.
        cfg (ExperimentConfig): Source of the planner settings.
        restarts (Optional[int]): Restart count; defaults to the training override, then LatCo's default.
        workers (int): Threads for concurrent restarts.

    Raises:
        ConfigurationError: For unknown planner names.
    """
    if name not in PLANNER_NAMES:
        raise ConfigurationError(f"unknown planner {name!r}, expected one of {PLANNER_NAMES}", "planner")
    bases: Dict[str, Callable[..., PlanResult]] = {
        "latco": lambda m, r, z, H, g, a_m, init: latco_deterministic(m, r, z, H, cfg.latco, g, a_m, init),
        "latco_gaussian": lambda m, r, z, H, g, a_m, init: latco_gaussian(m, r, z, H, cfg.latco, g, a_m, init),
        "cem": lambda m, r, z, H, g, a_m, init: cem_plan(m, r, z, H, cfg.cem, g, a_m, init_actions=init),
        "mppi": lambda m, r, z, H, g, a_m, init: mppi_plan(m, r, z, H, cfg.mppi, g, a_m, init_actions=init),
        "shooting_gd": lambda m, r, z, H, g, a_m, init: shooting_gd_plan(m, r, z, H, cfg.gd, g, a_m, init),
        "shooting_gn": lambda m, r, z, H, g, a_m, init: shooting_gn_plan(m, r, z, H, cfg.gn, g, a_m, init),
        "ilqr": lambda m, r, z, H, g, a_m, init: ilqr_plan(m, r, z, H, cfg.ilqr, a_m, init),
    }
    base = bases[name]
    if name in RESTARTABLE:
        count = restarts or cfg.train.restarts or cfg.latco.restarts
    else:
        count = 1
    eps = cfg.latco.gaussian_eps_dyn if name == "latco_gaussian" else cfg.latco.eps_dyn

    def planner(model, reward, z1, H, rng, a_m, init_actions=None) -> PlanResult:
        if count == 1:
            return base(model, reward, z1, H, rng, a_m, init_actions)
        return plan_with_restarts(lambda g: base(model, reward, z1, H, g, a_m, init_actions),
                                  count, rng, eps, workers)

    planner.planner_name = name
    planner.restarts = count
    return planner


# ---------------------------------------------------------------------------
# MPC execution
# ---------------------------------------------------------------------------

@dataclass
class MpcOutcome:
    """
    Result of one receding-horizon episode.

    Attributes:
        episode (Episode): The executed trajectory.
        planner_calls (int): Number of planning invocations.
        plan_violation (float): Mean final dynamics violation over the invocations.
        success (bool): Whether the environment reported success.
        error (Optional[str]): Error message if a planning call failed and the episode was aborted.
        plans (List[PlanResult]): The planning results, in order.
    """

    episode: Episode
    planner_calls: int
    plan_violation: float
    success: bool
    error: Optional[str] = None
    plans: List[PlanResult] = field(default_factory=list)


def mpc_episode(env: Environment, planner: Planner, model: GaussianDynamics, reward_model: RewardModel,
                cfg: MpcConfig, rng: np.random.Generator, seed: Optional[int] = None) -> MpcOutcome:
    """
    Execute one episode with replanning every `cfg.replan_interval` planned actions.

    The inferred state is the current observation. Each planned action is
    repeated `cfg.action_repeat` times; the episode stops at done or after
    `cfg.max_steps` environment steps.

    Args:
        env (Environment): Environment.
        planner (Planner): Planner built by `make_planner`.
        model (GaussianDynamics): Dynamics model planned with.
        reward_model (RewardModel): Reward model planned with.
        cfg (MpcConfig): Execution settings.
        rng (np.random.Generator): Planner randomness.
        seed (Optional[int]): Environment reset seed.

    Returns:
        MpcOutcome: The episode and planning statistics.
    """
    state = env.reset(seed=seed)
    states, actions, rewards = [state], [], []
    plans: List[PlanResult] = []
    error = None
    done = False
    steps = 0
    previous: Optional[np.ndarray] = None
    while not done and steps < cfg.max_steps:
        init = None
        if cfg.warm_start and previous is not None:
            shifted = previous[cfg.replan_interval:]
            init = np.vstack([shifted, np.zeros((cfg.horizon - len(shifted), previous.shape[1]))])
        try:
            result = planner(model, reward_model, state, cfg.horizon, rng, env.action_bound, init)
        except LatcoError as e:
            error = str(e)
            logger.error(f"Planning failed at step {steps}: {e}")
            break
        plans.append(result)
        previous = result.actions
        for action in result.actions[:cfg.replan_interval]:
            for _ in range(cfg.action_repeat):
                state, reward, done = env.step(action)
                states.append(state)
                actions.append(env.clamp(np.asarray(action, dtype=float)))
                rewards.append(reward)
                steps += 1
                if done or steps >= cfg.max_steps:
                    break
            if done or steps >= cfg.max_steps:
                break
    action_dim = env.action_dim
    episode = Episode(np.array(states), np.array(actions).reshape(len(actions), action_dim),
                      np.array(rewards), env.success)
    violation = float(np.mean([p.max_violation for p in plans])) if plans else 0.0
    return MpcOutcome(episode, len(plans), violation, bool(env.success), error, plans)


# ---------------------------------------------------------------------------
# Online training
# ---------------------------------------------------------------------------

@dataclass
class TrainingOutcome:
    """
    Result of the online loop.

    Attributes:
        curve (List[Dict[str, Any]]): Learning-curve rows.
        model (GaussianDynamics): Final dynamics model.
        reward_model (RewardModel): Final reward model.
        last_plan (Optional[PlanResult]): Last planning result, for diagnostics.
        episodes (List[Episode]): Collected episodes.
    """

    curve: List[Dict[str, Any]]
    model: GaussianDynamics
    reward_model: RewardModel
    last_plan: Optional[PlanResult] = None
    episodes: List[Episode] = field(default_factory=list)


def _seed_buffer(env: Environment, cfg: ExperimentConfig, buffer: ReplayBuffer,
                 rng: np.random.Generator) -> int:
    episodes: List[Episode] = []
    if cfg.train.seed_dataset:
        episodes = read_episode_trace(cfg.train.seed_dataset)
    elif cfg.train.seed_episodes > 0:
        episodes = scripted_goal_episodes(env, cfg.train.seed_episodes, rng)
    for episode in episodes:
        buffer.add(episode)
    return len(episodes)


def online_train(env: Environment, planner: Planner, cfg: ExperimentConfig,
                 rng: Optional[np.random.Generator] = None, verbose: bool = False) -> TrainingOutcome:
    """
    Online model-based RL: collect an MPC episode, then update the models, repeatedly.

    With `train.oracle_models` the environment's ground-truth models are
    planned with and nothing is learned. On dense-reward tasks the reward
    model is trained on rewards normalized with running statistics.

    Args:
        env (Environment): Environment.
        planner (Planner): Planner built by `make_planner`.
        cfg (ExperimentConfig): Full configuration.
        rng (Optional[np.random.Generator]): Master generator, seeded from `cfg.seed` if omitted.
        verbose (bool): Show a progress bar.

    Returns:
        TrainingOutcome: Learning curve and final models.

    Raises:
        PlannerFailure: If a planning call fails during an episode.
    """
    rng = rng if rng is not None else np.random.default_rng(cfg.seed)
    train = cfg.train
    if train.oracle_models:
        model, reward_model = env.oracle_dynamics(), env.oracle_reward()
    else:
        model = MlpGaussianDynamics(env.state_dim, env.action_dim, rng=rng)
        reward_model = MlpReward(env.state_dim, rng=rng)
    buffer = ReplayBuffer(train.buffer_capacity)
    stats = RunningRewardStats() if not env.sparse else None
    dyn_opt = reward_opt = None
    transform = None
    if not train.oracle_models:
        dyn_opt = AdamOptimizer(model.parameters(), lr=train.learning_rate)
        reward_opt = AdamOptimizer(reward_model.parameters(), lr=train.learning_rate)
        if stats is not None:
            transform = lambda r: normalize_reward(stats, r, update=False)

    def fit(iterations: int):
        train_dynamics(buffer, model, iterations, train.learning_rate, train.batch_size, rng, dyn_opt)
        train_reward(buffer, reward_model, iterations, train.learning_rate, train.batch_size, rng,
                     reward_opt, target_transform=transform)

    seeded = _seed_buffer(env, cfg, buffer, rng)
    if seeded and not train.oracle_models:
        if stats is not None:
            normalize_reward(stats, buffer.transitions()[3], update=True)
        fit(train.pretrain_iterations)
        logger.info(f"Pretrained on {seeded} seed episodes")

    curve: List[Dict[str, Any]] = []
    episodes: List[Episode] = []
    last_plan = None
    env_steps = 0
    for index in tqdm(range(train.episodes), desc="Training episodes", disable=not verbose):
        started = time.perf_counter()
        outcome = mpc_episode(env, planner, model, reward_model, cfg.mpc, rng, seed=int(rng.integers(2 ** 31)))
        if outcome.error is not None:
            raise PlannerFailure(f"episode {index}: {outcome.error}")
        episode = outcome.episode
        episodes.append(episode)
        if outcome.plans:
            last_plan = outcome.plans[-1]
        if len(episode) > 0:
            buffer.add(episode)
            if stats is not None and not train.oracle_models:
                normalize_reward(stats, episode.rewards, update=True)
        if not train.oracle_models and buffer.num_transitions > 0:
            fit(train.train_iterations)
        env_steps += len(episode)
        wall_ms = 1000.0 * (time.perf_counter() - started) if cfg.record_wall_time else 0.0
        curve.append({
            "episode": index,
            "env_steps": env_steps,
            "return": episode.total_reward,
            "success": int(outcome.success),
            "plan_violation": outcome.plan_violation,
            "wall_ms": wall_ms,
        })
        logger.info(f"Episode {index}: return {episode.total_reward:.3f}, success {outcome.success}, "
                    f"{outcome.planner_calls} plans")
    return TrainingOutcome(curve, model, reward_model, last_plan, episodes)
