#!/usr/bin/env python3
"""
LatCo Module

This module provides the collocation planner: residual construction for
rewards, dynamics and action bounds, Lagrange multiplier updates, plan
initialization, deterministic latent collocation (with its ablations) and
Gaussian latent collocation with particle-based moment matching.

Constraints enter the Levenberg-Marquardt sum of squares as
sqrt(lambda)-weighted residuals, so sum(rho^2) equals the Lagrangian
sum(softplus(-r)^2) + sum(lambda_dyn |c_dyn|^2) + sum(lambda_act |c_act|^2).
"""

import logging
from dataclasses import dataclass, field
from typing import Any, List, Optional, Sequence

import numpy as np
from scipy.special import expit

from src.core.btlm import ResidualBlockSystem, lm_step
from src.core.dynamics import GaussianDynamics, RewardModel, rollout_mean
from src.core.settings import LatcoConfig
from src.utils.errors import ContractViolationError, NumericalError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("latco")

LOG_STD_MIN = -6.0
LOG_STD_MAX = 2.0


# ---------------------------------------------------------------------------
# Residuals
# ---------------------------------------------------------------------------

def reward_residual(r):
    """softplus(-r) = ln(1 + e^{-r}) in overflow-safe form."""
    r = np.asarray(r, dtype=float)
    return np.maximum(-r, 0.0) + np.log1p(np.exp(-np.abs(r)))


def reward_residual_derivative(r):
    """d softplus(-r) / d r = -sigmoid(-r)."""
    return -expit(-np.asarray(r, dtype=float))


def dynamics_residual(model: GaussianDynamics, z, a, z_next) -> np.ndarray:
    """z_next - mean(z, a)."""
    return np.asarray(z_next, dtype=float) - model.mean(z, a)


def action_residual(a, a_m) -> np.ndarray:
    """
    Elementwise max(0, |a| - a_m).

    Raises:
        ContractViolationError: If the bound is not positive.
    """
    if np.any(np.asarray(a_m) <= 0):
        raise ContractViolationError(f"action bound must be positive, got {a_m!r}")
    return np.maximum(0.0, np.abs(np.asarray(a, dtype=float)) - a_m)


def _action_residual_slope(a, a_m) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    return np.sign(a) * (np.abs(a) > a_m)


# ---------------------------------------------------------------------------
# Plans, multipliers, diagnostics
# ---------------------------------------------------------------------------

@dataclass
class DeterministicPlan:
    """
    Decision variables of deterministic collocation.

    Attributes:
        z1 (np.ndarray): The fixed current state.
        states (np.ndarray): Planned states z_2..z_{H+1}, shape (H, D_z).
        actions (np.ndarray): Planned actions a_1..a_H, shape (H, D_a).
    """

    z1: np.ndarray
    states: np.ndarray
    actions: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def all_states(self) -> np.ndarray:
        return np.vstack([self.z1[None, :], self.states])

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.states, self.actions], axis=1).ravel()

    def with_vector(self, vector: np.ndarray) -> "DeterministicPlan":
        blocks = np.asarray(vector, dtype=float).reshape(self.horizon, -1)
        dz = self.states.shape[1]
        return DeterministicPlan(self.z1, blocks[:, :dz].copy(), blocks[:, dz:].copy())


@dataclass
class GaussianPlanVars:
    """
    Decision variables of Gaussian collocation: diagonal Gaussians over z_2..z_{H+1} and actions.

    Attributes:
        z1 (np.ndarray): The fixed current state (zero variance).
        means (np.ndarray): Per-step means, shape (H, D_z).
        log_stds (np.ndarray): Per-step log standard deviations, clamped to [-6, 2].
        actions (np.ndarray): Planned actions, shape (H, D_a).
    """

    z1: np.ndarray
    means: np.ndarray
    log_stds: np.ndarray
    actions: np.ndarray

    def __post_init__(self):
        self.log_stds = np.clip(self.log_stds, LOG_STD_MIN, LOG_STD_MAX)

    @property
    def horizon(self) -> int:
        return len(self.actions)

    @property
    def stds(self) -> np.ndarray:
        return np.exp(self.log_stds)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.means, self.log_stds, self.actions], axis=1).ravel()

    def with_vector(self, vector: np.ndarray) -> "GaussianPlanVars":
        blocks = np.asarray(vector, dtype=float).reshape(self.horizon, -1)
        dz = self.means.shape[1]
        return GaussianPlanVars(self.z1, blocks[:, :dz].copy(), blocks[:, dz:2 * dz].copy(),
                                blocks[:, 2 * dz:].copy())


@dataclass
class Multipliers:
    """Per-timestep Lagrange multipliers for the dynamics and action-bound constraints."""

    dyn: np.ndarray
    act: np.ndarray

    @classmethod
    def constant(cls, horizon: int, lambda_dyn: float, lambda_act: float) -> "Multipliers":
        return cls(np.full(horizon, float(lambda_dyn)), np.full(horizon, float(lambda_act)))


@dataclass
class DiagnosticRecord:
    iteration: int
    reward_sum: float
    max_violation: float
    mean_lambda_dyn: float
    mean_lambda_act: float


@dataclass
class PlanDiagnostics:
    """Per-iteration optimizer trace, one record per iteration."""

    records: List[DiagnosticRecord] = field(default_factory=list)

    def append(self, iteration: int, reward_sum: float, max_violation: float, lam: Multipliers) -> None:
        self.records.append(DiagnosticRecord(iteration, float(reward_sum), float(max_violation),
                                             float(np.mean(lam.dyn)), float(np.mean(lam.act))))

    def __len__(self) -> int:
        return len(self.records)

    @property
    def reward_curve(self) -> np.ndarray:
        return np.array([r.reward_sum for r in self.records])

    @property
    def violation_curve(self) -> np.ndarray:
        return np.array([r.max_violation for r in self.records])

    def iterations_to_violation(self, threshold: float) -> Optional[int]:
        """Number of iterations until the violation first drops to the threshold, None if never."""
        for record in self.records:
            if record.max_violation <= threshold:
                return record.iteration + 1
        return None

    def to_rows(self) -> List[dict]:
        return [{"iter": r.iteration, "reward_sum": r.reward_sum, "max_violation": r.max_violation,
                 "mean_lambda_dyn": r.mean_lambda_dyn, "mean_lambda_act": r.mean_lambda_act}
                for r in self.records]


@dataclass
class PlanResult:
    """
    Outcome of one planning call, shared by every planner.

    Attributes:
        actions (np.ndarray): Planned actions clamped to the action bound, shape (H, D_a).
        planned_return (float): Return the planner believes the plan achieves.
        max_violation (float): Final maximum dynamics violation (0 for shooting planners).
        diagnostics (PlanDiagnostics): Per-iteration trace.
        plan (Any): Final decision variables, planner specific.
        planner (str): Name of the planner.
    """

    actions: np.ndarray
    planned_return: float
    max_violation: float = 0.0
    diagnostics: PlanDiagnostics = field(default_factory=PlanDiagnostics)
    plan: Any = None
    planner: str = ""


# ---------------------------------------------------------------------------
# Deterministic collocation
# ---------------------------------------------------------------------------

def build_system(plan: DeterministicPlan, lam: Multipliers, model: GaussianDynamics,
                 reward: RewardModel, a_m) -> ResidualBlockSystem:
    """
    Build the residual system of the deterministic Lagrangian.

    Variable block k is (z_{k+2}, a_{k+1}). Group 0 holds the first dynamics
    residual (which only touches block 0 since z_1 is fixed); every group k
    holds its reward and action residuals and the dynamics residual of the
    next transition, which couples blocks k and k+1.

    Args:
        plan (DeterministicPlan): Current plan.
        lam (Multipliers): Multipliers.
        model (GaussianDynamics): Dynamics model (mean only).
        reward (RewardModel): Reward model.
        a_m: Action bound.

    Returns:
        ResidualBlockSystem: Residuals with analytic Jacobian blocks.

    Raises:
        NumericalError: If the model produces non-finite values.
    """
    H = plan.horizon
    dz = plan.states.shape[1]
    da = plan.actions.shape[1]
    S = plan.all_states
    A = plan.actions
    mu = model.mean(S[:-1], A)
    Jz, Ja = model.jacobians(S[:-1], A)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(Jz)) and np.all(np.isfinite(Ja))):
        raise NumericalError("dynamics model returned non-finite values")
    r = reward(S[1:]) + reward.action_reward(A)
    dr = reward_residual_derivative(r)
    gz = reward.grad(S[1:])
    ga = reward.action_grad(A)
    act = action_residual(A, a_m)
    slope = _action_residual_slope(A, a_m)
    sd = np.sqrt(lam.dyn)
    sa = np.sqrt(lam.act)
    eye = np.eye(dz)
    b = dz + da

    residuals, A_blocks, B_blocks = [], [], []
    for k in range(H):
        res = []
        rows_a = []
        rows_b = []
        if k == 0:
            res.append(sd[0] * (S[1] - mu[0]))
            rows_a.append(np.hstack([sd[0] * eye, -sd[0] * Ja[0]]))
            rows_b.append(np.zeros((dz, b)))
        res.append(reward_residual(r[k:k + 1]))
        rows_a.append(np.concatenate([dr[k] * gz[k], dr[k] * ga[k]])[None, :])
        rows_b.append(np.zeros((1, b)))
        res.append(sa[k] * act[k])
        rows_a.append(np.hstack([np.zeros((da, dz)), np.diag(sa[k] * slope[k])]))
        rows_b.append(np.zeros((da, b)))
        if k < H - 1:
            res.append(sd[k + 1] * (S[k + 2] - mu[k + 1]))
            rows_a.append(np.hstack([-sd[k + 1] * Jz[k + 1], np.zeros((dz, da))]))
            rows_b.append(np.hstack([sd[k + 1] * eye, -sd[k + 1] * Ja[k + 1]]))
        residuals.append(np.concatenate(res))
        A_blocks.append(np.vstack(rows_a))
        B_blocks.append(np.vstack(rows_b) if k < H - 1 else None)
    return ResidualBlockSystem(residuals, A_blocks, B_blocks)


def dynamics_violation(plan: DeterministicPlan, model: GaussianDynamics) -> np.ndarray:
    """Per-step |z_{t+1} - mean(z_t, a_t)|^2, shape (H,)."""
    S = plan.all_states
    d = dynamics_residual(model, S[:-1], plan.actions, S[1:])
    return np.sum(d * d, axis=-1)


def action_violation(actions, a_m) -> np.ndarray:
    c = action_residual(actions, a_m)
    return np.sum(c * c, axis=-1)


def planned_reward(plan: DeterministicPlan, reward: RewardModel) -> float:
    return float(np.sum(reward(plan.states) + reward.action_reward(plan.actions)))


def dual_update(lam, violation, eps: float, alpha: float, eta: float,
                lam_min: float = 1e-8, lam_max: float = 1e12):
    """
    Multiplicative multiplier update lambda * (1 + alpha * ln(violation / eps + eta)).

    Args:
        lam: Current multiplier(s), positive.
        violation: Squared constraint violation(s), non-negative.
        eps (float): Violation threshold.
        alpha (float): Step size.
        eta (float): Stabilizer inside the logarithm.
        lam_min (float): Lower clamp.
        lam_max (float): Upper clamp.

    Returns:
        Updated multiplier(s), same shape as `lam`.

    Raises:
        ContractViolationError: If a violation is negative or eps is not positive.
    """
    violation = np.asarray(violation, dtype=float)
    if np.any(violation < 0):
        raise ContractViolationError("constraint violation must be non-negative")
    if eps <= 0:
        raise ContractViolationError("violation threshold must be positive")
    updated = np.clip(np.asarray(lam, dtype=float) * (1.0 + alpha * np.log(violation / eps + eta)),
                      lam_min, lam_max)
    return float(updated) if updated.ndim == 0 else updated


def dual_update_linear(lam, violation, eps: float, lr: float, lam_min: float = 1e-8):
    """Additive multiplier update max(lambda + lr * (violation - eps), lam_min)."""
    violation = np.asarray(violation, dtype=float)
    if np.any(violation < 0):
        raise ContractViolationError("constraint violation must be non-negative")
    updated = np.maximum(np.asarray(lam, dtype=float) + lr * (violation - eps), lam_min)
    return float(updated) if updated.ndim == 0 else updated


def _initial_actions(H: int, action_dim: int, rng: np.random.Generator, a_m) -> np.ndarray:
    return rng.uniform(-1.0, 1.0, size=(H, action_dim)) * np.asarray(a_m, dtype=float)


def init_plan(model: GaussianDynamics, z1, H: int, rng: np.random.Generator, a_m,
              mode: str = "rollout", actions: Optional[np.ndarray] = None,
              noise: float = 0.1) -> DeterministicPlan:
    """
    Initial plan: uniform actions in the bounds and the mean rollout of those actions.

    Args:
        model (GaussianDynamics): Dynamics model.
        z1: Current state.
        H (int): Horizon.
        rng (np.random.Generator): Action sampler.
        a_m: Action bound.
        mode (str): "rollout" (dynamically feasible), "zero" (all states and actions
            zero) or "perturbed" (rollout states plus Gaussian noise).
        actions (Optional[np.ndarray]): Initial actions to use instead of sampling.
        noise (float): State noise std of the "perturbed" mode.

    Returns:
        DeterministicPlan: The initial plan.
    """
    if H < 1:
        raise ContractViolationError(f"horizon must be at least 1, got {H}")
    z1 = np.asarray(z1, dtype=float)
    if mode == "zero":
        return DeterministicPlan(z1, np.zeros((H, model.state_dim)), np.zeros((H, model.action_dim)))
    if actions is None:
        actions = _initial_actions(H, model.action_dim, rng, a_m)
    actions = np.array(actions, dtype=float).reshape(H, model.action_dim)
    states = rollout_mean(model, z1, actions)[1:]
    if mode == "perturbed":
        states = states + noise * rng.standard_normal(states.shape)
    return DeterministicPlan(z1, states, actions)


def _finish(plan_vars, actions: np.ndarray, a_m, planned_return: float, max_violation: float,
            diagnostics: PlanDiagnostics, planner: str) -> PlanResult:
    return PlanResult(np.clip(actions, -np.asarray(a_m), np.asarray(a_m)), float(planned_return),
                      float(max_violation), diagnostics, plan_vars, planner)


def latco_deterministic(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: LatcoConfig,
                        rng: np.random.Generator, a_m,
                        init_actions: Optional[np.ndarray] = None) -> PlanResult:
    """
    Deterministic latent collocation.

    Repeats an LM step on the Lagrangian residual system followed by the
    multiplier update, for `cfg.iterations` iterations. Multipliers aim at
    `cfg.feasibility_margin` times the thresholds, and a plan still above
    eps_dyn or eps_act after the budget gets up to `cfg.extra_iterations`
    more iterations (not under fixed_multipliers or first_order). The ablation flag
    selects a fixed high initial multiplier (no_relaxation), frozen
    multipliers (fixed_multipliers) or plain gradient descent with additive
    multiplier updates (first_order).

    Args:
        model (GaussianDynamics): Dynamics model.
        reward (RewardModel): Reward model.
        z1: Current state.
        H (int): Horizon.
        cfg (LatcoConfig): Planner settings.
        rng (np.random.Generator): Initialization sampler.
        a_m: Action bound.
        init_actions (Optional[np.ndarray]): Warm-start actions.

    Returns:
        PlanResult: Clamped actions, planned return, final violation and diagnostics.

    Raises:
        NumericalError: Annotated with the failing iteration.
    """
    plan = init_plan(model, z1, H, rng, a_m, mode=cfg.init, actions=init_actions, noise=cfg.init_noise)
    if cfg.ablation == "no_relaxation":
        lam = Multipliers.constant(H, cfg.no_relaxation_lambda, cfg.no_relaxation_lambda)
    elif cfg.ablation == "fixed_multipliers":
        lam = Multipliers.constant(H, cfg.fixed_lambda_dyn, cfg.fixed_lambda_act)
    else:
        lam = Multipliers.constant(H, cfg.lambda_dyn_init, cfg.lambda_act_init)
    diagnostics = PlanDiagnostics()
    first_order = cfg.ablation == "first_order"
    steps = cfg.first_order_steps if first_order else cfg.iterations
    period = cfg.first_order_dual_period if first_order else cfg.dual_period
    extend = not first_order and cfg.ablation != "fixed_multipliers"
    limit = steps + (cfg.extra_iterations if extend else 0)
    target_dyn = cfg.eps_dyn * cfg.feasibility_margin
    target_act = cfg.eps_act * cfg.feasibility_margin
    dyn_v = dynamics_violation(plan, model)
    act_v = action_violation(plan.actions, a_m)

    i = 0
    while i < limit:
        try:
            if first_order:
                # Gradient of half the sum of squares.
                system = build_system(plan, lam, model, reward, a_m)
                vector = plan.to_vector() - cfg.first_order_lr * system.gradient()
            else:
                vector, _ = lm_step(plan.to_vector(),
                                    lambda v: build_system(plan.with_vector(v), lam, model, reward, a_m),
                                    cfg.lm)
        except NumericalError as e:
            raise e.at_iteration(i)
        if not np.all(np.isfinite(vector)):
            raise NumericalError(f"iteration {i}: plan diverged to non-finite values", iteration=i)
        plan = plan.with_vector(vector)
        dyn_v = dynamics_violation(plan, model)
        act_v = action_violation(plan.actions, a_m)
        if (i + 1) % period == 0 and cfg.ablation != "fixed_multipliers":
            if first_order:
                lam = Multipliers(
                    dual_update_linear(lam.dyn, dyn_v, cfg.eps_dyn, cfg.first_order_dual_lr, cfg.lambda_min),
                    dual_update_linear(lam.act, act_v, cfg.eps_act, cfg.first_order_dual_lr, cfg.lambda_min),
                )
            else:
                lam = Multipliers(
                    dual_update(lam.dyn, dyn_v, target_dyn, cfg.dual_lr, cfg.dual_eta, cfg.lambda_min, cfg.lambda_max),
                    dual_update(lam.act, act_v, target_act, cfg.dual_lr, cfg.dual_eta, cfg.lambda_min, cfg.lambda_max),
                )
        diagnostics.append(i, planned_reward(plan, reward), float(np.max(dyn_v)), lam)
        logger.debug(f"LatCo iteration {i}: reward {diagnostics.records[-1].reward_sum:.4f}, "
                     f"violation {np.max(dyn_v):.3e}")
        i += 1
        if i >= steps and np.max(dyn_v) <= cfg.eps_dyn and np.max(act_v) <= cfg.eps_act:
            break
    if i > steps:
        logger.debug(f"LatCo ran {i - steps} iterations past its budget, violation {np.max(dyn_v):.3e}")

    result = _finish(plan, plan.actions, a_m, planned_reward(plan, reward), float(np.max(dyn_v)),
                     diagnostics, "latco")
    logger.debug(f"LatCo ({cfg.ablation}) planned return {result.planned_return:.4f}, "
                 f"max violation {result.max_violation:.3e}")
    return result


# ---------------------------------------------------------------------------
# Gaussian collocation
# ---------------------------------------------------------------------------

@dataclass
class ParticleNoise:
    """
    Standard-normal draws shared by one linearization.

    Attributes:
        state (np.ndarray): xi, plan particles z^j = mu + sigma xi^j, shape (H, K, D_z).
        transition (np.ndarray): eps, transition noise of the one-step predictions, shape (H, K, D_z).
    """

    state: np.ndarray
    transition: np.ndarray

    @classmethod
    def draw(cls, rng: np.random.Generator, H: int, particles: int, state_dim: int) -> "ParticleNoise":
        return cls(rng.standard_normal((H, particles, state_dim)),
                   rng.standard_normal((H, particles, state_dim)))


@dataclass
class GaussianTerms:
    """Per-step expected reward and one-step prediction moments."""

    expected_reward: np.ndarray
    mean_p: np.ndarray
    std_p: np.ndarray


def _particle_terms(q: GaussianPlanVars, model: GaussianDynamics, reward: RewardModel,
                    noise: ParticleNoise, with_jacobians: bool):
    H, K, dz = noise.state.shape
    if K < 2:
        raise ContractViolationError("at least 2 particles are needed for a standard deviation")
    if noise.state.shape != (q.horizon, K, q.means.shape[1]) or noise.transition.shape != noise.state.shape:
        raise ContractViolationError(f"noise shape {noise.state.shape} does not match the plan")
    sigma = q.stds
    Z = np.empty((H + 1, K, dz))
    Z[0] = q.z1
    Z[1:] = q.means[:, None, :] + sigma[:, None, :] * noise.state
    inputs = Z[:-1]
    acts = np.broadcast_to(q.actions[:, None, :], (H, K, q.actions.shape[1]))
    eps = noise.transition
    Y = model.mean(inputs, acts) + model.std(inputs, acts) * eps
    mean_p = Y.mean(axis=1)
    dev = Y - mean_p[:, None, :]
    std_p = np.sqrt(np.mean(dev * dev, axis=1))
    expected = reward(Z[1:]).mean(axis=1) + reward.action_reward(q.actions)
    terms = GaussianTerms(expected, mean_p, std_p)
    if not (np.all(np.isfinite(mean_p)) and np.all(np.isfinite(std_p)) and np.all(np.isfinite(expected))):
        raise NumericalError("particle moments are non-finite")
    if not with_jacobians:
        return terms, None

    Jz, Ja = model.jacobians(inputs, acts)
    Sz, Sa = model.std_jacobians(inputs, acts)
    dY_dz = Jz + eps[..., :, None] * Sz
    dY_da = Ja + eps[..., :, None] * Sa
    safe = np.where(std_p > 1e-12, std_p, 1.0)
    live = (std_p > 1e-12)[..., None]
    grads = {
        "mean_dz": dY_dz.mean(axis=1),
        "mean_da": dY_da.mean(axis=1),
        "std_dz": live * np.einsum("hkd,hkde->hde", dev, dY_dz) / (K * safe[..., None]),
        "std_da": live * np.einsum("hkd,hkde->hde", dev, dY_da) / (K * safe[..., None]),
    }
    gz = reward.grad(Z[1:])
    grads["reward_dmu"] = gz.mean(axis=1)
    grads["reward_dlogstd"] = (gz * noise.state).mean(axis=1) * sigma
    grads["reward_da"] = reward.action_grad(q.actions)
    return terms, grads


def gaussian_lagrangian_terms(q: GaussianPlanVars, model: GaussianDynamics, reward: RewardModel,
                              particles: int, noise: ParticleNoise) -> GaussianTerms:
    """
    Particle estimates of the expected reward and of the one-step prediction moments.

    Args:
        q (GaussianPlanVars): Plan distribution.
        model (GaussianDynamics): Dynamics model.
        reward (RewardModel): Reward model.
        particles (int): Particle count K_s.
        noise (ParticleNoise): Fixed standard-normal draws.

    Returns:
        GaussianTerms: Expected reward per step, and the sample mean and
        (population) standard deviation of the predictions from each step.

    Raises:
        ContractViolationError: If fewer than 2 particles are requested or the noise shape is wrong.
    """
    if particles < 2:
        raise ContractViolationError("at least 2 particles are needed for a standard deviation")
    if noise.state.shape[1] != particles:
        raise ContractViolationError(f"noise holds {noise.state.shape[1]} particles, expected {particles}")
    return _particle_terms(q, model, reward, noise, with_jacobians=False)[0]


def build_gaussian_system(q: GaussianPlanVars, lam: Multipliers, model: GaussianDynamics,
                          reward: RewardModel, a_m, noise: ParticleNoise) -> ResidualBlockSystem:
    """
    Residual system of the Gaussian Lagrangian for fixed particle noise.

    Block k holds (mu_{k+2}, log sigma_{k+2}, a_{k+1}). Moment residuals of a
    transition do not pass gradients to the standard deviation of its source
    state.
    """
    terms, grads = _particle_terms(q, model, reward, noise, with_jacobians=True)
    H = q.horizon
    dz = q.means.shape[1]
    da = q.actions.shape[1]
    b = 2 * dz + da
    sigma = q.stds
    sd = np.sqrt(lam.dyn)
    sa = np.sqrt(lam.act)
    dr = reward_residual_derivative(terms.expected_reward)
    act = action_residual(q.actions, a_m)
    slope = _action_residual_slope(q.actions, a_m)
    eye = np.eye(dz)
    zeros_dz = np.zeros((dz, dz))

    def own(k):
        # Moment residuals of transition k against block k.
        mean_rows = np.hstack([sd[k] * eye, zeros_dz, -sd[k] * grads["mean_da"][k]])
        std_rows = np.hstack([zeros_dz, sd[k] * np.diag(sigma[k]), -sd[k] * grads["std_da"][k]])
        return np.vstack([mean_rows, std_rows])

    def source(k):
        # Moment residuals of transition k against block k - 1.
        mean_rows = np.hstack([-sd[k] * grads["mean_dz"][k], zeros_dz, np.zeros((dz, da))])
        std_rows = np.hstack([-sd[k] * grads["std_dz"][k], zeros_dz, np.zeros((dz, da))])
        return np.vstack([mean_rows, std_rows])

    def moments(k):
        return np.concatenate([sd[k] * (q.means[k] - terms.mean_p[k]), sd[k] * (sigma[k] - terms.std_p[k])])

    residuals, A_blocks, B_blocks = [], [], []
    for k in range(H):
        res, rows_a, rows_b = [], [], []
        if k == 0:
            res.append(moments(0))
            rows_a.append(own(0))
            rows_b.append(np.zeros((2 * dz, b)))
        res.append(reward_residual(terms.expected_reward[k:k + 1]))
        rows_a.append(dr[k] * np.concatenate([grads["reward_dmu"][k], grads["reward_dlogstd"][k],
                                              grads["reward_da"][k]])[None, :])
        rows_b.append(np.zeros((1, b)))
        res.append(sa[k] * act[k])
        rows_a.append(np.hstack([np.zeros((da, 2 * dz)), np.diag(sa[k] * slope[k])]))
        rows_b.append(np.zeros((da, b)))
        if k < H - 1:
            res.append(moments(k + 1))
            rows_a.append(source(k + 1))
            rows_b.append(own(k + 1))
        residuals.append(np.concatenate(res))
        A_blocks.append(np.vstack(rows_a))
        B_blocks.append(np.vstack(rows_b) if k < H - 1 else None)
    return ResidualBlockSystem(residuals, A_blocks, B_blocks)


def moment_violation(q: GaussianPlanVars, terms: GaussianTerms) -> np.ndarray:
    """Per-step max(|mean_p - mu|^2, |std_p - sigma|^2)."""
    dm = np.sum((terms.mean_p - q.means) ** 2, axis=-1)
    ds = np.sum((terms.std_p - q.stds) ** 2, axis=-1)
    return np.maximum(dm, ds)


def init_gaussian_plan(model: GaussianDynamics, z1, H: int, rng: np.random.Generator, a_m,
                       particles: int, actions: Optional[np.ndarray] = None) -> GaussianPlanVars:
    """Uniform actions with moments obtained by forward particle propagation."""
    z1 = np.asarray(z1, dtype=float)
    if actions is None:
        actions = _initial_actions(H, model.action_dim, rng, a_m)
    actions = np.array(actions, dtype=float).reshape(H, model.action_dim)
    means = np.zeros((H, model.state_dim))
    log_stds = np.zeros((H, model.state_dim))
    zp = np.broadcast_to(z1, (particles, model.state_dim))
    for k in range(H):
        y = model.sample(zp, np.broadcast_to(actions[k], (particles, model.action_dim)), rng)
        means[k] = y.mean(axis=0)
        log_stds[k] = np.log(np.maximum(y.std(axis=0), np.exp(LOG_STD_MIN)))
        zp = means[k] + np.exp(log_stds[k]) * rng.standard_normal((particles, model.state_dim))
    return GaussianPlanVars(z1, means, log_stds, actions)


def latco_gaussian(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: LatcoConfig,
                   rng: np.random.Generator, a_m,
                   init_actions: Optional[np.ndarray] = None) -> PlanResult:
    """
    Gaussian latent collocation.

    Optimizes the expected reward of a diagonal Gaussian plan subject to
    matching the mean and standard deviation of each one-step prediction.
    Particle noise is fixed within an LM iteration and redrawn between
    iterations. One multiplier per step weights both moment residuals.
    Multipliers aim at `cfg.feasibility_margin` times the thresholds, and a
    plan whose moments still miss gaussian_eps_dyn after the budget gets up
    to `cfg.extra_iterations` more iterations.

    Returns:
        PlanResult: Clamped actions, expected planned return, final moment violation, diagnostics.
    """
    q = init_gaussian_plan(model, z1, H, rng, a_m, cfg.particles, init_actions)
    lam = Multipliers.constant(H, cfg.lambda_dyn_init, cfg.lambda_act_init)
    diagnostics = PlanDiagnostics()
    noise = ParticleNoise.draw(rng, H, cfg.particles, model.state_dim)
    terms = gaussian_lagrangian_terms(q, model, reward, cfg.particles, noise)
    violation = moment_violation(q, terms)
    act_v = action_violation(q.actions, a_m)
    steps = cfg.gaussian_iterations
    limit = steps + cfg.extra_iterations

    i = 0
    while i < limit:
        noise = ParticleNoise.draw(rng, H, cfg.particles, model.state_dim)
        try:
            vector, _ = lm_step(q.to_vector(),
                                lambda v: build_gaussian_system(q.with_vector(v), lam, model, reward, a_m, noise),
                                cfg.lm)
        except NumericalError as e:
            raise e.at_iteration(i)
        if not np.all(np.isfinite(vector)):
            raise NumericalError(f"iteration {i}: plan diverged to non-finite values", iteration=i)
        q = q.with_vector(vector)
        terms = gaussian_lagrangian_terms(q, model, reward, cfg.particles, noise)
        violation = moment_violation(q, terms)
        act_v = action_violation(q.actions, a_m)
        if (i + 1) % cfg.dual_period == 0:
            lam = Multipliers(
                dual_update(lam.dyn, violation, cfg.gaussian_eps_dyn * cfg.feasibility_margin, cfg.dual_lr,
                            cfg.dual_eta, cfg.lambda_min, cfg.lambda_max),
                dual_update(lam.act, act_v, cfg.eps_act * cfg.feasibility_margin, cfg.dual_lr,
                            cfg.dual_eta, cfg.lambda_min, cfg.lambda_max),
            )
        diagnostics.append(i, float(np.sum(terms.expected_reward)), float(np.max(violation)), lam)
        i += 1
        if i >= steps and np.max(violation) <= cfg.gaussian_eps_dyn and np.max(act_v) <= cfg.eps_act:
            break

    result = _finish(q, q.actions, a_m, float(np.sum(terms.expected_reward)), float(np.max(violation)),
                     diagnostics, "latco_gaussian")
    logger.debug(f"Gaussian LatCo planned return {result.planned_return:.4f}, "
                 f"max violation {result.max_violation:.3e}")
    return result


def select_best_restart(results: Sequence[PlanResult], eps_dyn: float) -> PlanResult:
    """
    Pick the best of several restarts.

    Among results with violation <= 10 eps_dyn the highest planned return
    wins; if none is feasible, the lowest violation wins.

    Raises:
        ContractViolationError: If `results` is empty.
    """
    if not results:
        raise ContractViolationError("no planner results to select from")
    feasible = [r for r in results if r.max_violation <= 10.0 * eps_dyn]
    if feasible:
        return max(feasible, key=lambda r: r.planned_return)
    return min(results, key=lambda r: r.max_violation)
