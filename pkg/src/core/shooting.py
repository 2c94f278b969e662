#!/usr/bin/env python3
"""
Shooting Module

This module provides the baseline planners that optimize actions only and
evaluate the objective through recursive rollouts of the same model
contracts: CEM, MPPI, gradient ascent with Adam (Shooting GD), Gauss-Newton
shooting (Shooting GN) and iLQR, plus a finite-horizon Riccati solver used as
the linear-quadratic reference.
"""

import logging
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, cholesky, solve

from src.core.dynamics import GaussianDynamics, RewardModel, rollout_mean, rollout_sample
from src.core.latco import (
    Multipliers, PlanDiagnostics, PlanResult, action_residual, action_violation,
    dual_update, reward_residual, reward_residual_derivative,
)
from src.core.settings import CemConfig, GdConfig, GnConfig, IlqrConfig, MppiConfig
from src.utils.errors import NumericalError, PlannerFailure

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("shooting")


def _clamp(actions, a_m):
    a_m = np.asarray(a_m, dtype=float)
    return np.clip(actions, -a_m, a_m)


def expected_return(model: GaussianDynamics, reward: RewardModel, z1, actions,
                    mode: str = "mean", rng: Optional[np.random.Generator] = None):
    """
    Return of an action sequence (or a batch of them) under the model.

    Args:
        model (GaussianDynamics): Dynamics model.
        reward (RewardModel): Reward model.
        z1: Initial state.
        actions: Actions (H, D_a) or (N, H, D_a).
        mode (str): "mean" sums rewards along the mean rollout, "sampled" along one sampled rollout.
        rng (Optional[np.random.Generator]): Required in sampled mode.

    Returns:
        Scalar return, or an array of N returns.
    """
    actions = np.asarray(actions, dtype=float)
    if mode == "mean":
        states = rollout_mean(model, z1, actions)
    elif mode == "sampled":
        if rng is None:
            raise ValueError("sampled mode needs a random generator")
        states = rollout_sample(model, z1, actions, rng)
    else:
        raise ValueError(f"unknown rollout mode {mode!r}")
    returns = np.sum(reward(states[..., 1:, :]) + reward.action_reward(actions), axis=-1)
    return float(returns) if returns.ndim == 0 else returns


def return_gradient(model: GaussianDynamics, reward: RewardModel, z1, actions) -> Tuple[float, np.ndarray]:
    """
    Mean-mode return and its gradient with respect to the actions (reverse-mode adjoint).

    Returns:
        Tuple[float, np.ndarray]: The return and d return / d actions, shape (H, D_a).
    """
    actions = np.asarray(actions, dtype=float)
    states = rollout_mean(model, z1, actions)
    Jz, Ja = model.jacobians(states[:-1], actions)
    H = len(actions)
    grad = np.zeros_like(actions)
    # Adjoint of the return with respect to the state at step t.
    p = reward.grad(states[H])
    action_grads = reward.action_grad(actions)
    for t in reversed(range(H)):
        grad[t] = Ja[t].T @ p + action_grads[t]
        if t > 0:
            p = reward.grad(states[t]) + Jz[t].T @ p
    value = float(np.sum(reward(states[1:]) + reward.action_reward(actions)))
    return value, grad


def mppi_weights(returns, temperature: float) -> np.ndarray:
    """Softmax of temperature * returns."""
    logits = temperature * np.asarray(returns, dtype=float)
    logits = logits - np.max(logits)
    w = np.exp(logits)
    return w / np.sum(w)


def cem_refit(samples: np.ndarray, returns: np.ndarray, elites: int) -> Tuple[np.ndarray, np.ndarray]:
    """Mean and standard deviation of the `elites` best samples."""
    best = samples[np.argsort(returns)[::-1][:elites]]
    return best.mean(axis=0), best.std(axis=0)


def mppi_refit(samples: np.ndarray, returns: np.ndarray, elites: int,
               temperature: float) -> Tuple[np.ndarray, np.ndarray]:
    """Softmax-weighted mean and standard deviation of the `elites` best samples."""
    order = np.argsort(returns)[::-1][:elites]
    w = mppi_weights(returns[order], temperature)[:, None, None]
    best = samples[order]
    mean = np.sum(w * best, axis=0)
    return mean, np.sqrt(np.sum(w * (best - mean) ** 2, axis=0))


def _sampling_plan(model, reward, z1, H, cfg: CemConfig, rng, a_m, refit, name: str,
                   mode: Optional[str], init_actions=None) -> PlanResult:
    mode = mode or ("sampled" if cfg.sampled else "mean")
    a_m = np.asarray(a_m, dtype=float)
    mean = np.zeros((H, model.action_dim)) if init_actions is None else np.array(init_actions, dtype=float)
    # Standard deviation in units of the action bound.
    std = np.full((H, model.action_dim), cfg.init_std) * a_m
    diagnostics = PlanDiagnostics()
    best = -np.inf
    lam = Multipliers(np.zeros(H), np.zeros(H))
    for i in range(cfg.iterations):
        samples = _clamp(mean + std * rng.standard_normal((cfg.population, H, model.action_dim)), a_m)
        returns = expected_return(model, reward, z1, samples, mode, rng)
        mean, std = refit(samples, returns)
        best = float(np.max(returns))
        diagnostics.append(i, best, 0.0, lam)
    result = PlanResult(_clamp(mean, a_m), best, 0.0, diagnostics, None, name)
    logger.debug(f"{name} best sampled return {best:.4f}")
    return result


def cem_plan(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: CemConfig,
             rng: np.random.Generator, a_m, mode: Optional[str] = None, init_actions=None) -> PlanResult:
    """
    Cross-entropy method over action sequences.

    Samples are drawn around a zero initial mean, clamped to the bounds and
    scored with `expected_return` (sampled rollouts unless `cfg.sampled` is
    off); the Gaussian is refit to the elites every iteration.

    Returns:
        PlanResult: Final mean sequence (clamped) and the best sampled return of the last iteration.
    """
    return _sampling_plan(model, reward, z1, H, cfg, rng, a_m,
                          lambda s, r: cem_refit(s, r, cfg.elites), "cem", mode, init_actions)


def mppi_plan(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: MppiConfig,
              rng: np.random.Generator, a_m, mode: Optional[str] = None, init_actions=None) -> PlanResult:
    """MPPI: CEM with softmax(temperature * return)-weighted refits."""
    return _sampling_plan(model, reward, z1, H, cfg, rng, a_m,
                          lambda s, r: mppi_refit(s, r, cfg.elites, cfg.temperature), "mppi", mode, init_actions)


def shooting_gd_plan(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: GdConfig,
                     rng: np.random.Generator, a_m, init_actions=None) -> PlanResult:
    """
    Gradient ascent on the mean-mode return with Adam.

    Actions start uniform in the bounds; the bounds are enforced by a
    multiplier-weighted penalty on the action residuals whose multipliers
    follow `dual_update` every `cfg.dual_period` iterations.

    Raises:
        NumericalError: If the gradient becomes non-finite.
    """
    a_m = np.asarray(a_m, dtype=float)
    if init_actions is None:
        actions = rng.uniform(-1.0, 1.0, size=(H, model.action_dim)) * a_m
    else:
        actions = np.array(init_actions, dtype=float)
    lam = Multipliers(np.zeros(H), np.full(H, cfg.lambda_act_init))
    m = np.zeros_like(actions)
    v = np.zeros_like(actions)
    diagnostics = PlanDiagnostics()
    for i in range(cfg.iterations):
        value, grad = return_gradient(model, reward, z1, actions)
        excess = action_residual(actions, a_m)
        grad = grad - 2.0 * lam.act[:, None] * excess * np.sign(actions)
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"iteration {i}: non-finite return gradient", iteration=i)
        m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
        v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad * grad
        m_hat = m / (1.0 - cfg.beta1 ** (i + 1))
        v_hat = v / (1.0 - cfg.beta2 ** (i + 1))
        actions = actions + cfg.learning_rate * m_hat / (np.sqrt(v_hat) + 1e-8)
        if (i + 1) % cfg.dual_period == 0:
            lam.act = dual_update(lam.act, action_violation(actions, a_m), cfg.eps_act, cfg.dual_lr, cfg.dual_eta)
        diagnostics.append(i, value, 0.0, lam)
    final = _clamp(actions, a_m)
    return PlanResult(final, expected_return(model, reward, z1, final), 0.0, diagnostics, None, "shooting_gd")


def _shooting_residuals(model, reward, z1, actions, a_m, lam_act):
    """Stacked shooting residuals and their dense Jacobian with respect to the actions."""
    H, da = actions.shape
    states = rollout_mean(model, z1, actions)
    Jz, Ja = model.jacobians(states[:-1], actions)
    r = reward(states[1:]) + reward.action_reward(actions)
    dr = reward_residual_derivative(r)
    gz = reward.grad(states[1:])
    ga = reward.action_grad(actions)
    # sens[s] = d z_{t+1} / d a_s for the current t.
    J = np.zeros((H + H * da, H * da))
    sens = np.zeros((H, model.state_dim, da))
    for t in range(H):
        if t > 0:
            sens[:t] = np.einsum("ij,sjk->sik", Jz[t], sens[:t])
        sens[t] = Ja[t]
        J[t, :(t + 1) * da] = dr[t] * np.einsum("i,sik->sk", gz[t], sens[:t + 1]).ravel()
        J[t, t * da:(t + 1) * da] += dr[t] * ga[t]
    sa = np.sqrt(lam_act)
    excess = action_residual(actions, a_m)
    slope = np.sign(actions) * (np.abs(actions) > a_m)
    J[H:, :] = np.diag((sa[:, None] * slope).ravel())
    rho = np.concatenate([reward_residual(r), (sa[:, None] * excess).ravel()])
    return rho, J


def shooting_gn_plan(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: GnConfig,
                     rng: np.random.Generator, a_m, init_actions=None) -> PlanResult:
    """
    Gauss-Newton shooting: softplus reward residuals and action residuals along the
    mean rollout, minimized with fixed-damping LM steps over the actions.

    Raises:
        NumericalError: On non-finite residuals or a failed factorization.
    """
    a_m = np.asarray(a_m, dtype=float)
    if init_actions is None:
        actions = rng.uniform(-1.0, 1.0, size=(H, model.action_dim)) * a_m
    else:
        actions = np.array(init_actions, dtype=float)
    lam = Multipliers(np.zeros(H), np.full(H, cfg.lambda_act_init))
    diagnostics = PlanDiagnostics()
    for i in range(cfg.iterations):
        rho, J = _shooting_residuals(model, reward, z1, actions, a_m, lam.act)
        if not (np.all(np.isfinite(rho)) and np.all(np.isfinite(J))):
            raise NumericalError(f"iteration {i}: non-finite shooting residuals", iteration=i)
        try:
            factor = cho_factor(J.T @ J + cfg.damping * np.eye(J.shape[1]), lower=True)
        except LinAlgError as e:
            raise NumericalError(f"iteration {i}: Gauss-Newton factorization failed: {e}", iteration=i)
        actions = actions - cho_solve(factor, J.T @ rho).reshape(actions.shape)
        lam.act = dual_update(lam.act, action_violation(actions, a_m), cfg.eps_act, cfg.dual_lr, cfg.dual_eta)
        diagnostics.append(i, expected_return(model, reward, z1, actions), 0.0, lam)
    final = _clamp(actions, a_m)
    return PlanResult(final, expected_return(model, reward, z1, final), 0.0, diagnostics, None, "shooting_gn")


def _trajectory_cost(model, reward, z1, actions):
    states = rollout_mean(model, z1, actions)
    return -float(np.sum(reward(states[1:]) + reward.action_reward(actions))), states


def ilqr_plan(model: GaussianDynamics, reward: RewardModel, z1, H: int, cfg: IlqrConfig, a_m,
              init_actions=None) -> PlanResult:
    """
    iLQR on the cost -r with a backtracking line search.

    The cost of a transition is charged to the state it leads to. The
    regularizer is multiplied by `cfg.reg_factor` whenever Q_uu + mu I fails
    to factor and divided by it after an accepted step. Only the open-loop
    actions are returned.

    Args:
        model (GaussianDynamics): Dynamics model (mean only).
        reward (RewardModel): Reward model providing `cost_hessian`.
        z1: Initial state.
        H (int): Horizon.
        cfg (IlqrConfig): Settings.
        a_m: Action bound.
        init_actions: Initial actions, zeros by default.

    Raises:
        PlannerFailure: If the regularizer exceeds `cfg.reg_max`.
    """
    a_m = np.asarray(a_m, dtype=float)
    da = model.action_dim
    actions = np.zeros((H, da)) if init_actions is None else _clamp(np.array(init_actions, dtype=float), a_m)
    cost, states = _trajectory_cost(model, reward, z1, actions)
    mu = cfg.reg_init
    diagnostics = PlanDiagnostics()
    lam = Multipliers(np.zeros(H), np.zeros(H))

    for i in range(cfg.max_iterations):
        Jz, Ja = model.jacobians(states[:-1], actions)
        lx = -reward.grad(states)
        lxx = reward.cost_hessian(states)
        lu = -reward.action_grad(actions)
        luu = reward.action_cost_hessian(actions)

        while True:
            gains = _backward_pass(Jz, Ja, lx, lxx, lu, luu, mu)
            if gains is not None:
                break
            mu = mu * cfg.reg_factor if mu > 0 else max(cfg.reg_min, 1e-6)
            if mu > cfg.reg_max:
                raise PlannerFailure(f"iLQR regularizer exceeded {cfg.reg_max:g} at iteration {i}")
        k_ff, K_fb = gains

        accepted = False
        for alpha in cfg.line_search:
            x = np.asarray(z1, dtype=float)
            new_actions = np.zeros_like(actions)
            new_states = [x]
            for t in range(H):
                u = _clamp(actions[t] + alpha * k_ff[t] + K_fb[t] @ (x - states[t]), a_m)
                x = model.mean(x, u)
                new_actions[t] = u
                new_states.append(x)
            new_cost = -float(np.sum(reward(np.array(new_states[1:])) + reward.action_reward(new_actions)))
            if np.isfinite(new_cost) and new_cost < cost:
                accepted = True
                break
        if not accepted:
            mu = mu * cfg.reg_factor if mu > 0 else max(cfg.reg_min, 1e-6)
            diagnostics.append(i, -cost, 0.0, lam)
            if mu > cfg.reg_max:
                break
            continue
        improvement = cost - new_cost
        actions, states, cost = new_actions, np.array(new_states), new_cost
        mu = max(mu / cfg.reg_factor, cfg.reg_min) if mu > 0 else 0.0
        diagnostics.append(i, -cost, 0.0, lam)
        logger.debug(f"iLQR iteration {i}: cost {cost:.6f}, step {alpha}, mu {mu:.2e}")
        if improvement < cfg.tolerance:
            break
    return PlanResult(actions, -cost, 0.0, diagnostics, None, "ilqr")


def _backward_pass(Jz, Ja, lx, lxx, lu, luu, mu):
    """Riccati-like sweep on the quadratized problem; None if Q_uu + mu I is not positive definite."""
    H = len(Ja)
    da = Ja.shape[-1]
    Vx = lx[H]
    Vxx = lxx[H]
    k_ff = np.zeros((H, da))
    K_fb = np.zeros((H, da, Jz.shape[-1]))
    for t in reversed(range(H)):
        Qx = Jz[t].T @ Vx
        Qu = lu[t] + Ja[t].T @ Vx
        Qxx = Jz[t].T @ Vxx @ Jz[t]
        Quu = luu[t] + Ja[t].T @ Vxx @ Ja[t]
        Qux = Ja[t].T @ Vxx @ Jz[t]
        try:
            L = cholesky(0.5 * (Quu + Quu.T) + mu * np.eye(da), lower=True)
        except LinAlgError:
            return None
        factor = (L, True)
        k = -cho_solve(factor, Qu)
        K = -cho_solve(factor, Qux)
        k_ff[t] = k
        K_fb[t] = K
        Vx = Qx + K.T @ Quu @ k + K.T @ Qu + Qux.T @ k
        Vxx = Qxx + K.T @ Quu @ K + K.T @ Qux + Qux.T @ K
        Vxx = 0.5 * (Vxx + Vxx.T)
        if t > 0:
            Vx = Vx + lx[t]
            Vxx = Vxx + lxx[t]
    return k_ff, K_fb


def lqr_open_loop(A, B, Q, R, z1, H: int) -> np.ndarray:
    """
    Optimal open-loop actions of the finite-horizon problem
    min sum_t z_{t+1}^T Q z_{t+1} + a_t^T R a_t subject to z_{t+1} = A z_t + B a_t.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    P = np.zeros_like(Q)
    gains = []
    for _ in range(H):
        S = Q + P
        K = solve(R + B.T @ S @ B, B.T @ S @ A, assume_a="pos")
        P = A.T @ S @ (A - B @ K)
        P = 0.5 * (P + P.T)
        gains.append(K)
    gains.reverse()
    z = np.asarray(z1, dtype=float)
    actions = []
    for K in gains:
        a = -K @ z
        actions.append(a)
        z = A @ z + B @ a
    return np.array(actions)
