#!/usr/bin/env python3
"""
Tests for the shooting planners and the Riccati reference.
"""

import os
import sys
import unittest

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.dynamics import ConstantReward, LinearGaussianDynamics, MlpGaussianDynamics, MlpReward, QuadraticReward
from src.core.latco import reward_residual
from src.core.settings import CemConfig, GdConfig, GnConfig, IlqrConfig, MppiConfig
from src.core.shooting import (
    cem_plan, cem_refit, expected_return, ilqr_plan, lqr_open_loop, mppi_plan, mppi_refit, mppi_weights,
    return_gradient, shooting_gd_plan, shooting_gn_plan,
)
from src.core.worlds import PendulumEnv, PointMassEnv
from src.utils.errors import PlannerFailure
from src.utils.gradcheck import max_abs_error, numerical_gradient


def _linear_quadratic():
    return LinearGaussianDynamics(np.eye(1), np.eye(1)), QuadraticReward(np.eye(1), 0.01 * np.eye(1))


class TestReturns:
    """Test class for rollout returns and their gradients."""

    def test_expected_return_batch(self):
        """Test that batched and single evaluations agree."""
        model, reward = _linear_quadratic()
        actions = np.array([[[-0.5], [0.0]], [[1.0], [-1.0]]])
        batch = expected_return(model, reward, [1.0], actions)
        assert batch.shape == (2,)
        assert batch[0] == pytest.approx(-(0.25 + 0.25 + 0.01 * 0.25))
        assert batch[1] == pytest.approx(expected_return(model, reward, [1.0], actions[1]))

    def test_sampled_mode_needs_generator(self):
        """Test that sampled rollouts require a random generator."""
        model, reward = _linear_quadratic()
        with pytest.raises(ValueError):
            expected_return(model, reward, [1.0], np.zeros((2, 1)), mode="sampled")

    @settings(max_examples=100, deadline=None)
    @given(seed=st.integers(min_value=0, max_value=2 ** 31 - 1))
    def test_return_gradient_matches_finite_differences(self, seed):
        """Test the adjoint gradient on random networks."""
        rng = np.random.default_rng(seed)
        model = MlpGaussianDynamics(2, 2, hidden=8, rng=rng)
        reward = MlpReward(2, hidden=8, rng=rng)
        z1 = rng.uniform(-1, 1, 2)
        actions = rng.uniform(-1, 1, (5, 2))

        value, grad = return_gradient(model, reward, z1, actions)

        assert value == pytest.approx(expected_return(model, reward, z1, actions))
        numeric = numerical_gradient(lambda a: expected_return(model, reward, z1, a), actions)
        assert max_abs_error(grad, numeric) < 1e-4


class TestSamplingPlanners:
    """Test class for CEM and MPPI."""

    def test_mppi_weights(self):
        """Test the softmax weights."""
        np.testing.assert_allclose(mppi_weights([0.0, 0.1], 10.0), [0.26894, 0.73106], atol=1e-5)
        np.testing.assert_allclose(mppi_weights([3.0, 3.0], 10.0), [0.5, 0.5])
        assert mppi_weights(np.arange(5.0), 1e6)[-1] == pytest.approx(1.0)

    def test_cem_refit_uses_elites(self):
        """Test that the refit only looks at the best samples."""
        samples = np.array([[[0.0]], [[1.0]], [[3.0]]])
        mean, std = cem_refit(samples, np.array([0.0, 2.0, 1.0]), elites=2)
        np.testing.assert_allclose(mean, [[2.0]])
        np.testing.assert_allclose(std, [[1.0]])

    def test_mppi_high_temperature_is_best_sample(self):
        """Test that MPPI with a very sharp softmax refits to the single best sample, like CEM with one elite."""
        rng = np.random.default_rng(4)
        samples = rng.uniform(-1.0, 1.0, size=(20, 5, 2))
        returns = rng.permutation(np.linspace(0.0, 1.0, 20))
        mppi_mean, mppi_std = mppi_refit(samples, returns, elites=20, temperature=1e6)
        cem_mean, cem_std = cem_refit(samples, returns, elites=1)
        np.testing.assert_allclose(mppi_mean, cem_mean, atol=1e-12)
        np.testing.assert_allclose(mppi_std, cem_std, atol=1e-12)
        np.testing.assert_allclose(mppi_mean, samples[np.argmax(returns)], atol=1e-12)

    @pytest.mark.parametrize("planner,cfg", [
        (cem_plan, CemConfig(iterations=10, population=200, elites=20)),
        (mppi_plan, MppiConfig(iterations=10, population=200, elites=20)),
    ])
    def test_improves_on_random_actions(self, planner, cfg):
        """Test that the sampling planners beat uniformly random action sequences."""
        # Arrange
        env = PointMassEnv(d=1.0, sparse=False)
        z1 = env.reset(seed=0)
        model, reward = env.oracle_dynamics(), env.oracle_reward()
        rng = np.random.default_rng(0)
        random_actions = rng.uniform(-env.action_bound, env.action_bound, (50, 10, 2))
        baseline = float(np.mean(expected_return(model, reward, z1, random_actions)))

        # Act
        result = planner(model, reward, z1, 10, cfg, rng, env.action_bound, mode="mean")

        # Assert
        assert np.all(np.abs(result.actions) <= env.action_bound)
        assert expected_return(model, reward, z1, result.actions) > baseline
        assert len(result.diagnostics) == cfg.iterations

    def test_same_seed_same_plan(self):
        """Test determinism given the seed, in sampled mode."""
        env = PointMassEnv(d=1.0, sparse=False, noise_std=0.01)
        z1 = env.reset(seed=0)
        cfg = CemConfig(iterations=3, population=50, elites=5)
        runs = [cem_plan(env.oracle_dynamics(), env.oracle_reward(), z1, 5, cfg,
                         np.random.default_rng(7), env.action_bound) for _ in range(2)]
        np.testing.assert_array_equal(runs[0].actions, runs[1].actions)


class TestGradientPlanners:
    """Test class for Shooting GD and Shooting GN."""

    def test_gd_matches_riccati(self):
        """Test that gradient ascent finds the linear-quadratic optimum."""
        model, reward = _linear_quadratic()
        result = shooting_gd_plan(model, reward, np.array([1.0]), 2, GdConfig(), np.random.default_rng(0), 2.0)
        reference = lqr_open_loop(1.0, 1.0, 1.0, 0.01, [1.0], 2)
        np.testing.assert_allclose(result.actions, reference, atol=1e-2)

    def test_gn_matches_riccati(self):
        """Test that Gauss-Newton shooting finds the linear-quadratic optimum."""
        model, reward = _linear_quadratic()
        result = shooting_gn_plan(model, reward, np.array([1.0]), 2, GnConfig(damping=2.0),
                                  np.random.default_rng(0), 2.0)
        reference = lqr_open_loop(1.0, 1.0, 1.0, 0.01, [1.0], 2)
        np.testing.assert_allclose(result.actions, reference, atol=1e-2)

    def test_gn_return_improves_every_iteration(self):
        """Test that damped Gauss-Newton shooting raises the return on each of 10 iterations."""
        # Arrange
        model = LinearGaussianDynamics(np.eye(1), np.eye(1))
        reward = QuadraticReward(np.eye(1), target=np.array([0.5]))
        z1 = np.zeros(1)
        init = np.array([[2.0]])

        # Act
        result = shooting_gn_plan(model, reward, z1, 1, GnConfig(iterations=10, damping=2.0),
                                  np.random.default_rng(0), 10.0, init_actions=init)

        # Assert
        curve = np.concatenate([[expected_return(model, reward, z1, init)], result.diagnostics.reward_curve])
        assert len(curve) == 11
        assert np.all(np.diff(curve) > 0)
        assert np.all(np.diff(reward_residual(curve)) < 0)
        assert curve[-1] > -0.01

    def test_gd_zero_reward(self):
        """Test that a flat reward leaves the actions inside the bounds with zero return."""
        model = LinearGaussianDynamics(np.eye(2), np.eye(2))
        result = shooting_gd_plan(model, ConstantReward(2), np.zeros(2), 4, GdConfig(iterations=20),
                                  np.random.default_rng(0), 0.5)
        assert np.all(np.abs(result.actions) <= 0.5)
        assert result.planned_return == 0.0

    def test_gn_active_bound(self):
        """Test that a reward pulling past the bound yields actions at the bound."""
        model = LinearGaussianDynamics(np.eye(1), np.eye(1))
        reward = QuadraticReward(np.eye(1), target=np.array([5.0]))
        result = shooting_gn_plan(model, reward, np.zeros(1), 1, GnConfig(iterations=50),
                                  np.random.default_rng(0), 1.0)
        assert np.all(np.abs(result.actions) <= 1.0 + 1e-3)
        assert result.actions[0, 0] == pytest.approx(1.0, abs=1e-3)


class TestIlqr(unittest.TestCase):
    """Test cases for iLQR and the Riccati reference."""

    def test_one_pass_is_riccati(self):
        """Test that one unregularized pass solves the linear-quadratic problem."""
        model, reward = _linear_quadratic()
        z1 = np.array([0.7])
        result = ilqr_plan(model, reward, z1, 6, IlqrConfig(reg_init=0.0, max_iterations=1), 10.0)
        np.testing.assert_allclose(result.actions, lqr_open_loop(1.0, 1.0, 1.0, 0.01, z1, 6), atol=1e-6)

    def test_riccati_single_step(self):
        """Test the one-step closed form a = -z / (1 + R)."""
        actions = lqr_open_loop(1.0, 1.0, 1.0, 0.01, [1.0], 1)
        np.testing.assert_allclose(actions, [[-1.0 / 1.01]])

    def test_riccati_is_stationary(self):
        """Test that the Riccati actions zero the return gradient."""
        model, reward = _linear_quadratic()
        actions = lqr_open_loop(1.0, 1.0, 1.0, 0.01, [1.0], 5)
        _, grad = return_gradient(model, reward, [1.0], actions)
        np.testing.assert_allclose(grad, 0.0, atol=1e-10)

    def test_pendulum_beats_zero_actions(self):
        """Test that iLQR improves on doing nothing from the hanging position."""
        env = PendulumEnv()
        z1 = env.reset(seed=3)
        model, reward = env.oracle_dynamics(), env.oracle_reward()

        result = ilqr_plan(model, reward, z1, 60, IlqrConfig(), env.action_bound)

        zero_return = expected_return(model, reward, z1, np.zeros((60, 1)))
        self.assertGreater(expected_return(model, reward, z1, result.actions), zero_return)
        self.assertTrue(np.all(np.abs(result.actions) <= env.action_bound))

    def test_regularizer_cap_raises(self):
        """Test that a non-convex cost past the regularizer cap is a planner failure."""
        model = LinearGaussianDynamics(np.eye(1), np.eye(1))
        reward = QuadraticReward(-10.0 * np.eye(1))
        with self.assertRaises(PlannerFailure):
            ilqr_plan(model, reward, np.array([1.0]), 3, IlqrConfig(reg_init=1e-3, reg_max=1e-1), 1.0)
