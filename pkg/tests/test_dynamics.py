#!/usr/bin/env python3
"""
Tests for the dynamics module.

This module tests the model contracts, the learned networks' analytic
derivatives, rollouts, the replay buffer and model training.
"""

import os
import sys
import unittest

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.dynamics import (
    AdamOptimizer, ConstantReward, Episode, GaussianDynamics, LinearGaussianDynamics, MlpGaussianDynamics,
    MlpReward, QuadraticReward, ReplayBuffer, SmoothedGoalReward, SparseGoalReward, jacobians, predict,
    rollout_mean, rollout_sample, train_dynamics, train_reward,
)
from src.utils.errors import ContractViolationError
from src.utils.gradcheck import max_abs_error, numerical_gradient, numerical_jacobian

SEEDS = st.integers(min_value=0, max_value=2 ** 31 - 1)


def _linear_episodes(n, rng, horizon=10, noise=0.05):
    episodes = []
    for _ in range(n):
        z = rng.uniform(-1, 1, size=2)
        states, actions, rewards = [z], [], []
        for _ in range(horizon):
            a = rng.uniform(-0.5, 0.5, size=2)
            z = z + a + noise * rng.standard_normal(2)
            states.append(z)
            actions.append(a)
            rewards.append(-float(z @ z))
        episodes.append(Episode(np.array(states), np.array(actions), np.array(rewards)))
    return episodes


class TestModelContracts:
    """Test class for dimension checks and basic model behavior."""

    def test_predict_linear_model(self):
        """Test that predict returns the affine mean and the fixed noise."""
        # Arrange
        model = LinearGaussianDynamics(np.eye(2), np.eye(2), c=[0.5, 0.0], noise_std=0.1)

        # Act
        mean, std = predict(model, np.array([1.0, 2.0]), np.array([0.1, -0.1]))

        # Assert
        np.testing.assert_allclose(mean, [1.6, 1.9])
        np.testing.assert_allclose(std, [0.1, 0.1])

    def test_predict_rejects_wrong_dimensions(self):
        """Test that a state of the wrong size raises a contract error."""
        model = LinearGaussianDynamics(np.eye(2), np.eye(2))
        with pytest.raises(ContractViolationError):
            predict(model, np.zeros(3), np.zeros(2))
        with pytest.raises(ContractViolationError):
            jacobians(model, np.zeros(2), np.zeros(1))

    def test_predict_rejects_non_finite(self):
        """Test that NaN inputs raise a contract error."""
        model = LinearGaussianDynamics(np.eye(2), np.eye(2))
        with pytest.raises(ContractViolationError):
            predict(model, np.array([np.nan, 0.0]), np.zeros(2))

    def test_sample_is_mean_plus_scaled_noise(self):
        """Test that sampling reproduces mean + std * xi for the same generator state."""
        # Arrange
        model = LinearGaussianDynamics(np.eye(2), np.eye(2), noise_std=0.3)
        z, a = np.array([0.2, -0.4]), np.array([0.1, 0.1])

        # Act
        sample = model.sample(z, a, np.random.default_rng(3))
        xi = np.random.default_rng(3).standard_normal(2)

        # Assert
        np.testing.assert_allclose(sample, model.mean(z, a) + 0.3 * xi)

    def test_batched_evaluation(self):
        """Test that leading batch dimensions are preserved."""
        model = MlpGaussianDynamics(3, 2, hidden=16, rng=np.random.default_rng(0))
        z = np.zeros((4, 5, 3))
        a = np.zeros((4, 5, 2))
        assert model.mean(z, a).shape == (4, 5, 3)
        assert model.std(z, a).shape == (4, 5, 3)
        jz, ja = model.jacobians(z, a)
        assert jz.shape == (4, 5, 3, 3)
        assert ja.shape == (4, 5, 3, 2)

    def test_mlp_std_positive_and_clamped(self):
        """Test that the learned std is positive and within the clamp range."""
        model = MlpGaussianDynamics(2, 2, hidden=8, rng=np.random.default_rng(1))
        model.params["bs"][:] = 50.0
        std = model.std(np.zeros(2), np.zeros(2))
        np.testing.assert_allclose(std, np.exp(MlpGaussianDynamics.LOG_STD_MAX))
        model.params["bs"][:] = -50.0
        assert np.all(model.std(np.zeros(2), np.zeros(2)) > 0)


class TestRollouts:
    """Test class for mean and sampled rollouts."""

    def test_zero_horizon_returns_initial_state(self):
        """Test that an empty action sequence yields only the initial state."""
        model = LinearGaussianDynamics(np.eye(2), np.eye(2))
        states = rollout_mean(model, np.array([1.0, 2.0]), np.zeros((0, 2)))
        assert states.shape == (1, 2)
        np.testing.assert_allclose(states[0], [1.0, 2.0])

    def test_linear_rollout_matches_recursion(self):
        """Test rollout_mean against the explicit recursion."""
        # Arrange
        A = np.array([[1.0, 0.1], [0.0, 1.0]])
        B = np.array([[0.0], [0.1]])
        model = LinearGaussianDynamics(A, B)
        actions = np.array([[1.0], [-1.0], [0.5]])
        z = np.array([0.0, 1.0])

        # Act
        states = rollout_mean(model, z, actions)

        # Assert
        for t, a in enumerate(actions):
            z = A @ z + B @ a
            np.testing.assert_allclose(states[t + 1], z)

    def test_sampled_rollout_is_deterministic_given_seed(self):
        """Test that the same seed reproduces a sampled rollout."""
        model = LinearGaussianDynamics(np.eye(2), np.eye(2), noise_std=0.5)
        actions = np.zeros((5, 2))
        first = rollout_sample(model, np.zeros(2), actions, np.random.default_rng(11))
        second = rollout_sample(model, np.zeros(2), actions, np.random.default_rng(11))
        np.testing.assert_array_equal(first, second)
        assert first.shape == (6, 2)

    def test_batched_rollout(self):
        """Test that rollouts accept a batch of action sequences."""
        model = LinearGaussianDynamics(np.eye(2), np.eye(2))
        actions = np.ones((7, 4, 2))
        states = rollout_mean(model, np.zeros(2), actions)
        assert states.shape == (7, 5, 2)
        np.testing.assert_allclose(states[:, -1], 4.0)


class TestAnalyticDerivatives:
    """Test class comparing analytic derivatives with central finite differences."""

    @settings(max_examples=100, deadline=None)
    @given(seed=SEEDS)
    def test_mlp_mean_jacobians(self, seed):
        """Test d mean / d (z, a) of the learned dynamics."""
        rng = np.random.default_rng(seed)
        model = MlpGaussianDynamics(3, 2, hidden=16, rng=rng)
        z, a = rng.uniform(-2, 2, size=3), rng.uniform(-2, 2, size=2)

        jz, ja = model.jacobians(z, a)

        assert max_abs_error(jz, numerical_jacobian(lambda v: model.mean(v, a), z)) < 1e-4
        assert max_abs_error(ja, numerical_jacobian(lambda v: model.mean(z, v), a)) < 1e-4

    @settings(max_examples=100, deadline=None)
    @given(seed=SEEDS)
    def test_mlp_std_jacobians(self, seed):
        """Test d std / d (z, a) of the learned dynamics."""
        rng = np.random.default_rng(seed)
        model = MlpGaussianDynamics(3, 2, hidden=16, rng=rng)
        z, a = rng.uniform(-1, 1, size=3), rng.uniform(-1, 1, size=2)

        jz, ja = model.std_jacobians(z, a)

        assert max_abs_error(jz, numerical_jacobian(lambda v: model.std(v, a), z)) < 1e-4
        assert max_abs_error(ja, numerical_jacobian(lambda v: model.std(z, v), a)) < 1e-4

    @settings(max_examples=100, deadline=None)
    @given(seed=SEEDS)
    def test_mlp_reward_gradient(self, seed):
        """Test the learned reward's input gradient."""
        rng = np.random.default_rng(seed)
        reward = MlpReward(3, hidden=16, rng=rng)
        z = rng.uniform(-2, 2, size=3)
        assert max_abs_error(reward.grad(z), numerical_gradient(lambda v: float(reward(v)), z)) < 1e-4

    @settings(max_examples=100, deadline=None)
    @given(seed=SEEDS)
    def test_analytic_reward_gradients(self, seed):
        """Test the quadratic, goal-bump and sparse goal reward gradients."""
        rng = np.random.default_rng(seed)
        z = rng.uniform(-2, 2, size=2)
        Q = np.diag(rng.uniform(0.1, 2.0, size=2))
        for reward in (QuadraticReward(Q, target=[0.3, -0.2]),
                       SmoothedGoalReward(2, goal=[1.0, 0.5], scale=0.4),
                       SparseGoalReward(2, goal=[1.0, 0.5], radius=0.4)):
            numeric = numerical_gradient(lambda v: float(reward(v)), z)
            assert max_abs_error(reward.grad(z), numeric) < 1e-4

    def test_sparse_goal_reward_rejects_bad_shape(self):
        """Test that the sparse goal reward needs a positive radius and a tail weight below 1."""
        with pytest.raises(ContractViolationError):
            SparseGoalReward(2, goal=[0.0, 0.0], radius=0.0)
        with pytest.raises(ContractViolationError):
            SparseGoalReward(2, goal=[0.0, 0.0], radius=0.1, tail=1.0)

    def test_finite_difference_std_fallback(self):
        """Test the base-class std Jacobian fallback on a model without a closed form."""

        class SquaredNoise(LinearGaussianDynamics):
            def std(self, z, a):
                return 0.1 + np.asarray(z) ** 2 + np.asarray(a) ** 2

            std_jacobians = GaussianDynamics.std_jacobians

        model = SquaredNoise(np.eye(2), np.eye(2))
        z, a = np.array([0.5, -1.0]), np.array([0.2, 0.3])
        jz, ja = model.std_jacobians(z, a)
        np.testing.assert_allclose(jz, np.diag(2 * z), atol=1e-6)
        np.testing.assert_allclose(ja, np.diag(2 * a), atol=1e-6)

    def test_nll_parameter_gradients(self):
        """Test the dynamics NLL parameter gradients on a few coordinates."""
        # Arrange
        rng = np.random.default_rng(5)
        model = MlpGaussianDynamics(2, 2, hidden=8, rng=rng)
        z, a = rng.standard_normal((6, 2)), rng.standard_normal((6, 2))
        z_next = z + a + 0.1 * rng.standard_normal((6, 2))

        # Act
        _, grads = model.nll_and_grads(z, a, z_next)

        # Assert
        for name in ("W1", "b2", "Wm", "Ws", "bs"):
            original = model.params[name].copy()

            def loss_of(flat):
                model.params[name] = flat.reshape(original.shape)
                return model.nll_and_grads(z, a, z_next)[0]

            numeric = numerical_gradient(loss_of, original.ravel())
            model.params[name] = original
            assert max_abs_error(grads[name].ravel(), numeric) < 1e-4, name

    def test_mse_parameter_gradients(self):
        """Test the reward MSE parameter gradients."""
        rng = np.random.default_rng(6)
        model = MlpReward(2, hidden=8, rng=rng)
        z, r = rng.standard_normal((5, 2)), rng.standard_normal(5)
        _, grads = model.mse_and_grads(z, r)
        for name in ("W1", "b1", "W2", "Wo", "bo"):
            original = model.params[name].copy()

            def loss_of(flat):
                model.params[name] = flat.reshape(original.shape)
                return model.mse_and_grads(z, r)[0]

            numeric = numerical_gradient(loss_of, original.ravel())
            model.params[name] = original
            assert max_abs_error(grads[name].ravel(), numeric) < 1e-4, name


class TestEpisodesAndBuffer(unittest.TestCase):
    """Test cases for Episode and ReplayBuffer."""

    def test_episode_length_mismatch(self):
        """Test that inconsistent episode arrays are rejected."""
        with self.assertRaises(ContractViolationError):
            Episode(np.zeros((3, 2)), np.zeros((3, 2)), np.zeros(3))

    def test_episode_total_reward(self):
        """Test length and total reward."""
        episode = Episode(np.zeros((4, 2)), np.zeros((3, 2)), np.array([1.0, 2.0, 3.0]), success=True)
        self.assertEqual(len(episode), 3)
        self.assertEqual(episode.total_reward, 6.0)

    def test_buffer_is_fifo(self):
        """Test that the oldest episodes are dropped at capacity."""
        buffer = ReplayBuffer(capacity=2)
        for value in (1.0, 2.0, 3.0):
            buffer.add(Episode(np.full((2, 1), value), np.zeros((1, 1)), [value]))
        self.assertEqual(len(buffer), 2)
        self.assertEqual(buffer.episodes[0].total_reward, 2.0)
        self.assertEqual(buffer.num_transitions, 2)

    def test_sample_transitions_shapes(self):
        """Test uniform transition sampling."""
        buffer = ReplayBuffer()
        for episode in _linear_episodes(3, np.random.default_rng(0)):
            buffer.add(episode)
        z, a, z_next, r = buffer.sample_transitions(16, np.random.default_rng(1))
        self.assertEqual(z.shape, (16, 2))
        self.assertEqual(a.shape, (16, 2))
        self.assertEqual(z_next.shape, (16, 2))
        self.assertEqual(r.shape, (16,))

    def test_training_on_empty_buffer_raises(self):
        """Test that training without data raises a contract error."""
        model = MlpGaussianDynamics(2, 2, hidden=8)
        with self.assertRaises(ContractViolationError):
            train_dynamics(ReplayBuffer(), model, 10, 1e-3, 8, np.random.default_rng(0))
        with self.assertRaises(ContractViolationError):
            train_reward(ReplayBuffer(), MlpReward(2, hidden=8), 10, 1e-3, 8, np.random.default_rng(0))


class TestTraining:
    """Test class for likelihood and regression training."""

    def test_dynamics_nll_decreases(self):
        """Test that Adam training lowers the transition NLL."""
        # Arrange
        rng = np.random.default_rng(0)
        buffer = ReplayBuffer()
        for episode in _linear_episodes(20, rng):
            buffer.add(episode)
        model = MlpGaussianDynamics(2, 2, hidden=32, rng=rng)
        before = train_dynamics(buffer, model, 0, 1e-3, 256, np.random.default_rng(1))

        # Act
        after = train_dynamics(buffer, model, 500, 3e-3, 64, np.random.default_rng(2))

        # Assert
        assert after < before

    def test_reward_mse_decreases_with_persistent_optimizer(self):
        """Test that reward training continues from a persistent optimizer."""
        rng = np.random.default_rng(0)
        buffer = ReplayBuffer()
        for episode in _linear_episodes(20, rng):
            buffer.add(episode)
        model = MlpReward(2, hidden=32, rng=rng)
        optimizer = AdamOptimizer(model.parameters(), lr=3e-3)
        initial = train_reward(buffer, model, 0, 3e-3, 512, np.random.default_rng(1), optimizer)
        train_reward(buffer, model, 200, 3e-3, 64, np.random.default_rng(2), optimizer)
        final = train_reward(buffer, model, 400, 3e-3, 64, np.random.default_rng(3), optimizer)
        assert optimizer.t == 600
        assert final < initial

    def test_constant_reward(self):
        """Test the constant reward and its zero gradient."""
        reward = ConstantReward(2, value=3.0)
        np.testing.assert_allclose(reward(np.zeros((4, 2))), 3.0)
        np.testing.assert_allclose(reward.grad(np.ones(2)), 0.0)
