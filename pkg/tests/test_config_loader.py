#!/usr/bin/env python3
"""
Tests for reading and writing experiment configuration files.
"""

import json
import os
import sys
import tempfile
import unittest

import pytest

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.settings import ExperimentConfig
from src.utils.config_loader import (
    config_from_dict, config_to_dict, load_config, parse_config, save_config, serialize_config,
)
from src.utils.errors import ConfigurationError


class TestParseConfig(unittest.TestCase):
    """Test cases for parsing configuration documents."""

    def test_minimal_document_uses_defaults(self):
        """Test that omitted keys take the documented defaults."""
        cfg = parse_config("planner: latco\nenv: pointmass\n")
        self.assertEqual(cfg.env.name, "pointmass")
        self.assertEqual(cfg.latco.iterations, 200)
        self.assertEqual(cfg.latco.damping, 1e-3)
        self.assertEqual(cfg.latco.eps_dyn, 1e-4)
        self.assertEqual(cfg.latco.particles, 50)
        self.assertEqual(cfg.gd.iterations, 500)
        self.assertEqual(cfg.gd.learning_rate, 0.05)
        self.assertEqual(cfg.cem.population, 1000)
        self.assertEqual(cfg.mppi.temperature, 10.0)

    def test_empty_document(self):
        """Test that an empty document is the default configuration."""
        self.assertEqual(parse_config(""), ExperimentConfig())

    def test_unknown_key_names_its_path(self):
        """Test that unknown nested keys are rejected with a dotted path."""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("latco:\n  iteratons: 5\n")
        self.assertEqual(ctx.exception.path, "latco.iteratons")

    def test_unknown_planner(self):
        """Test that an unknown planner names the planner key."""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("planner: foo\n")
        self.assertIn("planner", str(ctx.exception))
        self.assertEqual(ctx.exception.path, "planner")

    def test_wrong_type(self):
        """Test that type mismatches are reported."""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("latco:\n  iterations: many\n")
        self.assertEqual(ctx.exception.path, "latco.iterations")
        with self.assertRaises(ConfigurationError):
            parse_config("mpc:\n  warm_start: 3\n")

    def test_optional_fields_are_typed(self):
        """Test that fields defaulting to None still check the type they are declared with."""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("train:\n  restarts: foo\n")
        self.assertEqual(ctx.exception.path, "train.restarts")
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("train:\n  seed_dataset: 12\n")
        self.assertEqual(ctx.exception.path, "train.seed_dataset")
        self.assertEqual(parse_config("train:\n  restarts: 3\n").train.restarts, 3)
        self.assertIsNone(parse_config("train:\n  restarts: null\n").train.restarts)
        self.assertEqual(parse_config("train:\n  seed_dataset: seeds.csv\n").train.seed_dataset, "seeds.csv")

    def test_exponent_without_dot(self):
        """Test that exponent literals YAML reads as strings are accepted as numbers."""
        cfg = parse_config("latco:\n  eps_dyn: 1e-6\n")
        self.assertEqual(cfg.latco.eps_dyn, 1e-6)

    def test_integral_float_for_int(self):
        """Test that 5.0 is accepted for an integer field but 5.5 is not."""
        self.assertEqual(parse_config("latco:\n  iterations: 5.0\n").latco.iterations, 5)
        with self.assertRaises(ConfigurationError):
            parse_config("latco:\n  iterations: 5.5\n")

    def test_invalid_value(self):
        """Test that semantic validation runs after parsing."""
        with self.assertRaises(ConfigurationError) as ctx:
            parse_config("latco:\n  particles: 1\n")
        self.assertEqual(ctx.exception.path, "latco.particles")
        with self.assertRaises(ConfigurationError):
            parse_config("mpc:\n  horizon: 10\n  replan_interval: 20\n")

    def test_ablation_shorthand(self):
        """Test the top-level ablation key."""
        cfg = config_from_dict({"ablation": "first_order"})
        self.assertEqual(cfg.latco.ablation, "first_order")
        with self.assertRaises(ConfigurationError):
            config_from_dict({"ablation": "bogus"})

    def test_env_parameters(self):
        """Test an environment with constructor parameters."""
        cfg = parse_config("env:\n  name: pointmass\n  params:\n    d: 2.0\n    sparse: true\n")
        self.assertEqual(cfg.env.params, {"d": 2.0, "sparse": True})

    def test_invalid_yaml(self):
        """Test that syntax errors are configuration errors."""
        with self.assertRaises(ConfigurationError):
            parse_config("latco: [unclosed\n")


class TestConfigFiles:
    """Test class for configuration files on disk."""

    def test_serialize_round_trip(self):
        """Test that serialized configurations parse back to equal objects."""
        cfg = ExperimentConfig(planner="mppi", seed=7)
        cfg.latco.eps_dyn = 1e-8
        cfg.train.restarts = 2
        cfg.env.params = {"d": 3.0, "start": [0.0, 0.5]}
        assert parse_config(serialize_config(cfg)) == cfg

    def test_save_and_load_yaml(self):
        """Test saving into a new directory and loading back."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, "nested", "run.yaml")
            cfg = ExperimentConfig(mode="plan", planner="ilqr")
            save_config(cfg, path)
            assert load_config(path) == cfg

    def test_load_json(self):
        """Test that JSON files are accepted."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, "run.json")
            with open(path, "w", encoding="utf-8") as f:
                json.dump({"planner": "cem", "cem": {"population": 50, "elites": 5}}, f)
            cfg = load_config(path)
        assert cfg.planner == "cem"
        assert cfg.cem.population == 50

    def test_missing_file(self):
        """Test that a missing file raises FileNotFoundError."""
        with pytest.raises(FileNotFoundError):
            load_config("/nonexistent/run.yaml")

    def test_unsupported_extension(self):
        """Test that other extensions are rejected."""
        with tempfile.TemporaryDirectory() as temp_dir:
            path = os.path.join(temp_dir, "run.toml")
            with open(path, "w", encoding="utf-8") as f:
                f.write("planner = 'latco'\n")
            with pytest.raises(ConfigurationError):
                load_config(path)

    def test_to_dict_is_plain(self):
        """Test that the snapshot only holds plain values."""
        data = config_to_dict(ExperimentConfig())
        assert data["latco"]["iterations"] == 200
        assert json.loads(json.dumps(data)) == data
