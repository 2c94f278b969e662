#!/usr/bin/env python3
"""
Tests for running experiments, presets and result files.
"""

import os
import sys
import tempfile
import unittest

import pytest

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.core.harness import (
    BENCHMARK_FILE, CHECKPOINT_FILE, DIAGNOSTICS_FILE, LEARNING_CURVE_FILE, MANIFEST_FILE, PLAN_FILE,
    preset, preset_entries, run_experiment, write_preset,
)
from src.core.settings import CemConfig, EnvSpec, ExperimentConfig, MpcConfig
from src.utils.checkpoint import load_checkpoint
from src.utils.config_loader import load_config
from src.utils.errors import ConfigurationError
from src.utils.result_writer import format_cell, read_csv, read_manifest, write_csv


def _plan_config(out_dir, planner="ilqr"):
    cfg = ExperimentConfig(mode="plan", planner=planner, output_dir=out_dir)
    cfg.env = EnvSpec(name="linear", params={"start": [1.0]})
    cfg.ilqr.reg_init = 0.0
    cfg.mpc = MpcConfig(horizon=3, replan_interval=3)
    return cfg


def _train_config(out_dir):
    cfg = ExperimentConfig(mode="train", planner="cem", output_dir=out_dir)
    cfg.env = EnvSpec(name="pointmass", params={"d": 1.0, "sparse": False, "max_steps": 10})
    cfg.cem = CemConfig(iterations=3, population=30, elites=5, sampled=False)
    cfg.train.episodes = 2
    cfg.train.train_iterations = 3
    cfg.train.batch_size = 16
    cfg.mpc = MpcConfig(horizon=5, replan_interval=5, max_steps=10)
    return cfg


class TestRunExperiment(unittest.TestCase):
    """Test cases for single runs."""

    def setUp(self):
        """Set up test fixtures."""
        self.temp_dir = tempfile.TemporaryDirectory()
        self.out = os.path.join(self.temp_dir.name, "run")

    def tearDown(self):
        """Tear down test fixtures."""
        self.temp_dir.cleanup()

    def test_plan_mode(self):
        """Test a single planning call on the linear-quadratic environment."""
        self.assertEqual(run_experiment(_plan_config(self.out)), 0)

        manifest = read_manifest(os.path.join(self.out, MANIFEST_FILE))
        self.assertEqual(manifest["status"], "ok")
        self.assertIsNotNone(manifest["finished_at"])
        self.assertEqual(manifest["files"], [DIAGNOSTICS_FILE, PLAN_FILE])
        self.assertEqual(manifest["config"]["planner"], "ilqr")
        self.assertLess(manifest["summary"]["riccati_max_abs_error"], 1e-6)

        plan = read_csv(os.path.join(self.out, PLAN_FILE))
        self.assertEqual([row["t"] for row in plan], ["0", "1", "2"])
        self.assertEqual(list(plan[0]), ["t", "a0"])

    def test_train_mode_with_learned_models(self):
        """Test that a training run writes its curve, diagnostics and checkpoint."""
        self.assertEqual(run_experiment(_train_config(self.out)), 0)

        manifest = read_manifest(os.path.join(self.out, MANIFEST_FILE))
        self.assertEqual(manifest["files"], [LEARNING_CURVE_FILE, DIAGNOSTICS_FILE, CHECKPOINT_FILE])
        self.assertEqual(manifest["summary"]["episodes"], 2)

        curve = read_csv(os.path.join(self.out, LEARNING_CURVE_FILE))
        self.assertEqual(len(curve), 2)
        self.assertEqual(list(curve[0]),
                         ["episode", "env_steps", "return", "success", "plan_violation", "wall_ms"])
        self.assertEqual(curve[0]["wall_ms"], "0.0")

        dynamics, reward = load_checkpoint(os.path.join(self.out, CHECKPOINT_FILE))
        self.assertEqual(dynamics.state_dim, 2)
        self.assertEqual(reward.state_dim, 2)

    def test_same_seed_same_files(self):
        """Test that reruns reproduce the result files byte for byte."""
        contents = []
        for name in ("a", "b"):
            out = os.path.join(self.temp_dir.name, name)
            self.assertEqual(run_experiment(_train_config(out)), 0)
            with open(os.path.join(out, LEARNING_CURVE_FILE), encoding="utf-8") as f:
                curve = f.read()
            with open(os.path.join(out, DIAGNOSTICS_FILE), encoding="utf-8") as f:
                contents.append((curve, f.read()))
        self.assertEqual(contents[0], contents[1])

    def test_bench_mode(self):
        """Test the solver benchmark rows."""
        cfg = ExperimentConfig(mode="bench_solver", output_dir=self.out, bench_horizons=[2, 4], bench_block_size=2)
        self.assertEqual(run_experiment(cfg), 0)

        rows = read_csv(os.path.join(self.out, BENCHMARK_FILE))
        self.assertEqual(len(rows), 4)
        self.assertEqual({row["solver"] for row in rows}, {"block", "dense"})
        self.assertEqual({row["T"] for row in rows}, {"2", "4"})

    def test_failed_run_leaves_manifest_only(self):
        """Test that a runtime error is recorded without partial result files."""
        cfg = _plan_config(self.out)
        cfg.env = EnvSpec(name="pointmass", params={"d": -1.0})

        self.assertEqual(run_experiment(cfg), 1)

        manifest = read_manifest(os.path.join(self.out, MANIFEST_FILE))
        self.assertEqual(manifest["status"], "error")
        self.assertIn("ConfigurationError", manifest["error"])
        self.assertEqual(sorted(os.listdir(self.out)), [MANIFEST_FILE])

    def test_unwritable_output_directory(self):
        """Test that an output path occupied by a file fails cleanly."""
        path = os.path.join(self.temp_dir.name, "occupied")
        with open(path, "w", encoding="utf-8") as f:
            f.write("x")
        self.assertEqual(run_experiment(_plan_config(path)), 1)

    def test_invalid_configuration(self):
        """Test that invalid configurations are rejected before anything is written."""
        cfg = _plan_config(self.out)
        cfg.planner = "foo"
        self.assertEqual(run_experiment(cfg), 1)
        self.assertFalse(os.path.exists(self.out))


class TestPresets:
    """Test class for study presets."""

    @pytest.mark.parametrize("name,count", [
        ("lottery", 4), ("parametric", 15), ("ablations", 5), ("lqr_check", 4), ("bench_solver", 1),
    ])
    def test_preset_sizes(self, name, count):
        """Test the number of configurations per study."""
        assert len(preset(name)) == count

    def test_parametric_labels(self):
        """Test the labels and output directories of the goal-distance sweep."""
        entries = preset_entries("parametric", "out")
        labels = [label for label, _ in entries]
        assert labels[:3] == ["d0.5_latco", "d0.5_cem", "d0.5_shooting_gd"]
        assert entries[-1][1].output_dir == os.path.join("out", "parametric", "d4_shooting_gd")
        assert entries[-1][1].env.params["d"] == 4.0

    def test_ablation_variants(self):
        """Test that each ablation run selects its variant and starts from a perturbed plan."""
        entries = preset_entries("ablations")
        assert [cfg.latco.ablation for _, cfg in entries] == [
            "none", "no_relaxation", "fixed_multipliers", "first_order", "first_order"]
        assert {cfg.latco.init for _, cfg in entries} == {"perturbed"}
        equal_budget = dict(entries)["first_order_equal_budget"]
        assert equal_budget.latco.first_order_steps == equal_budget.latco.iterations

    def test_lqr_check_is_single_plan(self):
        """Test that the linear-quadratic check plans once per solver."""
        configs = preset("lqr_check")
        assert {cfg.mode for cfg in configs} == {"plan"}
        assert [cfg.planner for cfg in configs] == ["latco", "shooting_gd", "shooting_gn", "ilqr"]

    def test_unknown_preset(self):
        """Test that unknown presets point at the preset key."""
        with pytest.raises(ConfigurationError) as excinfo:
            preset("nope")
        assert excinfo.value.path == "preset"

    def test_write_preset(self, tmp_path):
        """Test that written preset files load back with the overrides applied."""
        paths = write_preset("lqr_check", str(tmp_path), seed=9)

        assert [os.path.basename(p) for p in paths] == [
            "latco.yaml", "shooting_gd.yaml", "shooting_gn.yaml", "ilqr.yaml"]
        cfg = load_config(paths[0])
        assert cfg.seed == 9
        assert cfg.latco.damping == 2.0
        assert cfg.output_dir == os.path.join(str(tmp_path), "results", "latco")


class TestResultWriter:
    """Test class for CSV formatting."""

    def test_format_cell(self):
        """Test the cell encoding of each value type."""
        assert format_cell(None) == ""
        assert format_cell(True) == "1"
        assert format_cell(3) == "3"
        assert format_cell(0.1) == "0.1"
        assert format_cell(1e-12) == "1e-12"
        assert format_cell("cem") == "cem"

    def test_csv_keeps_column_order(self, tmp_path):
        """Test that columns follow the given order and missing values are empty."""
        path = str(tmp_path / "table.csv")
        count = write_csv(path, [{"b": 2, "a": 1.5}, {"a": 0.25}], ["a", "b"])

        assert count == 2
        assert (tmp_path / "table.csv").read_text(encoding="utf-8") == "a,b\n1.5,2\n0.25,\n"
        assert read_csv(path) == [{"a": "1.5", "b": "2"}, {"a": "0.25", "b": ""}]
