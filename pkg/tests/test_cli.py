#!/usr/bin/env python3
"""
Tests for the command-line interface.
"""

import os
import sys

import pytest

# Add parent directory to path to import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

import main
from src.core.harness import MANIFEST_FILE, PLAN_FILE
from src.core.settings import EnvSpec, ExperimentConfig, MpcConfig
from src.utils.config_loader import save_config
from src.utils.result_writer import read_manifest


def _write_plan_config(tmp_path):
    cfg = ExperimentConfig(planner="ilqr")
    cfg.env = EnvSpec(name="linear", params={"start": [1.0]})
    cfg.ilqr.reg_init = 0.0
    cfg.mpc = MpcConfig(horizon=3, replan_interval=3)
    path = str(tmp_path / "lqr.yaml")
    save_config(cfg, path)
    return path


class TestCli:
    """Test class for the CLI entry point."""

    def test_plan_command(self, tmp_path, capsys):
        """Test that the plan command overrides mode, seed and output directory."""
        out = str(tmp_path / "out")
        status = main.main(["plan", "--config", _write_plan_config(tmp_path), "--seed", "3", "--out", out])

        assert status == 0
        assert os.path.exists(os.path.join(out, PLAN_FILE))
        manifest = read_manifest(os.path.join(out, MANIFEST_FILE))
        assert manifest["seed"] == 3
        assert manifest["config"]["mode"] == "plan"
        assert "Results written to" in capsys.readouterr().out

    def test_missing_config(self, tmp_path, capsys):
        """Test that a missing configuration file exits with status 1."""
        status = main.main(["plan", "--config", str(tmp_path / "absent.yaml")])
        assert status == 1
        assert "Error" in capsys.readouterr().err

    def test_invalid_config(self, tmp_path):
        """Test that an invalid configuration exits with status 1."""
        path = tmp_path / "bad.yaml"
        path.write_text("latco:\n  particles: 1\n", encoding="utf-8")
        assert main.main(["train", "--config", str(path)]) == 1

    def test_preset_without_run(self, tmp_path, capsys):
        """Test that the preset command writes one file per configuration."""
        out = str(tmp_path / "lqr")
        assert main.main(["preset", "lqr_check", "--out", out]) == 0
        assert sorted(os.listdir(out)) == ["ilqr.yaml", "latco.yaml", "shooting_gd.yaml", "shooting_gn.yaml"]
        assert "Wrote 4 configurations" in capsys.readouterr().out

    def test_unknown_preset(self):
        """Test that argparse rejects unknown preset names."""
        with pytest.raises(SystemExit):
            main.main(["preset", "nope"])

    def test_no_command(self, capsys):
        """Test that running without a command prints help."""
        assert main.main([]) == 1
        assert "commands" in capsys.readouterr().out

    def test_version(self, capsys):
        """Test the version flag."""
        with pytest.raises(SystemExit) as excinfo:
            main.main(["--version"])
        assert excinfo.value.code == 0
        assert "LatCo Planning CLI v" in capsys.readouterr().out
