#!/usr/bin/env python3
"""
Harness Module

This module runs experiments described by configuration files and persists
their results. One configuration describes one run: a single planning call
(`plan`), the online training loop (`train`) or the solver benchmark
(`bench_solver`). Presets generate the configuration files of whole studies.
"""

import copy
import logging
import os
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np

from src import __version__
from src.core.btlm import scaling_ratios, solver_benchmark
from src.core.control import make_planner, online_train
from src.core.dynamics import MlpGaussianDynamics
from src.core.latco import PlanResult
from src.core.settings import EnvSpec, ExperimentConfig
from src.core.shooting import lqr_open_loop
from src.core.worlds import LinearQuadraticEnv, make_env
from src.utils.checkpoint import save_checkpoint
from src.utils.config_loader import config_to_dict, parse_config, save_config, serialize_config
from src.utils.errors import ConfigurationError
from src.utils.result_writer import write_csv, write_manifest

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("harness")

__all__ = [
    "RunManifest", "run_experiment", "parse_config", "serialize_config",
    "PRESETS", "preset", "preset_entries", "write_preset",
]

MANIFEST_FILE = "manifest.json"
LEARNING_CURVE_FILE = "learning_curve.csv"
DIAGNOSTICS_FILE = "diagnostics.csv"
PLAN_FILE = "plan.csv"
CHECKPOINT_FILE = "model.ckpt"
BENCHMARK_FILE = "solver_benchmark.csv"

LEARNING_CURVE_COLUMNS = ("episode", "env_steps", "return", "success", "plan_violation", "wall_ms")
DIAGNOSTICS_COLUMNS = ("iter", "reward_sum", "max_violation", "mean_lambda_dyn", "mean_lambda_act")
BENCHMARK_COLUMNS = ("T", "block_size", "solver", "wall_ms")


def _timestamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S%z")


@dataclass
class RunManifest:
    """
    Record of one run, written before any result file and rewritten when the run ends.

    Attributes:
        config (Dict[str, Any]): Resolved configuration snapshot.
        version (str): Package version.
        seed (int): Master seed.
        started_at (str): Start timestamp.
        finished_at (Optional[str]): End timestamp, None while running.
        status (str): "running", "ok" or "error".
        error (Optional[str]): Error message of a failed run.
        files (List[str]): Result files written, relative to the output directory.
        summary (Dict[str, Any]): Headline numbers of the run.
    """

    config: Dict[str, Any]
    version: str = __version__
    seed: int = 0
    started_at: str = field(default_factory=_timestamp)
    finished_at: Optional[str] = None
    status: str = "running"
    error: Optional[str] = None
    files: List[str] = field(default_factory=list)
    summary: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _plan_rows(result: PlanResult) -> List[Dict[str, Any]]:
    rows = []
    for t, action in enumerate(np.atleast_2d(result.actions)):
        row: Dict[str, Any] = {"t": t}
        row.update({f"a{i}": float(v) for i, v in enumerate(action)})
        rows.append(row)
    return rows


def _run_plan(cfg: ExperimentConfig, out_dir: str, manifest: RunManifest) -> None:
    env = make_env(cfg.env)
    state = env.reset(seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    planner = make_planner(cfg.planner, cfg)
    result = planner(env.oracle_dynamics(), env.oracle_reward(), state, cfg.mpc.horizon, rng, env.action_bound)
    logger.info(f"{cfg.planner}: planned return {result.planned_return:.6g}, "
                f"max violation {result.max_violation:.3g}")

    write_csv(os.path.join(out_dir, DIAGNOSTICS_FILE), result.diagnostics.to_rows(), DIAGNOSTICS_COLUMNS)
    plan_columns = ["t"] + [f"a{i}" for i in range(env.action_dim)]
    write_csv(os.path.join(out_dir, PLAN_FILE), _plan_rows(result), plan_columns)
    manifest.files.extend([DIAGNOSTICS_FILE, PLAN_FILE])
    manifest.summary.update({
        "planned_return": float(result.planned_return),
        "max_violation": float(result.max_violation),
        "first_action": [float(v) for v in np.atleast_2d(result.actions)[0]],
    })
    if isinstance(env, LinearQuadraticEnv):
        reference = lqr_open_loop(env.A, env.B, env.Q, env.R, state, cfg.mpc.horizon)
        manifest.summary["riccati_max_abs_error"] = float(np.max(np.abs(result.actions - reference)))


def _run_train(cfg: ExperimentConfig, out_dir: str, manifest: RunManifest, verbose: bool) -> None:
    env = make_env(cfg.env)
    rng = np.random.default_rng(cfg.seed)
    planner = make_planner(cfg.planner, cfg)
    outcome = online_train(env, planner, cfg, rng=rng, verbose=verbose)

    write_csv(os.path.join(out_dir, LEARNING_CURVE_FILE), outcome.curve, LEARNING_CURVE_COLUMNS)
    rows = outcome.last_plan.diagnostics.to_rows() if outcome.last_plan is not None else []
    write_csv(os.path.join(out_dir, DIAGNOSTICS_FILE), rows, DIAGNOSTICS_COLUMNS)
    manifest.files.extend([LEARNING_CURVE_FILE, DIAGNOSTICS_FILE])
    if isinstance(outcome.model, MlpGaussianDynamics):
        save_checkpoint(os.path.join(out_dir, CHECKPOINT_FILE), outcome.model, outcome.reward_model)
        manifest.files.append(CHECKPOINT_FILE)

    returns = [row["return"] for row in outcome.curve]
    manifest.summary.update({
        "episodes": len(outcome.curve),
        "mean_return": float(np.mean(returns)) if returns else 0.0,
        "success_rate": float(np.mean([row["success"] for row in outcome.curve])) if returns else 0.0,
    })


def _run_bench(cfg: ExperimentConfig, out_dir: str, manifest: RunManifest, verbose: bool) -> None:
    rows = solver_benchmark(cfg.bench_horizons, cfg.bench_block_size, seed=cfg.seed,
                            damping=cfg.latco.damping, verbose=verbose)
    write_csv(os.path.join(out_dir, BENCHMARK_FILE), rows, BENCHMARK_COLUMNS)
    manifest.files.append(BENCHMARK_FILE)
    manifest.summary["scaling_ratios"] = scaling_ratios(rows)


def run_experiment(cfg: ExperimentConfig, verbose: bool = False) -> int:
    """
    Run one experiment and write its results to `cfg.output_dir`.

    The manifest is written first; result files follow only once the run has
    produced them, so a failed run leaves the manifest (with the error) and
    no partial CSVs.

    Args:
        cfg (ExperimentConfig): The experiment.
        verbose (bool): Show progress bars.

    Returns:
        int: 0 on success, 1 on any error.
    """
    out_dir = cfg.output_dir
    try:
        cfg.validate()
        os.makedirs(out_dir, exist_ok=True)
    except (OSError, ConfigurationError) as e:
        logger.error(f"Cannot start run in {out_dir}: {e}")
        return 1

    manifest = RunManifest(config=config_to_dict(cfg), seed=cfg.seed)
    manifest_path = os.path.join(out_dir, MANIFEST_FILE)
    try:
        write_manifest(manifest_path, manifest.to_dict())
    except OSError as e:
        logger.error(f"Cannot write manifest to {out_dir}: {e}")
        return 1

    logger.info(f"Starting {cfg.mode} run ({cfg.planner} on {cfg.env.name}, seed {cfg.seed}) in {out_dir}")
    try:
        if cfg.mode == "plan":
            _run_plan(cfg, out_dir, manifest)
        elif cfg.mode == "train":
            _run_train(cfg, out_dir, manifest, verbose)
        else:
            _run_bench(cfg, out_dir, manifest, verbose)
        manifest.status = "ok"
    except Exception as e:
        logger.error(f"Run failed: {type(e).__name__}: {e}")
        manifest.status = "error"
        manifest.error = f"{type(e).__name__}: {e}"

    manifest.finished_at = _timestamp()
    write_manifest(manifest_path, manifest.to_dict())
    return 0 if manifest.status == "ok" else 1


# ---------------------------------------------------------------------------
# Presets
# ---------------------------------------------------------------------------

def _base(mode: str = "train", **env_params) -> ExperimentConfig:
    cfg = ExperimentConfig(mode=mode)
    cfg.env = EnvSpec(name=env_params.pop("name"), params=env_params)
    return cfg


def _lottery() -> List[Tuple[str, ExperimentConfig]]:
    entries = []
    for planner in ("latco_gaussian", "latco", "cem", "shooting_gd"):
        cfg = _base(name="lottery")
        cfg.planner = planner
        cfg.train.seed_episodes = 200
        cfg.train.episodes = 50
        cfg.mpc.horizon = 12
        cfg.mpc.replan_interval = 4
        cfg.mpc.max_steps = 30
        entries.append((planner, cfg))
    return entries


def _parametric() -> List[Tuple[str, ExperimentConfig]]:
    entries = []
    for d in (0.5, 1.0, 2.0, 3.0, 4.0):
        for planner in ("latco", "cem", "shooting_gd"):
            cfg = _base(name="pointmass", d=d, sparse=True, max_steps=100)
            cfg.planner = planner
            cfg.train.oracle_models = True
            cfg.train.episodes = 20
            cfg.mpc.horizon = 30
            cfg.mpc.replan_interval = 30
            cfg.mpc.max_steps = 100
            entries.append((f"d{d:g}_{planner}", cfg))
    return entries


def _ablations() -> List[Tuple[str, ExperimentConfig]]:
    entries = []
    variants = [(ablation, ablation) for ablation in ("none", "no_relaxation", "fixed_multipliers", "first_order")]
    variants.append(("first_order_equal_budget", "first_order"))
    for label, ablation in variants:
        cfg = _base(name="pointmass", d=2.0, sparse=True, max_steps=100)
        cfg.planner = "latco"
        cfg.latco.ablation = ablation
        # A rollout plan is already feasible; start every variant from a noisy one.
        cfg.latco.init = "perturbed"
        if label == "first_order_equal_budget":
            cfg.latco.first_order_steps = cfg.latco.iterations
        cfg.train.oracle_models = True
        cfg.train.episodes = 20
        cfg.mpc.horizon = 30
        cfg.mpc.replan_interval = 30
        cfg.mpc.max_steps = 100
        entries.append((label, cfg))
    return entries


def _lqr_check() -> List[Tuple[str, ExperimentConfig]]:
    entries = []
    for planner in ("latco", "shooting_gd", "shooting_gn", "ilqr"):
        cfg = _base(mode="plan", name="linear", start=[1.0])
        cfg.planner = planner
        # The softplus residual has almost no Gauss-Newton curvature at an interior optimum.
        cfg.latco.damping = 2.0
        cfg.latco.iterations = 300
        cfg.latco.eps_dyn = 1e-8
        cfg.gn.damping = 2.0
        cfg.ilqr.reg_init = 0.0
        cfg.mpc.horizon = 3
        cfg.mpc.replan_interval = 3
        entries.append((planner, cfg))
    return entries


def _bench_solver() -> List[Tuple[str, ExperimentConfig]]:
    return [("bench", ExperimentConfig(mode="bench_solver"))]


PRESETS = {
    "lottery": _lottery,
    "parametric": _parametric,
    "ablations": _ablations,
    "lqr_check": _lqr_check,
    "bench_solver": _bench_solver,
}


def preset_entries(name: str, out_dir: str = "results") -> List[Tuple[str, ExperimentConfig]]:
    """
    Labelled configurations of a study, each writing to `<out_dir>/<name>/<label>`.

    Raises:
        ConfigurationError: For unknown preset names.
    """
    if name not in PRESETS:
        raise ConfigurationError(f"unknown preset {name!r}, expected one of {sorted(PRESETS)}", "preset")
    entries = PRESETS[name]()
    for label, cfg in entries:
        cfg.output_dir = os.path.join(out_dir, name, label)
        cfg.validate()
    return entries


def preset(name: str) -> List[ExperimentConfig]:
    """The configurations of a study, in a fixed order."""
    return [cfg for _, cfg in preset_entries(name)]


def write_preset(name: str, out_dir: str, seed: Optional[int] = None) -> List[str]:
    """
    Write the configuration files of a study to `out_dir`.

    Each configuration's results go to `<out_dir>/results/<label>`.

    Args:
        name (str): Preset name.
        out_dir (str): Directory receiving `<label>.yaml` files.
        seed (Optional[int]): Seed override applied to every configuration.

    Returns:
        List[str]: Paths of the written files, in preset order.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = []
    for label, cfg in preset_entries(name):
        cfg = copy.deepcopy(cfg)
        cfg.output_dir = os.path.join(out_dir, "results", label)
        if seed is not None:
            cfg.seed = seed
        path = os.path.join(out_dir, f"{label}.yaml")
        save_config(cfg, path)
        paths.append(path)
    logger.info(f"Wrote {len(paths)} {name} configurations to {out_dir}")
    return paths
