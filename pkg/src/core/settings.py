#!/usr/bin/env python3
"""
Settings Module

This module is the defaults table of the project. Every planner, controller and
experiment configuration is a dataclass declared here, and every default value
lives in exactly one place: the field defaults below.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

from src.utils.errors import ConfigurationError

PLANNER_NAMES = ("latco", "latco_gaussian", "cem", "mppi", "shooting_gd", "shooting_gn", "ilqr")
ABLATIONS = ("none", "no_relaxation", "fixed_multipliers", "first_order")
INITS = ("rollout", "zero", "perturbed")
MODES = ("train", "plan", "bench_solver")


def _require_positive(path: str, **values: float) -> None:
    for name, value in values.items():
        if value is None or value <= 0:
            raise ConfigurationError(f"must be positive, got {value!r}", f"{path}.{name}" if path else name)


@dataclass
class LMConfig:
    """Levenberg-Marquardt settings (fixed damping, no accept/reject test)."""

    damping: float = 1e-3

    def validate(self, path: str = "lm") -> None:
        _require_positive(path, damping=self.damping)


@dataclass
class LatcoConfig:
    """
    Settings for deterministic and Gaussian LatCo.

    Attributes:
        iterations (int): LM iterations K of deterministic LatCo.
        eps_dyn (float): Dynamics violation threshold.
        eps_act (float): Action-bound violation threshold.
        dual_lr (float): Multiplier step alpha.
        dual_eta (float): Multiplier stabilizer eta.
        lambda_dyn_init (float): Initial dynamics multiplier.
        lambda_act_init (float): Initial action multiplier.
        damping (float): LM damping.
        dual_period (int): Multiplier update period in iterations.
        restarts (int): Independent reinitializations per planning call.
        init (str): Plan initialization, "rollout" (feasible), "zero" or "perturbed"
            (rollout states plus Gaussian noise of std init_noise).
        init_noise (float): State noise of the "perturbed" initialization.
        feasibility_margin (float): Multipliers aim at margin * eps rather than eps.
        extra_iterations (int): Iterations allowed past the budget while a plan is
            still above eps_dyn or eps_act.
        gaussian_iterations (int): LM iterations of Gaussian LatCo.
        gaussian_eps_dyn (float): Moment-matching threshold of Gaussian LatCo.
        particles (int): Reparametrized particles per timestep.
        ablation (str): One of "none", "no_relaxation", "fixed_multipliers", "first_order".
    """

    iterations: int = 200
    eps_dyn: float = 1e-4
    eps_act: float = 1e-4
    dual_lr: float = 0.1
    dual_eta: float = 0.01
    lambda_dyn_init: float = 1.0
    lambda_act_init: float = 1.0
    damping: float = 1e-3
    dual_period: int = 1
    restarts: int = 4
    init: str = "rollout"
    init_noise: float = 0.1
    feasibility_margin: float = 0.1
    extra_iterations: int = 100
    gaussian_iterations: int = 50
    gaussian_eps_dyn: float = 1e-2
    particles: int = 50
    ablation: str = "none"
    no_relaxation_lambda: float = 1e8
    fixed_lambda_dyn: float = 8.0
    fixed_lambda_act: float = 16.0
    first_order_steps: int = 5000
    first_order_dual_period: int = 5
    first_order_dual_lr: float = 1.5
    first_order_lr: float = 0.05
    lambda_min: float = 1e-8
    lambda_max: float = 1e12

    def validate(self, path: str = "latco") -> None:
        _require_positive(
            path,
            iterations=self.iterations, eps_dyn=self.eps_dyn, eps_act=self.eps_act,
            dual_lr=self.dual_lr, dual_eta=self.dual_eta, lambda_dyn_init=self.lambda_dyn_init,
            lambda_act_init=self.lambda_act_init, damping=self.damping, dual_period=self.dual_period,
            restarts=self.restarts, gaussian_iterations=self.gaussian_iterations,
            gaussian_eps_dyn=self.gaussian_eps_dyn, first_order_steps=self.first_order_steps,
            first_order_dual_period=self.first_order_dual_period,
            first_order_dual_lr=self.first_order_dual_lr, first_order_lr=self.first_order_lr,
        )
        if self.particles < 2:
            raise ConfigurationError("at least 2 particles are needed for a standard deviation", f"{path}.particles")
        if self.ablation not in ABLATIONS:
            raise ConfigurationError(f"unknown ablation {self.ablation!r}, expected one of {ABLATIONS}", f"{path}.ablation")
        if not 0.0 < self.feasibility_margin <= 1.0:
            raise ConfigurationError("must lie in (0, 1]", f"{path}.feasibility_margin")
        if self.extra_iterations < 0:
            raise ConfigurationError("must be non-negative", f"{path}.extra_iterations")
        if self.init_noise < 0:
            raise ConfigurationError("must be non-negative", f"{path}.init_noise")
        if self.init not in INITS:
            raise ConfigurationError(f"unknown init {self.init!r}", f"{path}.init")

    @property
    def lm(self) -> LMConfig:
        return LMConfig(damping=self.damping)


@dataclass
class CemConfig:
    """Cross-entropy method settings."""

    iterations: int = 100
    population: int = 1000
    elites: int = 100
    init_std: float = 1.0
    sampled: bool = True

    def validate(self, path: str = "cem") -> None:
        _require_positive(path, iterations=self.iterations, population=self.population,
                          elites=self.elites, init_std=self.init_std)
        if self.elites > self.population:
            raise ConfigurationError("elites must not exceed population", f"{path}.elites")


@dataclass
class MppiConfig(CemConfig):
    """MPPI settings: CEM fields plus the softmax temperature."""

    temperature: float = 10.0

    def validate(self, path: str = "mppi") -> None:
        super().validate(path)
        _require_positive(path, temperature=self.temperature)


@dataclass
class GdConfig:
    """Shooting gradient ascent (Adam) with dual descent on the action bounds."""

    iterations: int = 500
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    dual_period: int = 5
    eps_act: float = 1e-4
    dual_lr: float = 0.1
    dual_eta: float = 0.01
    lambda_act_init: float = 1.0

    def validate(self, path: str = "gd") -> None:
        _require_positive(path, iterations=self.iterations, learning_rate=self.learning_rate,
                          beta1=self.beta1, beta2=self.beta2, dual_period=self.dual_period,
                          eps_act=self.eps_act)


@dataclass
class GnConfig:
    """Shooting Gauss-Newton settings."""

    iterations: int = 100
    damping: float = 1e-3
    eps_act: float = 1e-4
    dual_lr: float = 0.1
    dual_eta: float = 0.01
    lambda_act_init: float = 1.0

    def validate(self, path: str = "gn") -> None:
        _require_positive(path, iterations=self.iterations, damping=self.damping, eps_act=self.eps_act)


@dataclass
class IlqrConfig:
    """iLQR settings: regularizer schedule and backtracking line search."""

    max_iterations: int = 50
    reg_init: float = 1.0
    reg_factor: float = 2.0
    reg_min: float = 1e-6
    reg_max: float = 1e10
    line_search: List[float] = field(default_factory=lambda: [1.0, 0.5, 0.25, 0.125, 0.0625, 0.03125, 0.015625])
    tolerance: float = 1e-9

    def validate(self, path: str = "ilqr") -> None:
        _require_positive(path, max_iterations=self.max_iterations, reg_factor=self.reg_factor,
                          reg_max=self.reg_max)
        if self.reg_init < 0:
            raise ConfigurationError("must be non-negative", f"{path}.reg_init")
        if not self.line_search or any(step <= 0 for step in self.line_search):
            raise ConfigurationError("line search steps must be positive", f"{path}.line_search")


@dataclass
class MpcConfig:
    """
    Receding-horizon execution settings.

    Attributes:
        horizon (int): Planning horizon H.
        replan_interval (int): T_cache, counted in planned actions.
        max_steps (int): Episode budget T_tot in environment steps.
        action_repeat (int): Environment steps per planned action.
        warm_start (bool): Reuse the shifted previous plan as the initial actions.
    """

    horizon: int = 30
    replan_interval: int = 30
    max_steps: int = 150
    action_repeat: int = 1
    warm_start: bool = False

    def validate(self, path: str = "mpc") -> None:
        _require_positive(path, horizon=self.horizon, replan_interval=self.replan_interval,
                          max_steps=self.max_steps, action_repeat=self.action_repeat)
        if not (self.replan_interval <= self.horizon <= self.max_steps):
            raise ConfigurationError("require 1 <= replan_interval <= horizon <= max_steps", path)


@dataclass
class TrainLoopConfig:
    """
    Online model-learning loop settings.

    Attributes:
        episodes (int): Episodes to collect.
        train_iterations (int): Model-update iterations after every episode (It).
        batch_size (int): Transitions per model-update minibatch.
        learning_rate (float): Adam step size for model training.
        restarts (Optional[int]): Planner restarts; None uses the planner default.
        buffer_capacity (int): Replay buffer capacity in episodes.
        seed_episodes (int): Size of the generated seed dataset (0 disables it).
        seed_dataset (Optional[str]): Episode trace CSV used to seed the buffer.
        pretrain_iterations (int): Model-update iterations on the seed data.
        oracle_models (bool): Plan with the environment's ground-truth model, no learning.
    """

    episodes: int = 50
    train_iterations: int = 15
    batch_size: int = 64
    learning_rate: float = 1e-3
    restarts: Optional[int] = None
    buffer_capacity: int = 1000
    seed_episodes: int = 0
    seed_dataset: Optional[str] = None
    pretrain_iterations: int = 2000
    oracle_models: bool = False

    def validate(self, path: str = "train") -> None:
        _require_positive(path, train_iterations=self.train_iterations, batch_size=self.batch_size,
                          learning_rate=self.learning_rate, buffer_capacity=self.buffer_capacity)
        for name in ("episodes", "seed_episodes", "pretrain_iterations"):
            if getattr(self, name) < 0:
                raise ConfigurationError("must be non-negative", f"{path}.{name}")
        if self.restarts is not None and self.restarts < 1:
            raise ConfigurationError("must be at least 1", f"{path}.restarts")


@dataclass
class EnvSpec:
    """Environment descriptor: a registered name plus constructor parameters."""

    name: str = "pointmass"
    params: Dict[str, Any] = field(default_factory=dict)


@dataclass
class ExperimentConfig:
    """
    Full description of one run; presets emit these as YAML files.

    Attributes:
        mode (str): "train" (online loop), "plan" (single planning call) or "bench_solver".
        env (EnvSpec): Environment descriptor.
        planner (str): Planner name.
        seed (int): Master seed.
        output_dir (str): Result directory.
        record_wall_time (bool): Write measured times into the wall_ms column.
        bench_horizons (List[int]): Horizons swept by the solver benchmark.
        bench_block_size (int): Block size of the solver benchmark.
    """

    mode: str = "train"
    env: EnvSpec = field(default_factory=EnvSpec)
    planner: str = "latco"
    seed: int = 0
    output_dir: str = "results"
    record_wall_time: bool = False
    latco: LatcoConfig = field(default_factory=LatcoConfig)
    cem: CemConfig = field(default_factory=CemConfig)
    mppi: MppiConfig = field(default_factory=MppiConfig)
    gd: GdConfig = field(default_factory=GdConfig)
    gn: GnConfig = field(default_factory=GnConfig)
    ilqr: IlqrConfig = field(default_factory=IlqrConfig)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    train: TrainLoopConfig = field(default_factory=TrainLoopConfig)
    bench_horizons: List[int] = field(default_factory=lambda: [20, 40, 80, 160])
    bench_block_size: int = 12

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ConfigurationError(f"unknown mode {self.mode!r}, expected one of {MODES}", "mode")
        if self.planner not in PLANNER_NAMES:
            raise ConfigurationError(f"unknown planner {self.planner!r}, expected one of {PLANNER_NAMES}", "planner")
        if not isinstance(self.env.name, str) or not self.env.name:
            raise ConfigurationError("environment name is required", "env.name")
        self.latco.validate("latco")
        self.cem.validate("cem")
        self.mppi.validate("mppi")
        self.gd.validate("gd")
        self.gn.validate("gn")
        self.ilqr.validate("ilqr")
        self.mpc.validate("mpc")
        self.train.validate("train")
        if self.bench_block_size <= 0:
            raise ConfigurationError("must be positive", "bench_block_size")
        if any(h <= 0 for h in self.bench_horizons):
            raise ConfigurationError("horizons must be positive", "bench_horizons")
