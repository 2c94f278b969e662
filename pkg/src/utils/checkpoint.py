#!/usr/bin/env python3
"""
Checkpoint Module

This module saves and loads learned models as versioned, line-oriented text.
The layout is documented in docs/CHECKPOINT_FORMAT.md.
"""

import logging
import os
from typing import Dict, List, Tuple

import numpy as np

from src.core.dynamics import MlpGaussianDynamics, MlpReward
from src.utils.errors import ContractViolationError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("checkpoint")

HEADER = "LATCO-CHECKPOINT 1"


def _model_lines(role: str, model) -> List[str]:
    if isinstance(model, MlpGaussianDynamics):
        lines = [f"model {role} MlpGaussianDynamics",
                 f"meta state_dim {model.state_dim}",
                 f"meta action_dim {model.action_dim}",
                 f"meta hidden {model.hidden}"]
    elif isinstance(model, MlpReward):
        lines = [f"model {role} MlpReward",
                 f"meta state_dim {model.state_dim}",
                 f"meta hidden {model.hidden}"]
    else:
        raise ContractViolationError(f"cannot checkpoint model of type {type(model).__name__}")
    for name, value in model.parameters().items():
        value = np.asarray(value, dtype=float)
        shape = " ".join(str(s) for s in value.shape)
        lines.append(f"param {name} {value.ndim} {shape}")
        lines.append(" ".join("%.17g" % v for v in value.ravel()))
    lines.append("end")
    return lines


def save_checkpoint(path: str, dynamics, reward) -> None:
    """
    Write the dynamics and reward models to `path`.

    Args:
        path (str): Destination file; its directory must exist.
        dynamics (MlpGaussianDynamics): Learned dynamics model.
        reward (MlpReward): Learned reward model.

    Raises:
        ContractViolationError: If either model is not a learned network.
    """
    lines = [HEADER]
    lines.extend(_model_lines("dynamics", dynamics))
    lines.extend(_model_lines("reward", reward))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")
    logger.debug(f"Checkpoint written to {path}")


def _parse_model(kind: str, meta: Dict[str, int], params: Dict[str, np.ndarray]):
    if kind == "MlpGaussianDynamics":
        model = MlpGaussianDynamics(meta["state_dim"], meta["action_dim"], hidden=meta["hidden"])
    elif kind == "MlpReward":
        model = MlpReward(meta["state_dim"], hidden=meta["hidden"])
    else:
        raise ContractViolationError(f"unknown model type {kind!r} in checkpoint")
    missing = set(model.parameters()) - set(params)
    if missing:
        raise ContractViolationError(f"checkpoint is missing parameters {sorted(missing)}")
    model.load_parameters(params)
    return model


def load_checkpoint(path: str) -> Tuple[MlpGaussianDynamics, MlpReward]:
    """
    Read a checkpoint written by `save_checkpoint`.

    Returns:
        Tuple[MlpGaussianDynamics, MlpReward]: The restored models.

    Raises:
        FileNotFoundError: If the file does not exist.
        ContractViolationError: On a wrong header or malformed content.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Checkpoint not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        lines = [line.rstrip("\n") for line in f]
    if not lines or lines[0] != HEADER:
        raise ContractViolationError(f"{path}: not a checkpoint (expected header {HEADER!r})")

    models = {}
    i = 1
    try:
        while i < len(lines):
            if not lines[i].strip():
                i += 1
                continue
            _, role, kind = lines[i].split()
            i += 1
            meta: Dict[str, int] = {}
            params: Dict[str, np.ndarray] = {}
            while lines[i] != "end":
                fields = lines[i].split()
                if fields[0] == "meta":
                    meta[fields[1]] = int(fields[2])
                    i += 1
                elif fields[0] == "param":
                    ndim = int(fields[2])
                    shape = tuple(int(s) for s in fields[3:3 + ndim])
                    values = np.array([float(v) for v in lines[i + 1].split()], dtype=float)
                    params[fields[1]] = values.reshape(shape)
                    i += 2
                else:
                    raise ContractViolationError(f"{path}: unexpected line {lines[i]!r}")
            i += 1
            models[role] = _parse_model(kind, meta, params)
    except ContractViolationError:
        raise
    except (IndexError, ValueError) as e:
        raise ContractViolationError(f"{path}: malformed checkpoint ({e})")

    if "dynamics" not in models or "reward" not in models:
        raise ContractViolationError(f"{path}: checkpoint needs a dynamics and a reward model")
    return models["dynamics"], models["reward"]
