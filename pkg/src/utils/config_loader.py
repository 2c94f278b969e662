#!/usr/bin/env python3
"""
Config Loader Module

This module reads, validates and writes experiment configuration files.
Configurations are YAML documents (JSON is accepted too) whose keys mirror
the dataclasses of `src.core.settings`; missing keys take the defaults
declared there and unknown keys are rejected with their dotted path.
"""

import json
import logging
import os
from dataclasses import asdict, fields, is_dataclass
from typing import Any, Dict, Type, TypeVar, Union, get_args, get_origin, get_type_hints

import yaml

from src.core.settings import EnvSpec, ExperimentConfig
from src.utils.errors import ConfigurationError

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("config_loader")

T = TypeVar("T")


def _optional_template(annotation: Any) -> Any:
    """Zero value of X for an Optional[X] of a plain type, None otherwise."""
    if get_origin(annotation) is not Union:
        return None
    args = [arg for arg in get_args(annotation) if arg is not type(None)]
    if len(args) != 1 or args[0] not in (bool, int, float, str, list, dict):
        return None
    return args[0]()


def _check_value(value: Any, default: Any, path: str, annotation: Any = None) -> Any:
    if default is None:
        template = _optional_template(annotation)
        if value is None or template is None:
            return value
        return _check_value(value, template, path)
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"expected true or false, got {value!r}", path)
        return value
    if isinstance(default, (int, float)):
        # YAML 1.1 reads "1e-4" (no dot) as a string
        if isinstance(value, str):
            try:
                value = float(value)
            except ValueError:
                raise ConfigurationError(f"expected a number, got {value!r}", path)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"expected a number, got {value!r}", path)
        if isinstance(default, int) and not isinstance(value, int):
            if float(value).is_integer():
                return int(value)
            raise ConfigurationError(f"expected an integer, got {value!r}", path)
        return float(value) if isinstance(default, float) else value
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigurationError(f"expected a string, got {value!r}", path)
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            raise ConfigurationError(f"expected a list, got {value!r}", path)
        return value
    if isinstance(default, dict):
        if not isinstance(value, dict):
            raise ConfigurationError(f"expected a mapping, got {value!r}", path)
        return value
    return value


def _build(cls: Type[T], data: Any, path: str) -> T:
    """Instantiate dataclass `cls` from a mapping, recursing into nested dataclasses."""
    if not isinstance(data, dict):
        raise ConfigurationError(f"expected a mapping, got {data!r}", path)
    instance = cls()
    known = {f.name: f for f in fields(cls)}
    hints = get_type_hints(cls)
    for key, value in data.items():
        key_path = f"{path}.{key}" if path else str(key)
        if key not in known:
            raise ConfigurationError("unknown key", key_path)
        default = getattr(instance, key)
        if is_dataclass(default):
            value = _build(type(default), value, key_path)
        else:
            value = _check_value(value, default, key_path, hints.get(key))
        setattr(instance, key, value)
    return instance


def config_from_dict(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Build and validate an ExperimentConfig from a plain mapping.

    Two shorthands are accepted: `env: <name>` for an environment without
    parameters, and a top-level `ablation` that sets `latco.ablation`.

    Raises:
        ConfigurationError: For unknown keys, wrong types or invalid values.
    """
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigurationError("configuration must be a mapping")
    data = dict(data)
    if isinstance(data.get("env"), str):
        data["env"] = {"name": data["env"]}
    ablation = data.pop("ablation", None)
    cfg = _build(ExperimentConfig, data, "")
    if ablation is not None:
        cfg.latco.ablation = _check_value(ablation, "", "ablation")
    if not isinstance(cfg.env, EnvSpec):
        raise ConfigurationError("expected an environment descriptor", "env")
    cfg.validate()
    return cfg


def parse_config(text: str) -> ExperimentConfig:
    """
    Parse a YAML (or JSON, which is a subset) configuration document.

    Args:
        text (str): The document.

    Returns:
        ExperimentConfig: The validated configuration, defaults filled in.

    Raises:
        ConfigurationError: On syntax errors or invalid content.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as e:
        raise ConfigurationError(f"invalid YAML: {e}")
    return config_from_dict(data)


def load_config(path: str) -> ExperimentConfig:
    """
    Load a configuration file (.yaml, .yml or .json).

    Raises:
        FileNotFoundError: If the file does not exist.
        ConfigurationError: For unsupported extensions or invalid content.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Configuration file not found: {path}")
    file_ext = os.path.splitext(path)[1].lower()
    with open(path, "r", encoding="utf-8") as f:
        text = f.read()
    if file_ext == ".json":
        try:
            return config_from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"invalid JSON in {path}: {e}")
    if file_ext in (".yaml", ".yml"):
        return parse_config(text)
    raise ConfigurationError(f"unsupported configuration file format: {file_ext}")


def config_to_dict(cfg: ExperimentConfig) -> Dict[str, Any]:
    return asdict(cfg)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a configuration as YAML that `parse_config` reads back to an equal config."""
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False, default_flow_style=False)


def save_config(cfg: ExperimentConfig, path: str) -> None:
    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(serialize_config(cfg))
    logger.debug(f"Configuration saved to {path}")
