#!/usr/bin/env python3
"""
Batch Processor Module

This module runs several experiment configurations, one experiment per
process. Each configuration file is loaded and executed independently; no
mutable state is shared between runs.
"""

import logging
import multiprocessing
import os
from typing import Dict, List, Optional, Sequence

import multiprocessing_logging

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("batch_processor")

_MP_HANDLER_INSTALLED = False


def _install_mp_logging() -> None:
    global _MP_HANDLER_INSTALLED
    if not _MP_HANDLER_INSTALLED:
        multiprocessing_logging.install_mp_handler()
        _MP_HANDLER_INSTALLED = True


class BatchProcessor:
    """
    Runs a list of experiment configuration files.

    Attributes:
        config_paths (List[str]): Configuration files, in run order.
        max_processes (int): Maximum number of concurrent processes.
        seed (Optional[int]): Seed override applied to every run.
        verbose (bool): Enable debug logging in the runs.
    """

    def __init__(self, config_paths: Sequence[str], max_processes: int = 2,
                 seed: Optional[int] = None, verbose: bool = False):
        """
        Initialize the BatchProcessor.

        Args:
            config_paths (Sequence[str]): Configuration files (YAML or JSON).
            max_processes (int, optional): Maximum number of concurrent processes. Defaults to 2.
            seed (Optional[int], optional): Seed override. Defaults to None.
            verbose (bool, optional): Debug logging. Defaults to False.

        Raises:
            FileNotFoundError: If a configuration file doesn't exist.
        """
        self.config_paths = list(config_paths)
        self.max_processes = max(1, int(max_processes))
        self.seed = seed
        self.verbose = verbose
        for path in self.config_paths:
            if not os.path.exists(path):
                raise FileNotFoundError(f"Configuration file not found: {path}")

    def process_config(self, config_path: str) -> bool:
        """
        Load and run a single configuration.

        Args:
            config_path (str): The configuration file.

        Returns:
            bool: True if the run finished with status 0, False otherwise.
        """
        try:
            from src.core.harness import run_experiment
            from src.utils.config_loader import load_config

            if self.verbose:
                logging.getLogger().setLevel(logging.DEBUG)
            cfg = load_config(config_path)
            if self.seed is not None:
                cfg.seed = self.seed
            logger.info(f"Running configuration: {config_path}")
            return run_experiment(cfg, verbose=False) == 0
        except Exception as e:
            logger.error(f"Error processing configuration {config_path}: {e}")
            return False

    def process_all(self) -> Dict[str, bool]:
        """
        Run every configuration.

        Returns:
            Dict[str, bool]: A dictionary mapping configuration paths to success status
        """
        results: Dict[str, bool] = {}
        if not self.config_paths:
            logger.warning("No configurations to run")
            return results

        logger.info(f"Running {len(self.config_paths)} configurations with {self.max_processes} processes")
        if self.max_processes > 1 and len(self.config_paths) > 1:
            _install_mp_logging()
            with multiprocessing.Pool(processes=min(self.max_processes, len(self.config_paths))) as pool:
                results_list = pool.map(self.process_config, self.config_paths)
            for path, result in zip(self.config_paths, results_list):
                results[path] = result
        else:
            for path in self.config_paths:
                results[path] = self.process_config(path)

        success_count = sum(1 for result in results.values() if result)
        logger.info(f"Batch processing complete: {success_count}/{len(self.config_paths)} runs succeeded")
        return results


def failed_runs(results: Dict[str, bool]) -> List[str]:
    return [path for path, ok in results.items() if not ok]
