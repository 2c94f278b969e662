#!/usr/bin/env python3
"""
Test runner script for the LatCo planning package.

This script runs the test suite with pytest. Long statistical studies are
skipped unless --slow is given.
"""

import os
import sys
import argparse
import logging

import pytest

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger(__name__)

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def run_tests(test_modules=None, verbose=False, slow=False):
    """
    Run the tests.

    Args:
        test_modules (list, optional): List of test modules to run. Defaults to None (all tests).
        verbose (bool, optional): Whether to run tests in verbose mode. Defaults to False.
        slow (bool, optional): Also run the slow acceptance studies. Defaults to False.

    Returns:
        bool: True if all tests passed, False otherwise.
    """
    test_dir = os.path.join(ROOT_DIR, "tests")
    sys.path.insert(0, ROOT_DIR)

    if slow:
        os.environ["RUN_SLOW_TESTS"] = "1"

    if test_modules is None:
        targets = [test_dir]
    else:
        targets = [os.path.join(test_dir, f"{name}.py") for name in test_modules]
        missing = [t for t in targets if not os.path.exists(t)]
        for target in missing:
            logger.error(f"Test module not found: {target}")
        targets = [t for t in targets if t not in missing]
        if not targets:
            return False

    args = targets + (["-v"] if verbose else ["-q"])
    return pytest.main(args) == 0


def parse_args():
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(
        description="Run tests for the LatCo planning package"
    )

    parser.add_argument(
        "--modules", "-m",
        nargs="+",
        help="Test modules to run (e.g., test_btlm)"
    )

    parser.add_argument(
        "--verbose", "-v",
        action="store_true",
        help="Run tests in verbose mode"
    )

    parser.add_argument(
        "--slow",
        action="store_true",
        help="Include the slow acceptance studies"
    )

    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    success = run_tests(args.modules, args.verbose, args.slow)
    sys.exit(0 if success else 1)
