#!/usr/bin/env python3
"""
Run the test suite under pytest-cov.

Coverage is measured over the `src` package and the `main.py` entry point.
A terminal summary is always printed; `--html DIR` also writes an HTML report
and `--fail-under N` turns a low total into a failing exit status.
"""

import argparse
import os
import sys

import pytest

ROOT_DIR = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def run_tests_with_coverage(html_dir=None, fail_under=None, slow=False):
    """
    Run all tests with coverage.

    Args:
        html_dir (str, optional): Directory for an HTML report. Defaults to None.
        fail_under (float, optional): Minimum total coverage in percent. Defaults to None.
        slow (bool, optional): Also run the timing studies. Defaults to False.

    Returns:
        int: The pytest exit status.
    """
    sys.path.insert(0, ROOT_DIR)
    if slow:
        os.environ["RUN_SLOW_TESTS"] = "1"

    args = [
        os.path.join(ROOT_DIR, "tests"),
        f"--cov={os.path.join(ROOT_DIR, 'src')}",
        "--cov=main",
        "--cov-report=term-missing",
    ]
    if html_dir:
        args.append(f"--cov-report=html:{html_dir}")
    if fail_under is not None:
        args.append(f"--cov-fail-under={fail_under}")

    status = pytest.main(args)
    if status == 0 and html_dir:
        print(f"\nCoverage report: {os.path.join(html_dir, 'index.html')}")
    return status


def parse_args():
    """Parse command-line arguments."""
    parser = argparse.ArgumentParser(description="Run the tests with coverage")
    parser.add_argument("--html", metavar="DIR", help="Write an HTML report to DIR")
    parser.add_argument("--fail-under", type=float, help="Fail if total coverage is below this percentage")
    parser.add_argument("--slow", action="store_true", help="Include the timing studies")
    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    sys.exit(run_tests_with_coverage(args.html, args.fail_under, args.slow))
