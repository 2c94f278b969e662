#!/usr/bin/env python3
"""
Result Writer Module

This module persists run results: CSV tables with a fixed column order and
the JSON run manifest. Floats are written with `repr`, so a rerun with the
same configuration and seed reproduces the files byte for byte.
"""

import csv
import json
import logging
import os
from typing import Any, Dict, Iterable, Mapping, Sequence

import numpy as np

# Configure logging
logging.basicConfig(
    level=logging.INFO,
    format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
)
logger = logging.getLogger("result_writer")


def format_cell(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_csv(path: str, rows: Iterable[Mapping[str, Any]], columns: Sequence[str]) -> int:
    """
    Write `rows` to `path` with a header line of `columns`.

    Args:
        path (str): Destination file.
        rows: Mappings holding at least the listed columns.
        columns: Column order.

    Returns:
        int: Number of data rows written.
    """
    count = 0
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([format_cell(row.get(column)) for column in columns])
            count += 1
    logger.debug(f"Wrote {count} rows to {path}")
    return count


def read_csv(path: str) -> list:
    """Read a CSV written by `write_csv` back as a list of string dictionaries."""
    with open(path, "r", encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f))


def write_manifest(path: str, manifest: Dict[str, Any]) -> None:
    """Write the manifest JSON atomically (temporary file, then rename)."""
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(manifest, f, indent=2, sort_keys=False, default=str)
        f.write("\n")
    os.replace(tmp, path)


def read_manifest(path: str) -> Dict[str, Any]:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)
