"""Atomic file writes and deterministic CSV formatting."""
from __future__ import annotations

import json
import os

import numpy as np


def format_float(x) -> str:
    """17-significant-digit decimal form; empty string for masked values."""
    if x is np.ma.masked or x is None:
        return ""
    x = float(x)
    if x == 0.0:
        return "0"  # fold -0.0 into 0
    return format(x, ".17g")


def atomic_write_text(path, text: str):
    tmp = f"{path}.tmp-{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def atomic_write_json(path, obj):
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def write_csv(path, header, rows):
    """RFC-4180-style CSV, \\n line endings, floats at 17 significant digits."""
    lines = [",".join(header)]
    for row in rows:
        cells = []
        for cell in row:
            if isinstance(cell, str):
                cells.append(cell)
            elif isinstance(cell, (int, np.integer)):
                cells.append(str(int(cell)))
            else:
                cells.append(format_float(cell))
        lines.append(",".join(cells))
    atomic_write_text(path, "\n".join(lines) + "\n")
