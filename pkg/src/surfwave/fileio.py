"""Deterministic text I/O helpers shared by the mesh writers and the run harness.

All floating point output goes through :data:`FLOAT_FMT` (17 significant
digits), which round-trips IEEE doubles bit-exactly and makes artifact files
hashable across runs.
"""

import csv
import hashlib

import numpy as np

FLOAT_FMT = "%.17g"


def fmt(x) -> str:
    """Format a scalar deterministically (floats via FLOAT_FMT)."""
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return FLOAT_FMT % float(x)


def write_csv(path, header, columns) -> None:
    """Write columns (sequences of equal length) as a CSV file with header."""
    columns = [np.asarray(c) for c in columns]
    n = len(columns[0]) if columns else 0
    if any(len(c) != n for c in columns):
        raise ValueError("CSV columns must have equal length")
    with open(path, "w", newline="") as f:
        f.write(",".join(header) + "\n")
        for i in range(n):
            f.write(",".join(fmt(c[i]) for c in columns) + "\n")


def read_csv(path) -> dict:
    """Read a CSV written by write_csv into a dict of float arrays."""
    with open(path, newline="") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader if row]
    data = {}
    for j, name in enumerate(header):
        data[name] = np.array([float(row[j]) for row in rows])
    return data


def write_keyvalues(path, items) -> None:
    """Write `key = value` lines (dict or list of pairs)."""
    pairs = items.items() if hasattr(items, "items") else items
    with open(path, "w") as f:
        for key, value in pairs:
            f.write(f"{key} = {value if isinstance(value, str) else fmt(value)}\n")


def read_keyvalues(path) -> dict:
    """Parse `key = value` lines; values stay strings, '#' starts a comment."""
    out = {}
    with open(path) as f:
        for raw in f:
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"malformed line in {path!s}: {raw.rstrip()!r}")
            key, value = line.split("=", 1)
            out[key.strip()] = value.strip()
    return out


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()
