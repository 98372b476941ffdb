"""Flat-file I/O: headered CSV with 17 significant digits, TOML configs, JSON sidecars."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .quadratic import QuadraticProblem
from .renorm import SpectralMeasure

__all__ = [
    "fmt",
    "write_csv",
    "read_csv",
    "write_json",
    "load_toml",
    "load_problem",
    "write_measure",
    "read_measure",
]


def fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        v = float(value)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(value)


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_csv(path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, [row for row in reader]


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path, data: dict) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonable(data), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def load_toml(path) -> dict:
    with open(path, "rb") as fh:
        return tomllib.load(fh)


def load_problem(path) -> QuadraticProblem:
    """Problem file with ``eigenvalues = [...]`` and optional ``x_star = [...]``."""
    data = load_toml(path)
    if "eigenvalues" not in data:
        raise ValueError(f"{path}: missing 'eigenvalues'")
    return QuadraticProblem.from_eigenvalues(data["eigenvalues"], data.get("x_star"))


def write_measure(path, nu: SpectralMeasure) -> Path:
    return write_csv(path, ("lambda", "mass"), zip(nu.lambdas, nu.masses))


def read_measure(path) -> SpectralMeasure:
    header, rows = read_csv(path)
    if header[:2] != ["lambda", "mass"]:
        raise ValueError(f"{path}: expected columns lambda,mass")
    lam = [float(r[0]) for r in rows]
    w = [float(r[1]) for r in rows]
    return SpectralMeasure.from_atoms(lam, w)
