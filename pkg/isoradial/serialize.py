"""
Files on disk: configurations, JSON summaries and CSV tables

Output is deterministic: no wall-clock fields, sorted keys where order is not
meaningful, fixed float formatting from `repr`.
"""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
from functools import lru_cache
from importlib import metadata as importlib_metadata
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .lattice import lattice_from_dict
from .rcm import BoundaryConditions, Configuration

CONFIG_FORMAT = "isoradial-configuration/1"


def configuration_to_dict(cfg, bc=None, q=None, seed=None):
    lat = cfg.graph
    return {
        "format": CONFIG_FORMAT,
        "lattice": lat.to_dict(),
        "lattice_digest": lat.digest(),
        "bc": None if bc is None else bc.to_dict(),
        "q": q,
        "seed": seed,
        "num_edges": int(lat.num_edges),
        "bits": np.packbits(cfg.open.astype(np.uint8)).tobytes().hex(),
    }


def configuration_from_dict(data):
    """Rebuild (configuration, boundary conditions, header) from `configuration_to_dict` output."""
    if data.get("format") != CONFIG_FORMAT:
        raise ParameterError(f"unsupported configuration format {data.get('format')!r}")
    lat = lattice_from_dict(data["lattice"])
    if lat.digest() != data["lattice_digest"]:
        raise ParameterError("lattice digest does not match the stored lattice description")
    raw = np.frombuffer(bytes.fromhex(data["bits"]), dtype=np.uint8)
    state = np.unpackbits(raw)[: data["num_edges"]].astype(bool)
    bc = None if data.get("bc") is None else BoundaryConditions.from_dict(data["bc"])
    return Configuration(lat, state), bc, {k: data.get(k) for k in ("q", "seed")}


def save_configuration(path, cfg, bc=None, q=None, seed=None):
    return write_json(path, configuration_to_dict(cfg, bc=bc, q=q, seed=seed))


def load_configuration(path):
    with open(path) as f:
        return configuration_from_dict(json.load(f))


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _jsonable(value.tolist())
    if isinstance(value, (np.bool_,)):
        return bool(value)
    if isinstance(value, np.integer):
        return int(value)
    if isinstance(value, np.floating):
        return float(value)
    if isinstance(value, Path):
        return str(value)
    return value


def write_json(path, data):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as f:
        json.dump(_jsonable(data), f, indent=2)
        f.write("\n")
    return path


def read_json(path):
    with open(path) as f:
        return json.load(f)


def write_csv(path, rows, fieldnames=None):
    """One dict per row; columns in first-seen order unless given."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    rows = [_jsonable(r) for r in rows]
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            for key in row:
                if key not in fieldnames:
                    fieldnames.append(key)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)
    return path


def read_csv(path):
    with open(path, newline="") as f:
        return list(csv.DictReader(f))


def spec_hash(data):
    """SHA-256 of the canonical JSON of an experiment description."""
    return hashlib.sha256(json.dumps(_jsonable(data), sort_keys=True).encode()).hexdigest()


@lru_cache(maxsize=1)
def git_describe():
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True,
            text=True,
            timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


@lru_cache(maxsize=1)
def package_version():
    try:
        return importlib_metadata.version("isoradial-rcm")
    except importlib_metadata.PackageNotFoundError:
        return "0+unknown"
