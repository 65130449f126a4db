"""Run persistence: per-cycle particle tables, sidecars, manifest, results.

Particle tables are CSV (one row per particle, transformed and natural
coordinates side by side) so downstream tools never re-derive
transforms; run metadata rides in JSON sidecars. All floats are written
in shortest round-trip form, so a read-back swarm is bit-identical to
the written one.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ContractError

MANIFEST_FILENAME = "manifest.json"
RESULT_FILENAME = "result.json"
_CYCLE_RE = re.compile(r"^cycle_(\d{3,})\.csv$")


def snapshot_basename(cycle: int) -> str:
    return f"cycle_{cycle:03d}"


def _fmt(x: float) -> str:
    return repr(float(x))


def snapshot_header(space) -> list[str]:
    return (
        ["particle"]
        + list(space.names)
        + [f"{name}_natural" for name in space.names]
        + ["log_lik", "weight"]
    )


def write_particle_table(csv_path, space, thetas, log_liks, weights) -> Path:
    """Write one particle table (snapshot CSV schema) to `csv_path`."""
    csv_path = Path(csv_path)
    thetas = np.asarray(thetas, dtype=float)
    log_liks = np.asarray(log_liks, dtype=float)
    weights = np.asarray(weights, dtype=float)
    n = thetas.shape[0]
    if log_liks.shape != (n,) or weights.shape != (n,):
        raise ContractError("thetas, log_liks and weights disagree in length")
    try:
        with open(csv_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(snapshot_header(space))
            for i in range(n):
                natural = space.to_natural(thetas[i])
                writer.writerow(
                    [i]
                    + [_fmt(x) for x in thetas[i]]
                    + [_fmt(x) for x in natural]
                    + [_fmt(log_liks[i]), _fmt(weights[i])]
                )
    except OSError as exc:
        raise ConfigurationError(f"cannot write {csv_path}: {exc}") from exc
    return csv_path


def write_cycle_snapshot(directory, cycle, space, thetas, log_liks, weights, sidecar):
    """Write one swarm table plus its JSON sidecar; returns the CSV path."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    csv_path = write_particle_table(
        directory / f"{snapshot_basename(cycle)}.csv", space, thetas, log_liks, weights
    )
    try:
        with open(directory / f"{snapshot_basename(cycle)}.json", "w") as handle:
            json.dump(sidecar, handle, indent=2)
            handle.write("\n")
    except OSError as exc:
        raise ConfigurationError(f"cannot write snapshot under {directory}: {exc}") from exc
    return csv_path


def read_cycle_snapshot(directory, cycle, space):
    """Read back one snapshot; returns (thetas, log_liks, weights, sidecar)."""
    directory = Path(directory)
    csv_path = directory / f"{snapshot_basename(cycle)}.csv"
    rows = read_sample_csv(csv_path)
    expected = snapshot_header(space)
    if rows["header"] != expected:
        raise ConfigurationError(
            f"{csv_path} header does not match the parameter space "
            f"(expected {expected}, found {rows['header']})"
        )
    d = space.dim
    data = rows["data"]
    thetas = data[:, 1 : 1 + d]
    log_liks = data[:, 1 + 2 * d]
    weights = data[:, 2 + 2 * d]
    with open(directory / f"{snapshot_basename(cycle)}.json") as handle:
        sidecar = json.load(handle)
    return thetas, log_liks, weights, sidecar


def read_sample_csv(path):
    """Read any snapshot-style CSV into {'header': [...], 'data': (n, c) array}."""
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"no such sample file: {path}")
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise ConfigurationError(f"{path} is empty")
        data = [[float(v) for v in row] for row in reader]
    return {"header": header, "data": np.array(data, dtype=float)}


def completed_cycles(directory) -> list[int]:
    """Cycle indices with both a table and a sidecar present, ascending."""
    directory = Path(directory)
    found = []
    if not directory.is_dir():
        return found
    for entry in directory.iterdir():
        match = _CYCLE_RE.match(entry.name)
        if match and entry.with_suffix(".json").exists():
            found.append(int(match.group(1)))
    return sorted(found)


def write_manifest(directory, manifest: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / MANIFEST_FILENAME
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2)
        handle.write("\n")
    return path


def read_manifest(directory) -> dict:
    path = Path(directory) / MANIFEST_FILENAME
    if not path.exists():
        raise ConfigurationError(f"no manifest found in {directory}; nothing to resume")
    with open(path) as handle:
        return json.load(handle)


def write_result_summary(directory, payload: dict) -> Path:
    directory = Path(directory)
    path = directory / RESULT_FILENAME
    with open(path, "w") as handle:
        json.dump(payload, handle, indent=2)
        handle.write("\n")
    return path
