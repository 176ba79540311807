"""Flat-file export of traces, grids and excitation records.

Plain text tables: '#'-prefixed `key = value` metadata lines followed by
tab-separated data rows. Floats are written with repr-exact precision so
parsing a written file reproduces the object bit for bit.
"""

from __future__ import annotations

import os
from typing import Iterable

import numpy as np

from .cascade import ExcitationRecord
from .qrt import CorrelationGrid, SpectrumTrace

__all__ = [
    "write_spectrum",
    "read_spectrum",
    "write_grid",
    "read_grid",
    "write_excitation",
    "read_excitation",
    "write_manifest",
]

FLOAT_FMT = "%.17g"


def _fmt(x: float) -> str:
    return FLOAT_FMT % x


def _write_table(path: str, meta: dict, columns: list[str], rows: Iterable[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in meta.items():
            fh.write(f"# {key} = {value}\n")
        fh.write("# columns: " + "\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_fmt(x) for x in row) + "\n")


def _read_table(path: str) -> tuple[dict, np.ndarray]:
    meta: dict[str, str] = {}
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                body = line[1:].strip()
                if "=" in body:
                    key, _, value = body.partition("=")
                    meta[key.strip()] = value.strip()
                continue
            rows.append([float(x) for x in line.split("\t")])
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, 0))
    return meta, data


def write_spectrum(path: str, trace: SpectrumTrace, extra_meta: dict | None = None) -> None:
    meta = {
        "readout_time": _fmt(trace.readout_time),
        "normalization": trace.normalization,
    }
    if extra_meta:
        meta.update(extra_meta)
    _write_table(path, meta, ["omega", "intensity"], zip(trace.omegas, trace.intensities))


def read_spectrum(path: str) -> SpectrumTrace:
    meta, data = _read_table(path)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return SpectrumTrace(
        readout_time=float(meta["readout_time"]),
        omegas=data[:, 0],
        intensities=data[:, 1],
        normalization=meta.get("normalization", "raw"),
    )


def write_grid(path: str, grid: CorrelationGrid, extra_meta: dict | None = None) -> None:
    meta = {"T": _fmt(grid.T), "N": str(grid.N)}
    if extra_meta:
        meta.update(extra_meta)
    times = grid.times

    def rows():
        for m in range(grid.N + 1):
            t1 = times[m]
            row = grid.values[m]
            for n in range(grid.N + 1):
                yield (t1, times[n], row[n].real, row[n].imag)

    _write_table(path, meta, ["t1", "t2", "re", "im"], rows())


def read_grid(path: str) -> CorrelationGrid:
    meta, data = _read_table(path)
    n = int(meta["N"])
    t = float(meta["T"])
    if data.shape[0] != (n + 1) ** 2:
        raise ValueError(f"{path}: expected {(n + 1) ** 2} rows, found {data.shape[0]}")
    values = (data[:, 2] + 1j * data[:, 3]).reshape(n + 1, n + 1)
    return CorrelationGrid(t, n, values)


def write_excitation(path: str, record: ExcitationRecord, extra_meta: dict | None = None) -> None:
    meta = {"omega_b": _fmt(record.omega_b), "method": record.method}
    if extra_meta:
        meta.update(extra_meta)
    _write_table(
        path,
        meta,
        ["time", "p_excited", "stderr"],
        zip(record.times, record.p_excited, record.stderr),
    )


def read_excitation(path: str) -> ExcitationRecord:
    meta, data = _read_table(path)
    if data.size == 0:
        raise ValueError(f"{path}: no data rows")
    return ExcitationRecord(
        omega_b=float(meta["omega_b"]),
        times=data[:, 0],
        p_excited=data[:, 1],
        stderr=data[:, 2],
        method=meta.get("method", "mcwf"),
    )


def write_manifest(path: str, entries: dict) -> None:
    """Ordered `key = value` manifest; deterministic for a fixed config."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {value}\n")


def ensure_dir(path: str) -> None:
    os.makedirs(path, exist_ok=True)
