"""Run logs as CSV, solutions as mesh/coefficient pairs or legacy VTK."""

from __future__ import annotations

import csv
from contextlib import contextmanager
import os
from pathlib import Path
import tempfile

import numpy as np

from .driver import GenerationRecord, RunLog, StepRecord
from .errors import InvalidInputError
from .fespace import FeFunction, FeSpace, read_coefficients, write_coefficients
from .mesh import read_mesh, write_mesh

CSV_COLUMNS = ["N", "elements", "dofs", "eta", "res_norm", "energy", "minimax_steps", "sigma"]
STEP_COLUMNS = ["N", "k", "energy_before", "energy_after", "res_norm", "t", "dv_norm", "s", "m",
                "duality_error"]
_INT_COLUMNS = {"N", "elements", "dofs", "minimax_steps", "k", "m"}


@contextmanager
def atomic_path(path):
    """Yield a temporary path next to ``path``; rename over it on success."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _fmt(name, value):
    if name in _INT_COLUMNS:
        return str(int(value))
    return format(float(value), ".17g")


def _write_rows(rows, columns, path):
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(columns)
            for row in rows:
                writer.writerow([_fmt(c, getattr(row, c)) for c in columns])


def write_csv(log: RunLog, path, allow_empty: bool = False) -> None:
    """One row per generation, 17 significant digits, LF endings.

    ``allow_empty`` writes only the header for a run that failed early.
    """
    if not log.records and not allow_empty:
        raise InvalidInputError("run log has no generation records")
    _write_rows(log.records, CSV_COLUMNS, path)


def write_steps_csv(log: RunLog, path) -> None:
    _write_rows(log.steps, STEP_COLUMNS, path)


def _read_rows(path, cls, columns):
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != columns:
            raise InvalidInputError(f"{path}: unexpected header {reader.fieldnames}")
        return [
            cls(**{c: (int(row[c]) if c in _INT_COLUMNS else float(row[c])) for c in columns})
            for row in reader
        ]


def read_csv(path) -> RunLog:
    return RunLog(records=_read_rows(path, GenerationRecord, CSV_COLUMNS), status="loaded")


def read_steps_csv(path) -> list:
    return _read_rows(path, StepRecord, STEP_COLUMNS)


def write_solution(u: FeFunction, stem) -> tuple[Path, Path]:
    """Write ``<stem>.mesh`` and ``<stem>.sol`` (one free-vertex coefficient per line)."""
    stem = Path(stem)
    mesh_path, sol_path = stem.with_suffix(".mesh"), stem.with_suffix(".sol")
    with atomic_path(mesh_path) as tmp:
        write_mesh(u.space.mesh, tmp)
    with atomic_path(sol_path) as tmp:
        write_coefficients(u, tmp)
    return mesh_path, sol_path


def read_solution(path) -> FeFunction:
    """Read a solution from ``<stem>.sol`` (or the stem) and its sibling mesh file."""
    path = Path(path)
    sol_path = path if path.suffix == ".sol" else path.with_suffix(".sol")
    mesh_path = sol_path.with_suffix(".mesh")
    if not mesh_path.exists():
        raise InvalidInputError(f"mesh file {mesh_path} not found for {sol_path}")
    space = FeSpace(read_mesh(mesh_path))
    return read_coefficients(space, sol_path)


def write_vtk(u: FeFunction, path, name: str = "u") -> None:
    """Legacy ASCII unstructured grid with the nodal field as POINT_DATA."""
    mesh = u.space.mesh
    values = u.full()
    lines = [
        "# vtk DataFile Version 3.0",
        "lmmg solution",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_vertices} double",
    ]
    lines += [f"{x!r} {y!r} 0.0" for x, y in mesh.vertices.tolist()]
    lines.append(f"CELLS {mesh.n_elements} {4 * mesh.n_elements}")
    lines += [f"3 {i} {j} {k}" for i, j, k in mesh.elements.tolist()]
    lines.append(f"CELL_TYPES {mesh.n_elements}")
    lines += ["5"] * mesh.n_elements  # VTK_TRIANGLE
    lines += [f"POINT_DATA {mesh.n_vertices}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [repr(v) for v in values.tolist()]
    with atomic_path(path) as tmp:
        with open(tmp, "w", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def read_vtk_point_data(path) -> tuple[int, np.ndarray]:
    """Return ``(cell_count, point_values)`` from a file written by :func:`write_vtk`."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    cells = next(int(line.split()[1]) for line in lines if line.startswith("CELLS"))
    start = next(i for i, line in enumerate(lines) if line.startswith("LOOKUP_TABLE")) + 1
    return cells, np.array([float(v) for v in lines[start:] if v.strip()])


def export_solution(u: FeFunction, fmt: str, path):
    if fmt == "native":
        return write_solution(u, path)
    if fmt == "vtk":
        path = Path(path)
        if path.suffix != ".vtk":
            path = path.with_suffix(".vtk")
        write_vtk(u, path)
        return (path,)
    raise InvalidInputError(f"unknown export format {fmt!r}")
