"""File output: legacy VTK meshes and fields, CSV tables, JSON reports."""
import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from ..core.discretization import Field
from ..core.errors import InvalidSpecError
from ..core.geometry import BoundaryKind, Mesh
from ..core.utils import fmt

logger = logging.getLogger(__name__)

FIELD_HEADER = ["node", "x", "y", "value"]


def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if x is None:
        return ""
    return fmt(x)


def write_table(path: Path, header: list[str], rows: Iterable[Iterable]) -> Path:
    """CSV with a header row; floats in fixed scientific notation, None as an empty cell."""
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(x) for x in row])
    logger.debug("wrote %s", path)
    return path


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, "r", newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader, None) or []
        return header, [row for row in reader if row]


def write_field_csv(field: Field, path: Path) -> Path:
    mesh = field.mesh
    rows = ((i, x, y, v) for i, ((x, y), v) in enumerate(zip(mesh.nodes, field.values)))
    return write_table(path, FIELD_HEADER, rows)


def read_field_csv(path: Path) -> tuple[np.ndarray, np.ndarray]:
    """(node coordinates, values) of a CSV written by ``write_field_csv``."""
    header, rows = read_table(path)
    if header != FIELD_HEADER:
        raise InvalidSpecError(f"{path}: unexpected header {header}")
    data = np.array([[float(x) for x in row[1:4]] for row in rows], dtype=float).reshape(-1, 3)
    return data[:, :2], data[:, 2]


def _vtk_points(mesh: Mesh) -> list[str]:
    lines = [f"POINTS {mesh.n_nodes} double"]
    lines += [f"{fmt(x)} {fmt(y)} {fmt(0.0)}" for x, y in mesh.nodes]
    return lines


def write_vtk(mesh: Mesh, path: Path, point_data: Mapping[str, np.ndarray] | None = None,
              title: str = "field") -> Path:
    """Legacy ASCII VTK 3.0 unstructured grid of triangles (cell type 5)."""
    path = Path(path)
    lines = ["# vtk DataFile Version 3.0", title[:250], "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines += _vtk_points(mesh)
    n = mesh.n_triangles
    lines.append(f"CELLS {n} {4 * n}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {n}")
    lines += ["5"] * n
    if point_data:
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        for name, values in point_data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (mesh.n_nodes,):
                raise InvalidSpecError(f"point data {name!r} has {values.shape}, expected ({mesh.n_nodes},)")
            lines.append(f"SCALARS {name} double 1")
            lines.append("LOOKUP_TABLE default")
            lines += [fmt(v) for v in values]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    logger.debug("wrote %s (%d cells)", path, n)
    return path


def write_boundary_vtk(mesh: Mesh, path: Path) -> Path:
    """Companion line mesh of the boundary edges (cell type 3).

    CELL_DATA ``tag`` is +segment for Dirichlet edges and -segment for Neumann edges.
    """
    path = Path(path)
    n = len(mesh.boundary_edges)
    lines = ["# vtk DataFile Version 3.0", "boundary", "ASCII", "DATASET UNSTRUCTURED_GRID"]
    lines += _vtk_points(mesh)
    lines.append(f"CELLS {n} {3 * n}")
    lines += [f"2 {a} {b}" for a, b in mesh.boundary_edges]
    lines.append(f"CELL_TYPES {n}")
    lines += ["3"] * n
    lines.append(f"CELL_DATA {n}")
    lines.append("SCALARS tag int 1")
    lines.append("LOOKUP_TABLE default")
    lines += [str(t.segment if t.kind == BoundaryKind.DIRICHLET else -t.segment) for t in mesh.edge_tags]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def export_field(field: Field, format: str, path: Path, name: str = "u") -> Path:
    """Write a field as VTK (POINT_DATA scalar) or CSV ("node,x,y,value")."""
    kind = format.lower()
    if kind == "vtk":
        return write_vtk(field.mesh, path, {name: field.values}, title=name)
    if kind == "csv":
        return write_field_csv(field, path)
    raise InvalidSpecError(f"unknown export format {format!r}")


def _plain(obj):
    """JSON-ready copy: floats rounded to 9 significant digits, non-finite as null."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return float(fmt(x)) if math.isfinite(x) else None
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


def write_json(path: Path, data: dict) -> Path:
    """Deterministic report: fixed key order as given, fixed float precision."""
    path = Path(path)
    text = json.dumps(_plain(data), indent=2, ensure_ascii=False)
    path.write_text(text + "\n", encoding="utf-8")
    logger.debug("wrote %s", path)
    return path
