"""File formats: plain-text meshes, legacy VTK, record CSV and SVG plots."""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .mesh import MeshError, TriMesh, make_mesh

CSV_SCHEMA = "hdgcontrol-records/1"
CSV_COLUMNS = ("iter", "n_elem", "n_dof", "eta_s", "eta_as", "eta", "E", "iota",
               "fp_iters", "seconds")
_INT_COLUMNS = {"iter", "n_elem", "n_dof", "fp_iters"}


# -- mesh text format ---------------------------------------------------------------

def write_mesh(mesh: TriMesh, path) -> None:
    """``nv nt`` header, ``x y`` per vertex, ``i j k r`` per triangle."""
    lines = [f"{mesh.n_vertices} {mesh.n_elements}"]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines += [f"{i} {j} {k} {r}" for (i, j, k), r in
              zip(mesh.triangles.tolist(), mesh.refine_edge.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def read_mesh(path) -> TriMesh:
    tokens = Path(path).read_text().split("\n")
    rows = [t.split() for t in tokens if t.strip() and not t.lstrip().startswith("#")]
    if not rows or len(rows[0]) != 2:
        raise MeshError(f"{path}: expected header 'nv nt'")
    try:
        nv, nt = int(rows[0][0]), int(rows[0][1])
    except ValueError:
        raise MeshError(f"{path}: header is not two integers") from None
    if len(rows) != 1 + nv + nt:
        raise MeshError(f"{path}: expected {1 + nv + nt} lines, found {len(rows)}")
    try:
        verts = np.array([[float(v) for v in r] for r in rows[1:1 + nv]])
        tri = np.array([[int(v) for v in r] for r in rows[1 + nv:]], dtype=np.int64)
    except ValueError as exc:
        raise MeshError(f"{path}: {exc}") from None
    if verts.shape != (nv, 2) or tri.shape != (nt, 4):
        raise MeshError(f"{path}: vertex lines need 2 values and triangle lines 4")
    if tri[:, :3].min() < 0 or tri[:, :3].max() >= nv:
        raise MeshError(f"{path}: vertex index out of range")
    if tri[:, 3].min() < 0 or tri[:, 3].max() > 2:
        raise MeshError(f"{path}: refinement-edge index must be 0, 1 or 2")
    return make_mesh(verts, tri[:, :3], refine_edge=tri[:, 3])


# -- legacy VTK ------------------------------------------------------------------------

def nodal_average(mesh: TriMesh, corner_values) -> np.ndarray:
    """Average per-element corner values (nt, 3) over the elements at each vertex."""
    corner_values = np.asarray(corner_values, dtype=float)
    acc = np.zeros(mesh.n_vertices)
    cnt = np.zeros(mesh.n_vertices)
    np.add.at(acc, mesh.triangles.ravel(), corner_values.ravel())
    np.add.at(cnt, mesh.triangles.ravel(), 1.0)
    return acc / np.maximum(cnt, 1.0)


def solution_point_data(solution) -> dict:
    """Nodal averages of y_h, z_h and the flux components at the mesh vertices."""
    mesh = solution.mesh
    corners = mesh.vertices[mesh.triangles]
    phi = solution.space.basis.values(corners)
    out = {}
    for name, fld in (("y_h", solution.state), ("z_h", solution.adjoint)):
        out[name] = nodal_average(mesh, np.einsum("eqi,ei->eq", phi, fld.scalar))
    flux_names = (("p_h_x", "p_h_y"), ("q_h_x", "q_h_y"))
    for names, fld in zip(flux_names, (solution.state, solution.adjoint)):
        for d, name in enumerate(names):
            out[name] = nodal_average(mesh, np.einsum("eqi,ei->eq", phi, fld.flux[:, d]))
    return out


def write_vtk(mesh: TriMesh, path, point_data=None, cell_data=None,
              title: str = "hdgcontrol mesh") -> None:
    """Legacy ASCII VTK unstructured grid of triangles (cell type 5)."""
    point_data = point_data or {}
    cell_data = cell_data or {}
    nv, nt = mesh.n_vertices, mesh.n_elements
    out = ["# vtk DataFile Version 3.0", title.replace("\n", " ")[:255], "ASCII",
           "DATASET UNSTRUCTURED_GRID", f"POINTS {nv} double"]
    out += [f"{x:.17g} {y:.17g} 0" for x, y in mesh.vertices]
    out.append(f"CELLS {nt} {4 * nt}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    out.append(f"CELL_TYPES {nt}")
    out += ["5"] * nt

    def block(kind, n, data):
        if not data:
            return
        out.append(f"{kind} {n}")
        for name, values in data.items():
            values = np.asarray(values, dtype=float)
            if values.shape != (n,):
                raise ValueError(f"{kind.lower()} field {name!r} has shape {values.shape}, need ({n},)")
            out.append(f"SCALARS {name} double 1")
            out.append("LOOKUP_TABLE default")
            out.extend(f"{v:.17g}" for v in values)

    block("POINT_DATA", nv, point_data)
    block("CELL_DATA", nt, cell_data)
    Path(path).write_text("\n".join(out) + "\n")


def read_vtk_counts(path) -> tuple[int, int]:
    """(n_points, n_cells) of a legacy VTK file written by :func:`write_vtk`."""
    npts = ncells = None
    for line in Path(path).read_text().splitlines():
        parts = line.split()
        if parts[:1] == ["POINTS"]:
            npts = int(parts[1])
        elif parts[:1] == ["CELLS"]:
            ncells = int(parts[1])
    if npts is None or ncells is None:
        raise ValueError(f"{path}: not a legacy VTK unstructured grid")
    return npts, ncells


# -- CSV ---------------------------------------------------------------------------

def _fmt(col, value):
    if col in _INT_COLUMNS:
        return str(int(value))
    value = float(value)
    return "nan" if math.isnan(value) else repr(value)


def write_records(records, path, meta: dict | None = None) -> None:
    """One row per AFEM iteration, preceded by schema and metadata comment lines."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# {CSV_SCHEMA}\n")
        if meta is not None:
            fh.write(f"# meta {json.dumps(meta, sort_keys=True)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for rec in records:
            row = rec.as_row() if hasattr(rec, "as_row") else rec
            w.writerow([_fmt(c, row[c]) for c in CSV_COLUMNS])


def read_records_meta(path) -> dict:
    """The metadata dict stored by :func:`write_records` (empty if none)."""
    with open(path) as fh:
        for ln in fh:
            if not ln.startswith("#"):
                break
            if ln.startswith("# meta "):
                return json.loads(ln[len("# meta "):])
    return {}


def read_records(path) -> list[dict]:
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
    return [{c: int(r[c]) if c in _INT_COLUMNS else float(r[c]) for c in CSV_COLUMNS}
            for r in reader]


# -- SVG log-log plots ------------------------------------------------------------------

_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def _decades(lo, hi):
    return list(range(math.floor(math.log10(lo)), math.ceil(math.log10(hi)) + 1))


def loglog_svg(series, path=None, title="", xlabel="N", ylabel="",
               reference_slope: float | None = None, width=640, height=480) -> str:
    """Render ``series`` (list of (label, x, y)) on base-10 log-log axes.

    Non-positive or non-finite points are dropped.  With ``reference_slope``
    a dashed line of that slope is drawn through the first point of the
    first series and labelled.  Returns the SVG text and writes it when
    ``path`` is given.
    """
    clean = []
    for label, x, y in series:
        x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
        ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
        clean.append((label, x[ok], y[ok]))
    allx = np.concatenate([c[1] for c in clean] + [np.ones(0)])
    ally = np.concatenate([c[2] for c in clean] + [np.ones(0)])
    if allx.size == 0:
        allx, ally = np.array([1.0, 10.0]), np.array([1.0, 10.0])
    xd, yd = _decades(allx.min(), allx.max()), _decades(ally.min(), ally.max())
    if len(xd) < 2:
        xd.append(xd[0] + 1)
    if len(yd) < 2:
        yd.append(yd[0] + 1)
    left, right, top, bottom = 80, 170, 40, 60
    pw, ph = width - left - right, height - top - bottom

    def px(x):
        return left + pw * (np.log10(x) - xd[0]) / (xd[-1] - xd[0])

    def py(y):
        return top + ph * (1 - (np.log10(y) - yd[0]) / (yd[-1] - yd[0]))

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
           '<rect width="100%" height="100%" fill="white"/>',
           f'<rect x="{left}" y="{top}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for d in xd:
        X = px(10.0 ** d)
        out.append(f'<line x1="{X:.2f}" y1="{top}" x2="{X:.2f}" y2="{top + ph}" stroke="#ddd"/>')
        out.append(f'<text x="{X:.2f}" y="{top + ph + 18}" text-anchor="middle">1e{d}</text>')
    for d in yd:
        Y = py(10.0 ** d)
        out.append(f'<line x1="{left}" y1="{Y:.2f}" x2="{left + pw}" y2="{Y:.2f}" stroke="#ddd"/>')
        out.append(f'<text x="{left - 6}" y="{Y + 4:.2f}" text-anchor="end">1e{d}</text>')
    out.append(f'<text x="{left + pw / 2}" y="{height - 15}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="18" y="{top + ph / 2}" text-anchor="middle" '
               f'transform="rotate(-90 18 {top + ph / 2})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{left + pw / 2}" y="24" text-anchor="middle" '
                   f'font-size="14">{escape(title)}</text>')

    legend = []
    for i, (label, x, y) in enumerate(clean):
        color = _COLORS[i % len(_COLORS)]
        if x.size:
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px(x), py(y)))
            out.append(f'<polyline class="series" points="{pts}" fill="none" '
                       f'stroke="{color}" stroke-width="1.5"/>')
            out += [f'<circle cx="{a:.2f}" cy="{b:.2f}" r="2.5" fill="{color}"/>'
                    for a, b in zip(px(x), py(y))]
        legend.append((label, color, ""))
    if reference_slope is not None and clean and clean[0][1].size:
        x0, y0 = clean[0][1][0], clean[0][2][0]
        x1 = allx.max()
        y1 = y0 * (x1 / x0) ** reference_slope
        out.append(f'<line class="reference" x1="{px(x0):.2f}" y1="{py(y0 * 0.5):.2f}" '
                   f'x2="{px(x1):.2f}" y2="{py(y1 * 0.5):.2f}" stroke="black" '
                   f'stroke-dasharray="6,4"/>')
        legend.append((f"slope {reference_slope:g}", "black", ' stroke-dasharray="6,4"'))
    for i, (label, color, dash) in enumerate(legend):
        Y = top + 12 + 18 * i
        X = left + pw + 12
        out.append(f'<line x1="{X}" y1="{Y}" x2="{X + 24}" y2="{Y}" stroke="{color}" '
                   f'stroke-width="1.5"{dash}/>')
        out.append(f'<text x="{X + 30}" y="{Y + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def convergence_svg(records, k: int, path=None, title="") -> str:
    """eta and E against N, with the optimal reference slope -k/2."""
    rows = [r.as_row() if hasattr(r, "as_row") else r for r in records]
    n = [r["n_dof"] for r in rows]
    series = [("eta", n, [r["eta"] for r in rows])]
    if any(np.isfinite(r["E"]) for r in rows):
        series.append(("E", n, [r["E"] for r in rows]))
    return loglog_svg(series, path, title=title, xlabel="trace DOFs N",
                      ylabel="error / estimator", reference_slope=-k / 2)
