"""Conforming triangle meshes and newest vertex bisection.

Local conventions used throughout the package:

* triangles are stored counter-clockwise;
* local edge ``i`` of a triangle joins vertices ``i+1`` and ``i+2`` (mod 3),
  i.e. it is the edge opposite local vertex ``i``;
* the refinement edge of a triangle is stored as its local edge index.

Meshes are immutable.  Refinement returns a new mesh together with a parent
map into the mesh it was called on.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import NamedTuple

import numpy as np

BOUNDARY = -1


class MeshError(ValueError):
    pass


class ElementGeometry(NamedTuple):
    area: float
    diameter: float
    normals: np.ndarray  # (3, 2), outward, one per local edge
    edge_lengths: np.ndarray  # (3,)


def _signed_areas(vertices, triangles):
    a, b, c = (vertices[triangles[:, i]] for i in range(3))
    return 0.5 * ((b[:, 0] - a[:, 0]) * (c[:, 1] - a[:, 1])
                  - (b[:, 1] - a[:, 1]) * (c[:, 0] - a[:, 0]))


def _local_edge_lengths(vertices, triangles):
    p = vertices[triangles]  # (nt, 3, 2)
    lengths = np.empty(triangles.shape, dtype=float)
    for i in range(3):
        lengths[:, i] = np.linalg.norm(p[:, (i + 2) % 3] - p[:, (i + 1) % 3], axis=1)
    return lengths


def longest_edge_seed(vertices, triangles):
    """Refinement edge = longest edge; ties go to the smallest opposite vertex."""
    vertices = np.asarray(vertices, dtype=float)
    triangles = np.asarray(triangles, dtype=np.int64)
    lengths = _local_edge_lengths(vertices, triangles)
    seed = np.empty(len(triangles), dtype=np.int64)
    for t, (tri, ell) in enumerate(zip(triangles, lengths)):
        longest = ell.max()
        cands = [i for i in range(3) if ell[i] >= longest * (1.0 - 1e-12)]
        seed[t] = min(cands, key=lambda i: tri[i])
    return seed


@dataclass(frozen=True, eq=False)
class TriMesh:
    """A conforming triangulation of a polygon.

    Use :func:`make_mesh` to build one from raw arrays; the constructor
    only validates.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    refine_edge: np.ndarray
    # boundary markers keyed by sorted vertex pair; missing pairs default to 1
    boundary_tags: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.triangles) == 0:
            raise MeshError("empty mesh")
        if self.triangles.shape[1:] != (3,) or self.vertices.shape[1:] != (2,):
            raise MeshError("expected (nt, 3) triangles and (nv, 2) vertices")
        if np.any(self.areas <= 0.0):
            raise MeshError("triangles must be positively oriented")
        if np.any((self.refine_edge < 0) | (self.refine_edge > 2)):
            raise MeshError("refinement edge index must be 0, 1 or 2")
        counts = np.bincount(self.edge_index_inverse, minlength=len(self.edges))
        if counts.max() > 2:
            raise MeshError("an edge is shared by more than two triangles")

    # -- sizes -------------------------------------------------------------
    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_elements(self) -> int:
        return len(self.triangles)

    @property
    def n_faces(self) -> int:
        return len(self.edges)

    # -- geometry ----------------------------------------------------------
    @cached_property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.vertices, self.triangles)

    @cached_property
    def local_edge_lengths(self) -> np.ndarray:
        return _local_edge_lengths(self.vertices, self.triangles)

    @cached_property
    def diameters(self) -> np.ndarray:
        return self.local_edge_lengths.max(axis=1)

    @cached_property
    def normals(self) -> np.ndarray:
        """Outward unit normals, shape (nt, 3, 2)."""
        p = self.vertices[self.triangles]
        t = np.stack([p[:, (i + 2) % 3] - p[:, (i + 1) % 3] for i in range(3)], axis=1)
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @cached_property
    def centroids(self) -> np.ndarray:
        return self.vertices[self.triangles].mean(axis=1)

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    # -- topology ----------------------------------------------------------
    @cached_property
    def _edge_tables(self):
        tri = self.triangles
        local = np.stack([tri[:, [(i + 1) % 3, (i + 2) % 3]] for i in range(3)], axis=1)
        pairs = np.sort(local.reshape(-1, 2), axis=1)
        edges, inverse = np.unique(pairs, axis=0, return_inverse=True)
        return edges, inverse.reshape(-1)

    @property
    def edges(self) -> np.ndarray:
        """Unique edges as sorted vertex pairs, shape (nf, 2)."""
        return self._edge_tables[0]

    @property
    def edge_index_inverse(self) -> np.ndarray:
        return self._edge_tables[1]

    @cached_property
    def elem_faces(self) -> np.ndarray:
        """Global face id of each local edge, shape (nt, 3)."""
        return self.edge_index_inverse.reshape(-1, 3)

    @cached_property
    def face_elems(self) -> np.ndarray:
        """(left, right) elements of each face; right is BOUNDARY on the boundary."""
        fe = np.full((self.n_faces, 2), BOUNDARY, dtype=np.int64)
        flat = self.elem_faces.reshape(-1)
        elems = np.repeat(np.arange(self.n_elements), 3)
        order = np.argsort(flat, kind="stable")
        f_sorted, e_sorted = flat[order], elems[order]
        first = np.ones(len(f_sorted), dtype=bool)
        first[1:] = f_sorted[1:] != f_sorted[:-1]
        fe[f_sorted[first], 0] = e_sorted[first]
        fe[f_sorted[~first], 1] = e_sorted[~first]
        return fe

    @cached_property
    def boundary_faces(self) -> np.ndarray:
        return np.flatnonzero(self.face_elems[:, 1] == BOUNDARY)

    @cached_property
    def boundary_marker(self) -> np.ndarray:
        """Marker per face: 0 on interior faces, the boundary tag otherwise."""
        marker = np.zeros(self.n_faces, dtype=np.int64)
        for f in self.boundary_faces:
            marker[f] = self.boundary_tags.get(tuple(self.edges[f]), 1)
        return marker

    @cached_property
    def face_lengths(self) -> np.ndarray:
        e = self.edges
        return np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1)

    @cached_property
    def face_normals(self) -> np.ndarray:
        """Unit normal of each face, outward from its left element."""
        left = self.face_elems[:, 0]
        local = np.argmax(self.elem_faces[left] == np.arange(self.n_faces)[:, None], axis=1)
        return self.normals[left, local]

    def refinement_edge_vertices(self) -> np.ndarray:
        r = self.refine_edge
        t = self.triangles
        idx = np.arange(len(t))
        return np.sort(np.stack([t[idx, (r + 1) % 3], t[idx, (r + 2) % 3]], axis=1), axis=1)


def make_mesh(vertices, triangles, refine_edge=None, boundary_tags=None) -> TriMesh:
    """Build a mesh, reorienting clockwise triangles and seeding refinement edges."""
    vertices = np.array(vertices, dtype=float).reshape(-1, 2)
    triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)
    if len(triangles) == 0:
        raise MeshError("empty mesh")
    if refine_edge is not None:
        refine_edge = np.array(refine_edge, dtype=np.int64).copy()
    flip = _signed_areas(vertices, triangles) < 0
    if flip.any():
        triangles[flip] = triangles[flip][:, [0, 2, 1]]
        if refine_edge is not None:
            # swapping local vertices 1 and 2 swaps local edges 1 and 2
            r = refine_edge[flip]
            refine_edge[flip] = np.where(r == 0, 0, 3 - r)
    if refine_edge is None:
        refine_edge = longest_edge_seed(vertices, triangles)
    return TriMesh(vertices, triangles, refine_edge, dict(boundary_tags or {}))


def element_geometry(mesh: TriMesh, elem: int) -> ElementGeometry:
    if not 0 <= elem < mesh.n_elements:
        raise IndexError(f"invalid element id {elem}")
    return ElementGeometry(
        float(mesh.areas[elem]),
        float(mesh.diameters[elem]),
        mesh.normals[elem].copy(),
        mesh.local_edge_lengths[elem].copy(),
    )


# -- refinement --------------------------------------------------------------

def _edge_key(a, b):
    return (a, b) if a < b else (b, a)


def _close_marking(mesh: TriMesh, marked_edges: set) -> set:
    """Mark refinement edges until every element with a marked edge has its
    refinement edge marked (this is what keeps the bisection conforming)."""
    tri = mesh.triangles
    ref = mesh.refinement_edge_vertices()
    edge_elems: dict = {}
    for t, row in enumerate(tri):
        for i in range(3):
            edge_elems.setdefault(_edge_key(row[(i + 1) % 3], row[(i + 2) % 3]), []).append(t)
    work = list(marked_edges)
    cap = 10 * mesh.n_elements
    steps = 0
    while work:
        steps += 1
        if steps > cap + len(marked_edges):
            raise MeshError("refinement closure did not terminate")
        e = work.pop()
        for t in edge_elems.get(e, ()):
            r = (int(ref[t, 0]), int(ref[t, 1]))
            if r not in marked_edges:
                marked_edges.add(r)
                work.append(r)
    return marked_edges


def _refine_edges(mesh: TriMesh, marked_edges: set):
    marked_edges = _close_marking(mesh, set(marked_edges))
    if not marked_edges:
        return mesh, np.arange(mesh.n_elements)

    vertices = [mesh.vertices]
    midpoint = {}
    nv = mesh.n_vertices
    new_pts = []
    for e in sorted(marked_edges):
        midpoint[e] = nv + len(new_pts)
        new_pts.append(0.5 * (mesh.vertices[e[0]] + mesh.vertices[e[1]]))
    vertices.append(np.array(new_pts).reshape(-1, 2))

    tags = dict(mesh.boundary_tags)
    bmark = mesh.boundary_marker
    for f in mesh.boundary_faces:
        e = tuple(int(v) for v in mesh.edges[f])
        if e in midpoint:
            m = midpoint[e]
            tags.pop(e, None)
            if bmark[f] != 1:
                tags[_edge_key(e[0], m)] = int(bmark[f])
                tags[_edge_key(m, e[1])] = int(bmark[f])

    out_tri, out_ref, parent = [], [], []

    def bisect(verts, r, anc):
        apex, e1, e2 = verts[r], verts[(r + 1) % 3], verts[(r + 2) % 3]
        m = midpoint.get(_edge_key(e1, e2))
        if m is None:
            out_tri.append(verts)
            out_ref.append(r)
            parent.append(anc)
            return
        # the new vertex is the newest vertex; its opposite edge refines next
        bisect((apex, e1, m), 2, anc)
        bisect((apex, m, e2), 1, anc)

    for t, row in enumerate(mesh.triangles):
        bisect(tuple(int(v) for v in row), int(mesh.refine_edge[t]), t)

    new = TriMesh(
        np.vstack(vertices),
        np.array(out_tri, dtype=np.int64),
        np.array(out_ref, dtype=np.int64),
        tags,
    )
    return new, np.array(parent, dtype=np.int64)


def refine_nvb(mesh: TriMesh, marked) -> tuple[TriMesh, np.ndarray]:
    """Bisect every marked element at least once, then close to conformity.

    Returns the refined mesh and, for each new element, the index of its
    ancestor in ``mesh``.
    """
    if mesh.n_elements == 0:
        raise MeshError("empty mesh")
    marked = np.unique(np.asarray(list(marked), dtype=np.int64))
    if marked.size and (marked.min() < 0 or marked.max() >= mesh.n_elements):
        raise IndexError("marked element out of range")
    ref = mesh.refinement_edge_vertices()
    edges = {(int(ref[t, 0]), int(ref[t, 1])) for t in marked}
    return _refine_edges(mesh, edges)


def uniform_refine(mesh: TriMesh) -> TriMesh:
    """Bisect every edge: each triangle yields four conforming children."""
    return uniform_refine_with_parents(mesh)[0]


def uniform_refine_with_parents(mesh: TriMesh):
    edges = {(int(a), int(b)) for a, b in mesh.edges}
    return _refine_edges(mesh, edges)


# -- audits ------------------------------------------------------------------

def _point_in_triangles(points, vertices, triangles, tol=0.0):
    """Boolean matrix (npoints, ntri): point strictly inside triangle."""
    p = vertices[triangles]
    a, b, c = p[:, 0], p[:, 1], p[:, 2]
    x = points[:, None, :]

    def cross(u, v, w):
        return (v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1]) - (v[..., 1] - u[..., 1]) * (w[..., 0] - u[..., 0])

    d1, d2, d3 = cross(a, b, x), cross(b, c, x), cross(c, a, x)
    return (d1 > tol) & (d2 > tol) & (d3 > tol)


def conformity_defects(mesh: TriMesh) -> list[str]:
    """Brute-force conformity audit; an empty list means conforming.

    Checks edge incidence and that every boundary face really lies on the
    boundary of the triangulated region (a hanging node shows up as an
    interior face with a single incident triangle).
    """
    defects = []
    counts = np.bincount(mesh.edge_index_inverse, minlength=mesh.n_faces)
    if counts.max() > 2:
        defects.append("edge shared by more than two triangles")
    if np.any(mesh.areas <= 0):
        defects.append("non-positive triangle area")
    bf = mesh.boundary_faces
    e = mesh.edges[bf]
    mid = 0.5 * (mesh.vertices[e[:, 0]] + mesh.vertices[e[:, 1]])
    eps = 1e-7 * mesh.face_lengths[bf][:, None]
    n = mesh.face_normals[bf]
    probe = mid + eps * n
    for start in range(0, len(probe), 256):
        inside = _point_in_triangles(probe[start:start + 256], mesh.vertices, mesh.triangles)
        for j in np.flatnonzero(inside.any(axis=1)):
            defects.append(f"hanging node on face {bf[start + j]}")
    return defects


def angle_signature(mesh: TriMesh, elems=None, digits: int = 9) -> np.ndarray:
    """Sorted interior angles of each element, rounded, shape (n, 3)."""
    elems = np.arange(mesh.n_elements) if elems is None else np.asarray(elems)
    ell = mesh.local_edge_lengths[elems]
    angles = np.empty_like(ell)
    for i in range(3):
        a, b, c = ell[:, i], ell[:, (i + 1) % 3], ell[:, (i + 2) % 3]
        angles[:, i] = np.arccos(np.clip((b * b + c * c - a * a) / (2 * b * c), -1.0, 1.0))
    return np.round(np.sort(angles, axis=1), digits)
