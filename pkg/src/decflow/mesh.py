"""Oriented simplicial surface complexes and circumcentric dual geometry.

The primal mesh is a closed oriented triangle surface: every edge borders
exactly two faces, edges are stored once with a canonical orientation
(low vertex index to high vertex index), and face windings are made
globally consistent by propagation from face 0.  Three sign conventions
relate the simplices:

* ``sign_face_edge(f, e)`` is +1 when the face lies on the left of the
  oriented edge (equivalently, the face's boundary cycle traverses the
  edge along its orientation),
* ``sign_vertex_edge(v, e)`` is +1 when the edge points to the vertex,
* ``sign_edge_edge(e, et)`` is +1 when the rotation from the vector of
  ``e`` to the vector of ``et`` is less than a half turn, measured
  counterclockwise in their common face's orientation.

The dual mesh is circumcentric: dual vertices are face circumcenters, the
dual edge crossing a primal edge connects the two adjacent circumcenters
through the edge midpoint, and the dual cell of a vertex is assembled from
per-edge kite fragments of area |e|·|dual(e)|/4.  Dual lengths are signed;
a segment counts negatively when the circumcenter lies on the far side of
its primal edge, which keeps the discrete operators consistent on meshes
that are nearly but not strictly well-centered.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np


class MeshError(ValueError):
    """Invalid mesh input or an operation on the wrong simplices."""


class NonManifoldError(MeshError):
    """An edge with a number of incident faces different from two."""


class NonOrientableError(MeshError):
    """Face windings cannot be made globally consistent."""


class DegenerateGeometryError(MeshError):
    """Zero-area triangle or collapsing circumcenter."""


class SimplicialComplex:
    """Closed oriented triangle mesh with full incidence information.

    Immutable after construction; intended to be built through
    :func:`build_complex`.
    """

    def __init__(self, positions, faces, edges, face_edges, face_edge_signs,
                 edge_faces):
        self.positions = positions          # (nv, 3) float
        self.faces = faces                  # (nf, 3) int, oriented winding
        self.edges = edges                  # (ne, 2) int, low index -> high index
        self.face_edges = face_edges        # (nf, 3) int, slot k joins verts k, k+1
        self.face_edge_signs = face_edge_signs  # (nf, 3) in {-1, +1}
        self.edge_faces = edge_faces        # (ne, 2) int, [left face, right face]
        self._build_vertex_edge_adjacency()

    # -- combinatorics -------------------------------------------------

    @property
    def n_vertices(self):
        return len(self.positions)

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def euler_characteristic(self):
        return self.n_vertices - self.n_edges + self.n_faces

    def _build_vertex_edge_adjacency(self):
        ne = self.n_edges
        vert_of_slot = self.edges.reshape(-1)
        edge_of_slot = np.repeat(np.arange(ne), 2)
        sign_of_slot = np.tile(np.array([-1, 1], dtype=np.int8), ne)
        order = np.argsort(vert_of_slot, kind="stable")
        self.vertex_edge_ptr = np.searchsorted(
            vert_of_slot[order], np.arange(self.n_vertices + 1))
        self.vertex_edge_idx = edge_of_slot[order]
        self.vertex_edge_sign = sign_of_slot[order]

    def vertex_edges(self, v):
        """Edges incident to vertex ``v`` and the signs s(v, e)."""
        lo, hi = self.vertex_edge_ptr[v], self.vertex_edge_ptr[v + 1]
        return self.vertex_edge_idx[lo:hi], self.vertex_edge_sign[lo:hi]

    # -- geometry ------------------------------------------------------

    @cached_property
    def edge_vectors(self):
        return self.positions[self.edges[:, 1]] - self.positions[self.edges[:, 0]]

    @cached_property
    def edge_lengths(self):
        return np.linalg.norm(self.edge_vectors, axis=1)

    @cached_property
    def face_normals_raw(self):
        p = self.positions[self.faces]
        return np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])

    @cached_property
    def face_areas(self):
        return 0.5 * np.linalg.norm(self.face_normals_raw, axis=1)

    @cached_property
    def face_unit_normals(self):
        return self.face_normals_raw / (2.0 * self.face_areas[:, None])

    @cached_property
    def vertex_normals(self):
        """Area-weighted average of incident face normals, normalized."""
        acc = np.zeros_like(self.positions)
        np.add.at(acc, self.faces.reshape(-1),
                  np.repeat(self.face_normals_raw, 3, axis=0))
        norms = np.linalg.norm(acc, axis=1)
        if np.any(norms == 0.0):
            raise DegenerateGeometryError("vertex with vanishing normal")
        return acc / norms[:, None]

    @cached_property
    def edge_adjacent_faces(self):
        """Both faces of each edge, left first (alias of ``edge_faces``)."""
        return self.edge_faces


def build_complex(positions, triangles):
    """Assemble an oriented :class:`SimplicialComplex` from raw triangles.

    Face windings in the input may be inconsistent; a consistent global
    orientation is fixed by breadth-first propagation from triangle 0
    (each shared edge must be traversed in opposite directions by its two
    faces).  Raises :class:`NonManifoldError` for boundary or fan edges,
    :class:`NonOrientableError` when propagation hits a contradiction and
    :class:`DegenerateGeometryError` for zero-area triangles.
    """
    pos = np.ascontiguousarray(positions, dtype=np.float64).reshape(-1, 3)
    tris = np.ascontiguousarray(triangles, dtype=np.int64).reshape(-1, 3)
    nv, nf = len(pos), len(tris)
    if nf == 0:
        raise MeshError("empty triangle list")
    if tris.min() < 0 or tris.max() >= nv:
        raise MeshError("triangle index out of range")
    if np.any(tris[:, 0] == tris[:, 1]) or np.any(tris[:, 1] == tris[:, 2]) \
            or np.any(tris[:, 0] == tris[:, 2]):
        bad = int(np.nonzero((tris[:, 0] == tris[:, 1])
                             | (tris[:, 1] == tris[:, 2])
                             | (tris[:, 0] == tris[:, 2]))[0][0])
        raise DegenerateGeometryError(f"triangle {bad} repeats a vertex")

    p = pos[tris]
    cross = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    areas2 = np.linalg.norm(cross, axis=1)
    lmax = max(np.linalg.norm(p[:, 1] - p[:, 0], axis=1).max(), 1e-300)
    if np.any(areas2 <= 1e-14 * lmax * lmax):
        bad = int(np.argmin(areas2))
        raise DegenerateGeometryError(f"triangle {bad} has zero area")

    # undirected edge -> incident (face, traverses low-to-high) pairs
    incident = {}
    for f in range(nf):
        a, b, c = tris[f]
        for u, v in ((a, b), (b, c), (c, a)):
            key = (u, v) if u < v else (v, u)
            incident.setdefault(key, []).append((f, u < v))
    for key, facs in incident.items():
        if len(facs) != 2:
            kind = "boundary" if len(facs) < 2 else "fan"
            raise NonManifoldError(
                f"edge {key} has {len(facs)} incident faces ({kind} edge)")

    # consistent orientation by BFS; seed each connected component
    neighbors = {}
    for key, ((f1, d1), (f2, d2)) in incident.items():
        neighbors.setdefault(f1, []).append((f2, d1, d2))
        neighbors.setdefault(f2, []).append((f1, d2, d1))
    flip = np.zeros(nf, dtype=bool)
    seen = np.zeros(nf, dtype=bool)
    for seed in range(nf):
        if seen[seed]:
            continue
        seen[seed] = True
        queue = deque([seed])
        while queue:
            f = queue.popleft()
            for g, dir_f, dir_g in neighbors[f]:
                # traversal of the shared edge after flips must disagree
                want_flip_g = dir_g == (dir_f ^ bool(flip[f]))
                if seen[g]:
                    if bool(flip[g]) != want_flip_g:
                        raise NonOrientableError(
                            f"orientation contradiction between faces {f} and {g}")
                else:
                    flip[g] = want_flip_g
                    seen[g] = True
                    queue.append(g)
    if flip.any():
        tris = tris.copy()
        tris[flip] = tris[flip][:, ::-1]

    # canonical edge set and face/edge incidence
    slot_pairs = np.stack([tris, np.roll(tris, -1, axis=1)], axis=-1)  # (nf,3,2)
    flat = slot_pairs.reshape(-1, 2)
    canon = np.sort(flat, axis=1)
    edges, inverse = np.unique(canon, axis=0, return_inverse=True)
    face_edges = inverse.reshape(nf, 3).astype(np.int64)
    face_edge_signs = np.where(flat[:, 0] < flat[:, 1], 1, -1) \
        .reshape(nf, 3).astype(np.int8)

    ne = len(edges)
    sign_sums = np.zeros(ne, dtype=np.int64)
    np.add.at(sign_sums, face_edges.reshape(-1), face_edge_signs.reshape(-1))
    if np.any(sign_sums != 0):
        raise NonOrientableError("an edge is traversed twice in the same direction")

    edge_faces = np.empty((ne, 2), dtype=np.int64)
    face_idx = np.repeat(np.arange(nf), 3)
    left = face_edge_signs.reshape(-1) > 0
    edge_faces[face_edges.reshape(-1)[left], 0] = face_idx[left]
    edge_faces[face_edges.reshape(-1)[~left], 1] = face_idx[~left]

    return SimplicialComplex(pos, tris, edges.astype(np.int64), face_edges,
                             face_edge_signs, edge_faces)


# -- sign functions ----------------------------------------------------

def sign_face_edge(complex, f, e):
    """+1 when face ``f`` lies on the left of oriented edge ``e``."""
    slots = complex.face_edges[f]
    hit = np.nonzero(slots == e)[0]
    if len(hit) == 0:
        raise MeshError(f"edge {e} is not part of face {f}")
    return int(complex.face_edge_signs[f, hit[0]])


def sign_vertex_edge(complex, v, e):
    """+1 when edge ``e`` points to vertex ``v``."""
    i, j = complex.edges[e]
    if v == j:
        return 1
    if v == i:
        return -1
    raise MeshError(f"vertex {v} is not an endpoint of edge {e}")


def sign_edge_edge(complex, e, et, f=None):
    """+1 when the in-face rotation from ``e``'s vector to ``et``'s is < pi.

    The two edges must share a face; pass ``f`` to disambiguate when they
    share both faces (they never do on a valid triangle mesh).
    """
    if f is None:
        shared = set(complex.edge_faces[e]) & set(complex.edge_faces[et])
        if not shared:
            raise MeshError(f"edges {e} and {et} share no face")
        f = min(shared)
    else:
        if e not in complex.face_edges[f] or et not in complex.face_edges[f]:
            raise MeshError(f"edges {e} and {et} are not both in face {f}")
    n = complex.face_normals_raw[f]
    cr = np.cross(complex.edge_vectors[e], complex.edge_vectors[et])
    s = float(np.dot(n, cr))
    if s == 0.0:
        raise MeshError(f"edges {e} and {et} are parallel")
    return 1 if s > 0 else -1


# -- circumcentric dual ------------------------------------------------

class DualGeometry:
    """Circumcentric dual measures of a :class:`SimplicialComplex`.

    ``dual_edge_lengths`` and the kite fragments are signed (see module
    docstring); ``face_edge_dual_segments[f, k]`` is the signed distance
    from the circumcenter of ``f`` to the line of its k-th edge, positive
    when the circumcenter lies on the face's side of that edge.
    """

    def __init__(self, complex, face_circumcenters, edge_midpoints,
                 face_edge_dual_segments, dual_edge_lengths, voronoi_areas):
        self.complex = complex
        self.face_circumcenters = face_circumcenters    # (nf, 3)
        self.edge_midpoints = edge_midpoints            # (ne, 3)
        self.face_edge_dual_segments = face_edge_dual_segments  # (nf, 3) signed
        self.dual_edge_lengths = dual_edge_lengths      # (ne,) signed
        self.voronoi_areas = voronoi_areas              # (nv,) signed sums

    @property
    def primal_edge_lengths(self):
        return self.complex.edge_lengths

    @cached_property
    def cell_fragment_areas(self):
        """Kite area |e|·|dual(e)|/4 per (vertex, edge) incidence slot.

        Aligned with ``complex.vertex_edge_idx``; the fragment is the same
        for both endpoints of an edge.
        """
        per_edge = self.complex.edge_lengths * self.dual_edge_lengths / 4.0
        return per_edge[self.complex.vertex_edge_idx]

    @cached_property
    def face_circumradii(self):
        return np.linalg.norm(
            self.face_circumcenters - self.complex.positions[self.complex.faces[:, 0]],
            axis=1)


def circumcentric_dual(complex):
    """Compute all circumcentric dual measures for ``complex``."""
    pos = complex.positions
    tri = pos[complex.faces]
    a = tri[:, 0] - tri[:, 2]
    b = tri[:, 1] - tri[:, 2]
    axb = np.cross(a, b)
    denom = 2.0 * np.einsum("ij,ij->i", axb, axb)
    if np.any(denom <= 0.0) or np.any(~np.isfinite(denom)):
        bad = int(np.argmin(denom))
        raise DegenerateGeometryError(
            f"face {bad} has collinear vertices (degenerate circumcenter)")
    la = np.einsum("ij,ij->i", a, a)
    lb = np.einsum("ij,ij->i", b, b)
    circ = tri[:, 2] + np.cross(la[:, None] * b - lb[:, None] * a, axb) / denom[:, None]

    mids = 0.5 * (pos[complex.edges[:, 0]] + pos[complex.edges[:, 1]])

    # signed circumcenter-to-edge distances, one per face/edge slot
    nf = complex.n_faces
    segs = np.empty((nf, 3))
    unit_edge = complex.edge_vectors / complex.edge_lengths[:, None]
    for k in range(3):
        e = complex.face_edges[:, k]
        opp = complex.faces[:, (k + 2) % 3]
        m = mids[e]
        d = pos[opp] - m
        u = unit_edge[e]
        d = d - np.einsum("ij,ij->i", d, u)[:, None] * u
        dn = np.linalg.norm(d, axis=1)
        if np.any(dn == 0.0):
            bad = int(np.nonzero(dn == 0.0)[0][0])
            raise DegenerateGeometryError(f"face {bad} has collinear vertices")
        inward = d / dn[:, None]
        segs[:, k] = np.einsum("ij,ij->i", circ - m, inward)

    dual_len = np.zeros(complex.n_edges)
    np.add.at(dual_len, complex.face_edges.reshape(-1), segs.reshape(-1))

    fragment = complex.edge_lengths * dual_len / 4.0
    voronoi = np.zeros(complex.n_vertices)
    np.add.at(voronoi, complex.edges[:, 0], fragment)
    np.add.at(voronoi, complex.edges[:, 1], fragment)

    return DualGeometry(complex, circ, mids, segs, dual_len, voronoi)


# -- diagnostics -------------------------------------------------------

@dataclass
class WellCenteredReport:
    """Outcome of the well-centeredness check (diagnostic, never raises)."""

    is_well_centered: bool
    faces_outside: np.ndarray          # faces whose circumcenter leaves the face
    edges_nonpositive: np.ndarray      # edges with signed dual length <= 0
    worst_face: int | None             # most negative circumcenter offset
    worst_face_offset: float
    worst_edge: int | None             # smallest signed dual length
    worst_edge_dual_length: float

    def summary(self):
        status = "well-centered" if self.is_well_centered else "NOT well-centered"
        return (f"{status}: {len(self.faces_outside)} faces with outside "
                f"circumcenter, {len(self.edges_nonpositive)} edges with "
                f"nonpositive dual length "
                f"(worst face offset {self.worst_face_offset:.3g}, "
                f"worst dual length {self.worst_edge_dual_length:.3g})")


def well_centered_report(complex, dual):
    """List faces with escaped circumcenters and edges with |dual(e)| <= 0."""
    min_seg = dual.face_edge_dual_segments.min(axis=1)
    faces_outside = np.nonzero(min_seg < 0.0)[0]
    edges_bad = np.nonzero(dual.dual_edge_lengths <= 0.0)[0]
    worst_face = int(np.argmin(min_seg)) if complex.n_faces else None
    worst_edge = int(np.argmin(dual.dual_edge_lengths)) if complex.n_edges else None
    return WellCenteredReport(
        is_well_centered=(len(faces_outside) == 0 and len(edges_bad) == 0),
        faces_outside=faces_outside,
        edges_nonpositive=edges_bad,
        worst_face=worst_face,
        worst_face_offset=float(min_seg[worst_face]) if worst_face is not None else 0.0,
        worst_edge=worst_edge,
        worst_edge_dual_length=(float(dual.dual_edge_lengths[worst_edge])
                                if worst_edge is not None else 0.0),
    )


# -- file loading ------------------------------------------------------

def load_off(path):
    """Read an ASCII OFF file; returns (positions, triangles), 0-based."""
    with open(path) as fh:
        tokens = []
        for line in fh:
            line = line.split("#", 1)[0].strip()
            if line:
                tokens.extend(line.split())
    if not tokens or tokens[0] != "OFF":
        raise MeshError(f"{path}: not an OFF file")
    it = iter(tokens[1:])
    try:
        nv, nf, _ = int(next(it)), int(next(it)), int(next(it))
        pos = np.array([[float(next(it)) for _ in range(3)] for _ in range(nv)])
        tris = []
        for _ in range(nf):
            k = int(next(it))
            idx = [int(next(it)) for _ in range(k)]
            if k != 3:
                raise MeshError(f"{path}: only triangle faces are supported")
            tris.append(idx)
    except StopIteration:
        raise MeshError(f"{path}: truncated OFF file") from None
    return pos, np.array(tris, dtype=np.int64)


def load_obj(path):
    """Read an ASCII OBJ file (v/f records); returns (positions, triangles)."""
    pos, tris = [], []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if parts[0] == "v":
                pos.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) for tok in parts[1:]]
                if len(idx) != 3:
                    raise MeshError(f"{path}: only triangle faces are supported")
                tris.append([i - 1 if i > 0 else len(pos) + i for i in idx])
    if not pos or not tris:
        raise MeshError(f"{path}: no usable v/f records")
    return np.array(pos, dtype=np.float64), np.array(tris, dtype=np.int64)


def load_mesh(path):
    """Dispatch on file extension (.off / .obj) and build the complex."""
    p = str(path)
    if p.lower().endswith(".off"):
        return build_complex(*load_off(p))
    if p.lower().endswith(".obj"):
        return build_complex(*load_obj(p))
    raise MeshError(f"{path}: unsupported mesh format (use .off or .obj)")
