"""Discrete 0-/1-forms and the DEC operator set on a dual mesh pair.

Forms are stored as plain value arrays: a 0-form holds one sample per
vertex, a 1-form one integral value per oriented edge (field dotted with
the full edge vector at the edge midpoint, so values scale with edge
length).  Every operator here is linear in its form arguments and pure.

Conventions, with ``s`` the sign functions from :mod:`decflow.mesh`,
``|f|``/``|e|``/``|de|`` face areas, edge lengths and signed dual edge
lengths, and ``|dv|`` the dual cell area of a vertex:

* ``d0``:       (dq)(e) = q(head) - q(tail)
* ``d1``:       (du)(f) = sum over edges of f of s(f,e) u(e)
* rot-rot Laplacian (1-form valued):
                -(|e|/|de|) * sum_{f>e} s(f,e)/|f| * (du)(f)
* divergence (vertex values):
                -(1/|dv|) * sum_{e>v} s(v,e) (|de|/|e|) u(e)
* curl at edge midpoints (point values):
                sum_{f>e} (du)(f) / sum_{f>e} |f|
* rotated Hodge star (1-form valued):
                (1/4) sum_{f>e} sum_{et in f, et != e}
                s(e,et)/sqrt(|e|^2|et|^2 - (e.et)^2)
                * ((e.et) u(e) - |e|^2 u(et))
* inner products at edge midpoints and vertices as quadratic pairings of
  (u, star u) values, weighted by |de|/|e| kite fragments at vertices.

The rotated star approximates a quarter turn of the covector field in the
oriented tangent plane (x-axis to y-axis for counterclockwise faces);
applying it twice approximates minus the identity.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DegenerateGeometryError, MeshError


@dataclass
class Form0:
    """Scalar samples on vertices."""

    values: np.ndarray

    def validate(self, complex):
        if len(self.values) != complex.n_vertices:
            raise ValueError("0-form length does not match vertex count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("0-form contains non-finite values")

    @classmethod
    def zeros(cls, complex):
        return cls(np.zeros(complex.n_vertices))


@dataclass
class Form1:
    """Integral values on oriented edges."""

    values: np.ndarray

    def validate(self, complex):
        if len(self.values) != complex.n_edges:
            raise ValueError("1-form length does not match edge count")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("1-form contains non-finite values")

    @classmethod
    def zeros(cls, complex):
        return cls(np.zeros(complex.n_edges))


def _vals(u):
    if isinstance(u, (Form0, Form1)):
        return np.asarray(u.values, dtype=np.float64)
    return np.asarray(u, dtype=np.float64)


def sample_one_form(field, complex, dual=None):
    """Sample a vector field into a 1-form by the midpoint rule.

    ``field`` maps an (n, 3) array of points to (n, 3) vectors (a scalar
    signature working on single points is also accepted).  The edge value
    is the field at the edge midpoint dotted with the full edge vector;
    any off-tangent component is annihilated by the dot product because
    edge vectors lie in the surface's tangent cone.
    """
    mids = dual.edge_midpoints if dual is not None else \
        0.5 * (complex.positions[complex.edges[:, 0]]
               + complex.positions[complex.edges[:, 1]])
    vecs = np.asarray(field(mids), dtype=np.float64)
    if vecs.shape != mids.shape:
        vecs = np.array([field(p) for p in mids], dtype=np.float64)
    return Form1(np.einsum("ij,ij->i", vecs, complex.edge_vectors))


def d0(q, complex):
    """Exterior derivative of a 0-form: per-edge difference along orientation."""
    qv = _vals(q)
    return Form1(qv[complex.edges[:, 1]] - qv[complex.edges[:, 0]])


def d1(u, complex):
    """Exterior derivative of a 1-form: signed circulation per face."""
    uv = _vals(u)
    return np.einsum("fk,fk->f", complex.face_edge_signs.astype(np.float64),
                     uv[complex.face_edges])


def hodge_star_edge(u, complex, dual=None):
    """Rotated Hodge star of a 1-form (see module docstring)."""
    return Form1(star1_matrix(complex) @ _vals(u))


def divergence_vertex(u, complex, dual):
    """Discrete divergence at vertices."""
    uv = _vals(u)
    ratio = dual.dual_edge_lengths / complex.edge_lengths
    acc = np.zeros(complex.n_vertices)
    # s(v,e) = +1 at the head, -1 at the tail
    np.add.at(acc, complex.edges[:, 1], ratio * uv)
    np.add.at(acc, complex.edges[:, 0], -ratio * uv)
    return Form0(-acc / dual.voronoi_areas)


def curl_edge_midpoint(u, complex, dual):
    """Discrete curl sampled at edge midpoints (area mean over both faces)."""
    circ = d1(u, complex)
    areas = complex.face_areas
    fsum = circ[complex.edge_faces[:, 0]] + circ[complex.edge_faces[:, 1]]
    asum = areas[complex.edge_faces[:, 0]] + areas[complex.edge_faces[:, 1]]
    return fsum / asum


def laplace_rr(u, complex, dual):
    """Rot-rot Laplacian of a 1-form (1-form valued)."""
    return Form1(laplace_rr_matrix(complex, dual) @ _vals(u))


def inner_product_edge(ut, u, star_ut, star_u, complex, e=None):
    """Pointwise inner product estimate at edge midpoints.

    Hodge duals are explicit inputs so callers holding them as separate
    unknowns stay consistent.  Returns the value at edge ``e`` or the full
    per-edge array when ``e`` is None.
    """
    val = (_vals(ut) * _vals(u) + _vals(star_ut) * _vals(star_u)) \
        / complex.edge_lengths ** 2
    return float(val[e]) if e is not None else val


def inner_product_vertex(ut, u, star_ut, star_u, complex, dual, v=None):
    """Dual-cell weighted inner product estimate at vertices."""
    pair = _vals(ut) * _vals(u) + _vals(star_ut) * _vals(star_u)
    ratio = dual.dual_edge_lengths / complex.edge_lengths
    acc = np.zeros(complex.n_vertices)
    contrib = ratio * pair
    np.add.at(acc, complex.edges[:, 0], contrib)
    np.add.at(acc, complex.edges[:, 1], contrib)
    val = acc / (4.0 * dual.voronoi_areas)
    return float(val[v]) if v is not None else val


def reconstruct_vertex_vectors(u, complex, dual=None):
    """Least-squares tangent vectors at vertices from 1-form values.

    At each vertex the vector w minimizes sum_e (w . edge_vector - u(e))^2
    over incident edges, constrained to the tangent plane of the
    area-weighted vertex normal.  Exact for constant fields on flat
    patches; first-order accurate on smooth surfaces.
    """
    uv = _vals(u)
    normals = complex.vertex_normals
    # tangent frame per vertex
    helper = np.where(np.abs(normals[:, 0:1]) < 0.9,
                      np.array([[1.0, 0.0, 0.0]]), np.array([[0.0, 1.0, 0.0]]))
    t1 = np.cross(normals, helper)
    t1 /= np.linalg.norm(t1, axis=1)[:, None]
    t2 = np.cross(normals, t1)

    g11 = np.zeros(complex.n_vertices)
    g12 = np.zeros(complex.n_vertices)
    g22 = np.zeros(complex.n_vertices)
    b1 = np.zeros(complex.n_vertices)
    b2 = np.zeros(complex.n_vertices)
    for side in (0, 1):
        v = complex.edges[:, side]
        ev = complex.edge_vectors
        a1 = np.einsum("ij,ij->i", ev, t1[v])
        a2 = np.einsum("ij,ij->i", ev, t2[v])
        np.add.at(g11, v, a1 * a1)
        np.add.at(g12, v, a1 * a2)
        np.add.at(g22, v, a2 * a2)
        np.add.at(b1, v, a1 * uv)
        np.add.at(b2, v, a2 * uv)
    det = g11 * g22 - g12 * g12
    scale = g11 * g22
    if np.any(det <= 1e-14 * np.maximum(scale, 1e-300)):
        bad = int(np.argmin(det))
        raise MeshError(f"rank-deficient reconstruction at vertex {bad}")
    w1 = (g22 * b1 - g12 * b2) / det
    w2 = (g11 * b2 - g12 * b1) / det
    return w1[:, None] * t1 + w2[:, None] * t2


# -- sparse operator matrices -------------------------------------------

def d0_matrix(complex):
    ne, nv = complex.n_edges, complex.n_vertices
    rows = np.repeat(np.arange(ne), 2)
    cols = complex.edges.reshape(-1)
    vals = np.tile(np.array([-1.0, 1.0]), ne)
    return sp.csr_matrix((vals, (rows, cols)), shape=(ne, nv))


def d1_matrix(complex):
    nf, ne = complex.n_faces, complex.n_edges
    rows = np.repeat(np.arange(nf), 3)
    cols = complex.face_edges.reshape(-1)
    vals = complex.face_edge_signs.reshape(-1).astype(np.float64)
    return sp.csr_matrix((vals, (rows, cols)), shape=(nf, ne))


def star1_matrix(complex):
    """Sparse matrix of the rotated Hodge star on 1-forms."""
    ne = complex.n_edges
    fe = complex.face_edges
    ev = complex.edge_vectors[fe]            # (nf, 3, 3)
    el2 = np.einsum("fkj,fkj->fk", ev, ev)    # squared lengths per slot
    n = complex.face_normals_raw
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            if a == b:
                continue
            dot = np.einsum("fj,fj->f", ev[:, a], ev[:, b])
            den2 = el2[:, a] * el2[:, b] - dot * dot
            if np.any(den2 <= 0.0):
                bad = int(np.nonzero(den2 <= 0.0)[0][0])
                raise DegenerateGeometryError(
                    f"face {bad}: degenerate Hodge star denominator")
            den = np.sqrt(den2)
            s = np.sign(np.einsum("fj,fj->f",
                                  n, np.cross(ev[:, a], ev[:, b])))
            rows.append(fe[:, a])
            cols.append(fe[:, a])
            vals.append(0.25 * s * dot / den)
            rows.append(fe[:, a])
            cols.append(fe[:, b])
            vals.append(-0.25 * s * el2[:, a] / den)
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ne, ne))
    return mat.tocsr()


def laplace_rr_matrix(complex, dual):
    """Sparse matrix of the rot-rot Laplacian on 1-forms."""
    if np.any(dual.dual_edge_lengths == 0.0):
        bad = int(np.nonzero(dual.dual_edge_lengths == 0.0)[0][0])
        raise DegenerateGeometryError(f"edge {bad} has zero dual length")
    ne = complex.n_edges
    fe = complex.face_edges
    signs = complex.face_edge_signs.astype(np.float64)
    pref = -complex.edge_lengths / dual.dual_edge_lengths
    inv_area = 1.0 / complex.face_areas
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(fe[:, a])
            cols.append(fe[:, b])
            vals.append(pref[fe[:, a]] * signs[:, a] * inv_area * signs[:, b])
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ne, ne))
    return mat.tocsr()


def curl_matrix(complex):
    """Sparse map from 1-form values to pointwise curl at edge midpoints."""
    ne = complex.n_edges
    areas = complex.face_areas
    asum = areas[complex.edge_faces[:, 0]] + areas[complex.edge_faces[:, 1]]
    fe = complex.face_edges
    signs = complex.face_edge_signs.astype(np.float64)
    rows, cols, vals = [], [], []
    for a in range(3):
        for b in range(3):
            rows.append(fe[:, a])
            cols.append(fe[:, b])
            vals.append(signs[:, b] / asum[fe[:, a]])
    mat = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(ne, ne))
    return mat.tocsr()


def divergence_matrix(complex, dual):
    """Sparse map from 1-form values to vertex divergence values."""
    ne, nv = complex.n_edges, complex.n_vertices
    ratio = dual.dual_edge_lengths / complex.edge_lengths
    cols = np.tile(np.arange(ne), 2)
    rows = np.concatenate([complex.edges[:, 1], complex.edges[:, 0]])
    vals = np.concatenate([-ratio / dual.voronoi_areas[complex.edges[:, 1]],
                           ratio / dual.voronoi_areas[complex.edges[:, 0]]])
    return sp.csr_matrix((vals, (rows, cols)), shape=(nv, ne))


def vertex_pairing_matrix(complex, dual):
    """Weights of the vertex inner product: rows map per-edge pair values
    (u(e)*ut(e) + star terms) to the vertex estimate."""
    ne, nv = complex.n_edges, complex.n_vertices
    ratio = dual.dual_edge_lengths / complex.edge_lengths
    cols = np.tile(np.arange(ne), 2)
    rows = np.concatenate([complex.edges[:, 0], complex.edges[:, 1]])
    w = np.concatenate([ratio / (4.0 * dual.voronoi_areas[complex.edges[:, 0]]),
                        ratio / (4.0 * dual.voronoi_areas[complex.edges[:, 1]])])
    return sp.csr_matrix((w, (rows, cols)), shape=(nv, ne))


class Operators:
    """All operator matrices for one (complex, dual) pair, built once."""

    def __init__(self, complex, dual):
        self.complex = complex
        self.dual = dual
        self.d0 = d0_matrix(complex)
        self.d1 = d1_matrix(complex)
        self.star1 = star1_matrix(complex)
        self.laplace_rr = laplace_rr_matrix(complex, dual)
        self.curl = curl_matrix(complex)
        self.divergence = divergence_matrix(complex, dual)
        self.vertex_pairing = vertex_pairing_matrix(complex, dual)
