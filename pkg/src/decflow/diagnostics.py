"""Scalar diagnostics: kinetic energy, vorticity, vortex tracking, EOC.

The kinetic energy is half the dual-cell weighted sum of the vertex inner
product of the velocity with itself, consuming the Hodge-dual values the
solver carries, so the reported energy is exactly the quantity the scheme
dissipates.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from . import forms


@dataclass
class DiagnosticsRecord:
    time: float
    kinetic_energy: float
    max_divergence: float
    max_curl: float
    solver_residual: float
    vortices: list = field(default_factory=list)   # (x, y, z, strength)

    def __post_init__(self):
        if self.kinetic_energy < 0 or self.max_divergence < 0:
            raise ValueError("energy and residuals must be nonnegative")


def kinetic_energy(state, complex, dual):
    """E = 1/2 sum_v |dv| <u, u>(v), using the state's Hodge dual values."""
    ip = forms.inner_product_vertex(state.u, state.u, state.u_dual,
                                    state.u_dual, complex, dual)
    return 0.5 * float(np.dot(dual.voronoi_areas, ip))


def vorticity_form(state, complex, dual):
    """Per-edge curl values and per-face circulation densities."""
    edge_curl = forms.curl_edge_midpoint(state.u, complex, dual)
    face_vorticity = forms.d1(state.u, complex) / complex.face_areas
    return edge_curl, face_vorticity


def track_vortices(face_vorticity, complex, count):
    """Strongest local extrema of per-face vorticity.

    A face is a candidate when its value is strictly larger (or strictly
    smaller) than all three edge-adjacent faces'.  Candidates are ranked
    by absolute value, ties broken by face index; positions are face
    circumcenter surrogates (centroids of the candidate faces are too
    close to matter, the circumcenter matches the dual vertex).  Returns
    (list of (position, strength), warning) where warning flags that fewer
    extrema than requested exist.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    vals = np.asarray(face_vorticity, float)
    nbr = _face_neighbors(complex)
    nvals = vals[nbr]
    is_max = np.all(vals[:, None] > nvals, axis=1)
    is_min = np.all(vals[:, None] < nvals, axis=1)
    cand = np.nonzero(is_max | is_min)[0]
    order = np.lexsort((cand, -np.abs(vals[cand])))
    chosen = cand[order][:count]
    warning = len(chosen) < count
    return [(f, float(vals[f])) for f in chosen], warning


def vortex_positions(tracked, dual):
    """Circumcenter positions for (face, strength) pairs."""
    return [(dual.face_circumcenters[f], s) for f, s in tracked]


def _face_neighbors(complex):
    """(nf, 3) edge-adjacent face indices."""
    nf = complex.n_faces
    nbr = np.empty((nf, 3), dtype=np.int64)
    ef = complex.edge_faces
    for k in range(3):
        e = complex.face_edges[:, k]
        own = np.arange(nf)
        nbr[:, k] = np.where(ef[e, 0] == own, ef[e, 1], ef[e, 0])
    return nbr


def eoc_table(errors, mesh_sizes):
    """EOC_i = ln(err_{i-1}/err_i) / ln(h_{i-1}/h_i) between levels.

    ``mesh_sizes`` must be strictly decreasing (or strictly increasing, as
    for grid h lists produced from increasing n; only the pairing with
    errors matters)."""
    errors = [float(e) for e in errors]
    hs = [float(h) for h in mesh_sizes]
    if len(errors) != len(hs) or len(errors) < 2:
        raise ValueError("need matching error/size lists of length >= 2")
    if any(e <= 0 for e in errors):
        raise ValueError("errors must be positive")
    diffs = np.diff(hs)
    if not (np.all(diffs < 0) or np.all(diffs > 0)):
        raise ValueError("mesh sizes must be strictly monotone")
    return [math.log(errors[k - 1] / errors[k]) / math.log(hs[k - 1] / hs[k])
            for k in range(1, len(errors))]


def mesh_size(complex, dual):
    """h = maximum circumcircle diameter over all triangles."""
    return float(2.0 * dual.face_circumradii.max())


CSV_FIELDS = ["time", "kinetic_energy", "max_divergence", "max_curl",
              "solver_residual"]


def write_csv(records, path, n_vortices=0):
    """Time series CSV; vortex coordinates and strengths are flattened."""
    header = list(CSV_FIELDS)
    for k in range(n_vortices):
        header += [f"vortex{k}_x", f"vortex{k}_y", f"vortex{k}_z",
                   f"vortex{k}_strength"]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for rec in records:
            row = [repr(rec.time), repr(rec.kinetic_energy),
                   repr(rec.max_divergence), repr(rec.max_curl),
                   repr(rec.solver_residual)]
            for k in range(n_vortices):
                if k < len(rec.vortices):
                    x, y, z, s = rec.vortices[k]
                    row += [repr(x), repr(y), repr(z), repr(s)]
                else:
                    row += ["nan"] * 4
            writer.writerow(row)
