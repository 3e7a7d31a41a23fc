"""Gaussian curvature fields on the mesh, analytic or from angle defects.

The viscous term of the momentum equation needs 2*kappa*u on edges, so a
curvature field carries both per-vertex values and per-edge values.  The
analytic source evaluates the catalog surface's closed form (vertices
exactly, edge midpoints through the same formula, which tolerates the
slight off-surface offset of chord midpoints).  The angle-defect source is
fully intrinsic: kappa(v) = (2*pi - sum of interior angles at v) / |dv|,
and satisfies the combinatorial Gauss-Bonnet identity
sum of defects = 2*pi*chi exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .surfaces import SurfaceError


@dataclass
class CurvatureField:
    vertex_kappa: np.ndarray    # (nv,)
    edge_kappa: np.ndarray      # (ne,) values used by the momentum rows
    source: str                 # "analytic" | "angle_defect"


def angle_defects(complex):
    """2*pi minus the sum of incident triangle angles, per vertex."""
    p = complex.positions[complex.faces]
    defects = np.full(complex.n_vertices, 2.0 * np.pi)
    for k in range(3):
        u = p[:, (k + 1) % 3] - p[:, k]
        v = p[:, (k + 2) % 3] - p[:, k]
        cosang = np.einsum("ij,ij->i", u, v) / (
            np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
        ang = np.arccos(np.clip(cosang, -1.0, 1.0))
        np.add.at(defects, complex.faces[:, k], -ang)
    return defects


def kappa_angle_defect(complex, dual):
    """Angle-defect Gaussian curvature; edges average their endpoints."""
    vk = angle_defects(complex) / dual.voronoi_areas
    ek = 0.5 * (vk[complex.edges[:, 0]] + vk[complex.edges[:, 1]])
    return CurvatureField(vk, ek, "angle_defect")


def kappa_analytic(descriptor, complex, dual):
    """Closed-form curvature of a catalog surface, at vertices and edge
    midpoints.  Raises :class:`SurfaceError` when the surface has no
    closed form (biconcave, external meshes)."""
    if not hasattr(descriptor, "gaussian_curvature"):
        raise SurfaceError(f"no analytic curvature for {descriptor!r}")
    vk = np.asarray(descriptor.gaussian_curvature(complex.positions), float)
    ek = np.asarray(descriptor.gaussian_curvature(dual.edge_midpoints), float)
    return CurvatureField(vk, ek, "analytic")


def curvature_for(descriptor, complex, dual, source="auto"):
    """Pick the curvature source: "analytic", "angle_defect" or "auto"
    (analytic when the catalog provides it, angle defect otherwise)."""
    if source == "angle_defect":
        return kappa_angle_defect(complex, dual)
    if source == "analytic":
        return kappa_analytic(descriptor, complex, dual)
    if source != "auto":
        raise ValueError(f"unknown curvature source {source!r}")
    try:
        return kappa_analytic(descriptor, complex, dual)
    except SurfaceError:
        return kappa_angle_defect(complex, dual)
