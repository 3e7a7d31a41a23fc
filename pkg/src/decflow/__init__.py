"""Incompressible surface flow on closed triangle meshes via DEC."""

__version__ = "0.1.0"

from .mesh import (SimplicialComplex, DualGeometry, build_complex,
                   circumcentric_dual, well_centered_report, load_mesh)
from .forms import Form0, Form1, sample_one_form
from .surfaces import (Sphere, Ellipsoid, Biconcave, Torus, ExternalMesh,
                       KillingSphere, StreamCurl, HarmonicTorus, ZeroField,
                       generate_mesh, initial_velocity)
from .curvature import kappa_analytic, kappa_angle_defect, curvature_for
from .ns_solver import (SimulationConfig, SolverSettings, SolverState,
                        NavierStokesSolver, run)
from .diagnostics import kinetic_energy, eoc_table, mesh_size

__all__ = [
    "SimplicialComplex", "DualGeometry", "build_complex",
    "circumcentric_dual", "well_centered_report", "load_mesh",
    "Form0", "Form1", "sample_one_form",
    "Sphere", "Ellipsoid", "Biconcave", "Torus", "ExternalMesh",
    "KillingSphere", "StreamCurl", "HarmonicTorus", "ZeroField",
    "generate_mesh", "initial_velocity",
    "kappa_analytic", "kappa_angle_defect", "curvature_for",
    "SimulationConfig", "SolverSettings", "SolverState",
    "NavierStokesSolver", "run",
    "kinetic_energy", "eoc_table", "mesh_size",
    "__version__",
]
