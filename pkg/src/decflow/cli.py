"""Configuration files, output writers and the command line front end.

Config files are INI-style key=value with three sections::

    [surface]
    kind = sphere            ; sphere | ellipsoid | biconcave | torus | mesh
    resolution = 16          ; icosphere frequency, or "nphi,ntheta" for torus
    ; kind-specific parameters: radius | a b c | a c | R r | path

    [solver]
    re = 10.0
    tau = 0.1
    t_end = 10.0
    initial = killing        ; killing | zero | stream:gx,gy,gz | harmonic:a,b
    gauge_vertex = 0
    curvature = auto         ; auto | analytic | angle_defect
    tolerance = 1e-10
    method = direct          ; direct | iterative

    [output]
    dir = out
    every = 10
    vtk = false
    vortices = 0

Exit codes: 1 for configuration errors, 2 for mesh errors, 3 for solver
failures.
"""

from __future__ import annotations

import argparse
import configparser
import json
import os
import sys
import time

import numpy as np

from . import __version__, diagnostics, forms, ns_solver
from .curvature import curvature_for
from .mesh import MeshError, circumcentric_dual, load_mesh, well_centered_report
from .ns_solver import SimulationConfig, SolverError, SolverSettings
from .surfaces import (Biconcave, Ellipsoid, ExternalMesh, HarmonicTorus,
                       KillingSphere, Sphere, StreamCurl, SurfaceError, Torus,
                       ZeroField, generate_mesh)


class ConfigError(ValueError):
    pass


_SURFACE_KEYS = {
    "sphere": {"radius"},
    "ellipsoid": {"a", "b", "c"},
    "biconcave": {"a", "c"},
    "torus": {"r_major", "r_minor"},
    "mesh": {"path"},
}
_SOLVER_KEYS = {"re", "tau", "t_end", "initial", "gauge_vertex", "curvature",
                "tolerance", "method"}
_OUTPUT_KEYS = {"dir", "every", "vtk", "vortices"}


def _floats(text, n, what):
    parts = [p for p in text.replace(",", " ").split() if p]
    if len(parts) != n:
        raise ConfigError(f"{what}: expected {n} numbers, got {text!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(f"{what}: {exc}") from None


def _parse_surface(sec):
    kind = sec.get("kind")
    if kind is None:
        raise ConfigError("[surface] needs a 'kind'")
    extra = set(sec) - {"kind", "resolution"} - _SURFACE_KEYS.get(kind, set())
    if extra:
        raise ConfigError(f"unknown [surface] keys for {kind}: {sorted(extra)}")
    try:
        if kind == "sphere":
            surf = Sphere(radius=float(sec.get("radius", 1.0)))
        elif kind == "ellipsoid":
            surf = Ellipsoid(a=float(sec.get("a", 0.5)),
                             b=float(sec.get("b", 0.5)),
                             c=float(sec.get("c", 1.5)))
        elif kind == "biconcave":
            surf = Biconcave(a=float(sec.get("a", 0.72)),
                             c=float(sec.get("c", 0.75)))
        elif kind == "torus":
            surf = Torus(R=float(sec.get("r_major", 2.0)),
                         r=float(sec.get("r_minor", 0.5)))
        elif kind == "mesh":
            if "path" not in sec:
                raise ConfigError("[surface] kind=mesh needs 'path'")
            surf = ExternalMesh(path=sec["path"])
        else:
            raise ConfigError(f"unknown surface kind {kind!r}")
    except (ValueError, SurfaceError) as exc:
        raise ConfigError(str(exc)) from None

    resolution = None
    if "resolution" in sec:
        text = sec["resolution"]
        if "," in text:
            a, b = ( int(p) for p in text.split(",") )
            resolution = (a, b)
        else:
            resolution = int(text)
    return surf, resolution


def _parse_initial(text):
    text = text.strip()
    if text == "killing":
        return KillingSphere()
    if text == "zero":
        return ZeroField()
    if text.startswith("stream:"):
        g = _floats(text[len("stream:"):], 3, "stream coefficients")
        return StreamCurl(*g)
    if text.startswith("harmonic:"):
        ab = _floats(text[len("harmonic:"):], 2, "harmonic coefficients")
        return HarmonicTorus(*ab)
    raise ConfigError(f"unknown initial condition {text!r}")


def parse_config(source, overrides=None):
    """Build a :class:`SimulationConfig` from an INI file path or string.

    ``overrides`` is an optional flat mapping of solver/output keys (plus
    "resolution") applied on top of the file, matching the CLI flags.
    """
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    try:
        if os.path.exists(str(source)):
            parser.read(str(source))
        else:
            parser.read_string(str(source))
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None

    unknown_sections = set(parser.sections()) - {"surface", "solver", "output"}
    if unknown_sections:
        raise ConfigError(f"unknown sections: {sorted(unknown_sections)}")
    if "surface" not in parser:
        raise ConfigError("missing [surface] section")
    solver_sec = dict(parser["solver"]) if "solver" in parser else {}
    output_sec = dict(parser["output"]) if "output" in parser else {}
    for name, sec, allowed in (("solver", solver_sec, _SOLVER_KEYS),
                               ("output", output_sec, _OUTPUT_KEYS)):
        extra = set(sec) - allowed
        if extra:
            raise ConfigError(f"unknown [{name}] keys: {sorted(extra)}")

    overrides = dict(overrides or {})
    surf, resolution = _parse_surface(dict(parser["surface"]))
    if overrides.get("resolution") is not None:
        resolution = overrides.pop("resolution")
    if overrides.get("mesh") is not None:
        surf = ExternalMesh(path=overrides.pop("mesh"))
    for key in ("re", "tau", "t_end", "dir"):
        if overrides.get(key) is not None:
            target = output_sec if key == "dir" else solver_sec
            target[key] = str(overrides.pop(key))
    overrides = {k: v for k, v in overrides.items() if v is not None}
    if overrides:
        raise ConfigError(f"unknown overrides: {sorted(overrides)}")

    try:
        config = SimulationConfig(
            surface=surf,
            resolution=resolution,
            t_end=float(solver_sec.get("t_end", 0.0)),
            reynolds=float(solver_sec.get("re", 10.0)),
            tau=float(solver_sec.get("tau", 0.1)),
            initial=_parse_initial(solver_sec.get("initial", "zero")),
            gauge_vertex=int(solver_sec.get("gauge_vertex", 0)),
            curvature_source=solver_sec.get("curvature", "auto"),
            solver=SolverSettings(
                tolerance=float(solver_sec.get("tolerance", 1e-10)),
                method=solver_sec.get("method", "direct")),
            output_dir=output_sec.get("dir"),
            output_every=int(output_sec.get("every", 10)),
            write_vtk=output_sec.get("vtk", "false").lower() in ("1", "true", "yes"),
            n_vortices=int(output_sec.get("vortices", 0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if config.curvature_source not in ("auto", "analytic", "angle_defect"):
        raise ConfigError(f"unknown curvature source "
                          f"{config.curvature_source!r}")
    return config


def config_to_ini(config):
    """Serialize a config back to INI text; reparsing gives an equal config."""
    surf = config.surface
    lines = ["[surface]", f"kind = {surf.kind}"]
    if config.resolution is not None:
        if isinstance(config.resolution, tuple):
            lines.append("resolution = {},{}".format(*config.resolution))
        else:
            lines.append(f"resolution = {config.resolution}")
    if isinstance(surf, Sphere):
        lines.append(f"radius = {surf.radius!r}")
    elif isinstance(surf, Ellipsoid):
        lines += [f"a = {surf.a!r}", f"b = {surf.b!r}", f"c = {surf.c!r}"]
    elif isinstance(surf, Biconcave):
        lines += [f"a = {surf.a!r}", f"c = {surf.c!r}"]
    elif isinstance(surf, Torus):
        lines += [f"r_major = {surf.R!r}", f"r_minor = {surf.r!r}"]
    elif isinstance(surf, ExternalMesh):
        lines.append(f"path = {surf.path}")

    ic = config.initial
    if isinstance(ic, KillingSphere):
        initial = "killing"
    elif isinstance(ic, ZeroField):
        initial = "zero"
    elif isinstance(ic, StreamCurl):
        initial = f"stream:{ic.gx!r},{ic.gy!r},{ic.gz!r}"
    elif isinstance(ic, HarmonicTorus):
        initial = f"harmonic:{ic.alpha!r},{ic.beta!r}"
    else:
        raise ConfigError(f"cannot serialize initial condition {ic!r}")

    lines += [
        "", "[solver]",
        f"re = {config.reynolds!r}",
        f"tau = {config.tau!r}",
        f"t_end = {config.t_end!r}",
        f"initial = {initial}",
        f"gauge_vertex = {config.gauge_vertex}",
        f"curvature = {config.curvature_source}",
        f"tolerance = {config.solver.tolerance!r}",
        f"method = {config.solver.method}",
        "", "[output]",
        f"every = {config.output_every}",
        f"vtk = {'true' if config.write_vtk else 'false'}",
        f"vortices = {config.n_vortices}",
    ]
    if config.output_dir:
        lines.append(f"dir = {config.output_dir}")
    return "\n".join(lines) + "\n"


# -- VTK ------------------------------------------------------------------

def _fmt(x):
    return f"{x:.17g}"


def write_vtk(state, complex, dual, path):
    """Legacy ASCII unstructured-grid snapshot.

    Point data: reconstructed velocity vectors, pressure, generalized
    pressure, divergence residual.  Cell data: circulation density
    (vorticity).  Floats carry 17 significant digits so files are
    bit-reproducible and round-trip exactly.
    """
    velocity = forms.reconstruct_vertex_vectors(state.u, complex, dual)
    div = forms.divergence_vertex(state.u, complex, dual).values
    vort = forms.d1(state.u, complex) / complex.face_areas
    nv, nf = complex.n_vertices, complex.n_faces
    with open(path, "w") as fh:
        w = fh.write
        w("# vtk DataFile Version 3.0\n")
        w(f"decflow snapshot t={_fmt(state.time)} step={state.step_index}\n")
        w("ASCII\nDATASET UNSTRUCTURED_GRID\n")
        w(f"POINTS {nv} double\n")
        for p in complex.positions:
            w(f"{_fmt(p[0])} {_fmt(p[1])} {_fmt(p[2])}\n")
        w(f"CELLS {nf} {4 * nf}\n")
        for f in complex.faces:
            w(f"3 {f[0]} {f[1]} {f[2]}\n")
        w(f"CELL_TYPES {nf}\n")
        for _ in range(nf):
            w("5\n")
        w(f"POINT_DATA {nv}\n")
        w("VECTORS velocity double\n")
        for v in velocity:
            w(f"{_fmt(v[0])} {_fmt(v[1])} {_fmt(v[2])}\n")
        for name, values in (("pressure", state.p.values),
                             ("generalized_pressure", state.q.values),
                             ("divergence_residual", div)):
            w(f"SCALARS {name} double 1\nLOOKUP_TABLE default\n")
            for x in values:
                w(f"{_fmt(x)}\n")
        w(f"CELL_DATA {nf}\n")
        w("SCALARS vorticity double 1\nLOOKUP_TABLE default\n")
        for x in vort:
            w(f"{_fmt(x)}\n")


def read_vtk(path):
    """Parse the subset of legacy VTK written by :func:`write_vtk`."""
    with open(path) as fh:
        tokens = fh.read().split()
    data = {"point_data": {}, "cell_data": {}}
    i = 0

    def take(n):
        nonlocal i
        out = tokens[i:i + n]
        i += n
        return out

    while i < len(tokens):
        tok = tokens[i]
        i += 1
        if tok == "POINTS":
            n = int(take(1)[0])
            take(1)  # dtype
            vals = np.array([float(x) for x in take(3 * n)])
            data["points"] = vals.reshape(n, 3)
        elif tok == "CELLS":
            n, total = int(take(1)[0]), int(take(1)[0])
            raw = np.array([int(x) for x in take(total)])
            data["cells"] = raw.reshape(n, 4)[:, 1:]
        elif tok == "CELL_TYPES":
            n = int(take(1)[0])
            take(n)
        elif tok in ("POINT_DATA", "CELL_DATA"):
            count = int(take(1)[0])
            target = "point_data" if tok == "POINT_DATA" else "cell_data"
            while i < len(tokens) and tokens[i] in ("VECTORS", "SCALARS"):
                kind = tokens[i]
                i += 1
                name = take(1)[0]
                take(1)  # dtype
                if kind == "VECTORS":
                    vals = np.array([float(x) for x in take(3 * count)])
                    data[target][name] = vals.reshape(count, 3)
                else:
                    take(3)  # "1 LOOKUP_TABLE default"
                    data[target][name] = np.array(
                        [float(x) for x in take(count)])
    return data


# -- subcommands ----------------------------------------------------------

def _mesh_stats(complex, dual):
    report = well_centered_report(complex, dual)
    return {
        "vertices": complex.n_vertices,
        "edges": complex.n_edges,
        "faces": complex.n_faces,
        "euler_characteristic": complex.euler_characteristic,
        "h": diagnostics.mesh_size(complex, dual),
        "well_centered": bool(report.is_well_centered),
        "faces_outside": int(len(report.faces_outside)),
        "edges_nonpositive": int(len(report.edges_nonpositive)),
    }


def _cmd_run(args):
    config = parse_config(args.config, overrides={
        "re": args.re, "tau": args.tau, "t_end": args.t_end,
        "resolution": args.resolution, "mesh": args.mesh, "dir": args.out})
    outdir = config.output_dir or "."
    os.makedirs(outdir, exist_ok=True)

    t0 = time.perf_counter()
    complex = generate_mesh(config.surface, config.resolution)
    dual = circumcentric_dual(complex)

    snapshots = []

    def on_snapshot(state):
        if config.write_vtk:
            path = os.path.join(outdir, f"snapshot_{state.step_index:06d}.vtk")
            write_vtk(state, complex, dual, path)
            snapshots.append(path)

    result = ns_solver.run(config, complex=complex, dual=dual,
                           on_snapshot=on_snapshot)
    wall = time.perf_counter() - t0

    diagnostics.write_csv(result.records,
                          os.path.join(outdir, "diagnostics.csv"),
                          n_vortices=config.n_vortices)
    with open(os.path.join(outdir, "resolved.ini"), "w") as fh:
        fh.write(config_to_ini(config))
    manifest = {
        "version": __version__,
        "config": config_to_ini(config),
        "mesh": _mesh_stats(complex, dual),
        "timings": dict(result.timings, total=wall),
        "snapshots": snapshots,
        "final_energy": result.records[-1].kinetic_energy,
    }
    with open(os.path.join(outdir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, indent=2)
    rec = result.records[-1]
    print(f"t={rec.time:g} E={rec.kinetic_energy:.9g} "
          f"max_div={rec.max_divergence:.3e} steps={config.n_steps}")
    return 0


def _cmd_convergence(args):
    base = parse_config(args.config) if args.config else SimulationConfig(
        surface=Sphere(), t_end=10.0, initial=KillingSphere())
    resolutions = [int(r) for r in args.resolutions.split(",")]
    e_exact = 4.0 * np.pi / 3.0
    rows = []
    for nu in resolutions:
        complex = generate_mesh(Sphere(), nu)
        dual = circumcentric_dual(complex)
        config = ns_solver.SimulationConfig(
            surface=Sphere(), t_end=base.t_end, resolution=nu,
            reynolds=base.reynolds, tau=base.tau, initial=KillingSphere(),
            solver=base.solver, output_every=max(base.n_steps, 1))
        result = ns_solver.run(config, complex=complex, dual=dual)
        h = diagnostics.mesh_size(complex, dual)
        rows.append((nu, h, abs(e_exact - result.records[-1].kinetic_energy)))
    errors = [r[2] for r in rows]
    hs = [r[1] for r in rows]
    eocs = [float("nan")] + diagnostics.eoc_table(errors, hs)
    print(f"{'resolution':>10} {'h':>10} {'|E0-E|':>12} {'EOC':>8}")
    for (nu, h, err), eoc in zip(rows, eocs):
        print(f"{nu:>10} {h:>10.4f} {err:>12.3e} {eoc:>8.3f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("resolution,h,energy_error,eoc\n")
            for (nu, h, err), eoc in zip(rows, eocs):
                fh.write(f"{nu},{h!r},{err!r},{eoc!r}\n")
    return 0


def _cmd_flatfd_study(args):
    from . import flatfd
    ns = [int(n) for n in args.ns.split(",")]
    studies = []
    for fld in (flatfd.field_sin_y(), flatfd.field_mixed_trig()):
        for stencil in ("rotrot", "five_point"):
            studies.append(flatfd.consistency_study(fld, ns, stencil))
    print(f"{'stencil':>10} {'field':>22} {'n':>5} {'h':>10} "
          f"{'max error':>12} {'EOC':>8}")
    lines = ["stencil,field,n,h,error,eoc"]
    for st in studies:
        for n, h, err, eoc in st.rows():
            print(f"{st.stencil:>10} {st.field:>22} {n:>5} {h:>10.5f} "
                  f"{err:>12.4e} {eoc:>8.3f}")
            lines.append(f"{st.stencil},{st.field},{n},{h!r},{err!r},{eoc!r}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return 0


def _cmd_mesh_info(args):
    if args.mesh:
        complex = load_mesh(args.mesh)
    elif args.config:
        config = parse_config(args.config,
                              overrides={"resolution": args.resolution})
        complex = generate_mesh(config.surface, config.resolution)
    else:
        raise ConfigError("mesh-info needs --mesh or --config")
    dual = circumcentric_dual(complex)
    stats = _mesh_stats(complex, dual)
    for key, value in stats.items():
        print(f"{key}: {value}")
    print(well_centered_report(complex, dual).summary())
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="decflow",
        description="incompressible surface flow on closed triangle meshes")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="integrate a configured experiment")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--mesh", help="override: load this mesh file")
    p_run.add_argument("--out", help="override: output directory")
    p_run.add_argument("--re", type=float)
    p_run.add_argument("--tau", type=float)
    p_run.add_argument("--t-end", dest="t_end", type=float)
    p_run.add_argument("--resolution", type=int)
    p_run.set_defaults(func=_cmd_run)

    p_conv = sub.add_parser("convergence",
                            help="sphere steady-rotation energy-error table")
    p_conv.add_argument("--config", help="base solver settings (optional)")
    p_conv.add_argument("--resolutions", default="14,23,32,49")
    p_conv.add_argument("--out", help="CSV output path")
    p_conv.set_defaults(func=_cmd_convergence)

    p_flat = sub.add_parser("flatfd-study",
                            help="staggered-grid stencil consistency orders")
    p_flat.add_argument("--ns", default="16,32,64,128")
    p_flat.add_argument("--out", help="CSV output path")
    p_flat.set_defaults(func=_cmd_flatfd_study)

    p_info = sub.add_parser("mesh-info", help="mesh statistics and dual check")
    p_info.add_argument("--mesh")
    p_info.add_argument("--config")
    p_info.add_argument("--resolution", type=int)
    p_info.set_defaults(func=_cmd_mesh_info)
    return parser


def main(argv=None):
    threads = os.environ.get("DECFLOW_THREADS")
    if threads:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                    "MKL_NUM_THREADS"):
            os.environ.setdefault(var, threads)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, configparser.Error) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except (MeshError, SurfaceError, FileNotFoundError) as exc:
        print(f"mesh error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
