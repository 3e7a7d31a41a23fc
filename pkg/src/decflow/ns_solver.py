"""Semi-implicit time stepping of the incompressible surface flow.

Each step solves one sparse linear system for the stacked unknowns
(u, w, q, p) where u is the velocity 1-form at the new time level, w its
rotated Hodge dual (kept as an independent unknown), q the generalized
pressure and p the pressure.  With U the previous velocity, W its dual,
tau the step and Re the Reynolds number, the four row blocks are

  momentum (per edge):
      u/tau + d0 q + curl(u)*W - mean_div(W)*w
          - (laplace_rr(u) + 2 kappa u)/Re  =  U/tau + curl(U)*W
  dual definition (per edge):   star(u) - w = 0
  pressure relation (per vertex):
      <u, U>(v) + p(v) - q(v) = ||U||^2(v) / 2
  incompressibility (per vertex):  div(u)(v) = 0

mean_div(W) averages the vertex divergence of W over the edge's two
endpoints.  The generalized pressure absorbs the gradient part of the
linearized advection, q = p + <u, U> - ||U||^2/2.  The (q, p) pair is only
determined up to a common constant; the divergence row of one gauge
vertex is replaced by p(v0) = 0.  Replacing a divergence row is harmless:
the dual-cell weighted divergences always sum to zero on a closed
surface, so the dropped constraint is implied by the others.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import diagnostics, forms
from .curvature import curvature_for
from .forms import Form0, Form1, Operators
from .mesh import circumcentric_dual
from .surfaces import (InitialCondition, SurfaceDescriptor, ZeroField,
                       generate_mesh, initial_velocity)


class SolverError(RuntimeError):
    """Singular or non-converging linear solve, or a violated invariant."""


@dataclass
class SolverSettings:
    tolerance: float = 1e-10      # relative infinity-norm residual target
    method: str = "direct"        # "direct" | "iterative"
    max_iterations: int = 2000    # iterative fallback cap

    def __post_init__(self):
        if self.tolerance <= 0:
            raise ValueError("solver tolerance must be positive")
        if self.method not in ("direct", "iterative"):
            raise ValueError(f"unknown solver method {self.method!r}")


@dataclass
class SimulationConfig:
    surface: SurfaceDescriptor
    t_end: float
    resolution: object = None            # int or (n_phi, n_theta)
    reynolds: float = 10.0
    tau: float = 0.1
    initial: InitialCondition = field(default_factory=ZeroField)
    gauge_vertex: int = 0
    curvature_source: str = "auto"       # auto | analytic | angle_defect
    solver: SolverSettings = field(default_factory=SolverSettings)
    output_every: int = 10               # snapshot cadence in steps
    output_dir: str | None = None
    write_vtk: bool = False
    n_vortices: int = 0                  # tracked extrema per record (0 = off)

    def __post_init__(self):
        if self.reynolds <= 0:
            raise ValueError("Re must be positive")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.t_end < 0:
            raise ValueError("t_end must be nonnegative")
        if self.output_every < 1:
            raise ValueError("output cadence must be >= 1 step")

    @property
    def n_steps(self):
        return int(round(self.t_end / self.tau))


@dataclass
class SolverState:
    u: Form1          # velocity 1-form
    u_dual: Form1     # Hodge dual unknown
    q: Form0          # generalized pressure
    p: Form0          # pressure
    time: float
    step_index: int


@dataclass
class BlockLayout:
    """Row/column offsets of the stacked system."""

    n_edges: int
    n_vertices: int

    @property
    def dimension(self):
        return 2 * (self.n_edges + self.n_vertices)

    # row blocks
    @property
    def row_momentum(self):
        return 0

    @property
    def row_hodge(self):
        return self.n_edges

    @property
    def row_pressure(self):
        return 2 * self.n_edges

    @property
    def row_divergence(self):
        return 2 * self.n_edges + self.n_vertices

    # column blocks
    @property
    def col_u(self):
        return 0

    @property
    def col_w(self):
        return self.n_edges

    @property
    def col_q(self):
        return 2 * self.n_edges

    @property
    def col_p(self):
        return 2 * self.n_edges + self.n_vertices


@dataclass
class SparseSystem:
    matrix: sp.spmatrix
    rhs: np.ndarray
    layout: BlockLayout
    # stashed blocks enabling the exact block-eliminated solve; systems
    # built elsewhere (reduction=None) take the plain direct path
    reduction: object = None


class _Reduction:
    """Exact elimination of the dual and pressure unknowns.

    The Hodge rows pin w = H u and the pressure rows pin
    p = rhs_p - P_u u - P_w w + q, so the full system collapses to an
    (E + V) system over (u, q): the momentum block absorbs diag(aw) H,
    the divergence block keeps its rows except at the gauge vertex, whose
    row becomes q(v0) - [(P_u + P_w H) u](v0) = -rhs_p(v0).  Solving the
    reduced system and back-substituting reproduces the full solution
    exactly (up to roundoff), for any right hand side, which also makes
    iterative refinement against the full matrix possible.
    """

    def __init__(self, A_uu, aw, d0, H, P_u, P_w, div_gauged, v0, rhs_p):
        E, V = H.shape[0], P_u.shape[0]
        self.E, self.V, self.v0 = E, V, v0
        self.aw = aw
        self.H = H
        self.P_u, self.P_w = P_u, P_w
        self.rhs_p = rhs_p
        A_red = (A_uu + sp.diags(aw) @ H).tocsr()
        gauge_u = -(P_u.getrow(v0) + P_w.getrow(v0) @ H)
        bottom_left = _with_row(div_gauged, v0, gauge_u)
        bottom_right = sp.csr_matrix(
            (np.array([1.0]), (np.array([v0]), np.array([v0]))), shape=(V, V))
        self.matrix = sp.bmat([[A_red, d0], [bottom_left, bottom_right]],
                              format="csc")
        self._lu = None

    def factorize(self):
        if self._lu is None:
            try:
                self._lu = spla.splu(self.matrix)
            except RuntimeError as exc:
                raise SolverError(f"singular system: {exc}") from exc
        return self._lu

    def solve_full(self, rho):
        """Solve M x = rho for the full stacked right hand side."""
        E, V, v0 = self.E, self.V, self.v0
        rho_m, rho_h = rho[:E], rho[E:2 * E]
        rho_p, rho_d = rho[2 * E:2 * E + V], rho[2 * E + V:]
        top = rho_m + self.aw * rho_h
        bottom = rho_d.copy()
        bottom[v0] = rho_d[v0] - rho_p[v0] - float(self.P_w.getrow(v0) @ rho_h)
        y = self.factorize().solve(np.concatenate([top, bottom]))
        u, q = y[:E], y[E:]
        w = self.H @ u - rho_h
        p = rho_p - self.P_u @ u - self.P_w @ w + q
        return np.concatenate([u, w, q, p])


def _with_row(matrix, row, new_row):
    """Copy of a CSR matrix with one row replaced by a 1-row sparse."""
    out = matrix.tolil(copy=True)
    new_row = new_row.tocoo()
    out.rows[row] = list(new_row.col)
    out.data[row] = list(new_row.data)
    return out.tocsr()


class NavierStokesSolver:
    """Per-mesh assembler/stepper; builds the constant blocks once."""

    def __init__(self, complex, dual, kappa, config):
        self.complex = complex
        self.dual = dual
        self.kappa = kappa
        self.config = config
        self.ops = Operators(complex, dual)
        E, V = complex.n_edges, complex.n_vertices
        self.layout = BlockLayout(E, V)
        v0 = config.gauge_vertex
        if not (0 <= v0 < V):
            raise ValueError("gauge vertex out of range")

        tau, re = config.tau, config.reynolds
        self._I_E = sp.identity(E, format="csr")
        self._I_V = sp.identity(V, format="csr")
        self._A_const = (self._I_E / tau
                         - (self.ops.laplace_rr
                            + sp.diags(2.0 * kappa.edge_kappa)) / re).tocsr()
        # divergence block with the gauge row blanked, plus the p(v0) pin
        div = self.ops.divergence.tolil(copy=True)
        div[v0, :] = 0.0
        self._div_gauged = div.tocsr()
        self._gauge_p = sp.csr_matrix(
            (np.array([1.0]), (np.array([v0]), np.array([v0]))), shape=(V, V))
        self._lu = None
        self.last_solver_residual = 0.0
        self.last_divergence_residual = 0.0

    # -- system assembly ------------------------------------------------

    def assemble(self, state):
        u_k = np.asarray(state.u.values, float)
        w_k = np.asarray(state.u_dual.values, float)
        if not (np.all(np.isfinite(u_k)) and np.all(np.isfinite(w_k))):
            raise SolverError("non-finite state entering assembly")
        E, V = self.layout.n_edges, self.layout.n_vertices
        edges = self.complex.edges

        curl_u_k = self.ops.curl @ u_k
        div_w_k = self.ops.divergence @ w_k
        mean_div = 0.5 * (div_w_k[edges[:, 0]] + div_w_k[edges[:, 1]])

        # row-scale the curl operator by the known dual values
        A_adv = self.ops.curl.copy()
        A_adv.data = A_adv.data * np.repeat(w_k, np.diff(A_adv.indptr))
        A_uu = self._A_const + A_adv
        A_uw = sp.diags(-mean_div)

        # column-scale the pairing weights by the known state
        P_u = self.ops.vertex_pairing.copy()
        P_u.data = P_u.data * u_k[P_u.indices]
        P_w = self.ops.vertex_pairing.copy()
        P_w.data = P_w.data * w_k[P_w.indices]

        matrix = sp.bmat([
            [A_uu, A_uw, self.ops.d0, None],
            [self.ops.star1, -self._I_E, None, None],
            [P_u, P_w, -self._I_V, self._I_V],
            [self._div_gauged, None, None, self._gauge_p],
        ], format="csc")

        rhs = np.empty(self.layout.dimension)
        rhs[:E] = u_k / self.config.tau + w_k * curl_u_k
        rhs[E:2 * E] = 0.0
        rhs[2 * E:2 * E + V] = 0.5 * (
            self.ops.vertex_pairing @ (u_k * u_k + w_k * w_k))
        rhs[2 * E + V:] = 0.0
        reduction = _Reduction(A_uu, -mean_div, self.ops.d0, self.ops.star1,
                               P_u, P_w, self._div_gauged,
                               self.config.gauge_vertex,
                               rhs[2 * E:2 * E + V])
        return SparseSystem(matrix, rhs, self.layout, reduction)

    # -- linear solve -----------------------------------------------------

    def solve(self, system):
        x, residual = _solve_linear(system.matrix, system.rhs,
                                    self.config.solver, system.reduction)
        self.last_solver_residual = residual
        return x

    # -- time stepping ---------------------------------------------------

    def step(self, state):
        system = self.assemble(state)
        x = self.solve(system)
        E, V = self.layout.n_edges, self.layout.n_vertices
        u = x[:E].copy()
        w = x[E:2 * E].copy()
        q = x[2 * E:2 * E + V].copy()
        p = x[2 * E + V:].copy()
        # remove the shared (q, p) constant so the gauge holds exactly
        shift = p[self.config.gauge_vertex]
        q -= shift
        p -= shift
        p[self.config.gauge_vertex] = 0.0

        div_res = float(np.abs(self.ops.divergence @ u).max())
        if div_res > 10.0 * self.config.solver.tolerance:
            raise SolverError(
                f"divergence residual {div_res:.3e} violates the constraint")
        self.last_divergence_residual = div_res
        return SolverState(Form1(u), Form1(w), Form0(q), Form0(p),
                           time=state.time + self.config.tau,
                           step_index=state.step_index + 1)


def _refine(solve, M, r, x, settings):
    # iterative refinement: on poorly centered meshes a single factorized
    # solve can sit near the residual contract, so polish well below it
    rnorm = np.abs(r).max()
    if rnorm == 0.0:
        return x
    for _ in range(4):
        rho = r - M @ x
        if np.abs(rho).max() <= 1e-3 * settings.tolerance * rnorm:
            break
        x = x + solve(rho)
    return x


def _solve_linear(M, r, settings, reduction=None):
    if settings.method == "direct" and reduction is not None:
        x = reduction.solve_full(r)
        x = _refine(reduction.solve_full, M, r, x, settings)
    elif settings.method == "direct":
        try:
            lu = spla.splu(M.tocsc())
        except RuntimeError as exc:
            raise SolverError(f"singular system: {exc}") from exc
        x = lu.solve(r)
        x = _refine(lu.solve, M, r, x, settings)
    else:
        try:
            ilu = spla.spilu(M.tocsc(), drop_tol=1e-6, fill_factor=20)
        except RuntimeError as exc:
            raise SolverError(f"preconditioner failed: {exc}") from exc
        prec = spla.LinearOperator(M.shape, ilu.solve)
        x, info = spla.lgmres(M, r, M=prec, rtol=settings.tolerance / 10,
                              atol=0.0, maxiter=settings.max_iterations)
        if info != 0:
            raise SolverError(f"iterative solver stalled (info={info})")
    rnorm = np.abs(r).max()
    residual = float(np.abs(M @ x - r).max() / rnorm) if rnorm > 0 else 0.0
    if not np.isfinite(residual) or residual > settings.tolerance:
        raise SolverError(f"linear solve residual {residual:.3e} exceeds "
                          f"{settings.tolerance:.1e}")
    return x, residual


# -- spec-level convenience wrappers --------------------------------------

def assemble_system(state, complex, dual, kappa, config):
    return NavierStokesSolver(complex, dual, kappa, config).assemble(state)


def solve_sparse(system, settings=None):
    """Solve an assembled system under the residual contract."""
    x, _ = _solve_linear(system.matrix, system.rhs,
                         settings or SolverSettings())
    return x


def step(state, complex, dual, kappa, config):
    return NavierStokesSolver(complex, dual, kappa, config).step(state)


def initial_state(complex, dual, descriptor, ic):
    """Sample the initial field; the dual starts as star(u) exactly."""
    fld = initial_velocity(ic, descriptor)
    u0 = forms.sample_one_form(fld, complex, dual)
    w0 = forms.hodge_star_edge(u0, complex, dual)
    return SolverState(u0, w0, Form0.zeros(complex), Form0.zeros(complex),
                       time=0.0, step_index=0)


@dataclass
class RunResult:
    config: SimulationConfig
    complex: object
    dual: object
    kappa: object
    states: list            # snapshots at the output cadence (incl. final)
    records: list           # one DiagnosticsRecord per time level
    timings: dict

    @property
    def final_state(self):
        return self.states[-1]

    @property
    def energies(self):
        return np.array([r.kinetic_energy for r in self.records])

    @property
    def times(self):
        return np.array([r.time for r in self.records])


def run(config, complex=None, dual=None, on_snapshot=None):
    """Integrate from t=0 to t_end; deterministic given the config.

    Mesh generation can be bypassed by passing a prebuilt complex (and
    optionally its dual).  ``on_snapshot(state)`` fires at the output
    cadence and on the final state.  Partial results are kept on the
    raised exception's ``partial`` attribute when a step fails.
    """
    timings = {}
    t0 = _time.perf_counter()
    if complex is None:
        complex = generate_mesh(config.surface, config.resolution)
    if dual is None:
        dual = circumcentric_dual(complex)
    kappa = curvature_for(config.surface, complex, dual,
                          config.curvature_source)
    timings["setup"] = _time.perf_counter() - t0

    t0 = _time.perf_counter()
    solver = NavierStokesSolver(complex, dual, kappa, config)
    state = initial_state(complex, dual, config.surface, config.initial)
    timings["assembly_setup"] = _time.perf_counter() - t0

    def record_of(state, solver_residual):
        edge_curl, face_vort = diagnostics.vorticity_form(state, complex, dual)
        vortices = []
        if config.n_vortices > 0:
            tracked, _ = diagnostics.track_vortices(face_vort, complex,
                                                    config.n_vortices)
            vortices = [(float(c[0]), float(c[1]), float(c[2]), s)
                        for c, s in diagnostics.vortex_positions(tracked, dual)]
        div = forms.divergence_vertex(state.u, complex, dual).values
        return diagnostics.DiagnosticsRecord(
            time=state.time,
            kinetic_energy=diagnostics.kinetic_energy(state, complex, dual),
            max_divergence=float(np.abs(div).max()),
            max_curl=float(np.abs(edge_curl).max()),
            solver_residual=solver_residual,
            vortices=vortices)

    states = [state]
    records = [record_of(state, 0.0)]
    if on_snapshot is not None:
        on_snapshot(state)

    t0 = _time.perf_counter()
    try:
        for k in range(1, config.n_steps + 1):
            state = solver.step(state)
            records.append(record_of(state, solver.last_solver_residual))
            if k % config.output_every == 0 or k == config.n_steps:
                states.append(state)
                if on_snapshot is not None:
                    on_snapshot(state)
    except SolverError as exc:
        exc.partial = RunResult(config, complex, dual, kappa, states,
                                records, timings)
        raise
    timings["stepping"] = _time.perf_counter() - t0
    return RunResult(config, complex, dual, kappa, states, records, timings)
