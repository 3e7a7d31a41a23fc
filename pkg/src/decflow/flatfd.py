"""Staggered-grid finite differences on a biperiodic square domain.

The x velocity component lives at the midpoints of horizontal edges, the y
component at the midpoints of vertical edges (Arakawa C / MAC layout), and
both arrays are indexed [i, j] with i the x index, j the y index and
periodic wraparound.  ``u_x[i, j]`` sits at ((i+1/2) h, j h) and
``u_y[i, j]`` at (i h, (j+1/2) h) on the domain [0, 2*pi)^2.

Two Laplacian stencils are provided.  The rot-rot stencil is the seven
point scheme

    (L u)^x[i,j] = (u^x[i,j+1] + u^x[i,j-1] - 2 u^x[i,j]
                    + u^y[i,j] - u^y[i+1,j] + u^y[i+1,j-1] - u^y[i,j-1]) / h^2

and its quarter-turn image for the y component; it approximates
(d_yy u^x - d_xy u^y, d_xx u^y - d_xy u^x) with a second-order truncation
error.  The full Laplacian is the usual five-point stencil applied to each
component.  The two differ on generic discrete data even though their
continuum targets agree on divergence-free fields.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diagnostics import eoc_table


@dataclass
class StaggeredGrid:
    """Periodic staggered velocity arrays with spacing h = 2*pi / n."""

    n: int
    h: float
    u_x: np.ndarray
    u_y: np.ndarray

    def __post_init__(self):
        if self.n < 2 or self.h <= 0:
            raise ValueError("grid needs n >= 2 and h > 0")
        if self.u_x.shape != (self.n, self.n) or self.u_y.shape != (self.n, self.n):
            raise ValueError("component arrays must be n x n")

    @classmethod
    def sample(cls, n, fx, fy, length=2.0 * np.pi):
        h = length / n
        i = np.arange(n)
        xh, yh = np.meshgrid((i + 0.5) * h, i * h, indexing="ij")
        xv, yv = np.meshgrid(i * h, (i + 0.5) * h, indexing="ij")
        return cls(n, h, np.asarray(fx(xh, yh), float), np.asarray(fy(xv, yv), float))


def laplace_rr_stencil(grid):
    """Apply the seven-point rot-rot stencil to both components."""
    ux, uy, h2 = grid.u_x, grid.u_y, grid.h ** 2

    def sh(a, di, dj):
        return np.roll(a, (-di, -dj), axis=(0, 1))

    rx = (sh(ux, 0, 1) + sh(ux, 0, -1) - 2.0 * ux
          + uy - sh(uy, 1, 0) + sh(uy, 1, -1) - sh(uy, 0, -1)) / h2
    # y component: quarter-turn image of the x stencil (the mixed terms
    # carry the opposite sign pattern, approximating -d_xy u^x)
    ry = (sh(uy, 1, 0) + sh(uy, -1, 0) - 2.0 * uy
          + ux - sh(ux, 0, 1) + sh(ux, -1, 1) - sh(ux, -1, 0)) / h2
    return StaggeredGrid(grid.n, grid.h, rx, ry)


def laplace_full_stencil(grid):
    """Apply the five-point Laplacian to both components."""
    h2 = grid.h ** 2

    def five(a):
        return (np.roll(a, -1, 0) + np.roll(a, 1, 0)
                + np.roll(a, -1, 1) + np.roll(a, 1, 1) - 4.0 * a) / h2

    return StaggeredGrid(grid.n, grid.h, five(grid.u_x), five(grid.u_y))


@dataclass(frozen=True)
class FlatField:
    """Biperiodic test field with closed-form Laplacians.

    ``rr_x/rr_y`` give the rot-rot Laplacian components
    (d_yy u^x - d_xy u^y, d_xx u^y - d_xy u^x); ``lap_x/lap_y`` the
    componentwise full Laplacian.
    """

    name: str
    ux: Callable
    uy: Callable
    rr_x: Callable
    rr_y: Callable
    lap_x: Callable
    lap_y: Callable


def field_sin_y():
    zero = lambda x, y: np.zeros_like(x)
    return FlatField(
        name="(sin y, 0)",
        ux=lambda x, y: np.sin(y), uy=zero,
        rr_x=lambda x, y: -np.sin(y), rr_y=zero,
        lap_x=lambda x, y: -np.sin(y), lap_y=zero,
    )


def field_mixed_trig():
    return FlatField(
        name="(sin(x+y), cos(x-y))",
        ux=lambda x, y: np.sin(x + y),
        uy=lambda x, y: np.cos(x - y),
        rr_x=lambda x, y: -np.sin(x + y) - np.cos(x - y),
        rr_y=lambda x, y: np.sin(x + y) - np.cos(x - y),
        lap_x=lambda x, y: -2.0 * np.sin(x + y),
        lap_y=lambda x, y: -2.0 * np.cos(x - y),
    )


def field_product():
    zero = lambda x, y: np.zeros_like(x)
    return FlatField(
        name="(sin x sin y, 0)",
        ux=lambda x, y: np.sin(x) * np.sin(y), uy=zero,
        rr_x=lambda x, y: -np.sin(x) * np.sin(y),
        rr_y=lambda x, y: -np.cos(x) * np.cos(y),
        lap_x=lambda x, y: -2.0 * np.sin(x) * np.sin(y), lap_y=zero,
    )


@dataclass
class ConsistencyStudy:
    stencil: str
    field: str
    ns: list
    hs: list
    errors: list
    eocs: list = field(default_factory=list)

    def rows(self):
        out = []
        for k in range(len(self.ns)):
            eoc = self.eocs[k - 1] if k else float("nan")
            out.append((self.ns[k], self.hs[k], self.errors[k], eoc))
        return out


def consistency_study(fld, ns, stencil="rotrot"):
    """Max-norm truncation errors and EOC against the closed form."""
    ns = list(ns)
    if sorted(ns) != ns or len(ns) < 2:
        raise ValueError("need at least two increasing grid sizes")
    errors, hs = [], []
    for n in ns:
        grid = StaggeredGrid.sample(n, fld.ux, fld.uy)
        if stencil == "rotrot":
            out = laplace_rr_stencil(grid)
            ref = StaggeredGrid.sample(n, fld.rr_x, fld.rr_y)
        elif stencil == "five_point":
            out = laplace_full_stencil(grid)
            ref = StaggeredGrid.sample(n, fld.lap_x, fld.lap_y)
        else:
            raise ValueError(f"unknown stencil {stencil!r}")
        err = max(np.abs(out.u_x - ref.u_x).max(), np.abs(out.u_y - ref.u_y).max())
        errors.append(err)
        hs.append(grid.h)
    study = ConsistencyStudy(stencil, fld.name, ns, hs, errors)
    study.eocs = eoc_table(errors, hs)
    return study
