"""Analytic surface catalog, mesh generation and initial velocity fields.

Catalog surfaces are closed level sets with known normals and (except for
the biconcave shape) closed-form Gaussian curvature:

* unit sphere,
* ellipsoid (x/a)^2 + (y/b)^2 + (z/c)^2 = 1,
* biconcave disc (a^2 + |x|^2)^3 - 4 a^2 (y^2 + z^2) = c^4, axis x,
* torus (sqrt(x^2+z^2) - R)^2 + y^2 = r^2, axis y.

Generated meshes are wound so that face normals point outward.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .mesh import MeshError, build_complex, load_mesh


class SurfaceError(ValueError):
    """Unsupported surface/initial-condition combination or parameters."""


@dataclass(frozen=True)
class Sphere:
    kind = "sphere"
    radius: float = 1.0

    def __post_init__(self):
        if self.radius <= 0:
            raise SurfaceError("sphere radius must be positive")

    def normal(self, p):
        p = np.atleast_2d(p)
        return p / np.linalg.norm(p, axis=1)[:, None]

    def gaussian_curvature(self, p):
        return np.full(len(np.atleast_2d(p)), 1.0 / self.radius ** 2)


@dataclass(frozen=True)
class Ellipsoid:
    kind = "ellipsoid"
    a: float = 0.5
    b: float = 0.5
    c: float = 1.5

    def __post_init__(self):
        if min(self.a, self.b, self.c) <= 0:
            raise SurfaceError("ellipsoid semi-axes must be positive")

    def normal(self, p):
        p = np.atleast_2d(p)
        g = p / np.array([self.a ** 2, self.b ** 2, self.c ** 2])
        return g / np.linalg.norm(g, axis=1)[:, None]

    def gaussian_curvature(self, p):
        p = np.atleast_2d(p)
        s = (p[:, 0] / self.a ** 2) ** 2 + (p[:, 1] / self.b ** 2) ** 2 \
            + (p[:, 2] / self.c ** 2) ** 2
        return 1.0 / ((self.a * self.b * self.c) ** 2 * s ** 2)


@dataclass(frozen=True)
class Biconcave:
    kind = "biconcave"
    a: float = 0.72
    c: float = 0.75

    def __post_init__(self):
        if self.a <= 0 or self.c <= 0:
            raise SurfaceError("biconcave parameters must be positive")
        if self.a ** 6 >= self.c ** 4:
            raise SurfaceError("biconcave level set does not enclose the origin")

    def level(self, p):
        p = np.atleast_2d(p)
        s = np.einsum("ij,ij->i", p, p)
        return (self.a ** 2 + s) ** 3 - 4 * self.a ** 2 * (
            p[:, 1] ** 2 + p[:, 2] ** 2) - self.c ** 4

    def normal(self, p):
        p = np.atleast_2d(p)
        s = np.einsum("ij,ij->i", p, p)
        g = 6.0 * (self.a ** 2 + s)[:, None] ** 2 * p
        g[:, 1] -= 8 * self.a ** 2 * p[:, 1]
        g[:, 2] -= 8 * self.a ** 2 * p[:, 2]
        return g / np.linalg.norm(g, axis=1)[:, None]

    def gaussian_curvature(self, p):
        raise SurfaceError("biconcave curvature is not available in closed "
                           "form; use the angle-defect source")


@dataclass(frozen=True)
class Torus:
    kind = "torus"
    R: float = 2.0
    r: float = 0.5

    def __post_init__(self):
        if self.r <= 0 or self.R <= self.r:
            raise SurfaceError("torus requires R > r > 0")

    def normal(self, p):
        p = np.atleast_2d(p)
        rho = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2)
        g = np.stack([(rho - self.R) * p[:, 0] / rho,
                      p[:, 1],
                      (rho - self.R) * p[:, 2] / rho], axis=1)
        return g / np.linalg.norm(g, axis=1)[:, None]

    def gaussian_curvature(self, p):
        p = np.atleast_2d(p)
        rho = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2)
        cos_t = np.clip((rho - self.R) / self.r, -1.0, 1.0)
        return cos_t / (self.r * (self.R + self.r * cos_t))


@dataclass(frozen=True)
class ExternalMesh:
    kind = "mesh"
    path: str = ""


SurfaceDescriptor = Sphere | Ellipsoid | Biconcave | Torus | ExternalMesh


# -- mesh generation -----------------------------------------------------

_PHI = (1.0 + math.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array([
    (-1, _PHI, 0), (1, _PHI, 0), (-1, -_PHI, 0), (1, -_PHI, 0),
    (0, -1, _PHI), (0, 1, _PHI), (0, -1, -_PHI), (0, 1, -_PHI),
    (_PHI, 0, -1), (_PHI, 0, 1), (-_PHI, 0, -1), (-_PHI, 0, 1),
]) / math.sqrt(1.0 + _PHI ** 2)

_ICO_FACES = np.array([
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
])


def icosphere(frequency):
    """Unit icosphere: each icosahedron face split into frequency^2
    triangles on a barycentric lattice, vertices projected radially.
    Returns (positions, triangles); frequency 1 is the icosahedron."""
    nu = int(frequency)
    if nu < 1:
        raise SurfaceError("icosphere frequency must be >= 1")
    index = {}
    points = []

    def lattice_point(face_id, corners, i, j):
        k = nu - i - j
        weights = (k, i, j)
        nonzero = [(c, w) for c, w in zip(corners, weights) if w > 0]
        if len(nonzero) == 1:
            key = ("v", nonzero[0][0])
        elif len(nonzero) == 2:
            (c1, w1), (c2, w2) = nonzero
            if c2 < c1:
                c1, c2, w1, w2 = c2, c1, w2, w1
            key = ("e", c1, c2, w1)
        else:
            key = ("f", face_id, i, j)
        if key not in index:
            p = (_ICO_VERTS[corners[0]] * k + _ICO_VERTS[corners[1]] * i
                 + _ICO_VERTS[corners[2]] * j) / nu
            index[key] = len(points)
            points.append(p / np.linalg.norm(p))
        return index[key]

    tris = []
    for fid, corners in enumerate(_ICO_FACES):
        corners = tuple(int(c) for c in corners)
        for i in range(nu):
            for j in range(nu - i):
                p00 = lattice_point(fid, corners, i, j)
                p10 = lattice_point(fid, corners, i + 1, j)
                p01 = lattice_point(fid, corners, i, j + 1)
                tris.append((p00, p10, p01))
                if i + j < nu - 1:
                    p11 = lattice_point(fid, corners, i + 1, j + 1)
                    tris.append((p10, p11, p01))
    return np.array(points), np.array(tris, dtype=np.int64)


def torus_grid(R, r, n_phi, n_theta):
    """Structured torus triangulation with brick-offset rows.

    Odd rows in the tube angle are shifted half a step in the ring angle,
    which keeps all triangles acute when the two angular resolutions match
    the radii ratio (counts: V = n_phi*n_theta, E = 3V, F = 2V).
    """
    if n_phi < 8 or n_theta < 8:
        raise SurfaceError("torus resolution must satisfy n_phi, n_theta >= 8")
    if n_theta % 2:
        raise SurfaceError("torus n_theta must be even (offset rows wrap)")
    vid = np.arange(n_phi * n_theta).reshape(n_theta, n_phi)
    jj, ii = np.meshgrid(np.arange(n_theta), np.arange(n_phi), indexing="ij")
    phi = 2.0 * np.pi * (ii + 0.5 * (jj % 2)) / n_phi
    theta = 2.0 * np.pi * jj / n_theta
    ring = R + r * np.cos(theta)
    pos = np.stack([ring * np.cos(phi), r * np.sin(theta),
                    ring * np.sin(phi)], axis=-1).reshape(-1, 3)

    tris = []
    for j in range(n_theta):
        jn = (j + 1) % n_theta
        for i in range(n_phi):
            in_ = (i + 1) % n_phi
            if j % 2 == 0:
                # next row sits half a step to the right
                tris.append((vid[j, i], vid[j, in_], vid[jn, i]))
                tris.append((vid[j, in_], vid[jn, in_], vid[jn, i]))
            else:
                # next row sits half a step to the left
                tris.append((vid[j, i], vid[j, in_], vid[jn, in_]))
                tris.append((vid[j, i], vid[jn, in_], vid[jn, i]))
    return pos, np.array(tris, dtype=np.int64)


def _relax_once(pos, triangles, project, omega=0.6, density=None):
    p = pos[triangles]
    areas = 0.5 * np.linalg.norm(
        np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]), axis=1)
    centroids = p.mean(axis=1)
    weights = areas if density is None else areas * density(centroids)
    acc = np.zeros_like(pos)
    wsum = np.zeros(len(pos))
    np.add.at(acc, triangles.reshape(-1),
              np.repeat(weights[:, None] * centroids, 3, axis=0))
    np.add.at(wsum, triangles.reshape(-1), np.repeat(weights, 3))
    target = acc / wsum[:, None]
    return project(pos + omega * (target - pos))


def _flip_to_delaunay(pos, tris, max_sweeps=50):
    """Edge flips until every edge satisfies the Delaunay angle test.

    The signed dual edge length is |e| (cot a + cot b) / 2 with a, b the
    angles opposite the edge, so Delaunay connectivity keeps all dual
    lengths nonnegative and the discrete operators well signed.
    """
    tris = tris.copy()
    for _ in range(max_sweeps):
        flat = np.stack([tris, np.roll(tris, -1, axis=1)], axis=-1).reshape(-1, 2)
        canon = np.sort(flat, axis=1)
        edges, inverse = np.unique(canon, axis=0, return_inverse=True)
        slots = np.argsort(inverse, kind="stable").reshape(-1, 2)
        face_of = slots // 3
        corner_of = slots % 3
        apex = tris[face_of, (corner_of + 2) % 3]

        def cot_at(p_apex, a, b):
            u = pos[a] - pos[p_apex]
            v = pos[b] - pos[p_apex]
            return np.einsum("ij,ij->i", u, v) / np.linalg.norm(
                np.cross(u, v), axis=1)

        cots = cot_at(apex[:, 0], edges[:, 0], edges[:, 1]) \
            + cot_at(apex[:, 1], edges[:, 0], edges[:, 1])
        bad = np.nonzero(cots < -1e-12)[0]
        if len(bad) == 0:
            return tris
        face_used = np.zeros(len(tris), dtype=bool)
        flipped = 0
        for e in bad[np.argsort(cots[bad])]:
            f1, f2 = face_of[e]
            if face_used[f1] or face_used[f2]:
                continue
            c1, c2 = corner_of[e]
            a, b = tris[f1, c1], tris[f1, (c1 + 1) % 3]
            c, d = apex[e, 0], apex[e, 1]
            if c == d or len({a, b, c, d}) != 4:
                continue
            tris[f1] = (a, d, c)
            tris[f2] = (d, b, c)
            face_used[f1] = face_used[f2] = True
            flipped += 1
        if flipped == 0:
            return tris
    return tris


def _improve_mesh(pos, tris, project, sweeps=30, density=None):
    """Alternate Delaunay flips with centroid relaxation.

    Plain anisotropic scaling or radial projection leaves a large share
    of squashed triangles whose circumcentric duals degenerate; the
    relaxation alone cannot fix that (it is affine-equivariant), but
    combined with flips the mesh ends up Delaunay and nearly
    well-centered.  An optional sampling density grades element sizes,
    used to resolve high-curvature regions (size ~ density^-1/2).
    """
    for _ in range(sweeps):
        tris = _flip_to_delaunay(pos, tris)
        pos = _relax_once(pos, tris, project, density=density)
    return pos, _flip_to_delaunay(pos, tris)


def _curvature_density(descriptor, gradation=4.0):
    """Sampling density ~ |Gaussian curvature|, capped to a maximum
    element-size ratio of ``gradation``; the viscous curvature term is
    only consistent when h * sqrt(|kappa|) stays small."""
    def density(p):
        k = np.abs(np.asarray(descriptor.gaussian_curvature(p), float))
        hi = max(k.max(), 1e-12)
        return np.clip(k, hi / gradation ** 2, hi)
    return density


def _outward(positions, triangles, normal_fn):
    """Flip all windings when face normals point against the outward field."""
    p = positions[triangles]
    n = np.cross(p[:, 1] - p[:, 0], p[:, 2] - p[:, 0])
    centroid = p.mean(axis=1)
    agree = np.einsum("ij,ij->i", n, normal_fn(centroid))
    if np.median(agree) < 0:
        return triangles[:, ::-1]
    return triangles


def generate_mesh(descriptor, resolution):
    """Generate (or load) the mesh of a catalog surface as a complex.

    Resolutions: sphere/ellipsoid/biconcave take the icosphere frequency
    (>= 1); torus takes an int n meaning (n_phi, n_theta) = (n, n) or an
    explicit (n_phi, n_theta) pair.
    """
    if isinstance(descriptor, ExternalMesh):
        return load_mesh(descriptor.path)
    if isinstance(descriptor, Sphere):
        pos, tris = icosphere(resolution)
        pos = pos * descriptor.radius
    elif isinstance(descriptor, Ellipsoid):
        axes = np.array([descriptor.a, descriptor.b, descriptor.c])
        pos, tris = icosphere(resolution)

        def onto_ellipsoid(p, axes=axes):
            q = p / axes
            return axes * q / np.linalg.norm(q, axis=1)[:, None]

        pos, tris = _improve_mesh(pos * axes, tris, onto_ellipsoid,
                                  density=_curvature_density(descriptor))
    elif isinstance(descriptor, Biconcave):
        pos, tris = icosphere(resolution)
        pos = _project_biconcave(pos * np.array([0.45, 1.0, 1.0]), descriptor)
        pos, tris = _improve_mesh(
            pos, tris, lambda p: _project_biconcave(p, descriptor), sweeps=20)
    elif isinstance(descriptor, Torus):
        if np.isscalar(resolution):
            n_phi = n_theta = int(resolution)
        else:
            n_phi, n_theta = (int(k) for k in resolution)
        pos, tris = torus_grid(descriptor.R, descriptor.r, n_phi, n_theta)
    else:
        raise SurfaceError(f"cannot generate a mesh for {descriptor!r}")
    tris = _outward(pos, tris, descriptor.normal)
    return build_complex(pos, tris)


def _project_biconcave(points, surf):
    """Push points radially onto the biconcave level set (root per ray)."""
    out = np.empty_like(points)
    for k, p in enumerate(points):
        d = p / np.linalg.norm(p)

        def along(t, d=d):
            return float(surf.level(t * d[None, :])[0])

        hi = 1.0
        while along(hi) < 0.0:
            hi *= 2.0
            if hi > 64.0:
                raise SurfaceError("biconcave projection failed to bracket")
        t = brentq(along, 0.0, hi, xtol=1e-15, rtol=8.881784197001252e-16)
        out[k] = t * d
    return out


# -- initial conditions ---------------------------------------------------

@dataclass(frozen=True)
class KillingSphere:
    """Rigid rotation about the z axis, (y, -x, 0)."""
    kind = "killing_sphere"


@dataclass(frozen=True)
class StreamCurl:
    """Surface curl of a linear stream function psi(x) = g . x."""
    kind = "stream_curl"
    gx: float = 0.0
    gy: float = 1.0
    gz: float = 0.0


@dataclass(frozen=True)
class HarmonicTorus:
    """alpha * ring-direction harmonic field + beta * tube-direction one."""
    kind = "harmonic_torus"
    alpha: float = 1.0
    beta: float = 0.0


@dataclass(frozen=True)
class CustomField:
    kind = "custom"
    fn: object = None


@dataclass(frozen=True)
class ZeroField:
    kind = "zero"


InitialCondition = KillingSphere | StreamCurl | HarmonicTorus | CustomField | ZeroField


def torus_ring_basis(p):
    """The ring-direction coordinate basis vector (-z, 0, x)."""
    p = np.atleast_2d(p)
    return np.stack([-p[:, 2], np.zeros(len(p)), p[:, 0]], axis=1)


def torus_tube_basis(p, R=2.0):
    """The tube-direction coordinate basis vector for major radius R."""
    p = np.atleast_2d(p)
    rho = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2)
    return np.stack([-p[:, 0] * p[:, 1] / rho, rho - R,
                     -p[:, 1] * p[:, 2] / rho], axis=1)


def harmonic_ring_field(p):
    """Divergence- and curl-free field along the ring direction."""
    p = np.atleast_2d(p)
    rho2 = p[:, 0] ** 2 + p[:, 2] ** 2
    return torus_ring_basis(p) / (4.0 * rho2[:, None])


def harmonic_tube_field(p, R=2.0):
    """Divergence- and curl-free field along the tube direction."""
    p = np.atleast_2d(p)
    rho = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2)
    return torus_tube_basis(p, R) / (2.0 * rho[:, None])


def initial_velocity(ic, descriptor):
    """Closed-form tangential velocity field of an initial condition.

    Returns a callable mapping (n, 3) points to (n, 3) vectors.  The
    stream-curl family realizes the surface curl of psi as
    n x grad(psi) with n the outward surface normal; with psi = z on the
    unit sphere this gives (y, -x, 0), which fixes the sign convention.
    """
    if isinstance(ic, ZeroField):
        return lambda p: np.zeros_like(np.atleast_2d(p))
    if isinstance(ic, KillingSphere):
        def field(p):
            p = np.atleast_2d(p)
            return np.stack([p[:, 1], -p[:, 0], np.zeros(len(p))], axis=1)
        return field
    if isinstance(ic, StreamCurl):
        g = np.array([ic.gx, ic.gy, ic.gz])
        if not np.all(np.isfinite(g)):
            raise SurfaceError("stream function coefficients must be finite")

        def field(p, g=g):
            return np.cross(descriptor.normal(p), g[None, :])
        return field
    if isinstance(ic, HarmonicTorus):
        if not isinstance(descriptor, Torus):
            raise SurfaceError("harmonic initial data requires a torus")
        if not (np.isfinite(ic.alpha) and np.isfinite(ic.beta)):
            raise SurfaceError("harmonic coefficients must be finite")

        def field(p, ic=ic, R=descriptor.R):
            return ic.alpha * harmonic_ring_field(p) \
                + ic.beta * harmonic_tube_field(p, R)
        return field
    if isinstance(ic, CustomField):
        return ic.fn
    raise SurfaceError(f"unknown initial condition {ic!r}")


def stream_function_torus_phi(p, R=2.0, r=0.5):
    """Multivalued stream function of the ring basis field (diagnostic).

    Evaluates -(1/4) sin(theta) + theta - pi with theta in [0, 2*pi); the
    linear term jumps by 2*pi across theta = 0, which is the reason the
    ring field has no global single-valued stream function.
    """
    p = np.atleast_2d(np.asarray(p, dtype=np.float64))
    rho = np.sqrt(p[:, 0] ** 2 + p[:, 2] ** 2)
    theta = np.arctan2(p[:, 1] / r, (rho - R) / r)
    theta = np.where(theta < 0, theta + 2.0 * np.pi, theta)
    val = -0.25 * np.sin(theta) + theta - np.pi
    return val if val.size > 1 else float(val[0])
