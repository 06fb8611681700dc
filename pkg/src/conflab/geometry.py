"""Constant-curvature model spaces: unit spheres and products of circles.

Points are handled in two representations:

* chart coordinates ``x`` (iterated spherical angles ``(theta_1, ...,
  theta_{d-1}, phi)`` on ``S^d``; one angle per factor on a circle product),
* *value* coordinates, the flat vectors used for map values and tangent
  vectors.  For ``S^d`` these are the standard embedding in ``R^{d+1}``; for a
  circle product they are arclength coordinates on the universal cover
  ``R^l`` (angle times radius), where the metric is Euclidean.

In both cases the codomain inner product is the Euclidean dot product of
value coordinates, which is what every tensor contraction downstream relies
on.  Functions prefixed with an underscore operate on a single point and are
safe to trace with JAX; the public functions accept and return numpy arrays
and guard the sphere chart against its poles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import jax
import jax.numpy as jnp
import numpy as np
from scipy.special import gamma as gamma_fn

from .errors import ChartSingularity, NotEmbedded, ResolutionTooSmall

POLE_GUARD = 1e-9


@dataclass(frozen=True)
class ManifoldDescriptor:
    kind: str  # "sphere" | "circles"
    dim: int
    radii: tuple[float, ...] = field(default=())

    def __post_init__(self):
        if self.kind not in ("sphere", "circles"):
            raise ValueError(f"unknown manifold kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("manifold dimension must be >= 1")
        if self.kind == "circles":
            if len(self.radii) != self.dim:
                raise ValueError("need one radius per circle factor")
            if any(not (r > 0) for r in self.radii):
                raise ValueError("circle radii must be strictly positive")

    @property
    def is_sphere(self) -> bool:
        return self.kind == "sphere"

    @property
    def curvature(self) -> float:
        return 1.0 if self.is_sphere else 0.0

    @property
    def ambient_dim(self) -> int:
        """Dimension of the Euclidean space the manifold is drawn in."""
        return self.dim + 1 if self.is_sphere else 2 * self.dim

    @property
    def value_dim(self) -> int:
        """Length of value-coordinate vectors (see module docstring)."""
        return self.dim + 1 if self.is_sphere else self.dim

    @property
    def volume(self) -> float:
        if self.is_sphere:
            d = self.dim
            return 2.0 * math.pi ** ((d + 1) / 2) / gamma_fn((d + 1) / 2)
        return math.prod(2.0 * math.pi * r for r in self.radii)

    def to_dict(self) -> dict:
        if self.is_sphere:
            return {"kind": "sphere", "dim": self.dim}
        return {"kind": "circles", "radii": [float(r) for r in self.radii]}

    @classmethod
    def from_dict(cls, spec: dict) -> "ManifoldDescriptor":
        if spec["kind"] == "sphere":
            return sphere(int(spec["dim"]))
        return circle_product(*spec["radii"])

    def __str__(self):
        if self.is_sphere:
            return f"S^{self.dim}"
        return "T(" + ",".join(f"{r:g}" for r in self.radii) + ")"


def sphere(dim: int) -> ManifoldDescriptor:
    return ManifoldDescriptor("sphere", int(dim))


def circle_product(*radii: float) -> ManifoldDescriptor:
    radii = tuple(float(r) for r in radii)
    return ManifoldDescriptor("circles", len(radii), radii)


# ---------------------------------------------------------------------------
# single-point primitives (traceable)


def _sphere_embed(x):
    if x.shape[0] == 1:
        return jnp.stack([jnp.cos(x[0]), jnp.sin(x[0])])
    rest = _sphere_embed(x[1:])
    return jnp.concatenate([jnp.sin(x[0]) * rest, jnp.cos(x[0])[None]])


def _value(M: ManifoldDescriptor, x):
    """Value coordinates of the chart point ``x``."""
    if M.is_sphere:
        return _sphere_embed(x)
    return jnp.asarray(M.radii) * x


def _scales(M: ManifoldDescriptor, x):
    """Lengths of the coordinate vectors; the metric is ``diag(scales**2)``."""
    if not M.is_sphere:
        return jnp.asarray(M.radii) + 0.0 * x
    sines = jnp.sin(x[:-1])
    return jnp.concatenate([jnp.ones(1, dtype=x.dtype), jnp.cumprod(sines)])


def _volume_density(M, x):
    return jnp.prod(_scales(M, x))


def _christoffel(M: ManifoldDescriptor, x):
    """Coordinate Christoffel symbols ``G[c, a, b]`` of the diagonal metric."""
    d = M.dim
    if not M.is_sphere:
        return jnp.zeros((d, d, d), dtype=x.dtype)
    gdiag = lambda y: _scales(M, y) ** 2  # noqa: E731
    g = gdiag(x)
    dg = jax.jacfwd(gdiag)(x)  # dg[b, a] = d_a g_bb
    eye = jnp.eye(d)
    # G^c_ab = (d_a g_bc + d_b g_ac - d_c g_ab) / (2 g_cc)
    term_a = jnp.einsum("bc,ca->cab", eye, dg)
    term_b = jnp.einsum("ac,cb->cab", eye, dg)
    term_c = jnp.einsum("ab,ac->cab", eye, dg)
    return (term_a + term_b - term_c) / (2.0 * g[:, None, None])


def _value_frame(M: ManifoldDescriptor, x):
    """Orthonormal frame ``e_i`` as columns in value coordinates."""
    if not M.is_sphere:
        return jnp.eye(M.dim, dtype=x.dtype)
    J = jax.jacfwd(lambda y: _value(M, y))(x)
    return J / _scales(M, x)


def _project(M: ManifoldDescriptor, y, v):
    """Tangential part of ``v`` at the value point ``y`` (vectors along axis 0)."""
    if not M.is_sphere:
        return v
    return v - y.reshape(y.shape + (1,) * (v.ndim - 1)) * jnp.tensordot(y, v, axes=(0, 0))


def _exp(M: ManifoldDescriptor, y, v):
    """Geodesic from value point ``y`` with initial velocity ``v`` at time 1."""
    if not M.is_sphere:
        return y + v
    n2 = jnp.dot(v, v)
    safe = jnp.where(n2 > 0, n2, 1.0)
    n = jnp.sqrt(safe)
    cos_n = jnp.where(n2 > 0, jnp.cos(n), 1.0 - n2 / 2)
    sinc_n = jnp.where(n2 > 0, jnp.sin(n) / n, 1.0 - n2 / 6)
    return cos_n * y + sinc_n * v


def _riemann(curvature: float, U, V, W):
    """``R(U, V)W = k (<V, W> U - <U, W> V)`` for vectors along the last axis."""
    if curvature == 0.0:
        return jnp.zeros(jnp.broadcast_shapes(U.shape, V.shape, W.shape), dtype=jnp.result_type(U, V, W))
    vw = jnp.sum(V * W, axis=-1, keepdims=True)
    uw = jnp.sum(U * W, axis=-1, keepdims=True)
    return curvature * (vw * U - uw * V)


# ---------------------------------------------------------------------------
# public operations


@dataclass(frozen=True)
class FrameData:
    """Orthonormal frame at a chart point.

    ``frame[:, i]`` holds the chart components of ``e_i``; ``connection[i, j,
    k] = g(nabla_{e_i} e_j, e_k)``; ``value_frame[:, i]`` is ``e_i`` in value
    coordinates; ``normal`` is the unit outer normal (spheres only).
    """

    frame: np.ndarray
    connection: np.ndarray
    value_frame: np.ndarray
    normal: np.ndarray | None


def check_chart(M: ManifoldDescriptor, x) -> np.ndarray:
    """Return ``x`` as an array, raising ChartSingularity near a sphere pole."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != M.dim:
        raise ValueError(f"chart point for {M} needs {M.dim} coordinates, got {x.shape[-1]}")
    if M.is_sphere and M.dim > 1:
        polar = x[..., :-1]
        if np.any(polar < POLE_GUARD) or np.any(polar > np.pi - POLE_GUARD):
            raise ChartSingularity(f"polar angle within {POLE_GUARD} of a pole on {M}")
    return x


def metric_at(M: ManifoldDescriptor, x) -> np.ndarray:
    x = check_chart(M, x)
    return np.diag(np.asarray(_scales(M, jnp.asarray(x))) ** 2)


def orthonormal_frame(M: ManifoldDescriptor, x) -> FrameData:
    x = check_chart(M, x)
    xj = jnp.asarray(x)
    s = _scales(M, xj)
    inv = lambda y: 1.0 / _scales(M, y)  # noqa: E731
    dinv = jax.jacfwd(inv)(xj)  # dinv[j, i] = d_i (1/s_j)
    G = _christoffel(M, xj)
    d = M.dim
    eye = jnp.eye(d)
    # nabla_{e_i} e_j = (1/s_i) [d_i(1/s_j) d_j + (1/s_j) G^c_ij d_c], read off in e_k
    conn = (dinv.T * s[None, :])[:, :, None] * eye[None, :, :]
    conn = conn + jnp.transpose(G, (1, 2, 0)) * s[None, None, :] / s[None, :, None]
    conn = conn / s[:, None, None]
    normal = np.asarray(_value(M, xj)) if M.is_sphere else None
    return FrameData(
        frame=np.diag(1.0 / np.asarray(s)),
        connection=np.asarray(conn),
        value_frame=np.asarray(_value_frame(M, xj)),
        normal=normal,
    )


def value_point(M: ManifoldDescriptor, x) -> np.ndarray:
    x = check_chart(M, x)
    return np.asarray(jax.vmap(lambda y: _value(M, y))(jnp.atleast_2d(x))).reshape(x.shape[:-1] + (M.value_dim,))


def chart_from_value(M: ManifoldDescriptor, y) -> np.ndarray:
    """Inverse of :func:`value_point`; angles of circle factors land in [0, 2 pi)."""
    y = np.asarray(y, dtype=float)
    if not M.is_sphere:
        return np.mod(y / np.asarray(M.radii), 2 * np.pi)
    coords = []
    rest = y
    for _ in range(M.dim - 1):
        horiz = np.linalg.norm(rest[:-1])
        coords.append(math.atan2(horiz, rest[-1]))
        rest = rest[:-1] / horiz if horiz > 0 else rest[:-1]
    coords.append(math.atan2(rest[1], rest[0]) % (2 * np.pi))
    return check_chart(M, np.array(coords))


def embed(M: ManifoldDescriptor, x) -> np.ndarray:
    """Embedding in ``R^{ambient_dim}``; circle factors become ``(r cos, r sin)`` pairs."""
    x = check_chart(M, x)
    if M.is_sphere:
        return value_point(M, x)
    r = np.asarray(M.radii)
    return np.stack([r * np.cos(x), r * np.sin(x)], axis=-1).reshape(x.shape[:-1] + (2 * M.dim,))


def riemann_apply(M: ManifoldDescriptor, U, V, W) -> np.ndarray:
    """Curvature endomorphism ``R(U, V)W``.

    The vectors may be given in orthonormal-frame components or in value
    coordinates; both carry the Euclidean inner product.
    """
    U, V, W = (jnp.asarray(a, dtype=float) for a in (U, V, W))
    return np.asarray(_riemann(M.curvature, U, V, W))


def exp_map(M: ManifoldDescriptor, x, v) -> np.ndarray:
    """Exponential map; ``v`` is given in orthonormal-frame components at ``x``."""
    x = check_chart(M, x)
    v = np.asarray(v, dtype=float)
    if not M.is_sphere:
        return np.mod(x + v / np.asarray(M.radii), 2 * np.pi)
    xj = jnp.asarray(x)
    y = _value(M, xj)
    amb = _value_frame(M, xj) @ jnp.asarray(v)
    return chart_from_value(M, np.asarray(_exp(M, y, amb)))


def project_to_tangent(M: ManifoldDescriptor, y, E) -> np.ndarray:
    if not M.is_sphere:
        raise NotEmbedded(f"{M} is not an embedded sphere")
    y = np.asarray(y, dtype=float)
    E = np.asarray(E, dtype=float)
    if abs(np.linalg.norm(y) - 1.0) > 1e-10:
        raise ValueError("base point must have unit norm")
    return E - np.dot(E, y) * y


@dataclass(frozen=True)
class QuadratureGrid:
    manifold: ManifoldDescriptor
    resolution: tuple[int, ...]
    nodes: np.ndarray  # (N, d) chart points, C order over the axes
    weights: np.ndarray  # (N,)

    def __len__(self):
        return len(self.weights)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    def integrate(self, values) -> float:
        """Weighted sum over nodes, compensated and in fixed node order."""
        values = np.asarray(values, dtype=float)
        return math.fsum((self.weights * values).tolist())


def _axis_rule(M: ManifoldDescriptor, axis: int, n: int):
    if M.is_sphere and axis < M.dim - 1:
        # Gauss-Legendre in the polar angle itself with the sin^p volume factor folded
        # into the weights; stays spectrally accurate for integrands that are only
        # smooth in the chart (e.g. maps singular at the poles).
        t, w = np.polynomial.legendre.leggauss(n)
        theta = 0.5 * np.pi * (t + 1.0)
        power = M.dim - 1 - axis
        return theta, 0.5 * np.pi * w * np.sin(theta) ** power
    radius = M.radii[axis] if not M.is_sphere else 1.0
    nodes = 2.0 * np.pi * np.arange(n) / n
    return nodes, np.full(n, 2.0 * np.pi * radius / n)


def quadrature_grid(M: ManifoldDescriptor, resolution: int | Sequence[int]) -> QuadratureGrid:
    if np.isscalar(resolution):
        res = (int(resolution),) * M.dim
    else:
        res = tuple(int(r) for r in resolution)
        if len(res) != M.dim:
            raise ValueError(f"need {M.dim} resolutions, got {len(res)}")
    if min(res) < 4:
        raise ResolutionTooSmall(f"resolution {res} below the minimum of 4 per axis")
    rules = [_axis_rule(M, a, n) for a, n in enumerate(res)]
    mesh = np.meshgrid(*[r[0] for r in rules], indexing="ij")
    wmesh = np.meshgrid(*[r[1] for r in rules], indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    weights = np.prod(np.stack([w.ravel() for w in wmesh], axis=-1), axis=-1)
    return QuadratureGrid(M, res, nodes, weights)


def random_points(M: ManifoldDescriptor, n: int, rng: np.random.Generator, margin: float = 0.1) -> np.ndarray:
    """Random chart points; sphere samples are uniform but keep ``margin`` off the poles."""
    if not M.is_sphere:
        return rng.uniform(0.0, 2 * np.pi, size=(n, M.dim))
    out = []
    while len(out) < n:
        y = rng.standard_normal(M.dim + 1)
        y /= np.linalg.norm(y)
        x = chart_from_value(M, y) if _far_from_poles(M, y, margin) else None
        if x is not None and np.all(x[:-1] > margin) and np.all(x[:-1] < np.pi - margin):
            out.append(x)
    return np.array(out).reshape(n, M.dim)


def _far_from_poles(M, y, margin):
    # every iterated "horizontal" radius must be bounded away from zero
    rest = y
    for _ in range(M.dim - 1):
        horiz = np.linalg.norm(rest[:-1])
        if horiz < math.sin(margin):
            return False
        rest = rest[:-1] / horiz
    return True
