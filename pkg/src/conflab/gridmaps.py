"""Maps given by their values at the nodes of a uniform grid on a circle product.

The periodic part of the map is interpolated trigonometrically, so
derivatives of the interpolant are spectral.  For circle-product targets the
values are arclength lifts and the map may wind around the target factors;
the winding is a constant matrix ``W`` with ``F(x) = W x + periodic(x)``.
For sphere targets the interpolant is renormalised onto the sphere.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path

import jax.numpy as jnp
import numpy as np

from .calculus import SmoothMap, values
from .errors import ConfigError
from .geometry import ManifoldDescriptor, QuadratureGrid, _exp, _project, quadrature_grid

FORMAT_TAG = "conflab-map-grid"


@dataclass(frozen=True, eq=False)
class GridRule:
    domain: ManifoldDescriptor
    codomain: ManifoldDescriptor
    resolution: tuple[int, ...]
    winding: np.ndarray  # (A, m)
    node_values: np.ndarray  # (N, A), node order of quadrature_grid(domain, resolution)

    @property
    def grid(self) -> QuadratureGrid:
        return quadrature_grid(self.domain, self.resolution)


def _axis_basis(n: int, x):
    k = np.fft.fftfreq(n, d=1.0 / n)
    basis = jnp.exp(1j * jnp.asarray(k) * x)
    if n % 2 == 0:
        # split Nyquist mode: real cosine keeps the interpolant real and its derivative zero at nodes
        basis = basis.at[n // 2].set(jnp.cos(0.5 * n * x) + 0j)
    return basis


def _interpolant(resolution, coeffs, winding, x):
    out = coeffs
    for axis, n in enumerate(resolution):
        out = jnp.tensordot(_axis_basis(n, x[axis]), out, axes=(0, 0))
    return jnp.real(out) + winding @ x


def grid_map(
    domain: ManifoldDescriptor,
    codomain: ManifoldDescriptor,
    node_values,
    resolution,
    winding=None,
    name: str = "grid",
) -> SmoothMap:
    """Build a map from node values (traceable: ``node_values`` may be a JAX tracer)."""
    if domain.is_sphere:
        raise ValueError("grid-rule maps need a circle-product domain")
    resolution = tuple(int(r) for r in resolution)
    A = codomain.value_dim
    if winding is None:
        winding = np.zeros((A, domain.dim))
    winding = np.asarray(winding, dtype=float)
    grid = quadrature_grid(domain, resolution)
    node_values = jnp.asarray(node_values)
    periodic = node_values - jnp.asarray(grid.nodes) @ winding.T
    coeffs = jnp.fft.fftn(periodic.reshape(resolution + (A,)), axes=tuple(range(domain.dim)))
    coeffs = coeffs / np.prod(resolution)

    if codomain.is_sphere:

        def rule(x):
            v = _interpolant(resolution, coeffs, winding, x)
            return v / jnp.sqrt(jnp.dot(v, v))
    else:

        def rule(x):
            return _interpolant(resolution, coeffs, winding, x)

    spec = GridRule(domain, codomain, resolution, winding, node_values)
    return SmoothMap(domain, codomain, rule, name=name, params={"resolution": list(resolution)}, grid=spec)


def winding_of(f: SmoothMap) -> np.ndarray:
    """Constant winding matrix of a map into a circle product (zero for spheres)."""
    A, m = f.codomain.value_dim, f.domain.dim
    if f.codomain.is_sphere:
        return np.zeros((A, m))
    x0 = np.full(m, 0.5)
    base = f.rule(jnp.asarray(x0))
    W = np.zeros((A, m))
    for a in range(m):
        shifted = x0.copy()
        shifted[a] += 2 * np.pi
        W[:, a] = (np.asarray(f.rule(jnp.asarray(shifted))) - np.asarray(base)) / (2 * np.pi)
    return W


def sample_map(f: SmoothMap, resolution, name: str | None = None) -> SmoothMap:
    """Grid-rule copy of ``f`` sampled at the nodes of ``quadrature_grid(domain, resolution)``."""
    grid = quadrature_grid(f.domain, resolution)
    return grid_map(
        f.domain,
        f.codomain,
        values(f, grid.nodes),
        grid.resolution,
        winding=winding_of(f),
        name=name or f"{f.name}@grid",
    )


def fourier_frequencies(m: int, degree: int) -> list[tuple[int, ...]]:
    """Nonzero integer vectors with ``|q|_1 <= degree``, one of each pair ``+-q``."""
    out = []
    for q in itertools.product(range(-degree, degree + 1), repeat=m):
        nz = [c for c in q if c]
        if nz and sum(abs(c) for c in q) <= degree and nz[0] > 0:
            out.append(q)
    return sorted(out, key=lambda q: (sum(map(abs, q)), [-c for c in q]))


def perturbed_sample(
    f: SmoothMap, resolution, amplitude: float, max_mode: int = 1, seed: int = 0, name: str | None = None
) -> SmoothMap:
    """Grid-rule copy of ``f`` pushed along a random smooth field.

    The field has Gaussian Fourier coefficients on the modes ``|q|_1 <=
    max_mode`` and is rescaled to root-mean-square length ``amplitude`` over
    the nodes; node values move to ``exp_{f(x)}(X(x))``.
    """
    import jax

    grid = quadrature_grid(f.domain, resolution)
    nodes = grid.nodes
    A = f.codomain.value_dim
    rng = np.random.default_rng(seed)
    X = np.zeros((len(nodes), A))
    for q in fourier_frequencies(f.domain.dim, max_mode):
        phase = nodes @ np.asarray(q, dtype=float)
        c, s = rng.standard_normal((2, A))
        X += np.cos(phase)[:, None] * c + np.sin(phase)[:, None] * s
    base = values(f, nodes)
    X = np.array(jax.vmap(lambda y, v: _project(f.codomain, y, v))(base, X))
    rms = np.sqrt(np.mean(np.sum(X * X, axis=-1)))
    if rms > 0:
        X *= amplitude / rms
    moved = np.asarray(jax.vmap(lambda y, v: _exp(f.codomain, y, v))(base, X))
    return grid_map(
        f.domain, f.codomain, moved, grid.resolution, winding=winding_of(f), name=name or f"{f.name}~{amplitude:g}"
    )


def save_map_grid(path, f: SmoothMap) -> None:
    if f.grid is None:
        raise ValueError("only grid-rule maps can be saved")
    spec: GridRule = f.grid
    doc = {
        "format": FORMAT_TAG,
        "version": 1,
        "domain": spec.domain.to_dict(),
        "codomain": spec.codomain.to_dict(),
        "resolution": list(spec.resolution),
        "winding": np.asarray(spec.winding).tolist(),
        "values": np.asarray(spec.node_values).tolist(),
    }
    Path(path).write_text(json.dumps(doc, indent=1) + "\n")


def load_map_grid(path) -> SmoothMap:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    if doc.get("format") != FORMAT_TAG:
        raise ConfigError(f"{path}: not a {FORMAT_TAG} file")
    for key in ("domain", "codomain", "resolution", "values"):
        if key not in doc:
            raise ConfigError(f"{path}: missing field {key!r}")
    domain = ManifoldDescriptor.from_dict(doc["domain"])
    codomain = ManifoldDescriptor.from_dict(doc["codomain"])
    vals = np.asarray(doc["values"], dtype=float)
    n = int(np.prod(doc["resolution"]))
    if vals.shape != (n, codomain.value_dim):
        raise ConfigError(f"{path}: field 'values' has shape {vals.shape}, expected {(n, codomain.value_dim)}")
    winding = np.asarray(doc.get("winding", np.zeros((codomain.value_dim, domain.dim))), dtype=float)
    return grid_map(domain, codomain, vals, doc["resolution"], winding=winding, name=Path(path).stem)
