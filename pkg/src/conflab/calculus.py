"""Pointwise calculus of a map: jets, the conformality tensor, its 1-form and
the Euler-Lagrange residual, plus the integrated energy.

A :class:`SmoothMap` carries a *rule*: a JAX-traceable function taking one
domain chart point to codomain value coordinates (see :mod:`conflab.geometry`).
Derivatives of the rule are taken by forward-mode autodiff, so jets are exact
to rounding; the finite-difference oracles elsewhere in the package never
share this path.

Conventions for a map ``f: M^m -> N``:

* ``df`` is an ``A x m`` array whose column ``i`` is ``df(e_i)`` in value
  coordinates (``A = N.value_dim``),
* ``hess[:, i, j]`` is ``(nabla df)(e_i, e_j)``,
* ``sigma[i]`` is ``sigma_f(e_i) = sum_j T_f(e_i, e_j) df(e_j)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .errors import NonFiniteDerivative
from .geometry import (
    ManifoldDescriptor,
    QuadratureGrid,
    _christoffel,
    _project,
    _scales,
    _volume_density,
    check_chart,
)


@dataclass(frozen=True, eq=False)
class SmoothMap:
    domain: ManifoldDescriptor
    codomain: ManifoldDescriptor
    rule: Callable
    name: str = "map"
    params: dict = field(default_factory=dict)
    grid: object | None = None  # GridRule for maps given by node values

    def __call__(self, x) -> np.ndarray:
        x = check_chart(self.domain, x)
        out = jax.vmap(self.rule)(jnp.atleast_2d(jnp.asarray(x)))
        return np.asarray(out).reshape(x.shape[:-1] + (self.codomain.value_dim,))

    def describe(self) -> dict:
        return {
            "name": self.name,
            "params": dict(self.params),
            "domain": self.domain.to_dict(),
            "codomain": self.codomain.to_dict(),
        }


@dataclass(frozen=True)
class MapJet:
    value: np.ndarray
    df: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class ConformalityState:
    pullback: np.ndarray
    energy_density: float | np.ndarray
    T: np.ndarray
    sigma: np.ndarray
    T_norm_sq: float | np.ndarray


# ---------------------------------------------------------------------------
# traceable single-point kernels


def _df(f: SmoothMap, x):
    return jax.jacfwd(f.rule)(x) / _scales(f.domain, x)


def _coord_hess(f: SmoothMap, x):
    """``(nabla df)(d_a, d_b)`` in the coordinate basis, shape ``(A, m, m)``."""
    y = f.rule(x)
    J = jax.jacfwd(f.rule)(x)
    H = jax.jacfwd(jax.jacfwd(f.rule))(x)
    G = _christoffel(f.domain, x)
    return _project(f.codomain, y, H) - jnp.einsum("Ac,cab->Aab", J, G)


def _hess(f: SmoothMap, x):
    s = _scales(f.domain, x)
    return _coord_hess(f, x) / (s[:, None] * s[None, :])


def _third(f: SmoothMap, x):
    """``(nabla^2 df)(e_a; e_b, e_c)``: derivative direction first, shape ``(A, m, m, m)``."""
    y = f.rule(x)
    Hc = _coord_hess(f, x)
    dHc = jnp.moveaxis(jax.jacfwd(partial(_coord_hess, f))(x), -1, 1)  # [A, a, b, c]
    G = _christoffel(f.domain, x)
    out = _project(f.codomain, y, dHc)
    out = out - jnp.einsum("Adc,dab->Aabc", Hc, G) - jnp.einsum("Abd,dac->Aabc", Hc, G)
    s = _scales(f.domain, x)
    return out / (s[:, None, None] * s[None, :, None] * s[None, None, :])


def _algebra(df, m: int):
    """Pull-back, energy density, T, sigma (rows) and |T|^2 from ``df``; batches OK."""
    P = jnp.einsum("...Ai,...Aj->...ij", df, df)
    e = jnp.trace(P, axis1=-2, axis2=-1)
    T = P - (e / m)[..., None, None] * jnp.eye(m)
    sigma = jnp.einsum("...ij,...Aj->...iA", T, df)
    tn2 = jnp.sum(T * T, axis=(-2, -1))
    return P, e, T, sigma, tn2


def _t_norm_sq(f: SmoothMap, x):
    return _algebra(_df(f, x), f.domain.dim)[4]


def _div_sigma(f: SmoothMap, x):
    m = f.domain.dim

    def weighted(z):
        s = _scales(f.domain, z)
        sigma = _algebra(_df(f, z), m)[3]  # (m, A)
        return sigma * (jnp.prod(s) / s)[:, None]

    D = jax.jacfwd(weighted)(x)  # [i, A, a]
    raw = jnp.einsum("iAi->A", D) / _volume_density(f.domain, x)
    return _project(f.codomain, f.rule(x), raw)


# ---------------------------------------------------------------------------
# batched helpers


def _batched(kernel, f: SmoothMap, xs):
    xs = check_chart(f.domain, xs)
    single = xs.ndim == 1
    out = np.asarray(jax.vmap(partial(kernel, f))(jnp.atleast_2d(jnp.asarray(xs))))
    if not np.all(np.isfinite(out)):
        raise NonFiniteDerivative(f"non-finite derivative while differentiating {f.name}")
    return out[0] if single else out


def values(f: SmoothMap, xs) -> np.ndarray:
    return _batched(lambda g, x: g.rule(x), f, xs)


def frame_differential(f: SmoothMap, xs) -> np.ndarray:
    return _batched(_df, f, xs)


def hessian(f: SmoothMap, xs) -> np.ndarray:
    return _batched(_hess, f, xs)


def third_derivative(f: SmoothMap, xs) -> np.ndarray:
    return _batched(_third, f, xs)


# ---------------------------------------------------------------------------
# public operations


def jet(f: SmoothMap, x) -> MapJet:
    """Value, frame differential and covariant Hessian at one point or a batch."""
    return MapJet(value=values(f, x), df=frame_differential(f, x), hess=hessian(f, x))


def conformality_state(j: MapJet, m: int) -> ConformalityState:
    P, e, T, sigma, tn2 = (np.asarray(a) for a in _algebra(jnp.asarray(j.df), m))
    scalar = lambda a: float(a) if a.ndim == 0 else a  # noqa: E731
    return ConformalityState(pullback=P, energy_density=scalar(e), T=T, sigma=sigma, T_norm_sq=scalar(tn2))


def state_at(f: SmoothMap, x) -> ConformalityState:
    return conformality_state(MapJet(values(f, x), frame_differential(f, x), np.empty(0)), f.domain.dim)


def div_sigma(f: SmoothMap, x) -> np.ndarray:
    """``sum_i (nabla_{e_i} sigma_f)(e_i)`` at one point or a batch of points."""
    return _batched(_div_sigma, f, x)


def t_norm_sq(f: SmoothMap, xs) -> np.ndarray:
    return _batched(_t_norm_sq, f, xs)


def phi(f: SmoothMap, grid: QuadratureGrid) -> float:
    if grid.manifold != f.domain:
        raise ValueError(f"grid lives on {grid.manifold}, map domain is {f.domain}")
    return grid.integrate(t_norm_sq(f, grid.nodes))


def residual_norms(f: SmoothMap, grid: QuadratureGrid) -> tuple[float, float]:
    """Sup norm over nodes and L^2 norm of the Euler-Lagrange residual."""
    d = div_sigma(f, grid.nodes)
    sq = np.sum(d * d, axis=-1)
    return float(np.sqrt(sq.max())), float(np.sqrt(grid.integrate(sq)))


@dataclass(frozen=True)
class Lemma1Residuals:
    symmetry: float
    trace: float
    pairing_d: float
    identity_e: float

    def max(self) -> float:
        return max(self.symmetry, self.trace, self.pairing_d, self.identity_e)


def lemma1_report(j: MapJet, m: int) -> Lemma1Residuals:
    """Defects of the algebraic identities of T_f: symmetry, zero trace,
    ``(f*h, T) = |T|^2`` and ``|T|^2 = |f*h|^2 - |df|^4 / m``."""
    st = conformality_state(j, m)
    T, P = st.T, st.pullback
    tn2 = np.sum(T * T, axis=(-2, -1))
    e = np.trace(P, axis1=-2, axis2=-1)
    sym = np.abs(T - np.swapaxes(T, -1, -2)).max(axis=(-2, -1))
    tr = np.abs(np.trace(T, axis1=-2, axis2=-1))
    pair = np.abs(np.sum(P * T, axis=(-2, -1)) - tn2)
    ident = np.abs(tn2 - (np.sum(P * P, axis=(-2, -1)) - e**2 / m))
    return Lemma1Residuals(*(float(np.max(a)) for a in (sym, tr, pair, ident)))


def lemma2_residuals(j: MapJet, m: int, Z, W) -> tuple[float, float]:
    """Defects of ``sum_j h(Z, df e_j) T(W, e_j) = h(Z, sigma(W))`` and
    ``|T|^2 = sum_i h(df e_i, sigma(e_i))`` at a single point.

    ``Z`` is a codomain vector in value coordinates, ``W`` a domain vector in
    frame components.
    """
    st = conformality_state(j, m)
    Z = np.asarray(Z, dtype=float)
    W = np.asarray(W, dtype=float)
    lhs = float(np.sum((Z @ j.df) * (st.T.T @ W)))
    sigma_w = W @ st.sigma
    first = abs(lhs - float(Z @ sigma_w))
    second = abs(st.T_norm_sq - float(np.einsum("Ai,iA->", j.df, st.sigma)))
    return first, second
