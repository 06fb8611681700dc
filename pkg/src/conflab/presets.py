"""Closed-form maps, the flat-torus scaling example, and variation-field bases."""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import jax.numpy as jnp
import numpy as np
import scipy.linalg

from .calculus import SmoothMap
from .errors import UnknownPreset
from .gridmaps import fourier_frequencies
from .geometry import (
    ManifoldDescriptor,
    QuadratureGrid,
    _project,
    _value,
    circle_product,
    quadrature_grid,
    sphere,
)
from .variation import VariationField


def _identity(manifold: dict | None = None, dim: int | None = None, radii=None):
    if radii is not None:
        M = circle_product(*radii)
    elif manifold is not None:
        M = ManifoldDescriptor.from_dict(manifold)
    else:
        M = sphere(2 if dim is None else dim)
    return SmoothMap(M, M, lambda x: _value(M, x), name="identity")


def _constant(domain: dict | None = None, codomain: dict | None = None, point=None):
    M = ManifoldDescriptor.from_dict(domain or {"kind": "sphere", "dim": 2})
    N = ManifoldDescriptor.from_dict(codomain or {"kind": "sphere", "dim": 2})
    if point is None:
        point = np.eye(N.value_dim)[-1] if N.is_sphere else np.zeros(N.value_dim)
    p = jnp.asarray(point, dtype=float)
    return SmoothMap(M, N, lambda x: p + 0.0 * jnp.sum(x), name="constant")


def _torus_scaling(ell: int = 2, k: float = 2.0):
    ell = int(ell)
    if ell < 2:
        raise ValueError("torus_scaling needs ell >= 2")
    M = circle_product(*([1.0] * ell))
    N = circle_product(k, *([1.0] * (ell - 1)))
    stretch = jnp.asarray([k] + [1.0] * (ell - 1))
    # arclength lift of (x_1, ..., x_l) -> (k x_1, x_2, ..., x_l)
    return SmoothMap(M, N, lambda x: stretch * x, name="torus_scaling")


def _torus_shear(a: float = 0.3):
    M = circle_product(1.0, 1.0)
    return SmoothMap(M, M, lambda x: jnp.stack([x[0] + a * jnp.sin(x[1]), x[1]]), name="torus_shear")


def _s2(theta, phi_):
    return jnp.stack([jnp.sin(theta) * jnp.cos(phi_), jnp.sin(theta) * jnp.sin(phi_), jnp.cos(theta)])


def _azimuth_doubling():
    # smooth away from the poles only; use with pole-free grids
    S2 = sphere(2)
    return SmoothMap(S2, S2, lambda x: _s2(x[0], 2.0 * x[1]), name="azimuth_doubling")


def _stereographic_power(d: int = 2):
    S2 = sphere(2)

    def rule(x):
        # z -> z^d through stereographic projection from the north pole
        t = jnp.tan(0.5 * x[0]) ** d  # 1 / |z|^d
        den = 1.0 + t * t
        return jnp.stack([2 * t * jnp.cos(d * x[1]) / den, 2 * t * jnp.sin(d * x[1]) / den, (1.0 - t * t) / den])

    return SmoothMap(S2, S2, rule, name="stereographic_power")


def _latitude_wobble(a: float = 0.3):
    if not abs(a) < 1:
        raise ValueError("latitude_wobble needs |a| < 1 to stay a diffeomorphism")
    S2 = sphere(2)
    return SmoothMap(S2, S2, lambda x: _s2(x[0] + a * jnp.sin(x[0]), x[1]), name="latitude_wobble")


def _torus_to_sphere(a: float = 0.5):
    M = circle_product(1.0, 1.0)
    return SmoothMap(M, sphere(2), lambda x: _s2(0.5 * np.pi + a * jnp.sin(x[0]), x[1]), name="torus_to_sphere")


PRESETS = {
    "identity": (_identity, "identity of a sphere (dim=d) or circle product (radii=[...])"),
    "constant": (_constant, "constant map between any two spaces"),
    "torus_scaling": (_torus_scaling, "(x_1..x_l) -> (k x_1, x_2..x_l) from unit circles onto S^1_k x S^1 x ..."),
    "torus_shear": (_torus_shear, "(x, y) -> (x + a sin y, y) on the unit flat torus"),
    "azimuth_doubling": (_azimuth_doubling, "(theta, phi) -> (theta, 2 phi) on S^2"),
    "stereographic_power": (_stereographic_power, "z -> z^d on S^2 via stereographic projection"),
    "latitude_wobble": (_latitude_wobble, "(theta, phi) -> (theta + a sin theta, phi) on S^2"),
    "torus_to_sphere": (_torus_to_sphere, "(x, y) -> (theta = pi/2 + a sin x, phi = y) from T^2 to S^2"),
}


def make_preset(name: str, params: dict | None = None, **kwargs) -> SmoothMap:
    if name not in PRESETS:
        raise UnknownPreset(name)
    params = {**(params or {}), **kwargs}
    f = PRESETS[name][0](**params)
    return SmoothMap(f.domain, f.codomain, f.rule, name=name, params=params)


def list_presets() -> dict[str, str]:
    return {name: doc for name, (_, doc) in PRESETS.items()}


# ---------------------------------------------------------------------------
# the flat-torus scaling example


@dataclass(frozen=True)
class TorusScalingExample:
    ell: int
    k: float

    @property
    def C_first(self) -> float:
        return (self.k**2 - 1) * (self.ell - 1) / self.ell

    @property
    def C_rest(self) -> float:
        return -(self.k**2 - 1) / self.ell

    @property
    def T_norm_sq(self) -> float:
        return (self.k**2 - 1) ** 2 * (self.ell - 1) / self.ell

    @property
    def T(self) -> np.ndarray:
        return np.diag([self.C_first] + [self.C_rest] * (self.ell - 1))

    @property
    def sigma_coefficients(self) -> np.ndarray:
        """``sigma(e_i) = c_i E_i``."""
        return np.array([self.k * self.C_first] + [self.C_rest] * (self.ell - 1))

    @property
    def phi(self) -> float:
        return self.T_norm_sq * (2 * np.pi) ** self.ell

    def map(self) -> SmoothMap:
        return make_preset("torus_scaling", ell=self.ell, k=self.k)


def example_integrand_form(ell: int, k: float, A) -> float:
    """Second-variation integrand of the torus scaling map for constant
    coefficients ``a_ij = nabla_{e_i} psi_j`` (the five-term form, term by term)."""
    A = np.asarray(A, dtype=float)
    ex = TorusScalingExample(ell, k)
    d = np.array([k] + [1.0] * (ell - 1))
    Tdiag = np.diag(ex.T)
    coupling = float(np.sum(Tdiag[:, None] * A**2))
    gram = float(np.sum((A * d[None, :]) ** 2))
    mixed = float(np.sum((A * d[None, :]) * (A * d[None, :]).T))
    penalty = -2.0 / ell * float(np.dot(np.diag(A), d)) ** 2
    return coupling + gram + mixed + penalty


def example_quadratic_form(ell: int, k: float, A) -> float:
    """The rearranged quadratic form of the torus example.

    It equals the integrated five-term form after the mixed products
    ``a_11 a_ii`` are traded for ``a_1i a_i1`` (equal integrals on a flat
    torus); it is pointwise nonnegative for ``k <= 1`` close to 1.
    """
    A = np.asarray(A, dtype=float)
    ell = int(ell)
    if A.shape != (ell, ell):
        raise ValueError(f"need an {ell}x{ell} coefficient matrix")
    B = A[1:, 1:]
    first_row, first_col = A[0, 1:], A[1:, 0]
    out = (ell - 1) * (3 * k**2 - 1) / ell * A[0, 0] ** 2
    out += (1 - k**2) / ell * np.sum(B**2)
    out += 2 * k * (1 - 2 / ell) * np.dot(first_row, first_col)
    out += (k**2 * (ell - 1) + 1) / ell * (np.sum(first_row**2) + np.sum(first_col**2))
    out += np.sum(B**2) + np.sum(B * B.T) - 2 / ell * np.trace(B) ** 2
    return float(out)


def matrix_inequality_check(A) -> float:
    """``|A|^2 + Tr(A^2) - (2/n)(Tr A)^2`` for an ``n x n`` matrix (always >= 0)."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("square matrix required")
    return float(np.sum(A * A) + np.sum(A * A.T) - 2.0 / n * np.trace(A) ** 2)


# ---------------------------------------------------------------------------
# variation-field bases


def _fourier_factor(q: np.ndarray, kind: str):
    trig = jnp.cos if kind == "cos" else jnp.sin
    q = jnp.asarray(q, dtype=float)
    return lambda x: trig(jnp.dot(q, x))


def variation_basis(f: SmoothMap, degree: int = 2, grid: QuadratureGrid | None = None) -> list[VariationField]:
    """Finite family of variation fields along ``f``.

    Circle-product targets: parallel unit fields ``E_a`` times Fourier modes
    ``1, cos(q.x), sin(q.x)`` over integer frequencies with ``|q|_1 <= degree``.
    Sphere targets: projections of the ambient constant fields times monomials
    of the image point up to ``degree``; dependent candidates are dropped by a
    pivoted QR on ``grid`` samples.
    """
    if degree < 0:
        raise ValueError("degree must be >= 0")
    A, m = f.codomain.value_dim, f.domain.dim
    if not f.codomain.is_sphere:
        if f.domain.is_sphere:
            raise ValueError("Fourier bases need a circle-product domain")
        factors = [("1", lambda x: jnp.ones((), dtype=x.dtype))]
        for q in fourier_frequencies(m, degree):
            for kind in ("cos", "sin"):
                factors.append((f"{kind}({q})", _fourier_factor(np.array(q), kind)))
        out = []
        for a in range(A):
            unit = jnp.eye(A)[a]
            for label, fac in factors:
                out.append(VariationField(f, lambda x, fac=fac, unit=unit: fac(x) * unit, name=f"E{a + 1}*{label}"))
        return out

    exponents = [
        e for total in range(degree + 1) for e in itertools.product(range(total + 1), repeat=A) if sum(e) == total
    ]
    candidates = []
    N = f.codomain
    for e in exponents:
        for k in range(A):
            unit = jnp.eye(A)[k]

            def rule(x, unit=unit, e=e):
                y = f.rule(x)
                mono = 1.0
                for i, p in enumerate(e):
                    if p:
                        mono = mono * y[i] ** p  # integer powers keep derivatives finite at y_i = 0
                return mono * _project(N, y, unit)

            label = "".join(f"y{i + 1}^{p}" for i, p in enumerate(e) if p) or "1"
            candidates.append(VariationField(f, rule, name=f"Z{k + 1}*{label}"))
    if degree == 0:
        return candidates
    grid = grid or quadrature_grid(f.domain, 12)
    sw = np.sqrt(grid.weights)[:, None]
    cols = [(sw * np.asarray(c.values(grid.nodes))).ravel() for c in candidates]
    _, R, piv = scipy.linalg.qr(np.stack(cols, axis=1), mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    keep = np.sort(piv[: int(np.sum(diag > 1e-8 * diag[0]))])
    return [candidates[i] for i in keep]


__all__ = [
    "PRESETS",
    "TorusScalingExample",
    "example_integrand_form",
    "example_quadratic_form",
    "fourier_frequencies",
    "list_presets",
    "make_preset",
    "matrix_inequality_check",
    "variation_basis",
]
