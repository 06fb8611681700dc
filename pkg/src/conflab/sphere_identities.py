"""Projected parallel fields on unit spheres and the identities built on them.

For a unit sphere ``S^d`` in ``R^{d+1}`` with outer normal ``nu`` and an
orthonormal ambient frame ``E_1, ..., E_{d+1}``, the projected fields are
``Z_k = E_k - phi_k nu`` with ``phi_k = <E_k, nu>``.  On the domain they are
vector fields on ``S^m``; on the codomain they are pulled back through a map
``f`` to sections ``W_k = Z_k o f`` along it.

Everything here evaluates integrands from exact jets and integrates them on a
quadrature grid; the finite-difference cross-checks use chart differences
and never share a derivative with the quantities they check.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from functools import partial
from typing import Callable

import jax
import jax.numpy as jnp
import numpy as np

from .calculus import SmoothMap, _algebra, _batched, _df, _div_sigma, _hess, _third, _t_norm_sq
from .errors import NotASphere
from .geometry import (
    ManifoldDescriptor,
    QuadratureGrid,
    _christoffel,
    _project,
    _riemann,
    _scales,
    _value,
    _value_frame,
    _volume_density,
    check_chart,
    sphere,
)
from .variation import VariationField, second_variation

DEFAULT_STATIONARY_TOL = 1e-6


def _require_sphere(M: ManifoldDescriptor, what: str):
    if not M.is_sphere:
        raise NotASphere(f"{what} is {M}, not a unit sphere")


def _pointwise(kernel, M: ManifoldDescriptor, xs) -> np.ndarray:
    xs = check_chart(M, xs)
    single = xs.ndim == 1
    out = np.asarray(jax.vmap(kernel)(jnp.atleast_2d(jnp.asarray(xs))))
    return out[0] if single else out


# ---------------------------------------------------------------------------
# projected field families


@dataclass(frozen=True, eq=False)
class ProjectedFieldFamily:
    """The ``dim + 1`` projected fields of a sphere.

    With ``through=None`` the sphere is the domain and points are its chart
    points; otherwise the sphere is ``through.codomain`` and the fields are
    evaluated at ``f(x)`` for chart points ``x`` of ``through.domain``.
    ``ambient_frame[:, k]`` is ``E_k`` (identity by default).
    """

    sphere: ManifoldDescriptor
    through: SmoothMap | None = None
    ambient_frame: np.ndarray | None = None

    @property
    def size(self) -> int:
        return self.sphere.dim + 1

    @property
    def point_space(self) -> ManifoldDescriptor:
        return self.sphere if self.through is None else self.through.domain

    def _frame(self):
        E = np.eye(self.size) if self.ambient_frame is None else np.asarray(self.ambient_frame, dtype=float)
        return jnp.asarray(E)

    def _normal(self, x):
        return _value(self.sphere, x) if self.through is None else self.through.rule(x)

    def _phi(self, x):
        return self._frame().T @ self._normal(x)

    def _fields(self, x):
        """Rows ``Z_k`` in ambient coordinates."""
        nu = self._normal(x)
        E = self._frame().T
        return E - (E @ nu)[:, None] * nu[None, :]

    def normal(self, xs) -> np.ndarray:
        return _pointwise(self._normal, self.point_space, xs)

    def phi(self, xs) -> np.ndarray:
        return _pointwise(self._phi, self.point_space, xs)

    def fields(self, xs) -> np.ndarray:
        return _pointwise(self._fields, self.point_space, xs)

    def frame_components(self, xs) -> np.ndarray:
        """Domain families only: rows ``(g(Z_k, e_1), ..., g(Z_k, e_m))``."""
        if self.through is not None:
            raise ValueError("frame components are defined for domain families")
        return _pointwise(lambda x: self._fields(x) @ _value_frame(self.sphere, x), self.sphere, xs)

    def invariants(self, xs) -> dict[str, float]:
        """Worst defects of ``sum phi_k^2 = 1``, ``sum |Z_k|^2 = dim`` and
        ``sum_k <v, Z_k> Z_k = v`` (tested on an orthonormal tangent basis)."""
        d = self.sphere.dim

        def kernel(x):
            nu = self._normal(x)
            Z = self._fields(x)
            ph = self._phi(x)
            tangent = _project(self.sphere, nu, jnp.eye(d + 1))  # columns span T S^d
            completeness = Z.T @ (Z @ tangent) - tangent
            return jnp.stack(
                [
                    jnp.abs(jnp.sum(ph * ph) - 1.0),
                    jnp.abs(jnp.sum(Z * Z) - d),
                    jnp.max(jnp.abs(completeness)),
                ]
            )

        vals = np.atleast_2d(_pointwise(kernel, self.point_space, xs))
        return {"phi_sq_sum": float(vals[:, 0].max()), "norm_sq_sum": float(vals[:, 1].max()),
                "completeness": float(vals[:, 2].max())}

    def pulled_back(self, k: int) -> VariationField:
        """``W_k = Z_k o f`` as a variation field along ``through``."""
        if self.through is None:
            raise ValueError("only codomain families give variation fields")
        Ek = self._frame()[:, k]
        return VariationField(self.through, lambda x: Ek + 0.0 * jnp.sum(x), name=f"W{k + 1}")


def projected_fields(M: ManifoldDescriptor, through: SmoothMap | None = None, ambient_frame=None) -> ProjectedFieldFamily:
    _require_sphere(M, "field carrier")
    if through is not None and through.codomain != M:
        raise ValueError(f"{through.name} maps into {through.codomain}, not {M}")
    return ProjectedFieldFamily(M, through, ambient_frame)


def lemma5_residual(n: int, xs) -> float:
    """Worst defect of ``sum_k h(Z_k, Z_k) = n`` on ``S^n`` at the given chart points."""
    fam = projected_fields(sphere(n))
    return fam.invariants(xs)["norm_sq_sum"]


def pulled_back_derivative_check(f: SmoothMap, x, k: int, step: float = 1e-5) -> float:
    """Max over ``i`` of ``|nabla_{e_i} W_k + phi_k df(e_i)|`` with the left
    side from central chart differences of ``W_k`` (projected)."""
    _require_sphere(f.codomain, "codomain")
    fam = projected_fields(f.codomain, f)
    x = check_chart(f.domain, x)
    s = np.asarray(_scales(f.domain, jnp.asarray(x)))
    y = np.asarray(f.rule(jnp.asarray(x)))
    F = np.asarray(_df(f, jnp.asarray(x)))
    ph = fam.phi(x)[k]
    worst = 0.0
    for i in range(f.domain.dim):
        h = np.zeros_like(x)
        h[i] = step
        diff = (fam.fields(x + h)[k] - fam.fields(x - h)[k]) / (2 * step * s[i])
        fd = diff - np.dot(diff, y) * y
        worst = max(worst, float(np.max(np.abs(fd + ph * F[:, i]))))
    return worst


def domain_field_derivative_rule(m: int, x, i: int, k: int) -> np.ndarray:
    """``nabla_{e_i} Z_k = -phi_k e_i`` on ``S^m``, in ambient coordinates."""
    M = sphere(m)
    x = check_chart(M, x)
    fam = projected_fields(M)
    e = np.asarray(_value_frame(M, jnp.asarray(x)))
    return -fam.phi(x)[k] * e[:, i]


def domain_field_derivative_fd(m: int, x, i: int, k: int, step: float = 1e-5) -> np.ndarray:
    """Central chart difference of ``Z_k`` along ``e_i``, projected to ``T S^m``."""
    M = sphere(m)
    x = check_chart(M, x)
    fam = projected_fields(M)
    h = np.zeros_like(x)
    h[i] = step
    s = np.asarray(_scales(M, jnp.asarray(x)))
    diff = (fam.fields(x + h)[k] - fam.fields(x - h)[k]) / (2 * step * s[i])
    nu = fam.normal(x)
    return diff - np.dot(diff, nu) * nu


# ---------------------------------------------------------------------------
# second derivatives of scalar functions


def _chart_scalar(M: ManifoldDescriptor, u: Callable):
    return lambda x: u(_value(M, x))


def _scalar_hess(M: ManifoldDescriptor, U: Callable, x):
    """Covariant Hessian of a chart function in the orthonormal frame."""
    grad = jax.grad(U)(x)
    H = jax.hessian(U)(x) - jnp.einsum("cab,c->ab", _christoffel(M, x), grad)
    s = _scales(M, x)
    return H / (s[:, None] * s[None, :])


def _laplacian(M: ManifoldDescriptor, U: Callable, x):
    """Divergence form ``(1/sqrt g) sum_i d_i(sqrt g / s_i^2 d_i U)``."""

    def flux(z):
        s = _scales(M, z)
        return _volume_density(M, z) * jax.grad(U)(z) / (s * s)

    return jnp.trace(jax.jacfwd(flux)(x)) / _volume_density(M, x)


def _projected_operator(M: ManifoldDescriptor, U: Callable, x):
    """``sum_k Z_k(Z_k U) - (nabla_{Z_k} Z_k) U`` from chart components."""
    E = jnp.eye(M.dim + 1)

    def chart_components(z):
        # chart components of every Z_k, shape (K, m)
        nu = _value(M, z)
        Z = E - nu[:, None] * nu[None, :]
        return (Z @ _value_frame(M, z)) / _scales(M, z)

    c = chart_components(x)
    dc = jax.jacfwd(chart_components)(x)  # [k, b, a] = d_a c_k^b
    G = _christoffel(M, x)

    def directional(z):
        return chart_components(z) @ jax.grad(U)(z)  # Z_k U for every k

    second = jnp.einsum("ka,ka->k", jax.jacfwd(directional)(x), c)  # Z_k(Z_k U)
    nabla_zz = jnp.einsum("ka,kba->kb", c, dc) + jnp.einsum("cab,ka,kb->kc", G, c, c)
    return jnp.sum(second - nabla_zz @ jax.grad(U)(x))


@dataclass(frozen=True)
class Lemma4Residuals:
    a: float
    b: float
    c: float
    operator: float
    laplacian: float

    def as_dict(self) -> dict:
        return asdict(self)


def lemma4_check(m: int, u: Callable, x, f: SmoothMap | None = None) -> Lemma4Residuals:
    """Defects of the three projected-field identities on ``S^m`` at ``x``.

    ``u`` is a JAX-traceable scalar function of the ambient point.  (a)
    compares ``sum_k Z_k(Z_k u) - (nabla_{Z_k} Z_k) u`` with the divergence
    form Laplacian, (b) is the largest component of ``sum_k g(e_i, Z_k) Z_k -
    e_i``, and (c), when a map ``f`` from ``S^m`` is given, is
    ``|sum_{k,i} h(df Z_k, df e_i) T_f(Z_k, e_i) - |T_f|^2|`` (NaN otherwise).
    """
    M = sphere(m)
    x = check_chart(M, x)
    xj = jnp.asarray(x)
    U = _chart_scalar(M, u)
    op = float(_projected_operator(M, U, xj))
    lap = float(_laplacian(M, U, xj))
    fam = projected_fields(M)
    z = fam.frame_components(x)  # (K, m)
    b = float(np.max(np.abs(z.T @ z - np.eye(m))))
    c = math.nan
    if f is not None:
        if f.domain != M:
            raise ValueError(f"{f.name} is not defined on {M}")
        F = np.asarray(_df(f, xj))
        P, _, T, _, tn2 = (np.asarray(a) for a in _algebra(jnp.asarray(F), m))
        total = np.einsum("ka,ab,bc,kc->", z, P, T, z)
        c = float(abs(total - tn2))
    return Lemma4Residuals(a=abs(op - lap), b=b, c=c, operator=op, laplacian=lap)


# ---------------------------------------------------------------------------
# the pointwise second-derivative identity for |T_f|^2


LEMMA3_TERMS = (
    "third_derivative_sigma",
    "hessian_coupling",
    "hessian_gram",
    "hessian_mixed",
    "trace_penalty",
    "domain_curvature",
    "target_curvature",
)


def _lemma3_kernel(f: SmoothMap, z_of_x: Callable, x):
    m = f.domain.dim
    z = z_of_x(x)
    F = _df(f, x)
    T, sigma = _algebra(F, m)[2:4]
    H = _hess(f, x)
    D3 = _third(f, x)
    HZ = jnp.einsum("a,Aai->Ai", z, H)  # (nabla_Z df)(e_i)
    B = HZ.T @ F  # B[i, j] = h((nabla_Z df) e_i, df e_j)
    t1 = jnp.einsum("Aibc,b,c,iA->", D3, z, z, sigma)
    t2 = jnp.einsum("Ai,Aj,ij->", HZ, HZ, T)
    t3 = jnp.sum(B * B)
    t4 = jnp.sum(B * B.T)
    t5 = -2.0 / m * jnp.trace(B) ** 2
    eye = jnp.eye(m)
    RM = _riemann(f.domain.curvature, jnp.broadcast_to(z, (m, m)), eye, jnp.broadcast_to(z, (m, m)))
    t6 = -jnp.einsum("Aa,ia,Aj,ij->", F, RM, F, T)
    FZ = F @ z
    A = F.shape[0]
    RN = _riemann(f.codomain.curvature, jnp.broadcast_to(FZ, (m, A)), F.T, jnp.broadcast_to(FZ, (m, A)))
    t7 = jnp.einsum("iA,Aj,ij->", RN, F, T)
    hu = _scalar_hess(f.domain, partial(_t_norm_sq, f), x)
    lhs = 0.25 * z @ hu @ z
    return lhs, jnp.stack([t1, t2, t3, t4, t5, t6, t7])


@dataclass(frozen=True)
class Lemma3Report:
    lhs: float
    terms: dict
    rhs: float
    residual: float


def _domain_projected_components(M: ManifoldDescriptor, k: int):
    Ek = jnp.eye(M.dim + 1)[k]
    return lambda x: _value_frame(M, x).T @ Ek


def lemma3_terms(f: SmoothMap, x, field: int | Callable = 0) -> Lemma3Report:
    """Both sides of the pointwise identity for ``(1/4) Hess |T_f|^2 (Z, Z)``.

    ``field`` is either the index ``k`` of a projected field ``Z_k`` (domain
    sphere) or a traceable map from chart points to frame components of ``Z``.
    """
    x = check_chart(f.domain, x)
    if callable(field):
        z_of_x = field
    else:
        _require_sphere(f.domain, "domain")
        z_of_x = _domain_projected_components(f.domain, int(field))
    lhs, terms = _lemma3_kernel(f, z_of_x, jnp.asarray(x))
    terms = np.asarray(terms)
    if not (np.all(np.isfinite(terms)) and np.isfinite(lhs)):
        from .errors import NonFiniteDerivative

        raise NonFiniteDerivative(f"non-finite jets of {f.name}")
    rhs = math.fsum(terms.tolist())
    return Lemma3Report(
        lhs=float(lhs), terms=dict(zip(LEMMA3_TERMS, map(float, terms))), rhs=rhs, residual=abs(float(lhs) - rhs)
    )


def lemma3_residual(f: SmoothMap, x, field: int | Callable = 0) -> float:
    return lemma3_terms(f, x, field).residual


# ---------------------------------------------------------------------------
# the five-term decomposition for maps from a sphere


@dataclass(frozen=True)
class Theorem1Terms:
    dim: int
    I: float
    II: float
    III: float
    IV: float
    V: float
    phi_value: float
    total: float
    residual_sup: float
    stationary: bool
    contradiction: bool

    @property
    def stationary_total(self) -> float:
        """``(4 - m) Phi``, the value of the sum for stationary maps."""
        return (4 - self.dim) * self.phi_value

    def as_dict(self) -> dict:
        return asdict(self)


def _theorem1_kernel(f: SmoothMap, x):
    M = f.domain
    m = M.dim
    F = _df(f, x)
    T, sigma, tn2 = _algebra(F, m)[2:5]
    H = _hess(f, x)
    D3 = _third(f, x)
    nu = _value(M, x)
    Z = (jnp.eye(m + 1) - nu[:, None] * nu[None, :]) @ _value_frame(M, x)  # rows: frame comps of Z_k
    ph = nu
    hu = _scalar_hess(M, partial(_t_norm_sq, f), x)
    I = 0.25 * jnp.einsum("ka,ab,kb->", Z, hu, Z)
    II = -jnp.einsum("Aibc,kb,kc,iA->", D3, Z, Z, sigma)
    eye = jnp.eye(m)

    def curv(z):
        return _riemann(M.curvature, jnp.broadcast_to(z, (m, m)), eye, jnp.broadcast_to(z, (m, m)))

    RZ = jax.vmap(curv)(Z)  # [k, i, :] = R(Z_k, e_i) Z_k
    III = jnp.einsum("Aa,kia,Aj,ij->", F, RZ, F, T)
    HZ = jnp.einsum("Aia,ka->kAi", H, Z)  # (nabla_{e_i} df)(Z_k)
    IV = -6.0 * jnp.einsum("k,kAi,Aj,ij->", ph, HZ, F, T)
    V = 3.0 * jnp.sum(ph * ph) * tn2
    div = _div_sigma(f, x)
    return jnp.stack([I, II, III, IV, V, tn2, jnp.sqrt(jnp.dot(div, div))])


def theorem1_terms(f: SmoothMap, grid: QuadratureGrid, stationary_tol: float = DEFAULT_STATIONARY_TOL) -> Theorem1Terms:
    """Integrals I-V for a map from ``S^m`` (``m >= 2``).

    For every smooth ``f``: ``I = 0``, ``III = -(m-1) Phi``, ``V = 3 Phi``
    and ``IV = 0``; ``II = int h(tension, div sigma_f)`` vanishes when ``f`` is
    stationary.  Their sum is ``sum_k L(df Z_k, df Z_k)``, which is
    ``(4 - m) Phi`` for stationary maps.  ``contradiction`` is set when a map
    judged stationary (sup ``|div sigma_f| < stationary_tol``) from ``S^m``
    with ``m >= 5`` has a sum below ``-stationary_tol (1 + Phi)``, which
    would contradict stability.
    """
    _require_sphere(f.domain, "domain")
    if f.domain.dim < 2:
        raise ValueError("the decomposition needs m >= 2")
    if grid.manifold != f.domain:
        raise ValueError("grid does not live on the map's domain")
    dens = _batched(_theorem1_kernel, f, grid.nodes)
    I, II, III, IV, V, ph = (grid.integrate(dens[:, c]) for c in range(6))
    sup = float(dens[:, 6].max())
    total = math.fsum([I, II, III, IV, V])
    stationary = sup < stationary_tol
    contradiction = bool(stationary and f.domain.dim >= 5 and total < -stationary_tol * (1 + ph))
    return Theorem1Terms(f.domain.dim, I, II, III, IV, V, ph, total, sup, stationary, contradiction)


def differential_fields(f: SmoothMap) -> list[VariationField]:
    """``df(Z_k)`` for the projected fields of the domain sphere."""
    _require_sphere(f.domain, "domain")
    M = f.domain
    out = []
    for k in range(M.dim + 1):
        zk = _domain_projected_components(M, k)
        out.append(VariationField(f, lambda x, zk=zk: _df(f, x) @ zk(x), name=f"df(Z{k + 1})"))
    return out


# ---------------------------------------------------------------------------
# integrated divergence identity


@dataclass(frozen=True)
class GammaIdentity:
    k: int
    lhs: float
    rhs: float
    residual: float


def _gamma_kernel(f: SmoothMap, k: int, x):
    M = f.domain
    m = M.dim
    F = _df(f, x)
    sigma, tn2 = _algebra(F, m)[3:5]
    H = _hess(f, x)
    nu = _value(M, x)
    Ek = jnp.eye(m + 1)[k]
    z = _value_frame(M, x).T @ Ek
    lhs = jnp.einsum("Aia,a,iA->", H, z, sigma)
    div = _div_sigma(f, x)
    rhs_a = -jnp.dot(F @ z, div)
    rhs_b = nu[k] * tn2
    return jnp.stack([lhs, rhs_a, rhs_b])


def gamma_div_identity(f: SmoothMap, k: int, grid: QuadratureGrid) -> GammaIdentity:
    """``int sum_i h((nabla_{e_i} df)(Z_k), sigma_f(e_i))`` against
    ``-int h(df Z_k, div sigma_f) + int phi_k |T_f|^2``."""
    _require_sphere(f.domain, "domain")
    if not 0 <= k <= f.domain.dim:
        raise IndexError(f"k must lie in 0..{f.domain.dim}")
    dens = _batched(lambda g, x: _gamma_kernel(g, k, x), f, grid.nodes)
    lhs = grid.integrate(dens[:, 0])
    rhs = grid.integrate(dens[:, 1]) + grid.integrate(dens[:, 2])
    return GammaIdentity(k=k, lhs=lhs, rhs=rhs, residual=abs(lhs - rhs))


# ---------------------------------------------------------------------------
# the three-term decomposition for maps into a sphere


@dataclass(frozen=True)
class Theorem2Terms:
    term1: float
    term2: float
    term3: float
    phi_value: float
    total: float

    @property
    def ratio(self) -> float:
        return self.total / self.phi_value if self.phi_value else math.nan

    def as_dict(self) -> dict:
        return {**asdict(self), "ratio": self.ratio}


def _theorem2_kernel(f: SmoothMap, ambient, x):
    m = f.domain.dim
    F = _df(f, x)
    _, _, T, _, tn2 = _algebra(F, m)
    y = f.rule(x)
    E = ambient.T  # rows E_k
    ph = E @ y
    W = E - ph[:, None] * y[None, :]
    t1 = 3.0 * jnp.sum(ph * ph) * tn2
    t2 = -jnp.sum(W * W) * tn2
    WF = W @ F  # [k, i] = h(W_k, df e_i)
    t3 = jnp.einsum("ki,kj,ij->", WF, WF, T)
    return jnp.stack([t1, t2, t3, tn2])


def theorem2_terms(f: SmoothMap, grid: QuadratureGrid, ambient_frame=None) -> Theorem2Terms:
    """``3 int sum phi_k^2 |T|^2``, ``-int sum |W_k|^2 |T|^2`` and
    ``int sum_k T(df^T W_k, df^T W_k)`` for a map into ``S^n``; they are
    ``3 Phi``, ``-n Phi`` and ``Phi`` for every smooth map, and their sum is
    ``sum_k L(W_k, W_k)``."""
    _require_sphere(f.codomain, "codomain")
    n = f.codomain.dim
    E = jnp.asarray(np.eye(n + 1) if ambient_frame is None else ambient_frame, dtype=float)
    dens = _batched(lambda g, x: _theorem2_kernel(g, E, x), f, grid.nodes)
    t1, t2, t3, ph = (grid.integrate(dens[:, c]) for c in range(4))
    return Theorem2Terms(t1, t2, t3, ph, math.fsum([t1, t2, t3]))


def form_sum(f: SmoothMap, fields, grid: QuadratureGrid) -> float:
    """``sum_k L(X_k, X_k)`` for a list of variation fields."""
    return math.fsum(second_variation(f, X, X, grid).total for X in fields)


__all__ = [
    "GammaIdentity",
    "LEMMA3_TERMS",
    "Lemma3Report",
    "Lemma4Residuals",
    "ProjectedFieldFamily",
    "Theorem1Terms",
    "Theorem2Terms",
    "differential_fields",
    "domain_field_derivative_fd",
    "domain_field_derivative_rule",
    "form_sum",
    "gamma_div_identity",
    "lemma3_residual",
    "lemma3_terms",
    "lemma4_check",
    "lemma5_residual",
    "projected_fields",
    "pulled_back_derivative_check",
    "theorem1_terms",
    "theorem2_terms",
]
