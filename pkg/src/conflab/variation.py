"""First and second variation of the conformality energy.

A variation field ``X`` along ``f`` generates the geodesic deformation
``f_t(x) = exp_{f(x)}(t X(x))``.  The formula side evaluates

* the first variation ``-4 int h(X, div sigma_f)``, and
* the symmetric bilinear form ``L(X, Y)`` made of five integrals (coupling
  through ``T_f``, Gram, mixed, trace penalty and curvature).  The Hessian
  term that accompanies it for general deformations is left out; along a
  geodesic family it vanishes, so ``L(X, X) = (1/4) d^2/dt^2 Phi(f_t)`` for
  every smooth ``f``.

The finite-difference oracles differentiate ``Phi(f_t)`` in ``t`` directly and
share no code with the formulas beyond ``phi`` itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial
from typing import Callable, Sequence

import jax
import jax.numpy as jnp
import numpy as np
import scipy.linalg

from .calculus import SmoothMap, _algebra, _batched, _df, _div_sigma, _t_norm_sq, div_sigma, phi
from .errors import DegenerateBasis, StepFailure
from .geometry import QuadratureGrid, _exp, _project, _riemann, _scales, quadrature_grid

GRAM_CONDITION_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class VariationField:
    """Section of the pulled-back tangent bundle along ``base_map``.

    ``rule`` maps a domain chart point to a vector in codomain value
    coordinates; for sphere targets the field is its tangential part at
    ``f(x)``, so any ambient-valued rule is acceptable.
    """

    base_map: SmoothMap
    rule: Callable
    name: str = "X"

    def values(self, xs) -> np.ndarray:
        return _batched(lambda f, x: _field(self, x), self.base_map, xs)

    def scaled(self, c: float) -> "VariationField":
        return VariationField(self.base_map, lambda x: c * self.rule(x), name=f"{c:g}*{self.name}")


def zero_field(f: SmoothMap) -> VariationField:
    A = f.codomain.value_dim
    return VariationField(f, lambda x: jnp.zeros(A, dtype=x.dtype) + 0.0 * jnp.sum(x), name="0")


def _field(X: VariationField, x):
    f = X.base_map
    return _project(f.codomain, f.rule(x), X.rule(x))


def _field_derivative(X: VariationField, x):
    """Columns ``nabla_{e_i} X`` in value coordinates, shape ``(A, m)``."""
    f = X.base_map
    D = jax.jacfwd(partial(_field, X))(x) / _scales(f.domain, x)
    return _project(f.codomain, f.rule(x), D)


def field_covariant_derivative(X: VariationField, x, i: int | None = None) -> np.ndarray:
    """``nabla_{e_i} X`` at ``x``; all ``m`` columns when ``i`` is None."""
    out = _batched(lambda f, z: _field_derivative(X, z), X.base_map, x)
    return out if i is None else out[..., i]


# ---------------------------------------------------------------------------
# first variation


def first_variation(f: SmoothMap, X: VariationField, grid: QuadratureGrid) -> float:
    _check(f, X)
    Xv = X.values(grid.nodes)
    d = div_sigma(f, grid.nodes)
    return -4.0 * grid.integrate(np.sum(Xv * d, axis=-1))


def deformed_map(f: SmoothMap, X: VariationField, t: float) -> SmoothMap:
    """The geodesic deformation ``x -> exp_{f(x)}(t X(x))``."""
    N = f.codomain

    def rule(x):
        return _exp(N, f.rule(x), t * _field(X, x))

    return SmoothMap(f.domain, N, rule, name=f"{f.name}+{t:g}{X.name}", params=f.params)


def first_variation_fd(f: SmoothMap, X: VariationField, grid: QuadratureGrid, step: float = 1e-5) -> float:
    """Central difference of ``Phi`` along the geodesic deformation."""
    if not step > 0:
        raise ValueError("step must be positive")
    _check(f, X)
    return (phi(deformed_map(f, X, step), grid) - phi(deformed_map(f, X, -step), grid)) / (2 * step)


# ---------------------------------------------------------------------------
# second variation


@dataclass(frozen=True)
class SecondVariationTerms:
    t_coupling: float
    gram: float
    mixed: float
    trace_penalty: float
    curvature: float
    total: float
    curvature_via_sigma: float = field(default=math.nan, compare=False)

    @classmethod
    def from_terms(cls, t, g, mx, tp, c, c_sigma=math.nan) -> "SecondVariationTerms":
        return cls(t, g, mx, tp, c, math.fsum([t, g, mx, tp, c]), c_sigma)

    def as_dict(self) -> dict:
        return {
            "t_coupling": self.t_coupling,
            "gram": self.gram,
            "mixed": self.mixed,
            "trace_penalty": self.trace_penalty,
            "curvature": self.curvature,
            "total": self.total,
        }


def _second_integrand(X: VariationField, Y: VariationField, x):
    f = X.base_map
    m = f.domain.dim
    F = _df(f, x)
    T, sigma = _algebra(F, m)[2:4]
    DX, DY = _field_derivative(X, x), _field_derivative(Y, x)
    Xv, Yv = _field(X, x), _field(Y, x)
    Ax, Ay = DX.T @ F, DY.T @ F  # Ax[i, j] = <nabla_i X, df e_j>
    coupling = jnp.einsum("ij,Ai,Aj->", T, DX, DY)
    gram = jnp.sum(Ax * Ay)
    mixed = jnp.sum(Ax * Ay.T)
    penalty = -2.0 / m * jnp.trace(Ax) * jnp.trace(Ay)
    k = f.codomain.curvature
    # R(X, df e_i) Y for every i, stacked along rows
    R = _riemann(k, jnp.broadcast_to(Xv, (m, Xv.shape[0])), F.T, jnp.broadcast_to(Yv, (m, Yv.shape[0])))
    curvature = jnp.einsum("ij,iA,Aj->", T, R, F)
    curvature_sigma = jnp.sum(R * sigma)
    return jnp.stack([coupling, gram, mixed, penalty, curvature, curvature_sigma])


def second_variation(f: SmoothMap, X: VariationField, Y: VariationField, grid: QuadratureGrid) -> SecondVariationTerms:
    """The five integrals of ``L(X, Y)``; ``curvature_via_sigma`` is the same
    curvature integral written as ``sum_i h(R(X, df e_i)Y, sigma_f(e_i))``."""
    _check(f, X)
    _check(f, Y)
    dens = _batched(lambda g, x: _second_integrand(X, Y, x), f, np.atleast_2d(grid.nodes))
    ints = [grid.integrate(dens[:, c]) for c in range(6)]
    return SecondVariationTerms.from_terms(*ints)


def second_variation_fd(f: SmoothMap, X: VariationField, grid: QuadratureGrid, step: float = 1e-3) -> float:
    """``(1/4) d^2/dt^2 Phi(f_t)`` at ``t = 0`` by the 5-point stencil."""
    if not step > 0:
        raise ValueError("step must be positive")
    _check(f, X)
    p = {s: phi(deformed_map(f, X, s * step), grid) for s in (-2, -1, 0, 1, 2)}
    d2 = (-p[2] + 16 * p[1] - 30 * p[0] + 16 * p[-1] - p[-2]) / (12 * step * step)
    return 0.25 * d2


def _check(f: SmoothMap, X: VariationField):
    if X.base_map is not f and (X.base_map.domain != f.domain or X.base_map.codomain != f.codomain):
        raise ValueError(f"field {X.name} lives along a different map")


# ---------------------------------------------------------------------------
# stability


@dataclass(frozen=True)
class StabilityReport:
    basis_size: int
    min_eigenvalue: float
    eigenvalues: tuple[float, ...]
    gram_condition: float
    asymmetry: float  # max |L(a, b) - L(b, a)| before symmetrising

    def as_dict(self) -> dict:
        return {
            "basis_size": self.basis_size,
            "min_eigenvalue": self.min_eigenvalue,
            "eigenvalues": list(self.eigenvalues),
            "gram_condition": self.gram_condition,
            "asymmetry": self.asymmetry,
        }


def _field_jets(X: VariationField, nodes):
    vals = _batched(lambda f, x: _field(X, x), X.base_map, nodes)
    ders = _batched(lambda f, x: _field_derivative(X, x), X.base_map, nodes)
    return vals, ders


def bilinear_matrices(f: SmoothMap, basis: Sequence[VariationField], grid: QuadratureGrid):
    """Matrices ``L[a, b] = L(B_a, B_b)`` and ``G[a, b] = int h(B_a, B_b)``."""
    nodes, w = np.atleast_2d(grid.nodes), grid.weights
    m = f.domain.dim
    F = _batched(_df, f, nodes)  # (N, A, m)
    T = np.asarray(_algebra(jnp.asarray(F), m)[2])
    tn2 = np.sum(T * T, axis=(-2, -1))
    jets = [_field_jets(B, nodes) for B in basis]
    V = np.stack([j[0] for j in jets])  # (B, N, A)
    D = np.stack([j[1] for j in jets])  # (B, N, A, m)
    Ax = np.einsum("bnAi,nAj->bnij", D, F)
    tr = np.einsum("bnii->bn", Ax)
    L = np.einsum("nij,bnAi,cnAj,n->bc", T, D, D, w)
    L += np.einsum("bnij,cnij,n->bc", Ax, Ax, w)
    L += np.einsum("bnij,cnji,n->bc", Ax, Ax, w)
    L -= 2.0 / m * np.einsum("bn,cn,n->bc", tr, tr, w)
    if f.codomain.curvature:
        u = np.einsum("bnA,nAi->bni", V, F)  # h(B, df e_i)
        L += f.codomain.curvature * (
            np.einsum("cni,nij,bnj,n->bc", u, T, u, w) - np.einsum("bnA,cnA,n->bc", V, V, w * tn2)
        )
    G = np.einsum("bnA,cnA,n->bc", V, V, w)
    return L, G


def stability_spectrum(f: SmoothMap, basis: Sequence[VariationField], grid: QuadratureGrid) -> StabilityReport:
    """Generalised eigenvalues of ``(L, G)`` on the span of ``basis``, ascending."""
    if len(basis) == 0:
        raise DegenerateBasis("empty basis")
    L, G = bilinear_matrices(f, basis, grid)
    cond = float(np.linalg.cond(G))
    if not cond < GRAM_CONDITION_LIMIT:
        raise DegenerateBasis(f"Gram matrix condition number {cond:.3g} exceeds {GRAM_CONDITION_LIMIT:g}")
    Q = 0.5 * (L + L.T)
    ev = scipy.linalg.eigh(Q, G, eigvals_only=True)
    return StabilityReport(
        basis_size=len(basis),
        min_eigenvalue=float(ev[0]),
        eigenvalues=tuple(float(e) for e in ev),
        gram_condition=cond,
        asymmetry=float(np.max(np.abs(L - L.T))),
    )


# ---------------------------------------------------------------------------
# gradient flow


@dataclass(frozen=True)
class FlowConfig:
    tau: float = 0.05
    steps: int = 200
    quad_factor: int = 2  # Phi is integrated on a grid this many times finer
    stop_residual: float = 1e-12
    min_tau: float = 1e-12
    snapshot_every: int = 0  # 0 keeps only the final map


@dataclass
class FlowResult:
    phi: list[float]
    tau: list[float]  # step size used for each accepted step
    residual: list[float]  # sup-norm of div sigma before each step
    final_map: SmoothMap
    snapshots: list[tuple[int, SmoothMap]]

    @property
    def effective_steps(self) -> int:
        return len(self.tau)

    def rows(self) -> list[dict]:
        out = []
        for k, p in enumerate(self.phi):
            out.append(
                {
                    "step": k,
                    "phi": p,
                    "tau": self.tau[k - 1] if k > 0 else 0.0,
                    "residual_sup": self.residual[k] if k < len(self.residual) else math.nan,
                }
            )
        return out


def _flow_evaluator(f0: SmoothMap, quad: QuadratureGrid):
    from .gridmaps import grid_map

    spec = f0.grid
    N = spec.codomain
    nodes = jnp.asarray(spec.grid.nodes)
    node_weight = jnp.asarray(spec.grid.weights)[:, None]
    qnodes, qweights = jnp.asarray(quad.nodes), jnp.asarray(quad.weights)

    def energy(vals):
        g = grid_map(spec.domain, N, vals, spec.resolution, spec.winding)
        tn2 = jax.vmap(partial(_t_norm_sq, g))(qnodes)
        return jnp.sum(qweights * tn2), tn2

    @jax.jit
    def evaluate(vals):
        (_, tn2), grad = jax.value_and_grad(energy, has_aux=True)(vals)
        # -grad / (4 w) is the band-limited projection of div sigma at the nodes
        direction = jax.vmap(lambda y, v: _project(N, y, v))(vals, -grad / (4.0 * node_weight))
        return tn2, direction

    @jax.jit
    def residual(vals):
        g = grid_map(spec.domain, N, vals, spec.resolution, spec.winding)
        return jax.vmap(partial(_div_sigma, g))(nodes)

    @jax.jit
    def advance(vals, direction, tau):
        return jax.vmap(lambda y, v: _exp(N, y, tau * v))(vals, direction)

    return evaluate, residual, advance


def _sup(v) -> float:
    return float(jnp.sqrt(jnp.max(jnp.sum(v * v, axis=-1))))


def gradient_flow(f0: SmoothMap, config: FlowConfig | None = None, **overrides) -> FlowResult:
    """Explicit descent ``y <- exp_y(tau X)`` on the node values of a grid map.

    ``X`` is ``div sigma_f`` projected onto the trigonometric interpolation
    space (exactly ``-1/(4 w)`` times the gradient of the quadrature energy
    with respect to the node values, ``w`` the node weight); it coincides
    with the nodal values of ``div sigma_f`` whenever those are band-limited.
    A trial step that raises ``Phi`` is retried with half the step size and
    the reduced step size is kept, so the recorded ``Phi`` never increases.
    ``residual`` records the sup-norm of the nodal ``div sigma_f``.
    """
    from .gridmaps import grid_map

    cfg = config or FlowConfig()
    if overrides:
        cfg = FlowConfig(**{**cfg.__dict__, **overrides})
    if f0.grid is None:
        raise ValueError("gradient_flow needs a grid-rule map (see gridmaps.sample_map)")
    if not cfg.tau > 0:
        raise ValueError("tau must be positive")
    spec = f0.grid
    quad = quadrature_grid(spec.domain, tuple(cfg.quad_factor * r for r in spec.resolution))
    evaluate, residual, advance = _flow_evaluator(f0, quad)

    def energy(tn2):
        return quad.integrate(np.asarray(tn2))

    vals = jnp.asarray(spec.node_values)
    tn2, direction = evaluate(vals)
    current = energy(tn2)
    phis, taus, residuals, snaps = [current], [], [], []
    tau = float(cfg.tau)

    def as_map(v, label):
        return grid_map(spec.domain, spec.codomain, np.asarray(v), spec.resolution, spec.winding, name=label)

    for step in range(cfg.steps):
        residuals.append(_sup(residual(vals)))
        size = _sup(direction)
        if not math.isfinite(size):
            raise StepFailure("non-finite descent direction")
        if size < cfg.stop_residual:
            break
        while True:
            trial = advance(vals, direction, tau)
            tn2_t, dir_t = evaluate(trial)
            value = energy(tn2_t)
            if math.isfinite(value) and value <= current:
                break
            tau *= 0.5
            if tau < cfg.min_tau:
                raise StepFailure(f"backtracking drove tau below {cfg.min_tau:g} at step {step}")
        vals, direction, current = trial, dir_t, value
        phis.append(current)
        taus.append(tau)
        if cfg.snapshot_every and (step + 1) % cfg.snapshot_every == 0:
            snaps.append((step + 1, as_map(vals, f"{f0.name}@{step + 1}")))
    else:
        residuals.append(_sup(residual(vals)))
    final = as_map(vals, f"{f0.name}@final")
    return FlowResult(phi=phis, tau=taus, residual=residuals, final_map=final, snapshots=snaps)


__all__ = [
    "FlowConfig",
    "FlowResult",
    "SecondVariationTerms",
    "StabilityReport",
    "VariationField",
    "bilinear_matrices",
    "deformed_map",
    "field_covariant_derivative",
    "first_variation",
    "first_variation_fd",
    "gradient_flow",
    "second_variation",
    "second_variation_fd",
    "stability_spectrum",
    "zero_field",
]
