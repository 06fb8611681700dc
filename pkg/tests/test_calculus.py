import math

import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conflab import (
    ChartSingularity,
    NonFiniteDerivative,
    SmoothMap,
    circle_product,
    conformality_state,
    div_sigma,
    jet,
    make_preset,
    phi,
    quadrature_grid,
    sphere,
)
from conflab.calculus import (
    frame_differential,
    hessian,
    lemma1_report,
    lemma2_residuals,
    residual_norms,
    state_at,
    t_norm_sq,
    third_derivative,
)
from conflab.geometry import _scales, _volume_density, orthonormal_frame, random_points, riemann_apply
from conflab.presets import PRESETS

ALL_PRESETS = sorted(PRESETS)


def frame_components(f, x, vec):
    """Codomain vector in the codomain frame at f(x)."""
    from conflab.geometry import chart_from_value

    y = f(x)
    if not f.codomain.is_sphere:
        return vec
    return orthonormal_frame(f.codomain, chart_from_value(f.codomain, y)).value_frame.T @ vec


def test_identity_sphere_jet():
    f = make_preset("identity", dim=2)
    x = np.array([1.1, 2.3])
    j = jet(f, x)
    E = orthonormal_frame(f.domain, x).value_frame
    assert np.allclose(E.T @ j.df, np.eye(2), atol=1e-12)
    assert np.abs(j.hess).max() < 1e-12


def test_torus_scaling_jet_and_state():
    f = make_preset("torus_scaling", ell=2, k=2.0)
    j = jet(f, [0.3, 4.0])
    assert np.allclose(j.df, np.diag([2.0, 1.0]), atol=1e-15)
    st_ = conformality_state(j, 2)
    assert np.allclose(st_.T, np.diag([1.5, -1.5]), atol=1e-12)
    assert np.allclose(st_.sigma, np.diag([3.0, -1.5]), atol=1e-12)
    assert st_.T_norm_sq == pytest.approx(4.5)
    # |f*h|^2 - |df|^4 / 2 = 17 - 12.5
    assert np.sum(st_.pullback**2) - st_.energy_density**2 / 2 == pytest.approx(4.5)


def test_constant_map_is_flat():
    f = make_preset("constant")
    j = jet(f, [0.7, 0.1])
    assert np.all(j.df == 0) and np.all(j.hess == 0)
    res = lemma1_report(j, 2)
    assert res.max() == 0.0


def test_torus_scaling_three_factors_norm():
    f = make_preset("torus_scaling", ell=3, k=2.0)
    j = jet(f, [0.1, 0.2, 0.3])
    st_ = conformality_state(j, 3)
    assert st_.T_norm_sq == pytest.approx(6.0, abs=1e-13)
    assert abs(6 - (np.sum(st_.pullback**2) - st_.energy_density**2 / 3)) < 1e-12


def test_phi_closed_forms():
    torus = make_preset("torus_scaling", ell=2, k=2.0)
    assert phi(torus, quadrature_grid(torus.domain, 8)) == pytest.approx(4.5 * (2 * math.pi) ** 2, rel=1e-12)
    az = make_preset("azimuth_doubling")
    assert phi(az, quadrature_grid(az.domain, 16)) == pytest.approx(4.5 * 4 * math.pi, rel=1e-12)
    ident = make_preset("identity", dim=2)
    assert phi(ident, quadrature_grid(ident.domain, 12)) < 1e-12


def test_phi_rejects_foreign_grid():
    f = make_preset("identity", dim=2)
    with pytest.raises(ValueError):
        phi(f, quadrature_grid(sphere(3), 6))


def test_conformality_diagnostic():
    for name, params in [("identity", {"dim": 2}), ("stereographic_power", {"d": 2})]:
        f = make_preset(name, params)
        g = quadrature_grid(f.domain, 16)
        assert np.sqrt(t_norm_sq(f, g.nodes)).max() < 1e-8
    for name, params in [("torus_scaling", {"ell": 2, "k": 2.0}), ("azimuth_doubling", {})]:
        f = make_preset(name, params)
        g = quadrature_grid(f.domain, 12)
        assert np.sqrt(t_norm_sq(f, g.nodes)).min() > 0.1


@pytest.mark.parametrize("name", ALL_PRESETS)
def test_lemma1_at_random_points(name, rng):
    f = make_preset(name)
    xs = random_points(f.domain, 25, rng)
    assert lemma1_report(jet(f, xs), f.domain.dim).max() < 1e-10


@pytest.mark.parametrize("name", ALL_PRESETS)
def test_lemma2_at_random_points(name, rng):
    f = make_preset(name)
    xs = random_points(f.domain, 10, rng)
    J = jet(f, xs)
    for n in range(len(xs)):
        Z = rng.standard_normal(f.codomain.value_dim)
        W = rng.standard_normal(f.domain.dim)
        a, b = lemma2_residuals(type(J)(J.value[n], J.df[n], J.hess[n]), f.domain.dim, Z, W)
        assert a < 1e-12 and b < 1e-12


@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 1000))
def test_sigma_is_linear(a, b, seed):
    f = make_preset("latitude_wobble", a=0.4)
    x = random_points(f.domain, 1, np.random.default_rng(seed))[0]
    sig = state_at(f, x).sigma  # rows sigma(e_i)
    X, Y = np.random.default_rng(seed + 1).standard_normal((2, 2))
    assert np.allclose((a * X + b * Y) @ sig, a * (X @ sig) + b * (Y @ sig), atol=1e-12)


@pytest.mark.parametrize("name", ["latitude_wobble", "torus_to_sphere", "torus_shear", "stereographic_power"])
def test_hessian_matches_differences_of_df(name, rng):
    f = make_preset(name)
    h = 1e-5
    x = random_points(f.domain, 1, rng)[0]
    fr = orthonormal_frame(f.domain, x)
    s = 1.0 / np.diag(fr.frame)
    F = frame_differential(f, x)
    H = hessian(f, x)
    y = f(x)
    assert np.allclose(H, np.swapaxes(H, 1, 2), atol=1e-10)
    for i in range(f.domain.dim):
        step = np.zeros(f.domain.dim)
        step[i] = h
        dF = (frame_differential(f, x + step) - frame_differential(f, x - step)) / (2 * h * s[i])
        if f.codomain.is_sphere:
            dF = dF - np.outer(y, y @ dF)
        # (nabla df)(e_i, e_j) = nabla_{e_i}(df e_j) - df(nabla_{e_i} e_j)
        expected = dF - F @ fr.connection[i].T
        assert np.allclose(H[:, i, :], expected, atol=1e-7)


@pytest.mark.parametrize("name", ["latitude_wobble", "torus_to_sphere", "stereographic_power"])
def test_third_derivative_ricci_identity(name, rng):
    f = make_preset(name)
    x = random_points(f.domain, 1, rng)[0]
    D = third_derivative(f, x)
    F = frame_differential(f, x)
    m = f.domain.dim
    assert np.allclose(D, np.swapaxes(D, 2, 3), atol=1e-9)
    E = np.eye(m)
    for a in range(m):
        for b in range(m):
            for c in range(m):
                lhs = D[:, a, b, c] - D[:, b, a, c]
                rhs = riemann_apply(f.codomain, F[:, a], F[:, b], F[:, c]) - F @ riemann_apply(f.domain, E[a], E[b], E[c])
                assert np.allclose(lhs, rhs, atol=1e-9)


def test_div_sigma_stationary_examples():
    for ell, k in [(2, 2.0), (3, 0.97), (4, 1.5)]:
        f = make_preset("torus_scaling", ell=ell, k=k)
        sup, l2 = residual_norms(f, quadrature_grid(f.domain, 4))
        assert sup < 1e-8 and l2 < 1e-8
    ident = make_preset("identity", dim=2)
    assert np.abs(div_sigma(ident, [0.4, 0.4])).max() < 1e-12


@pytest.mark.parametrize("name", ["azimuth_doubling", "latitude_wobble", "torus_to_sphere"])
def test_div_sigma_matches_chart_differences(name, rng):
    """Divergence of sigma from central differences of sigma itself."""
    f = make_preset(name)
    h = 1e-4
    M = f.domain
    x = random_points(M, 1, rng)[0]

    def flux(z):
        s = np.asarray(_scales(M, jnp.asarray(z)))
        return float(_volume_density(M, jnp.asarray(z))) * state_at(f, z).sigma / s[:, None]

    total = 0.0
    for i in range(M.dim):
        step = np.zeros(M.dim)
        step[i] = h
        total = total + (flux(x + step)[i] - flux(x - step)[i]) / (2 * h)
    raw = total / float(_volume_density(M, jnp.asarray(x)))
    if f.codomain.is_sphere:
        y = f(x)
        raw = raw - y * (y @ raw)
    assert np.allclose(div_sigma(f, x), raw, atol=1e-6)


def test_non_finite_derivative_is_reported():
    T = circle_product(1.0, 1.0)
    f = SmoothMap(T, T, lambda x: jnp.stack([jnp.sqrt(jnp.abs(x[0] - 1.0)), x[1]]), name="cusp")
    with pytest.raises(NonFiniteDerivative):
        jet(f, [1.0, 0.5])


def test_chart_singularity_propagates():
    f = make_preset("identity", dim=2)
    with pytest.raises(ChartSingularity):
        jet(f, [0.0, 0.3])


def test_codomain_values_are_on_the_sphere(rng):
    for name in ["latitude_wobble", "stereographic_power", "torus_to_sphere", "azimuth_doubling"]:
        f = make_preset(name)
        y = f(random_points(f.domain, 20, rng))
        assert np.abs(np.linalg.norm(y, axis=-1) - 1).max() < 1e-10
