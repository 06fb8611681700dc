import jax.numpy as jnp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conflab import NotASphere, circle_product, make_preset, phi, quadrature_grid, sphere
from conflab.geometry import random_points
from conflab.sphere_identities import (
    LEMMA3_TERMS,
    differential_fields,
    domain_field_derivative_fd,
    domain_field_derivative_rule,
    form_sum,
    gamma_div_identity,
    lemma3_terms,
    lemma4_check,
    lemma5_residual,
    projected_fields,
    pulled_back_derivative_check,
    theorem1_terms,
    theorem2_terms,
)


def random_rotation(n, rng):
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    return Q * np.sign(np.diag(R))


@pytest.mark.parametrize("n", [1, 2, 3, 5])
def test_field_family_invariants(n, rng):
    fam = projected_fields(sphere(n))
    xs = random_points(sphere(n), 20, rng)
    inv = fam.invariants(xs)
    assert max(inv.values()) < 1e-12
    assert lemma5_residual(n, xs) < 1e-12


def test_field_near_the_axis_pole_is_small():
    fam = projected_fields(sphere(2))
    Z = fam.fields([1e-4, 0.3])
    assert np.linalg.norm(Z[2]) < 2e-4
    assert fam.phi([1e-4, 0.3])[2] == pytest.approx(1.0)


def test_frame_components_only_for_domain_families():
    f = make_preset("torus_to_sphere")
    with pytest.raises(ValueError):
        projected_fields(f.codomain, f).frame_components([0.1, 0.2])
    with pytest.raises(ValueError):
        projected_fields(sphere(2)).pulled_back(0)
    with pytest.raises(NotASphere):
        projected_fields(circle_product(1.0, 1.0))
    with pytest.raises(ValueError):
        projected_fields(sphere(3), f)


@given(st.integers(2, 4), st.integers(0, 10_000))
def test_domain_field_derivative_rule(m, seed):
    rng = np.random.default_rng(seed)
    x = random_points(sphere(m), 1, rng)[0]
    i, k = int(rng.integers(m)), int(rng.integers(m + 1))
    rule = domain_field_derivative_rule(m, x, i, k)
    fd = domain_field_derivative_fd(m, x, i, k)
    assert np.allclose(rule, fd, atol=1e-8)


def test_domain_field_derivative_with_unit_coefficient():
    # at the point where phi_k = 1 the derivative is -e_i itself
    x = np.array([0.5 * np.pi, 0.0])  # the ambient point E_1 on S^2
    fam = projected_fields(sphere(2))
    assert fam.phi(x)[0] == pytest.approx(1.0)
    from conflab.geometry import orthonormal_frame

    e = orthonormal_frame(sphere(2), x).value_frame
    for i in range(2):
        assert np.allclose(domain_field_derivative_rule(2, x, i, 0), -e[:, i], atol=1e-15)


@pytest.mark.parametrize("name", ["torus_to_sphere", "latitude_wobble", "stereographic_power"])
def test_pulled_back_field_derivative(name, rng):
    f = make_preset(name)
    for x in random_points(f.domain, 3, rng):
        for k in range(3):
            assert pulled_back_derivative_check(f, x, k) < 1e-8


def test_projected_operator_identities(rng):
    for m in (2, 3):
        for x in random_points(sphere(m), 3, rng):
            one = lemma4_check(m, lambda y: 1.0 + 0.0 * y[0], x)
            assert abs(one.operator) < 1e-12 and abs(one.laplacian) < 1e-12
            # the height function is an eigenfunction: Delta y_{m+1} = -m y_{m+1}
            h = lemma4_check(m, lambda y: y[-1], x)
            assert h.a < 1e-10 and h.b < 1e-12
            assert h.laplacian == pytest.approx(-m * np.cos(x[0]), abs=1e-10)
    f = make_preset("latitude_wobble")
    r = lemma4_check(2, lambda y: y[0] * y[1] ** 2 + jnp.exp(y[2]), [1.0, 2.0], f)
    assert r.a < 1e-10 and r.b < 1e-12 and r.c < 1e-10
    with pytest.raises(ValueError):
        lemma4_check(3, lambda y: y[0], [1.0, 1.0, 1.0], f)


@pytest.mark.parametrize(
    "name,params", [("identity", {"dim": 2}), ("latitude_wobble", {"a": 0.3}), ("stereographic_power", {"d": 2}),
                    ("azimuth_doubling", {}), ("identity", {"dim": 3})]
)
def test_hessian_of_t_norm_identity_on_spheres(name, params, rng):
    f = make_preset(name, params)
    for x in random_points(f.domain, 4, rng):
        for k in range(f.domain.dim + 1):
            rep = lemma3_terms(f, x, k)
            assert set(rep.terms) == set(LEMMA3_TERMS)
            assert rep.residual <= 1e-8 * (1 + abs(rep.lhs))


def test_hessian_of_t_norm_identity_with_a_flat_domain(rng):
    f = make_preset("torus_to_sphere", a=0.5)
    for x in random_points(f.domain, 4, rng):
        rep = lemma3_terms(f, x, lambda z: jnp.array([0.6, -0.8]) + 0.0 * z[0])
        assert rep.terms["domain_curvature"] == 0.0
        assert rep.residual < 1e-10
    with pytest.raises(NotASphere):
        lemma3_terms(f, [0.1, 0.2], 0)


def test_decomposition_for_azimuth_doubling():
    f = make_preset("azimuth_doubling")
    g = quadrature_grid(f.domain, 16)
    t = theorem1_terms(f, g)
    P = phi(f, g)
    assert t.phi_value == pytest.approx(P, rel=1e-13)
    assert abs(t.I) < 1e-10
    assert t.III == pytest.approx(-(2 - 1) * P, rel=1e-10)
    assert abs(t.IV) < 1e-10
    assert t.V == pytest.approx(3 * P, rel=1e-10)
    # not a critical point: div sigma is nonzero away from the poles
    assert not t.stationary and not t.contradiction
    assert form_sum(f, differential_fields(f), g) == pytest.approx(t.total, rel=1e-10)


def test_decomposition_for_a_non_stationary_map():
    f = make_preset("latitude_wobble", a=0.3)
    g = quadrature_grid(f.domain, 16)
    t = theorem1_terms(f, g)
    assert not t.stationary
    assert abs(t.I) < 1e-9 * t.phi_value
    assert t.III == pytest.approx(-t.phi_value, rel=1e-9)
    assert t.V == pytest.approx(3 * t.phi_value, rel=1e-9)
    # the pointwise vanishing of IV holds for every map, stationary or not
    assert abs(t.IV) < 1e-9 * t.phi_value
    assert abs(t.II) > 1e-3 * t.phi_value
    assert form_sum(f, differential_fields(f), g) == pytest.approx(t.total, rel=1e-9)


def test_decomposition_for_a_stationary_map():
    f = make_preset("identity", dim=3)
    t = theorem1_terms(f, quadrature_grid(f.domain, 4))
    assert t.stationary and not t.contradiction
    assert max(abs(t.I), abs(t.II), abs(t.III), abs(t.IV), abs(t.V), abs(t.total)) < 1e-10
    assert t.total == pytest.approx(t.stationary_total, abs=1e-10)


def test_decomposition_rejects_bad_input():
    with pytest.raises(NotASphere):
        theorem1_terms(make_preset("torus_shear"), quadrature_grid(circle_product(1.0, 1.0), 4))
    f = make_preset("identity", dim=2)
    with pytest.raises(ValueError):
        theorem1_terms(f, quadrature_grid(sphere(3), 4))
    with pytest.raises(ValueError):
        theorem1_terms(make_preset("identity", dim=1), quadrature_grid(sphere(1), 8))


@pytest.mark.parametrize("name,res", [("azimuth_doubling", 16), ("latitude_wobble", 16), ("stereographic_power", 24)])
def test_integrated_divergence_identity(name, res):
    f = make_preset(name)
    g = quadrature_grid(f.domain, res)
    for k in range(3):
        r = gamma_div_identity(f, k, g)
        assert r.residual <= 1e-8 * (1 + abs(r.lhs))
    with pytest.raises(IndexError):
        gamma_div_identity(f, 3, g)


@pytest.mark.parametrize("name,res", [("azimuth_doubling", 16), ("torus_to_sphere", 16), ("latitude_wobble", 16)])
def test_target_decomposition(name, res, rng):
    f = make_preset(name)
    g = quadrature_grid(f.domain, res)
    t = theorem2_terms(f, g)
    assert t.term1 == pytest.approx(3 * t.phi_value, rel=1e-12)
    assert t.term2 == pytest.approx(-2 * t.phi_value, rel=1e-12)
    assert t.term3 == pytest.approx(t.phi_value, rel=1e-12)
    assert t.ratio == pytest.approx(2.0, rel=1e-12)
    fam = projected_fields(f.codomain, f)
    assert form_sum(f, [fam.pulled_back(k) for k in range(3)], g) == pytest.approx(t.total, rel=1e-10)
    rotated = theorem2_terms(f, g, ambient_frame=random_rotation(3, rng))
    assert rotated.total == pytest.approx(t.total, rel=1e-12)


def test_target_decomposition_requires_sphere_target():
    f = make_preset("torus_shear")
    with pytest.raises(NotASphere):
        theorem2_terms(f, quadrature_grid(f.domain, 4))
