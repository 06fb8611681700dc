import math

import jax.numpy as jnp
import numpy as np
import pytest

from conflab import DegenerateBasis, StepFailure, make_preset, phi, quadrature_grid
from conflab.calculus import frame_differential
from conflab.geometry import random_points
from conflab.gridmaps import perturbed_sample, sample_map
from conflab.presets import variation_basis
from conflab.variation import (
    FlowConfig,
    VariationField,
    bilinear_matrices,
    deformed_map,
    field_covariant_derivative,
    first_variation,
    first_variation_fd,
    gradient_flow,
    second_variation,
    second_variation_fd,
    stability_spectrum,
    zero_field,
)


def ambient_field(f, vec):
    v = jnp.asarray(vec, dtype=float)
    return VariationField(f, lambda x: v, name="const")


def test_parallel_field_on_torus_target(rng):
    f = make_preset("torus_shear", a=0.3)
    X = ambient_field(f, [0.4, -1.0])
    xs = random_points(f.domain, 5, rng)
    assert np.abs(field_covariant_derivative(X, xs)).max() < 1e-14


def test_projected_constant_field_on_sphere_target(rng):
    f = make_preset("latitude_wobble", a=0.3)
    E = np.array([0.3, -0.2, 0.9])
    X = ambient_field(f, E)
    for x in random_points(f.domain, 5, rng):
        nu = f(x)
        expected = -(E @ nu) * frame_differential(f, x)
        assert np.allclose(field_covariant_derivative(X, x), expected, atol=1e-12)


def test_zero_field_and_deformation():
    f = make_preset("torus_to_sphere")
    g = quadrature_grid(f.domain, 8)
    Z = zero_field(f)
    assert first_variation(f, Z, g) == 0.0
    assert second_variation(f, Z, Z, g).total == 0.0
    same = deformed_map(f, Z, 0.7)
    assert np.allclose(same(g.nodes), f(g.nodes), atol=1e-15)


@pytest.mark.parametrize("name,params", [("torus_scaling", {"ell": 2, "k": 2.0}), ("identity", {"dim": 2})])
def test_first_variation_vanishes_at_stationary_maps(name, params, rng):
    f = make_preset(name, params)
    g = quadrature_grid(f.domain, 8)
    for X in variation_basis(f, 1, g)[:6]:
        assert abs(first_variation(f, X, g)) < 1e-10


@pytest.mark.parametrize(
    "name,params,res",
    [
        ("torus_shear", {"a": 0.3}, 16),
        ("torus_to_sphere", {"a": 0.5}, 16),
        ("latitude_wobble", {"a": 0.3}, 16),
        ("azimuth_doubling", {}, 12),
    ],
)
def test_first_variation_matches_differences(name, params, res):
    f = make_preset(name, params)
    g = quadrature_grid(f.domain, res)
    for X in variation_basis(f, 1, g)[1:4]:
        exact = first_variation(f, X, g)
        fd = first_variation_fd(f, X, g)
        assert abs(exact - fd) <= 1e-4 * max(1.0, abs(exact))


def test_second_variation_is_symmetric_and_matches_curvature_form():
    f = make_preset("torus_to_sphere", a=0.5)
    g = quadrature_grid(f.domain, 12)
    basis = variation_basis(f, 1, g)
    X, Y = basis[1], basis[4]
    a, b = second_variation(f, X, Y, g), second_variation(f, Y, X, g)
    assert a.total == pytest.approx(b.total, abs=1e-10)
    assert a.curvature == pytest.approx(a.curvature_via_sigma, abs=1e-12)
    parts = a.as_dict()
    assert math.fsum(parts[k] for k in ("t_coupling", "gram", "mixed", "trace_penalty", "curvature")) == pytest.approx(
        a.total, abs=1e-12
    )


def test_flat_target_has_no_curvature_term():
    f = make_preset("torus_shear")
    g = quadrature_grid(f.domain, 8)
    X = variation_basis(f, 1, g)[2]
    assert second_variation(f, X, X, g).curvature == 0.0


@pytest.mark.parametrize(
    "name,params,res",
    [
        ("torus_scaling", {"ell": 3, "k": 0.97}, 6),
        ("identity", {"dim": 2}, 12),
        ("torus_to_sphere", {"a": 0.5}, 12),
    ],
)
def test_second_variation_matches_differences(name, params, res):
    f = make_preset(name, params)
    g = quadrature_grid(f.domain, res)
    for X in variation_basis(f, 1, g)[1:3]:
        exact = second_variation(f, X, X, g).total
        fd = second_variation_fd(f, X, g)
        assert abs(exact - fd) <= 1e-3 * max(1.0, abs(exact))


def test_bilinear_matrices_agree_with_pairwise_form():
    f = make_preset("latitude_wobble", a=0.3)
    g = quadrature_grid(f.domain, 10)
    basis = variation_basis(f, 1, g)[:4]
    L, G = bilinear_matrices(f, basis, g)
    for a in range(4):
        for b in range(4):
            assert L[a, b] == pytest.approx(second_variation(f, basis[a], basis[b], g).total, abs=1e-10)
    assert np.allclose(G, G.T)


def test_isometry_is_weakly_stable():
    f = make_preset("torus_scaling", ell=2, k=1.0)
    g = quadrature_grid(f.domain, 8)
    rep = stability_spectrum(f, variation_basis(f, 1, g), g)
    assert rep.basis_size == 10
    assert rep.min_eigenvalue >= -1e-8
    assert list(rep.eigenvalues) == sorted(rep.eigenvalues)
    assert rep.asymmetry < 1e-10


def test_parallel_field_is_a_zero_mode():
    f = make_preset("torus_scaling", ell=2, k=2.0)
    g = quadrature_grid(f.domain, 8)
    rep = stability_spectrum(f, [ambient_field(f, [1.0, 0.0])], g)
    assert abs(rep.min_eigenvalue) < 1e-12


def test_degenerate_basis_is_rejected():
    f = make_preset("torus_shear")
    g = quadrature_grid(f.domain, 8)
    X = ambient_field(f, [1.0, 0.0])
    with pytest.raises(DegenerateBasis):
        stability_spectrum(f, [X, X.scaled(2.0)], g)
    with pytest.raises(DegenerateBasis):
        stability_spectrum(f, [], g)


def test_flow_stops_immediately_at_a_conformal_map():
    f = sample_map(make_preset("torus_scaling", ell=2, k=1.0), 4)
    out = gradient_flow(f, steps=5)
    assert out.effective_steps == 0
    assert out.phi == [pytest.approx(0.0, abs=1e-20)]


def test_flow_backtracks_and_never_increases():
    f = perturbed_sample(make_preset("torus_scaling", ell=2, k=1.2), 6, 0.3, seed=2)
    out = gradient_flow(f, FlowConfig(tau=5.0, steps=8, snapshot_every=4))
    assert all(b <= a for a, b in zip(out.phi, out.phi[1:]))
    assert out.tau[0] < 5.0
    assert [s for s, _ in out.snapshots] == [4, 8]
    assert len(out.rows()) == len(out.phi)
    assert out.final_map.grid is not None


def test_flow_step_failure_and_argument_errors():
    f = perturbed_sample(make_preset("torus_scaling", ell=2, k=1.2), 6, 0.3, seed=2)
    with pytest.raises(StepFailure):
        gradient_flow(f, tau=5.0, steps=2, min_tau=1.0)
    with pytest.raises(ValueError):
        gradient_flow(f, tau=0.0)
    with pytest.raises(ValueError):
        gradient_flow(make_preset("torus_shear"))


def test_flow_on_sphere_target_lowers_phi():
    f = sample_map(make_preset("torus_to_sphere", a=0.5), 8)
    out = gradient_flow(f, tau=0.05, steps=10)
    assert out.phi[-1] < out.phi[0]
    q = quadrature_grid(f.domain, 16)
    assert phi(out.final_map, q) == pytest.approx(out.phi[-1], rel=1e-10)
