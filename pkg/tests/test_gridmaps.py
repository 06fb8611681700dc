import json

import numpy as np
import pytest

from conflab import ConfigError, make_preset, phi, quadrature_grid
from conflab.calculus import div_sigma, frame_differential
from conflab.geometry import random_points
from conflab.gridmaps import (
    fourier_frequencies,
    grid_map,
    load_map_grid,
    perturbed_sample,
    sample_map,
    save_map_grid,
    winding_of,
)


def test_fourier_frequencies_counts():
    assert fourier_frequencies(2, 1) == [(1, 0), (0, 1)]
    # |q|_1 <= 2 in two variables: 12 nonzero vectors, 6 up to sign
    assert len(fourier_frequencies(2, 2)) == 6
    assert all(q[next(i for i, c in enumerate(q) if c)] > 0 for q in fourier_frequencies(3, 2))


def test_sampled_band_limited_map_is_exact(rng):
    f = make_preset("torus_shear", a=0.3)
    g = sample_map(f, 8)
    xs = random_points(f.domain, 10, rng)
    assert np.allclose(g(xs), f(xs), atol=1e-13)
    assert np.allclose(frame_differential(g, xs), frame_differential(f, xs), atol=1e-12)
    quad = quadrature_grid(f.domain, 16)
    assert phi(g, quad) == pytest.approx(phi(f, quad), rel=1e-12)


def test_winding_of_scaling_map():
    f = make_preset("torus_scaling", ell=2, k=2.0)
    assert np.allclose(winding_of(f), np.diag([2.0, 1.0]))
    g = sample_map(f, 4)
    assert np.abs(div_sigma(g, g.grid.grid.nodes)).max() < 1e-12


def test_sphere_target_grid_map_stays_on_sphere(rng):
    f = make_preset("torus_to_sphere", a=0.5)
    g = sample_map(f, 12)
    y = g(random_points(f.domain, 20, rng))
    assert np.abs(np.linalg.norm(y, axis=-1) - 1).max() < 1e-13
    with pytest.raises(ValueError):
        grid_map(f.codomain, f.codomain, np.zeros((16, 3)), (4, 4))


def test_perturbation_is_seeded_and_scaled():
    f = make_preset("torus_scaling", ell=2, k=1.2)
    a = perturbed_sample(f, 8, 0.5, seed=3)
    b = perturbed_sample(f, 8, 0.5, seed=3)
    c = perturbed_sample(f, 8, 0.5, seed=4)
    assert np.array_equal(a.grid.node_values, b.grid.node_values)
    assert not np.array_equal(a.grid.node_values, c.grid.node_values)
    base = sample_map(f, 8).grid.node_values
    disp = a.grid.node_values - base
    assert np.sqrt(np.mean(np.sum(disp**2, axis=-1))) == pytest.approx(0.5)


def test_save_load_round_trip(tmp_path):
    f = perturbed_sample(make_preset("torus_to_sphere", a=0.5), (8, 6), 0.1, seed=1)
    path = tmp_path / "map.json"
    save_map_grid(path, f)
    g = load_map_grid(path)
    assert g.grid.resolution == (8, 6)
    assert np.array_equal(np.asarray(g.grid.node_values), np.asarray(f.grid.node_values))
    x = np.array([[0.3, 0.9]])
    assert np.allclose(g(x), f(x), atol=1e-15)


def test_load_errors(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{\n  \"format\": ")
    with pytest.raises(ConfigError, match="line 2"):
        load_map_grid(bad)
    bad.write_text(json.dumps({"format": "something else"}))
    with pytest.raises(ConfigError):
        load_map_grid(bad)
    bad.write_text(
        json.dumps(
            {
                "format": "conflab-map-grid",
                "domain": {"kind": "circles", "radii": [1, 1]},
                "codomain": {"kind": "circles", "radii": [1, 1]},
                "resolution": [4, 4],
                "values": [[0, 0]] * 3,
            }
        )
    )
    with pytest.raises(ConfigError, match="shape"):
        load_map_grid(bad)
    with pytest.raises(ValueError):
        save_map_grid(tmp_path / "x.json", make_preset("torus_shear"))
