import numpy as np
import pytest

from manifold_repair.errors import InvalidInputError
from manifold_repair.synth import (KINDS, GeneratorSpec, add_uniform_noise, generate, hole_mask, punch_hole,
                                   surface_distance_oracle)
from manifold_repair.rmlop import HoleSpec


@pytest.mark.parametrize("kind", KINDS)
def test_clean_samples_lie_on_the_surface(kind):
    spec = GeneratorSpec(kind, 60, seed=2)
    x = generate(spec).coords
    d = surface_distance_oracle(kind, x, spec.params)
    assert d.max() < 1e-6


@pytest.mark.parametrize("kind", KINDS)
def test_deterministic(kind):
    a = generate(GeneratorSpec(kind, 30, seed=9)).coords
    b = generate(GeneratorSpec(kind, 30, seed=9)).coords
    assert np.array_equal(a, b)


def test_noise_bounds_and_oracle_offsets():
    spec = GeneratorSpec("circle", 50, seed=0)
    x = generate(spec)
    y = add_uniform_noise(x, 0.1, 1).coords
    assert np.abs(y - x.coords).max() <= 0.1
    d = surface_distance_oracle("circle", np.array([2.0, 0.0, 0.0]))
    assert d == pytest.approx(1.0)


def test_oracle_known_offsets():
    assert surface_distance_oracle("disk", np.array([[3.0, 4.0]]))[0] == pytest.approx(4.0)
    assert surface_distance_oracle("annulus", np.array([[0.0, 0.0]]))[0] == pytest.approx(0.5)
    assert surface_distance_oracle("plane_patch", np.array([[0.0, 0.0, 2.0]]))[0] == pytest.approx(2.0)


def test_hex_layout_is_quasi_uniform():
    from manifold_repair.metrics import quasi_uniformity
    x = generate(GeneratorSpec("disk", 500, seed=0, params={"layout": "hex"}))
    assert quasi_uniformity(x)[1] == pytest.approx(1.0, abs=1e-9)


def test_punch_hole():
    x = generate(GeneratorSpec("disk", 500, seed=0))
    h = HoleSpec([0.0, 0.0], 0.5)
    y = punch_hole(x, h)
    assert y.count == x.count - hole_mask(x, h).sum()
    assert np.linalg.norm(y.coords, axis=1).min() >= 0.5
    with pytest.raises(InvalidInputError):
        punch_hole(x, HoleSpec([0.0, 0.0], 10.0))


def test_spec_validation():
    with pytest.raises(InvalidInputError):
        GeneratorSpec("torus", 10)
    with pytest.raises(InvalidInputError):
        GeneratorSpec("circle", 10, params={"bogus": 1})
    with pytest.raises(InvalidInputError):
        GeneratorSpec("cylinder2d", 10, params={"n": 3})
    with pytest.raises(InvalidInputError):
        GeneratorSpec("circle", 0)
    truth = GeneratorSpec("cone", 5).ground_truth()
    assert truth["kind"] == "cone" and truth["params"]["n"] == 60
