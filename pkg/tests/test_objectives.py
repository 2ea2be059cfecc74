import numpy as np
import pytest

from tonewton.cubic_model import CubicModel, symmetrize_tensor
from tonewton.objectives import (
    HIMMELBLAU_MINIMA, REGISTRY, TABLE_OBJECTIVES, cubic_objective, finite_difference_objective,
    get_objective, quartic,
)

from fd import derivative_errors, rel_error


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_derivatives_match_finite_differences(name, rng):
    f = get_objective(name)
    (x0, x1), (y0, y1) = f.window
    for _ in range(10):
        x = np.array([rng.uniform(x0, x1), rng.uniform(y0, y1)])
        assert max(derivative_errors(f, x)) <= 1e-5


@pytest.mark.parametrize("name", TABLE_OBJECTIVES)
def test_catalogued_minima_are_minima(name):
    f = get_objective(name)
    assert f.minima
    for cp in f.minima:
        x = np.array(cp.point)
        assert np.linalg.norm(f.gradient(x)) <= 1e-8
        assert np.linalg.eigvalsh(f.hessian(x))[0] > 0


@pytest.mark.parametrize("name", TABLE_OBJECTIVES)
def test_designated_minimum_is_lowest(name):
    f = get_objective(name)
    star = f.global_minimum
    assert all(f.value(star) <= f.value(np.array(cp.point)) + 1e-9 for cp in f.minima)


def test_known_values():
    assert get_objective("beale").value(np.array([3.0, 0.5])) == pytest.approx(0.0, abs=1e-12)
    assert get_objective("bohachevsky").value(np.zeros(2)) == pytest.approx(0.0, abs=1e-12)
    assert get_objective("himmelblau").value(np.array([3.0, 2.0])) == 0.0
    mc = get_objective("mccormick")
    assert mc.value(mc.global_minimum) == pytest.approx(-1.9132229549810367, abs=1e-9)
    assert len(HIMMELBLAU_MINIMA) == 4


@pytest.mark.parametrize("name", sorted(REGISTRY))
def test_vectorized_evaluation_shapes(name, rng):
    f = get_objective(name)
    X = rng.uniform(-1, 1, size=(3, 4, 2))
    assert np.shape(f.value(X)) == (3, 4)
    assert f.gradient(X).shape == (3, 4, 2)
    assert f.hessian(X).shape == (3, 4, 2, 2)
    assert f.tensor(X).shape == (3, 4, 2, 2, 2)
    assert np.allclose(f.gradient(X)[1, 2], f.gradient(X[1, 2]))
    assert np.allclose(f.tensor(X)[2, 3], f.tensor(X[2, 3]))


def test_unknown_objective():
    with pytest.raises(KeyError, match="unknown objective"):
        get_objective("rosenbrock")


def test_lookup_is_case_insensitive():
    assert get_objective("Himmelblau").name == "himmelblau"


def test_quartic_minimizer_with_shift():
    f = quartic((1.0, -0.5))
    star = f.global_minimum
    assert np.linalg.norm(f.gradient(star)) <= 1e-14
    assert f.name == "quartic-shifted"
    assert np.array_equal(quartic().global_minimum, [0.0, 0.0])
    with pytest.raises(ValueError):
        quartic((1.0,))


def test_cubic_objective_derivatives(rng):
    m = CubicModel(symmetrize_tensor(rng.normal(size=(3, 3, 3))), np.eye(3), rng.normal(size=3), 1.0)
    f = cubic_objective(m)
    x = rng.normal(size=3)
    assert max(derivative_errors(f, x)) <= 1e-6
    assert np.array_equal(f.tensor(x), m.H)


def test_finite_difference_objective_tracks_analytic(rng):
    him = get_objective("himmelblau")
    fd = finite_difference_objective(lambda x: him.value(x), 2)
    x = rng.uniform(-4, 4, 2)
    assert rel_error(fd.gradient(x), him.gradient(x)) <= 1e-7
    assert rel_error(fd.hessian(x), him.hessian(x)) <= 1e-5
    assert rel_error(fd.tensor(x), him.tensor(x)) <= 1e-4
    with pytest.raises(ValueError):
        fd.gradient(np.zeros(3))
