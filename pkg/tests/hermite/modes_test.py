import math

import numpy as np
import pytest

from mcf_modes.hermite.modes import ModeVector, apply_l


def test_zero_coefficients_are_dropped():
    v = ModeVector(2, {(0, 0): 1.0, (1, 0): 0.0, (0, 2): -2.0})
    assert len(v) == 2
    assert v[(1, 0)] == 0.0
    assert v.modes() == [(0, 0), (0, 2)]
    assert v.max_degree == 2
    assert ModeVector.zeros(2).max_degree == -1

    with pytest.raises(ValueError):
        ModeVector(1, {(0,): math.inf})


def test_arithmetic():
    u = ModeVector(1, {(0,): 1.0, (2,): 2.0})
    v = ModeVector(1, {(2,): -2.0, (4,): 0.5})
    s = u + v
    assert s.modes() == [(0,), (4,)]
    assert (u - u).max_abs() == 0.0
    assert (2.0 * u)[(2,)] == 4.0
    assert (-u)[(0,)] == -1.0
    assert u.norm() == pytest.approx(math.sqrt(5.0))

    with pytest.raises(ValueError):
        u + ModeVector.zeros(2)


def test_restrictions():
    u = ModeVector(1, {(0,): 1.0, (1,): 2.0, (2,): 3.0, (5,): 4.0})
    assert u.of_degree(1).modes() == [(1,)]
    assert u.restrict(max_degree=2).modes() == [(0,), (1,), (2,)]
    # eigenvalue of degree 5 is −3/2, not above −3/2
    assert u.above(-1.5).modes() == [(0,), (1,), (2,)]


def test_apply_l():
    u = ModeVector(2, {(0, 0): 1.0, (1, 0): 1.0, (1, 1): 1.0, (2, 2): 1.0})
    lu = apply_l(u)
    assert lu[(0, 0)] == 1.0
    assert lu[(1, 0)] == 0.5
    assert lu[(1, 1)] == 0.0
    assert lu[(2, 2)] == -1.0


def test_evaluation_and_derivatives():
    u = ModeVector(2, {(1, 0): 1.0, (0, 2): 2.0})
    points = np.array([[1.0, 2.0], [0.0, -1.0]])
    expected = points[:, 0] / math.sqrt(2.0) + 2.0 * (points[:, 1] ** 2 - 2.0) / (2.0 * math.sqrt(2.0))
    np.testing.assert_allclose(u(points), expected, atol=1e-14)

    grad = u.gradient(points)
    np.testing.assert_allclose(grad[:, 0], 1.0 / math.sqrt(2.0))
    np.testing.assert_allclose(grad[:, 1], 2.0 * points[:, 1] / math.sqrt(2.0))

    hess = u.hessian(points)
    np.testing.assert_allclose(hess[:, 1, 1], 2.0 / math.sqrt(2.0))
    np.testing.assert_allclose(hess[:, 0, 1], 0.0)
    assert hess.shape == (2, 2, 2)


def test_dict_form():
    u = ModeVector(2, {(2, 0): -0.05, (1, 1): 0.25})
    assert u.to_dict() == {"2,0": -0.05, "1,1": 0.25}
    assert ModeVector.from_dict(u.to_dict(), 2).allclose(u, atol=0.0)
