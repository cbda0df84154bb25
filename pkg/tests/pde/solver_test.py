import math

import numpy as np
import pytest

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.pde.grid import RadialGraphState, SolverConfig
from mcf_modes.pde.seed import seed_state
from mcf_modes.pde.solver import (
    BlowUpError,
    DriftLaplacian1D,
    GeometricDegenerationError,
    core_slice,
    derivatives,
    nonlinear_term,
    rhs,
    simulate,
    step,
)

DIMS = Dimensions(2, 1)
CONFIG = SolverConfig(h=0.1, dt=0.01, R_dom=6.0)


def test_drift_laplacian_on_a_quadratic():
    op = DriftLaplacian1D.build(0.1, 6.0, 1.0)
    x = np.linspace(-6.0, 6.0, 121)
    out = op.apply(x**2)
    core = np.abs(x) <= 4.0
    # Δ_f x² = 2 − x²
    np.testing.assert_allclose(out[core], 2.0 - x[core] ** 2, atol=1e-10)
    assert op.size == 121


def test_drift_laplacian_shifted_solve():
    op = DriftLaplacian1D.build(0.1, 6.0, 1.0)
    b = np.random.default_rng(0).normal(size=(121, 3))
    y = op.solve_shifted(0.05, b)
    np.testing.assert_allclose(y - 0.05 * op.apply(y), b, atol=1e-10)


def test_derivatives_of_a_polynomial():
    state = RadialGraphState.zeros(Dimensions(3, 2), SolverConfig(h=0.1, R_dom=3.0))
    x1, x2 = state.points[..., 0], state.points[..., 1]
    grad, hess = derivatives(x1**2 * x2, 0.1)
    core = core_slice(state.axis, 2.0, 2)
    np.testing.assert_allclose(grad[..., 0][core], (2 * x1 * x2)[core], atol=1e-10)
    np.testing.assert_allclose(grad[..., 1][core], (x1**2)[core], atol=1e-10)
    np.testing.assert_allclose(hess[..., 0, 1][core], (2 * x1)[core], atol=1e-10)
    np.testing.assert_allclose(hess[..., 1, 1][core], 0.0, atol=1e-10)


def test_nonlinear_term():
    u = np.array([0.0, 0.5, -0.5])
    zeros = np.zeros((3, 1))
    out = nonlinear_term(u, zeros, zeros[..., None], DIMS)
    np.testing.assert_allclose(out, -0.5 * u**2 / (1.0 + u))

    # the gradient term scales like −2(n−k)∇²u(∇u,∇u) for small gradients
    grad = np.array([[1e-3]])
    hess = np.array([[[2.0]]])
    small = nonlinear_term(np.zeros(1), grad, hess, Dimensions(4, 1))
    assert small[0] == pytest.approx(-2.0 * 3 * 2.0 * 1e-6, rel=1e-5)


def test_round_cylinder_is_a_fixed_point():
    state = RadialGraphState.zeros(DIMS, CONFIG)
    assert np.all(rhs(state) == 0.0)
    for scheme in ("imex", "rk4"):
        config = SolverConfig(h=0.1, dt=0.01, R_dom=6.0, scheme=scheme).with_stable_dt(1)
        assert step(state, config).sup_norm() == 0.0


def test_constant_mode_grows_at_rate_one():
    u0 = seed_state(DIMS, CONFIG, modes=ModeVector(1, {(0,): 1e-4}), cutoff_radius=5.0)
    trajectory = simulate(u0, (0.0, 1.0), CONFIG, snapshot_every=25)
    assert trajectory.taus.tolist() == pytest.approx([0.0, 0.25, 0.5, 0.75, 1.0])
    assert trajectory[-1].values[60] / u0.values[60] == pytest.approx(math.e, rel=1e-3)


def test_degeneration_and_blowup():
    state = RadialGraphState.zeros(DIMS, CONFIG)
    values = np.zeros(121)
    values[10] = -2.0
    with pytest.raises(GeometricDegenerationError) as e:
        rhs(state.with_values(values, 0.0))
    assert "x=(-5.0" in str(e.value)

    with pytest.raises(BlowUpError):
        step(state.with_values(np.full(121, 20.0), 0.0), CONFIG)


def test_step_checks():
    state = RadialGraphState.zeros(DIMS, CONFIG)
    with pytest.raises(ValueError):
        step(state, SolverConfig(h=0.1, dt=0.01, R_dom=6.0, scheme="rk4"))
    with pytest.raises(ValueError):
        step(state, SolverConfig(h=0.2, R_dom=6.0))
    with pytest.raises(ValueError):
        simulate(state, (1.0, 0.0), CONFIG)


def test_frozen_boundary():
    config = SolverConfig(h=0.1, dt=0.01, R_dom=6.0, boundary="frozen")
    u0 = seed_state(DIMS, config, expression="0.01", cutoff_radius=None)
    after = step(u0, config)
    assert after.values[0] == 0.01
    assert after.values[60] > 0.01
