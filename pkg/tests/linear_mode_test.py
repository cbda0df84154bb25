import json
import math

import numpy as np
import pytest

from mcf_modes.linear_mode import (
    FitError,
    LeadingTrajectory,
    LinearAsymptotics,
    NotLinearDominantError,
    ansatz_modes,
    ansatz_trajectory,
    bowl_constant,
    bowl_fixed_point,
    extract_asymptotics,
    integrate_leading,
    leading_ode_rhs,
    transform_asymptotics,
    write_asymptotics_report,
)
from mcf_modes.ode import IntegrationError
from mcf_modes.taylor import SQRT2, LeadingModes, q2_leading


def test_leading_ode_rhs():
    u = LeadingModes(0.1, [0.2, -0.1], [[-0.3, 0.05], [0.05, 0.1]])
    out = leading_ode_rhs(u)
    expected = LeadingModes(u.a, 0.5 * u.b, np.zeros((2, 2))) + q2_leading(u)
    assert (out - expected).max_abs() == 0.0
    # ∂a = a − ½a² − ½|b|² − ½|c|²
    assert out.a == pytest.approx(0.1 - 0.5 * (0.01 + 0.05 + 0.09 + 2 * 0.0025 + 0.01))


def test_integrate_leading():
    u0 = LeadingModes(0.0, [1e-6], [[0.0]])
    traj = integrate_leading(u0, (0.0, 2.0))
    assert len(traj) == 201
    assert traj.b[-1, 0] == pytest.approx(1e-6 * math.e, rel=1e-6)
    assert traj.c.shape == (201, 1, 1)
    assert traj.modes(0).b[0] == 1e-6

    back = integrate_leading(u0, (0.0, -2.0))
    assert back.taus[-1] == pytest.approx(-2.0)

    with pytest.raises(IntegrationError):
        integrate_leading(LeadingModes(0.5, [0.0], [[0.0]]), (0.0, 5.0))


def test_linear_asymptotics():
    asym = LinearAsymptotics(0.1, [0.0, 0.0])
    assert asym.k == 2
    assert asym.is_round_cylinder_type
    assert not LinearAsymptotics(0.1, [0.2]).is_round_cylinder_type
    with pytest.raises(ValueError):
        LinearAsymptotics(math.nan, [0.0])


def test_ansatz_modes():
    asym = LinearAsymptotics(0.3, [0.5])
    u = ansatz_modes(asym, -2.0)
    e = math.exp(-2.0)
    assert u.a == pytest.approx((0.3 + 0.25) * e)
    assert u.b[0] == pytest.approx(0.5 * math.exp(-1.0))
    assert u.c[0, 0] == pytest.approx(-0.25 * e / SQRT2)


def test_extract_manufactured_asymptotics():
    asym = LinearAsymptotics(0.3, [0.5, -0.2])
    traj = ansatz_trajectory(asym, np.linspace(-30.0, -10.0, 201))
    fitted = extract_asymptotics(traj)
    assert fitted.a_bar == pytest.approx(0.3, abs=1e-10)
    np.testing.assert_allclose(fitted.b_bar, [0.5, -0.2], atol=1e-10)
    assert fitted.residual <= 1e-12
    assert fitted.window == (-30.0, -10.0)

    # windows restrict the samples
    part = extract_asymptotics(traj, (-20.0, -10.0))
    assert part.window[0] == pytest.approx(-20.0, abs=0.11)
    assert part.window[1] == -10.0
    assert part.a_bar == pytest.approx(0.3, abs=1e-10)


def test_extract_checks():
    zero = LeadingTrajectory.from_modes([-2.0, -1.0], [LeadingModes.zeros(1)] * 2)
    assert extract_asymptotics(zero).to_dict() == {"a_bar": 0.0, "b_bar": [0.0], "residual": 0.0, "window": [-2.0, -1.0]}

    one = LeadingTrajectory.from_modes([-1.0], [LeadingModes.zeros(1)])
    with pytest.raises(FitError):
        extract_asymptotics(one)

    quadratic = LeadingTrajectory.from_modes(
        [-3.0, -2.0, -1.0], [LeadingModes(0.0, [0.0], [[-0.1]])] * 3
    )
    with pytest.raises(NotLinearDominantError):
        extract_asymptotics(quadratic)

    with pytest.raises(ValueError):
        LeadingTrajectory.from_modes([], [])


def test_transform_asymptotics():
    asym = LinearAsymptotics(0.3, [0.5, -0.2])
    shifted = transform_asymptotics(asym, p=[1.0, 2.0], dT=0.4)
    assert shifted.a_bar == pytest.approx(0.3 - (0.5 - 0.4) / SQRT2 + 0.2)
    np.testing.assert_array_equal(shifted.b_bar, asym.b_bar)

    scaled = transform_asymptotics(asym, alpha=2.0)
    np.testing.assert_allclose(scaled.b_bar, [1.0, -0.4])
    assert scaled.a_bar == pytest.approx(4.0 * 0.3 - 0.29 * 4.0 * math.log(2.0))

    assert transform_asymptotics(asym).a_bar == asym.a_bar
    with pytest.raises(ValueError):
        transform_asymptotics(asym, alpha=0.0)
    with pytest.raises(ValueError):
        transform_asymptotics(asym, p=[1.0])


def test_scaling_matches_the_time_shift_of_the_ansatz():
    # rescaling by α is the time shift τ ↦ τ + 2 log α on the expansion
    asym = LinearAsymptotics(0.3, [0.5])
    alpha = 1.5
    scaled = transform_asymptotics(asym, alpha=alpha)
    tau = -7.0
    moved = ansatz_modes(asym, tau + 2.0 * math.log(alpha))
    direct = ansatz_modes(scaled, tau)
    assert (moved - direct).max_abs() <= 1e-12


def test_bowl():
    assert bowl_constant() == pytest.approx(1.0 / SQRT2)
    assert bowl_fixed_point(bowl_constant(), 0.7)
    assert bowl_fixed_point(bowl_constant(), -3.0, a_bar=0.2)
    assert not bowl_fixed_point(0.5, 0.7)


def test_write_report(tmp_path):
    asym = LinearAsymptotics(0.3, [0.5], 1e-9, (-30.0, -10.0))
    path = write_asymptotics_report(asym, tmp_path / "asymptotics.json")
    assert json.loads(path.read_text()) == {"a_bar": 0.3, "b_bar": [0.5], "residual": 1e-9, "window": [-30.0, -10.0]}
