import json
import math
from types import SimpleNamespace

import numpy as np
import pytest

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.linear_mode import FitError
from mcf_modes.quadratic_mode import (
    BarUSystem,
    SpectralTrajectory,
    ThresholdNotCrossedError,
    ancient_seed,
    ansatz_lambdas,
    compare_to_pde,
    decay_exponent,
    embed,
    fit_asymptotics,
    integrate_barU,
    integrate_matrix,
    locate_threshold,
    predicted_cstarstar,
    q_invariant,
    q_inverse,
    spectral_reduce,
    threshold,
    write_q_report,
)
from mcf_modes.taylor import SQRT2, LeadingModes

SYSTEM1 = BarUSystem.for_dims(Dimensions(2, 1))
SYSTEM2 = BarUSystem.for_dims(Dimensions(3, 2))
ROTATION = np.array([[math.cos(0.7), -math.sin(0.7)], [math.sin(0.7), math.cos(0.7)]])


def relative(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_threshold():
    assert threshold(6.0) == pytest.approx(1.0 / 70.0)
    assert threshold(-0.5) == 0.05
    assert threshold(0.0) == 0.05
    assert predicted_cstarstar(1, 6.0) == pytest.approx(-8.0 / SQRT2)
    assert predicted_cstarstar(2, 4.0) == pytest.approx(-8.0 / SQRT2)


def test_system():
    # codimension one: C* = 6
    assert SYSTEM1.cstar == pytest.approx(6.0, abs=1e-6)
    assert SYSTEM2.cstar == pytest.approx(6.0, abs=1e-6)
    assert SYSTEM1.c == pytest.approx(1.0 / 70.0, rel=1e-6)
    assert SYSTEM2.k == 2

    lam = np.array([-0.2, -0.05])
    flat = SYSTEM2.matrix_rhs(0.0, np.diag(lam).reshape(-1))
    np.testing.assert_allclose(flat.reshape(2, 2), np.diag(SYSTEM2.eig_rhs(0.0, lam)), atol=1e-15)
    assert SYSTEM1.eig_rhs(0.0, np.zeros(1))[0] == 0.0


def test_spectral_reduce_diagonal():
    frame, eigs = spectral_reduce(np.diag([-1.0, 0.0, -2.0]))
    np.testing.assert_array_equal(eigs, [0.0, -1.0, -2.0])
    np.testing.assert_array_equal(frame @ np.diag(eigs) @ frame.T, np.diag([-1.0, 0.0, -2.0]))

    frame, eigs = spectral_reduce(np.diag([0.0, -1.0]))
    np.testing.assert_array_equal(frame, np.eye(2))

    frame, eigs = spectral_reduce(np.zeros((2, 2)))
    np.testing.assert_array_equal(eigs, [0.0, 0.0])


def test_spectral_reduce_conjugated():
    u0 = ROTATION @ np.diag([-0.1, -0.3]) @ ROTATION.T
    frame, eigs = spectral_reduce(u0)
    np.testing.assert_allclose(eigs, [-0.1, -0.3], atol=1e-14)
    np.testing.assert_allclose(frame @ np.diag(eigs) @ frame.T, u0, atol=1e-14)
    np.testing.assert_allclose(frame.T @ frame, np.eye(2), atol=1e-14)
    for j in range(2):
        col = frame[:, j]
        assert col[np.argmax(np.abs(col) > 1e-12)] > 0

    with pytest.raises(ValueError):
        spectral_reduce([[0.0, 1.0], [0.0, 0.0]])


def test_integrate_zero():
    traj = integrate_barU(np.zeros((2, 2)), (0.0, -10.0), SYSTEM2)
    assert traj.is_zero
    assert traj.span == (-10.0, 0.0)
    np.testing.assert_array_equal(traj.matrix(-3.0), np.zeros((2, 2)))
    assert traj.extend(-50.0).span == (-50.0, 0.0)


def test_integrate_checks():
    with pytest.raises(ValueError):
        integrate_barU([[0.1]], (0.0, 1.0), SYSTEM1)
    with pytest.raises(ValueError):
        integrate_barU(np.diag([-0.1, -0.2]), (0.0, 1.0), SYSTEM1)
    with pytest.raises(ValueError):
        integrate_barU([[-0.1]], (0.0, 1.0), SYSTEM1, method="euler")
    traj = integrate_barU([[-0.1]], (0.0, 1.0), SYSTEM1)
    with pytest.raises(ValueError):
        traj.at(2.0)


def test_spectral_matches_full_matrix_ode():
    u0 = ROTATION @ np.diag([-0.05, -0.2]) @ ROTATION.T
    spectral = integrate_barU(u0, (0.0, -5.0), SYSTEM2)
    assert spectral.span == (-5.0, 0.0)
    full = integrate_matrix(u0, (0.0, -5.0), SYSTEM2).y[:, -1].reshape(2, 2)
    end = spectral.matrix(-5.0)
    np.testing.assert_allclose(end, full, atol=1e-8)
    np.testing.assert_allclose(end, end.T, atol=1e-15)
    assert np.max(np.abs(end @ u0 - u0 @ end)) <= 1e-10
    assert np.max(spectral.lambdas) <= 0.0


def test_rk4_matches_rk45():
    adaptive = integrate_barU([[-0.2]], (0.0, -5.0), SYSTEM1)
    fixed = integrate_barU([[-0.2]], (0.0, -5.0), SYSTEM1, method="rk4", dt=0.01)
    assert fixed.method == "rk4"
    assert fixed.span[0] == pytest.approx(-5.0)
    assert fixed.lambdas[0, 0] == pytest.approx(adaptive.at(-5.0)[0], abs=1e-8)


def test_forward_blowup():
    traj = integrate_barU([[-1.0]], (0.0, 10.0), SYSTEM1)
    assert traj.blowup_tau is not None
    assert traj.blowup_tau < 10.0
    assert traj.lambdas[-1, 0] == pytest.approx(-SYSTEM1.guard, rel=1e-6)
    assert traj.extend(20.0) is traj


def test_ancient_seed():
    np.testing.assert_allclose(ancient_seed([True, False], -10.0), np.diag([1.0 / (SQRT2 * -10.0), 0.0]))
    rotated = ancient_seed([True, True], -10.0, ROTATION)
    np.testing.assert_allclose(rotated, np.eye(2) / (SQRT2 * -10.0), atol=1e-15)
    with pytest.raises(ValueError):
        ancient_seed([True], 0.0)


def test_ancient_leading_behaviour():
    tau0 = -1e5
    traj = integrate_barU(ancient_seed([True], tau0), (tau0, -1e2), SYSTEM1)
    far = traj.taus <= -1e3
    assert np.max(np.abs(traj.taus[far] * traj.lambdas[far, 0] - 1.0 / SQRT2)) <= 0.05


def test_q_invariant_zero():
    q = q_invariant(integrate_barU(np.zeros((2, 2)), (0.0, 1.0), SYSTEM2))
    assert q.tau_U is None
    np.testing.assert_array_equal(q.Q, np.zeros((2, 2)))
    assert q.to_dict()["Q"] == [[0.0, 0.0], [0.0, 0.0]]


def test_q_invariant_at_a_sample():
    traj = integrate_barU([[-SYSTEM1.c]], (0.0, 1.0), SYSTEM1)
    q = q_invariant(traj)
    assert q.tau_U == 0.0
    assert q.Q[0, 0] == pytest.approx(1.0, abs=1e-15)
    assert q.c == SYSTEM1.c
    assert q.k == 1


@pytest.mark.parametrize("lam0", [-0.001, -0.05])
def test_locate_threshold(lam0):
    # forward extension for small seeds, backward for large ones
    traj = integrate_barU([[lam0]], (0.0, 1.0), SYSTEM1)
    tau_u, extended = locate_threshold(traj)
    assert extended.lambda_min(tau_u) == pytest.approx(-SYSTEM1.c, abs=1e-9)
    if lam0 > -SYSTEM1.c:
        assert tau_u > 1.0
    else:
        assert tau_u < 0.0


def test_threshold_not_crossed():
    # blow-up guard above -c
    system = BarUSystem(Dimensions(2, 1), SYSTEM1.cstar, guard=0.005)
    traj = integrate_barU([[-0.001]], (0.0, 1.0), system)
    with pytest.raises(ThresholdNotCrossedError):
        q_invariant(traj)


def test_q_time_shift_homogeneity():
    u0 = ROTATION @ np.diag([-0.004, -0.009]) @ ROTATION.T
    base = q_invariant(integrate_barU(u0, (0.0, 1.0), SYSTEM2)).Q
    for lam in (0.5, 2.0, 10.0):
        t0 = -2.0 * math.log(lam)
        moved = q_invariant(integrate_barU(u0, (t0, t0 + 1.0), SYSTEM2)).Q
        assert relative(moved, lam * base) <= 1e-6


def test_q_orthogonal_equivariance():
    u0 = np.diag([-0.004, -0.009])
    base = q_invariant(integrate_barU(u0, (0.0, 1.0), SYSTEM2)).Q
    conj = q_invariant(integrate_barU(ROTATION.T @ u0 @ ROTATION, (0.0, 1.0), SYSTEM2)).Q
    assert relative(conj, ROTATION.T @ base @ ROTATION) <= 1e-8


@pytest.mark.parametrize(
    "qp",
    [
        [[0.3]],
        [[1.0]],
        np.diag([0.5, 0.2]),
        ROTATION @ np.diag([0.8, 0.05]) @ ROTATION.T,
    ],
)
def test_q_round_trip(qp):
    qp = np.asarray(qp, dtype=float)
    system = SYSTEM1 if qp.shape[0] == 1 else SYSTEM2
    traj = q_inverse(qp, system)
    assert traj.span[0] <= -2.0 * math.log(np.max(np.linalg.eigvalsh(qp))) - 100.0 + 1e-9
    assert relative(q_invariant(traj).Q, qp) <= 1e-4


def test_q_inverse_zero_and_checks():
    traj = q_inverse(np.zeros((2, 2)), SYSTEM2)
    assert traj.is_zero
    assert traj.span == (-100.0, 1.0)
    with pytest.raises(ValueError):
        q_inverse(np.diag([0.5, -0.1]), SYSTEM2)


def test_q_inverse_nullspace():
    traj = q_inverse(np.diag([0.5, 0.0]), SYSTEM2)
    assert not np.any(traj.lambdas[:, 1])
    assert not np.any(traj.matrix(float(traj.taus[3]))[1])
    q = q_invariant(traj).Q
    assert q[1, 1] == 0.0 and q[0, 1] == 0.0


def test_embed():
    np.testing.assert_array_equal(embed([[0.3]], 2), [[0.3, 0.0], [0.0, 0.0]])
    np.testing.assert_array_equal(embed(np.zeros((1, 1)), 3), np.zeros((3, 3)))
    m = np.diag([0.2, 0.1])
    np.testing.assert_array_equal(embed(embed(m, 3), 4), embed(m, 4))
    with pytest.raises(ValueError):
        embed(m, 1)

    one = q_inverse([[0.3]], SYSTEM1)
    two = embed(one, 2)
    assert two.k == 2
    assert two.system.dims.k == 2
    assert two.system.dims.codim == one.system.dims.codim
    np.testing.assert_allclose(two.at(-20.0), [one.at(-20.0)[0], 0.0])
    embedded = q_invariant(two).Q
    np.testing.assert_allclose(embedded, embed(q_invariant(one).Q, 2), atol=1e-10)
    with pytest.raises(ValueError):
        embed(two, 1)


def manufactured(log_a, cstarstar, k=None):
    taus = -np.geomspace(1e5, 1e3, 200)
    lambdas = ansatz_lambdas(taus, log_a, cstarstar)
    k = k or len(log_a)
    if lambdas.shape[1] < k:
        lambdas = np.hstack([lambdas, np.zeros((taus.size, k - lambdas.shape[1]))])
    system = SYSTEM1 if k == 1 else SYSTEM2
    return SpectralTrajectory(system, np.eye(k), taus, lambdas)


def test_ansatz_lambdas():
    lam = ansatz_lambdas([-10.0, -100.0], [0.0, 1.0], -2.0)
    assert lam.shape == (2, 2)
    assert lam[0, 0] == pytest.approx(1.0 / (-10.0 * SQRT2 - 2.0 * math.log(10.0)))


def test_fit_manufactured_asymptotics():
    fit = fit_asymptotics(manufactured([0.3, -0.2], -5.0))
    assert fit.channels == [0, 1]
    np.testing.assert_allclose(fit.A, np.diag([math.exp(0.3), math.exp(-0.2)]), rtol=1e-6, atol=1e-12)
    assert fit.Cstarstar == pytest.approx(-5.0, rel=1e-6)
    np.testing.assert_allclose(fit.channel_Cstarstar, [-5.0, -5.0], rtol=1e-6)
    assert fit.residual <= 1e-9
    assert set(fit.to_dict()) == {"A", "Cstarstar", "channel_Cstarstar", "residual", "decay_exponent", "channels"}


def test_fit_skips_zero_directions():
    fit = fit_asymptotics(manufactured([0.1], -4.0, k=2))
    assert fit.channels == [0]
    assert fit.A[1, 1] == 0.0
    assert fit.A[0, 0] == pytest.approx(math.exp(0.1), rel=1e-6)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_asymptotics(manufactured([0.1], -4.0), tau_max=-1e6)
    zero = SpectralTrajectory(SYSTEM1, np.eye(1), np.array([-1e4, -1e3]), np.zeros((2, 1)))
    with pytest.raises(FitError):
        fit_asymptotics(zero)


def test_fit_rank_one_cstarstar():
    tau0 = -1e6
    traj = integrate_barU(ancient_seed([True], tau0), (tau0, -1e2), SYSTEM1)
    fit = fit_asymptotics(traj)
    assert fit.Cstarstar == pytest.approx(predicted_cstarstar(1, SYSTEM1.cstar), rel=0.01)
    assert fit.decay_exponent >= 2.5
    assert fit.channels == [0]


def test_fit_rank_two_channels_agree():
    traj = q_inverse(np.diag([0.5, 0.05]), SYSTEM2).extend(-1e6)
    fit = fit_asymptotics(traj)
    assert fit.channels == [0, 1]
    assert len(fit.channel_Cstarstar) == 2
    assert fit.channel_spread <= 0.05
    assert fit.Cstarstar == pytest.approx(predicted_cstarstar(2, SYSTEM2.cstar), rel=0.02)
    assert fit.decay_exponent >= 2.5


def test_fit_rejects_slow_residual_decay():
    taus = -np.geomspace(1e5, 1e3, 200)
    # a non-decaying term in 1/λ leaves an O(τ⁻²) residual
    lambdas = 1.0 / (1.0 / ansatz_lambdas(taus, [0.2], -5.0) + 5.0 * np.sin(20.0 * np.log(-taus))[:, None])
    traj = SpectralTrajectory(SYSTEM1, np.eye(1), taus, lambdas)
    with pytest.raises(FitError, match="decays like"):
        fit_asymptotics(traj)
    fit = fit_asymptotics(traj, min_exponent=None)
    assert fit.decay_exponent < 2.5


def test_decay_exponent():
    x = np.geomspace(1.0, 1e3, 2001)
    assert decay_exponent(x, x**-3.0) == pytest.approx(3.0, abs=0.05)
    assert decay_exponent(x, np.zeros_like(x)) == math.inf
    single = np.zeros_like(x)
    single[0] = 1.0
    with pytest.raises(FitError):
        decay_exponent(x, single)


def test_compare_to_pde():
    traj = integrate_barU([[-0.005]], (0.0, 50.0), SYSTEM1)
    records = [
        SimpleNamespace(tau=t, Uplus=LeadingModes(0.0, [0.0], traj.matrix(t)).to_mode_vector())
        for t in np.arange(0.0, 51.0, 5.0)
    ]
    report = compare_to_pde(records, SYSTEM1)
    assert report["match_tau"] == 50.0
    assert len(report["differences"]) == 11
    assert max(report["differences"]) <= 1e-8

    later = compare_to_pde(records, SYSTEM1, start=30.0)
    assert later["taus"] == [30.0, 35.0, 40.0, 45.0, 50.0]
    with pytest.raises(FitError):
        compare_to_pde(records[:2], SYSTEM1)


def test_write_q_report(tmp_path):
    traj = integrate_barU([[-SYSTEM1.c]], (0.0, 1.0), SYSTEM1)
    q = q_invariant(traj)
    path = write_q_report(q, tmp_path / "q_report.json", residuals={"round_trip": 1e-9})
    document = json.loads(path.read_text())
    assert document["k"] == 1
    assert document["tau_U"] == 0.0
    assert document["A"] is None
    assert document["Cstarstar"] is None
    assert document["residuals"] == {"round_trip": 1e-9}
    assert document["Cstar"] == pytest.approx(6.0, abs=1e-6)
