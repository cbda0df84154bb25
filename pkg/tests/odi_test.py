import math

import numpy as np
import pytest

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.odi import (
    TRACK_COLUMNS,
    TrackerConfig,
    TrackerError,
    TrackRecord,
    choose_radius,
    classify_phases,
    fit_growth_rate,
    fit_residual_constant,
    leading_modes,
    measure,
    phase_of,
    radius_ancient,
    radius_quadratic,
    read_track_csv,
    residual_plus,
    track,
    u_minus,
    u_plus,
    write_track_csv,
)
from mcf_modes.pde.grid import SolverConfig
from mcf_modes.pde.seed import seed_state
from mcf_modes.pde.solver import simulate
from mcf_modes.taylor import LeadingModes

DIMS = Dimensions(2, 1)
GRID = SolverConfig(h=0.1, dt=0.01, R_dom=10.0)


def make_record(tau, modes, **kwargs):
    plus = modes.to_mode_vector()
    eigs = np.linalg.eigvalsh(modes.c)
    norms = modes.norms()
    return TrackRecord(
        tau=tau,
        R=8.0,
        clamped=False,
        Uplus=plus,
        Upp_norm=plus.norm(),
        Uminus=kwargs.pop("Uminus", 0.0),
        U0_min=float(eigs[0]),
        U0_max=float(eigs[-1]),
        U0_norm=norms["U0"],
        U12_norm=norms["U12"],
        U1_norm=norms["U1"],
        **kwargs,
    )


def test_tracker_config():
    config = TrackerConfig()
    assert config.plus_cap == 4
    assert TrackerConfig(lam=-2.0).plus_cap == 5
    assert TrackerConfig(J=5).taylor_order == 3
    assert config.floor(8.0) == pytest.approx(0.1 * math.exp(-2.0))
    assert TrackerConfig.from_dict(config.to_dict()) == config

    for bad in ({"lam": -1.4}, {"lam": 0.5}, {"eta": 0.2}, {"eps": 1.0}, {"radius_policy": "adaptive"}, {"projection": "fft"}):
        with pytest.raises(ValueError):
            TrackerConfig(**bad)
    with pytest.raises(KeyError):
        TrackerConfig.from_dict({"lambda": -1.5})


@pytest.mark.parametrize("projection,tol", [("grid", 1e-6), ("nodes", 5e-6)])
def test_u_plus_recovers_modes(projection, tol):
    modes = ModeVector(1, {(0,): 0.01, (1,): -0.02, (2,): 0.03, (4,): 0.005})
    state = seed_state(DIMS, GRID, modes=modes, cutoff_radius=None)
    plus = u_plus(state, 9.0, TrackerConfig(projection=projection))
    assert plus.allclose(modes, atol=tol)


def test_u_minus_measures_the_tail():
    modes = ModeVector(1, {(2,): 0.03, (6,): 0.01})
    state = seed_state(DIMS, GRID, modes=modes, cutoff_radius=None)
    config = TrackerConfig()
    assert u_minus(state, 9.0, config) == pytest.approx(0.01 + config.floor(9.0), rel=0.01)
    assert u_plus(state, 8.0, config)[(6,)] == 0.0

    with pytest.raises(TrackerError):
        u_plus(state, 12.0, config)


def test_radius_policies():
    assert radius_ancient(0.0, 3) == math.inf
    assert radius_ancient(0.5, 3) == pytest.approx(math.sqrt(3.0 * math.log(2.0)))
    with pytest.raises(ValueError):
        radius_ancient(1.0, 3)

    assert radius_quadratic(0.0, 10.0, 3) == pytest.approx(3.0 * math.sqrt(math.log(20.0)))
    with pytest.raises(ValueError):
        radius_quadratic(11.0, 10.0, 3)


def test_choose_radius():
    state = seed_state(DIMS, GRID, modes=ModeVector(1, {(2,): 0.01}), cutoff_radius=None, tau=2.0)
    assert choose_radius(state, TrackerConfig(R_fixed=8.0)) == (8.0, False)
    assert choose_radius(state, TrackerConfig(R_fixed=20.0)) == (9.0, True)

    R, _ = choose_radius(state, TrackerConfig(radius_policy="quadratic"), tdtau=12.0)
    assert R == pytest.approx(3.0 * math.sqrt(math.log(20.0)))
    with pytest.raises(TrackerError):
        choose_radius(state, TrackerConfig(radius_policy="quadratic"))

    # ‖U⁺⁺‖ = 0.01 gives e^(−R²) = 10⁻⁶ before clamping
    R, clamped = choose_radius(state, TrackerConfig(radius_policy="ancient"))
    assert R == pytest.approx(math.sqrt(3.0 * math.log(100.0)), rel=1e-4)
    assert not clamped

    small = seed_state(DIMS, SolverConfig(h=0.1, R_dom=3.0), expression="0", cutoff_radius=None)
    with pytest.raises(TrackerError):
        choose_radius(small, TrackerConfig())


def test_measure_and_phase():
    config = TrackerConfig()
    cases = {
        "quadratic": {(2,): -0.05},
        "linear": {(1,): 0.05, (2,): -0.01},
        "constant": {(0,): 0.05, (1,): 0.001},
        "none": {},
    }
    for phase, coeffs in cases.items():
        state = seed_state(DIMS, GRID, modes=ModeVector(1, coeffs), cutoff_radius=None)
        record = measure(state, config)
        assert phase_of(record, config.c0) == phase

    state = seed_state(DIMS, GRID, modes=ModeVector(1, {(2,): -0.05}), cutoff_radius=None)
    record = measure(state, config)
    assert record.U0_min == pytest.approx(-0.05, abs=1e-5)
    assert record.U0_norm == pytest.approx(0.05, abs=1e-5)
    assert math.isnan(record.residual_plus)
    assert len(record.row()) == len(TRACK_COLUMNS)


def test_residual_plus():
    config = TrackerConfig()
    taus = [0.0, 0.01, 0.02]
    eps = 1e-6
    records = [make_record(t, LeadingModes(0.0, [eps * math.exp(t / 2.0)], [[0.0]])) for t in taus]
    assert residual_plus(records, config, DIMS) <= 1e-9

    zero = [make_record(t, LeadingModes.zeros(1)) for t in taus]
    assert residual_plus(zero, config, DIMS) == 0.0
    with pytest.raises(TrackerError):
        residual_plus(records[:2], config, DIMS)


def test_track_a_constant_mode():
    u0 = seed_state(DIMS, GRID, modes=ModeVector(1, {(0,): 1e-4}), cutoff_radius=8.0)
    trajectory = simulate(u0, (0.0, 0.5), GRID, snapshot_every=5)
    records = track(trajectory, TrackerConfig())
    assert len(records) == 11
    assert {r.phase for r in records} == {"constant"}
    assert math.isnan(records[0].residual_plus) and math.isnan(records[-1].residual_plus)
    assert all(math.isfinite(r.residual_plus) for r in records[1:-1])
    rate = fit_growth_rate([r.tau for r in records], [r.U1_norm for r in records])
    assert rate == pytest.approx(1.0, abs=0.01)


def test_leading_modes_of_a_record():
    modes = LeadingModes(0.01, [0.02, -0.03], [[-0.04, 0.005], [0.005, -0.01]])
    got = leading_modes(make_record(0.0, modes))
    assert got.a == pytest.approx(0.01)
    np.testing.assert_allclose(got.b, modes.b)
    np.testing.assert_allclose(got.c, modes.c)


def test_fit_growth_rate():
    taus = np.linspace(0.0, 2.0, 11)
    assert fit_growth_rate(taus, 0.3 * np.exp(0.5 * taus)) == pytest.approx(0.5)
    with pytest.raises(TrackerError):
        fit_growth_rate([0.0, 1.0], [0.0, 1.0])


def test_classify_quadratic_phase():
    taus = np.linspace(0.0, 10.0, 101)
    # exact solution of ∂λ = −√2λ²
    records = [make_record(t, LeadingModes(0.0, [0.0], [[1.0 / (math.sqrt(2.0) * t - 100.0)]])) for t in taus]
    report = classify_phases(records)
    assert report.phases == ["quadratic"]
    assert report.dominant == "quadratic"
    assert report.sqrt2_fraction_min == 1.0
    assert report.sqrt2_fraction_max is None
    assert report.linear_rate_fraction is None
    assert report.tau_half == 10.0
    # U₀,max never dominates, so τ₀ falls back to the phase start
    assert report.tau0 == 0.0


def test_classify_linear_and_out_of_order_phases():
    taus = np.linspace(0.0, 4.0, 41)
    linear = [make_record(t, LeadingModes(0.0, [0.01 * math.exp(t / 2.0)], [[0.0]])) for t in taus]
    report = classify_phases(linear)
    assert report.phases == ["linear"]
    assert report.linear_rate_fraction == 1.0
    assert report.tau1 == 4.0
    assert report.ordered

    constant = [make_record(t, LeadingModes(0.01 * math.exp(t), [0.0], [[0.0]])) for t in taus]
    tail = [make_record(4.1 + 0.1 * i, LeadingModes(0.0, [1.0], [[0.0]])) for i in range(5)]
    report = classify_phases(constant + tail)
    assert report.phases == ["constant", "linear"]
    assert not report.ordered
    assert report.to_dict()["dominant"] == "constant"

    assert classify_phases([]).dominant == "none"


def test_fit_residual_constant():
    records = [
        make_record(0.0, LeadingModes.zeros(1), residual_plus=math.nan),
        make_record(1.0, LeadingModes(0.1, [0.0], [[0.0]]), Uminus=0.5, residual_plus=0.2),
    ]
    # ‖U⁺⁺‖^4 + 𝒰⁻ = 1e-4 + 0.5
    assert fit_residual_constant(records, 3) == pytest.approx(0.2 / (1e-4 + 0.5))
    with pytest.raises(TrackerError):
        fit_residual_constant(records[:1], 3)


def test_track_csv(tmp_path):
    records = [make_record(0.5, LeadingModes(0.0, [0.1], [[-0.2]]), phase="linear")]
    path = write_track_csv(records, tmp_path / "track.csv")
    assert path == tmp_path / "track.csv"
    rows = read_track_csv(path)
    assert list(rows[0]) == TRACK_COLUMNS
    assert rows[0]["phase"] == "linear"
    assert rows[0]["U0_min"] == -0.2
    assert math.isnan(rows[0]["residual_plus"])
