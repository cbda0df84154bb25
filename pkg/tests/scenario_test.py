import copy
import json

import numpy as np
import pytest

import mcf_modes.scenario as scenario_module
from mcf_modes.odi import read_track_csv
from mcf_modes.ode import IntegrationError
from mcf_modes.pde.snapshot import read_binary
from mcf_modes.scenario import ConfigError, RunError, Scenario, SweepRunner, run, versions
from mcf_modes.utils import checksum_file

BASE = {
    "name": "linear",
    "dims": {"n": 2, "k": 1},
    "solver": {"h": 0.1, "dt": 0.01, "R_dom": 10.0},
    "tracker": {"R_fixed": 8.0},
    "seed": {"modes": {"1": 0.01}},
    "tau_span": [0.0, 2.0],
}


def scenario_dict(tmp_path=None, **changes):
    data = copy.deepcopy(BASE)
    if tmp_path is not None:
        data["output_dir"] = str(tmp_path)
    data.update(changes)
    return data


@pytest.fixture(autouse=True)
def no_constants_override(monkeypatch):
    monkeypatch.delenv("MCF_MODES_CONSTANTS_FILE", raising=False)


def test_from_dict_defaults():
    scenario = Scenario.from_dict(scenario_dict())
    assert scenario.dims.k == 1
    assert scenario.solver.h == 0.1
    assert scenario.solver.scheme == "imex"
    assert scenario.tracker.R_fixed == 8.0
    assert scenario.seed.modes == {"1": 0.01}
    assert scenario.seed.cutoff_radius == 8.0
    assert scenario.tau_span == (0.0, 2.0)
    assert scenario.snapshot_every == 10
    assert str(scenario.run_dir) == "runs/linear"
    assert scenario.seed.mode_vector(1)[(1,)] == 0.01


def test_to_dict_round_trip():
    data = Scenario.from_dict(scenario_dict()).to_dict()
    assert Scenario.from_dict(data).to_dict() == data
    assert json.loads(json.dumps(data)) == data


def test_config_hash():
    a = Scenario.from_dict(scenario_dict())
    assert a.config_hash() == Scenario.from_dict(scenario_dict()).config_hash()
    assert a.config_hash() != Scenario.from_dict(scenario_dict(name="other")).config_hash()


@pytest.mark.parametrize(
    "changes, message",
    [
        ({"bogus": 1}, "unknown key 'bogus'"),
        ({"solver": {"hh": 0.1}}, "unknown key 'solver.hh'"),
        ({"tracker": {"lambda": -1.5}}, "unknown key 'tracker.lambda'"),
        ({"seed": {"modes": {"1": 0.01}, "oops": 1}}, "unknown key 'seed.oops'"),
        ({"dims": {"n": 2}}, "invalid 'dims'"),
        ({"seed": {"modes": {"1": 0.01}, "expression": "x1"}}, "exactly one"),
        ({"seed": {}}, "exactly one"),
        ({"seed": {"modes": {"1": 0.01}, "cutoff_radius": 20.0}}, "cutoff_radius"),
        ({"seed": {"modes": {"0": 20.0}}}, "exceeds the solver guard"),
        ({"seed": {"expression": "__import__('os')"}}, "invalid 'seed.expression'"),
        ({"tau_span": [2.0, 1.0]}, "tau_span"),
        ({"tau_span": "soon"}, "tau_span"),
        ({"snapshot_every": 0}, "snapshot_every"),
        ({"rng_seed": "x"}, "rng_seed"),
    ],
)
def test_from_dict_errors(changes, message):
    with pytest.raises(ConfigError, match=message):
        Scenario.from_dict(scenario_dict(**changes))


def test_from_dict_missing_key():
    data = scenario_dict()
    del data["tau_span"]
    with pytest.raises(ConfigError, match="missing key 'tau_span'"):
        Scenario.from_dict(data)


def test_from_file(tmp_path):
    path = tmp_path / "scenario.json"
    path.write_text(json.dumps(scenario_dict()))
    assert Scenario.from_file(path).name == "linear"

    with pytest.raises(ConfigError):
        Scenario.from_file(tmp_path / "missing.json")
    (tmp_path / "broken.json").write_text("{")
    with pytest.raises(ConfigError):
        Scenario.from_file(tmp_path / "broken.json")


def test_run_linear_seed(tmp_path):
    scenario = Scenario.from_dict(scenario_dict(tmp_path))
    report = run(scenario)
    out = tmp_path / "linear"
    assert report.run_dir == out

    names = {p.name for p in report.files}
    for expected in (
        "track.csv",
        "snapshot_initial.bin",
        "snapshot_initial.csv",
        "snapshot_final.bin",
        "snapshot_final.csv",
        "asymptotics.json",
        "report.json",
        "manifest.json",
    ):
        assert expected in names
        assert (out / expected).exists()
    assert (out / "constants.json").exists()

    assert report.phases.dominant == "linear"
    assert report.summary["pipeline"] == "linear"
    assert 0.4 <= report.summary["rates"]["linear"] <= 0.6

    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["config_hash"] == scenario.config_hash()
    assert manifest["constants_checksum"] == checksum_file(out / "constants.json")
    assert manifest["files"]["track.csv"] == checksum_file(out / "track.csv")
    assert manifest["versions"] == versions()

    saved = json.loads((out / "report.json").read_text())
    assert saved["name"] == "linear"
    assert saved["phases"]["dominant"] == "linear"


def test_run_zero_seed(tmp_path):
    scenario = Scenario.from_dict(scenario_dict(tmp_path, name="zero", seed={"modes": {"0": 0.0}}))
    report = run(scenario)
    out = tmp_path / "zero"
    assert report.phases.dominant == "none"
    assert report.summary["pipeline"] == "none"
    for row in read_track_csv(out / "track.csv"):
        for column in ("Upp_norm", "U0_min", "U0_max", "U12_norm", "U1_norm"):
            assert row[column] == 0.0
        assert row["phase"] == "none"
    assert not np.any(read_binary(out / "snapshot_final.bin").values)
    assert (out / "manifest.json").exists()


def test_run_is_deterministic(tmp_path):
    scenario = Scenario.from_dict(scenario_dict(tmp_path, rng_seed=7))
    run(scenario, run_dir=tmp_path / "first")
    run(scenario, run_dir=tmp_path / "second")
    for name in ("track.csv", "snapshot_final.csv", "snapshot_final.bin", "asymptotics.json", "manifest.json"):
        assert (tmp_path / "first" / name).read_bytes() == (tmp_path / "second" / name).read_bytes()


def test_run_linear_seed_keeps_direction(tmp_path):
    seed = np.array([0.006, 0.008])
    scenario = Scenario.from_dict(
        scenario_dict(
            tmp_path,
            name="planar",
            dims={"n": 3, "k": 2},
            seed={"modes": {"1,0": float(seed[0]), "0,1": float(seed[1])}},
        )
    )
    report = run(scenario)
    assert report.summary["pipeline"] == "linear"
    b_bar = np.array(report.summary["b_bar"])
    alignment = abs(b_bar @ seed) / (np.linalg.norm(b_bar) * np.linalg.norm(seed))
    assert alignment > 0.999


def test_run_failure_is_tagged(tmp_path):
    scenario = Scenario.from_dict(scenario_dict(tmp_path, name="blowup", seed={"modes": {"0": 5.0}}))
    with pytest.raises(RunError) as e:
        run(scenario)
    assert e.value.module == "rmcf_pde"
    assert str(e.value).startswith("[rmcf_pde]")


def test_pipeline_failure_is_tagged(tmp_path, monkeypatch):
    def broken(records, run_dir):
        raise IntegrationError("leading-mode integration left the unit ball")

    monkeypatch.setattr(scenario_module, "_linear_summary", broken)
    scenario = Scenario.from_dict(scenario_dict(tmp_path))
    with pytest.raises(RunError) as e:
        run(scenario)
    assert e.value.module == "linear_mode"

    results = SweepRunner(1).run_all([scenario])
    assert isinstance(results[0], RunError)
    assert results[0].module == "linear_mode"


def test_sweep(tmp_path):
    scenarios = [
        Scenario.from_dict(scenario_dict(tmp_path, name="a")),
        Scenario.from_dict(scenario_dict(tmp_path, name="b", seed={"modes": {"0": 5.0}})),
    ]
    results = SweepRunner(2).run_all(scenarios)
    assert results[0].name == "a"
    assert isinstance(results[1], RunError)
    assert (tmp_path / "a" / "manifest.json").exists()

    with pytest.raises(ValueError):
        SweepRunner(2).run_all([scenarios[0], scenarios[0]])


def test_sweep_workers(monkeypatch):
    monkeypatch.setenv("MCF_MODES_THREADS", "3")
    assert SweepRunner().max_num_workers == 3
    assert SweepRunner(5).max_num_workers == 5
