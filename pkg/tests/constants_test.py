import json
import math

import numpy as np
import pytest

from mcf_modes.constants import (
    ConstantsError,
    constants_path,
    derive_constants,
    load_constants_file,
    neutral_oracle,
    q3_v0_project,
    verify_constants_file,
    write_constants_file,
)
from mcf_modes.hermite.basis import Dimensions
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.taylor import SQRT6


@pytest.mark.parametrize("codim", [1, 2, 3])
def test_derived_constants(codim):
    constants = derive_constants(Dimensions(codim + 1, 1))
    assert constants.codim == codim
    assert constants.C2 == pytest.approx(-SQRT6, abs=1e-10)
    assert constants.pair_inner == pytest.approx(SQRT6, abs=1e-10)
    assert constants.Cstar == pytest.approx(8.0 - 2.0 * codim, abs=1e-6)
    assert constants.Cstar == pytest.approx(constants.C1 - SQRT6 / 2.0 * constants.C2 - 1.0, abs=1e-6)


def test_constants_depend_on_codim_only():
    a = derive_constants(Dimensions(3, 1))
    b = derive_constants(Dimensions(4, 2))
    assert a.Cstar == b.Cstar
    assert a.to_dict()["C1"] == b.C1


def test_constants_are_order_stable():
    low = derive_constants(Dimensions(2, 1), order=16)
    high = derive_constants(Dimensions(2, 1), order=24)
    for name in ("C1", "C2", "Cstar"):
        assert getattr(low, name) == pytest.approx(getattr(high, name), abs=1e-6)


@pytest.mark.parametrize("eps", [0.1, -0.05, 0.01])
def test_q3_v0_project_matches_quadrature_for_k1(eps):
    dims = Dimensions(2, 1)
    u = ModeVector(1, {(2,): eps})
    assert q3_v0_project(0.0, [eps], dims=dims)[0] == pytest.approx(neutral_oracle(u, dims)[0], abs=1e-10)


def test_q3_v0_project_checks():
    dims = Dimensions(3, 2)
    with pytest.raises(ValueError):
        q3_v0_project(0.0, [0.1, 0.1], w=[0.1], dims=dims)
    with pytest.raises(ValueError):
        q3_v0_project(0.0, [0.1, 0.1], v=[[0.1, 0.0], [0.0, 0.0]], dims=dims)
    with pytest.raises(ValueError):
        q3_v0_project(1.0, [0.1, 0.1], dims=dims)
    with pytest.raises(ValueError):
        q3_v0_project(0.0, [0.1, 0.1])

    c = np.array([-0.001, -0.002])
    out = q3_v0_project(0.0, c, dims=dims)
    # leading behaviour is −√2c²
    np.testing.assert_allclose(out, -math.sqrt(2.0) * c**2, rtol=0.05)


def test_constants_file(tmp_path):
    path = write_constants_file(tmp_path / "constants.json", codims=(1, 2))
    values = load_constants_file(path)
    assert set(values) == {(name, codim) for name in ("C1", "C2", "Cstar") for codim in (1, 2)}
    assert values[("Cstar", 2)] == pytest.approx(4.0, abs=1e-6)
    assert verify_constants_file(path) == []

    document = json.loads(path.read_text())
    assert document["stability_order"] == document["quadrature_order"] + 4
    assert all(entry["dims"].startswith("n-k=") for entry in document["entries"])

    document["entries"][0]["value"] += 1.0
    path.write_text(json.dumps(document))
    with pytest.raises(ConstantsError) as e:
        load_constants_file(path)
    assert "checksum mismatch" in str(e.value)

    with pytest.raises(ConstantsError):
        load_constants_file(tmp_path / "missing.json")


def test_constants_path(monkeypatch, tmp_path):
    monkeypatch.delenv("MCF_MODES_CONSTANTS_FILE", raising=False)
    assert constants_path(tmp_path) == tmp_path / "constants.json"
    monkeypatch.setenv("MCF_MODES_CONSTANTS_FILE", str(tmp_path / "other.json"))
    assert constants_path(tmp_path) == tmp_path / "other.json"
