import json
import math

import pytest

from mcf_modes import verify as verify_module
from mcf_modes.verify import SUITES, Check, at_least, at_most, suite_names, verify


def test_checks():
    assert at_most("s", "x", 1.0, 2.0).passed
    assert not at_most("s", "x", 3.0, 2.0).passed
    assert at_least("s", "x", 3.0, 2.0).passed
    assert not at_least("s", "x", math.nan, 2.0).passed
    assert not at_most("s", "x", math.inf, 2.0).passed
    assert at_most("s", "x", 1.0, 2.0).row() == ["s", "x", 1.0, 2.0, "<=", True]


def test_suite_names():
    assert suite_names("all") == list(SUITES)
    assert suite_names("hermite") == ["hermite"]
    with pytest.raises(ValueError, match="unknown suite"):
        suite_names("nope")
    with pytest.raises(ValueError):
        verify("nope")


@pytest.mark.parametrize("suite", ["hermite", "taylor", "linear"])
def test_fast_suites_pass(suite):
    summary = verify(suite)
    assert summary.suites == [suite]
    assert summary.checks
    assert summary.passed, [f"{c.name}={c.value}" for c in summary.failures]


def test_hermite_suite_covers_closed_forms_and_products():
    names = [c.name for c in verify("hermite").checks]
    assert "recurrence_closed_forms" in names
    assert "p1_product_identity" in names


def test_verify_writes_outputs(tmp_path):
    summary = verify("hermite", tmp_path)
    assert (tmp_path / "checks.csv").read_text().splitlines()[0] == "suite,check,value,threshold,relation,passed"
    document = json.loads((tmp_path / "verify.json").read_text())
    assert document == summary.to_dict()
    assert document["failures"] == []
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert set(manifest["files"]) == {"checks.csv", "verify.json"}


def test_raising_suite_is_a_failed_check(monkeypatch):
    def broken(ctx):
        raise ValueError("boom")

    monkeypatch.setitem(verify_module.SUITES, "hermite", broken)
    summary = verify("hermite")
    assert not summary.passed
    assert summary.to_dict()["failures"] == ["hermite.error"]


def test_failing_check_is_reported(monkeypatch):
    monkeypatch.setitem(verify_module.SUITES, "linear", lambda ctx: [Check("linear", "too_big", 2.0, 1.0, "<=")])
    summary = verify("linear")
    assert summary.failures[0].name == "too_big"
    assert summary.to_dict()["n_checks"] == 1
