import numpy as np
import pytest

from mcf_modes.hermite.basis import Dimensions
from mcf_modes.hermite.modes import ModeVector
from mcf_modes.pde.grid import SolverConfig
from mcf_modes.pde.seed import seed_state
from mcf_modes.pde.snapshot import (
    HEADER,
    SnapshotError,
    read_binary,
    read_snapshot,
    write_binary,
    write_csv,
)


@pytest.fixture
def state():
    dims = Dimensions(3, 2)
    config = SolverConfig(h=0.25, R_dom=2.0)
    return seed_state(dims, config, modes=ModeVector(2, {(2, 0): -0.1, (1, 1): 0.05}), cutoff_radius=None, tau=0.3)


def test_binary_snapshot(tmp_path, state):
    path = write_binary(state, tmp_path / "s.bin")
    assert path.stat().st_size == HEADER.size + 8 * 17**2
    back = read_binary(path)
    assert back.dims == state.dims
    assert back.tau == 0.3
    assert np.array_equal(back.values, state.values)


def test_bad_binary_snapshots(tmp_path, state):
    path = write_binary(state, tmp_path / "s.bin")
    data = path.read_bytes()

    (tmp_path / "short.bin").write_bytes(data[:10])
    with pytest.raises(SnapshotError):
        read_binary(tmp_path / "short.bin")

    (tmp_path / "magic.bin").write_bytes(b"NOTASNAP" + data[8:])
    with pytest.raises(SnapshotError) as e:
        read_binary(tmp_path / "magic.bin")
    assert "not a snapshot file" in str(e.value)

    (tmp_path / "truncated.bin").write_bytes(data[:-8])
    with pytest.raises(SnapshotError):
        read_binary(tmp_path / "truncated.bin")


def test_csv_snapshot(tmp_path, state):
    path = write_csv(state, tmp_path / "s.csv")
    lines = path.read_text().splitlines()
    assert lines[0] == "tau,x1,x2,u"
    assert len(lines) == 1 + 17**2

    back = read_snapshot(path, state.dims)
    assert back.h == pytest.approx(0.25)
    assert back.R_dom == 2.0
    assert np.array_equal(back.values, state.values)

    with pytest.raises(ValueError):
        read_snapshot(path)
