import math

import numpy as np
import pytest

from qchain.config import ConfigError, default_config, load_config, parse_config_text
from qchain.io import (
    FormatError,
    RunManifest,
    file_digest,
    make_manifest,
    read_difference,
    read_eigenmodes,
    read_grid,
    read_trace,
    text_digest,
    write_difference,
    write_eigenmodes,
    write_grid,
    write_trace,
)
from qchain.observables import chain_eigenmodes
from qchain.params import reference_params
from qchain.sweeps import PROTOCOL_FRESH, frequency_power_map, two_seed_map
from qchain.telegraph import RatePair, simulate_telegraph

TWO_PI = 2.0 * math.pi


# ------------------------------------------------------------- config

def test_default_config_matches_reference_device():
    cfg = default_config()
    ref = reference_params()
    assert cfg.params == ref


def test_hz_values_are_scaled_to_angular(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[lattice]\nomega_r = 5e9\nkappa = 2e6\n")
    cfg = load_config(p)
    assert cfg.params.omega_r == pytest.approx(TWO_PI * 5e9)
    assert cfg.params.kappa == pytest.approx(TWO_PI * 2e6)


def test_unknown_key_rejected(tmp_path):
    p = tmp_path / "c.ini"
    p.write_text("[lattice]\nomega_rr = 5e9\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_unknown_section_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[lattices]\nn_sites = 3\n")


def test_bad_value_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[lattice]\nn_sites = many\n")


def test_invalid_physics_rejected():
    with pytest.raises(ConfigError):
        parse_config_text("[lattice]\nkappa = 0\n")


def test_missing_file_rejected(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "absent.ini")


def test_output_site_defaults_to_last():
    cfg = parse_config_text("[lattice]\nn_sites = 7\n")
    assert cfg.params.output_site == 7


def test_shipped_configs_parse():
    import pathlib

    root = pathlib.Path(__file__).resolve().parents[1] / "configs"
    for name in ("reference72.ini", "linear_u0.ini", "telegraph_demo.ini"):
        cfg = load_config(root / name)
        assert cfg.source_text


# ------------------------------------------------------------- grid round trip

@pytest.fixture(scope="module")
def small_grid():
    p = reference_params(n_sites=2)
    freqs = np.array([p.omega_r - p.t_hop, p.omega_r + p.t_hop])
    powers = TWO_PI * np.geomspace(1e4, 1e5, 2)
    return frequency_power_map(p, freqs, powers, PROTOCOL_FRESH)


def test_grid_round_trip(tmp_path, small_grid):
    path = tmp_path / "grid.txt"
    write_grid(path, small_grid)
    assert open(path).readline().strip() == "# qchain-format 1"
    back = read_grid(path)
    assert back.protocol == small_grid.protocol
    assert np.allclose(back.freqs, small_grid.freqs)
    assert back.params == small_grid.params
    for r1, r2 in zip(back.cells, small_grid.cells):
        for c1, c2 in zip(r1, r2):
            assert c1.ratio == c2.ratio
            assert c1.classification == c2.classification
            assert c1.transmission_db == c2.transmission_db


def test_read_rejects_headerless_file(tmp_path):
    path = tmp_path / "bad.txt"
    path.write_text("1 2 3\n")
    with pytest.raises(FormatError):
        read_grid(path)


def test_read_rejects_wrong_kind(tmp_path, small_grid):
    path = tmp_path / "grid.txt"
    write_grid(path, small_grid)
    with pytest.raises(FormatError):
        read_trace(path)


# ------------------------------------------------------------- difference round trip

def test_difference_round_trip(tmp_path):
    p = reference_params(n_sites=2)
    freqs = np.array([p.omega_r])
    powers = TWO_PI * np.geomspace(1e4, 1e5, 2)
    hyst = two_seed_map(p, freqs, powers)
    path = tmp_path / "diff.txt"
    write_difference(path, hyst, "a", "b")
    f, pw, diff = read_difference(path)
    assert np.allclose(f, freqs)
    assert np.allclose(pw, powers)
    assert np.allclose(diff, hyst.difference, equal_nan=True)


# ------------------------------------------------------------- eigenmodes

def test_eigenmodes_round_trip(tmp_path):
    p = reference_params(n_sites=6)
    modes = chain_eigenmodes(p)
    path = tmp_path / "modes.txt"
    write_eigenmodes(path, modes.frequencies, modes.weights, p)
    freqs, weights = read_eigenmodes(path)
    assert np.allclose(freqs, modes.frequencies)
    assert np.allclose(weights, modes.weights[0])


# ------------------------------------------------------------- traces

def test_trace_round_trip(tmp_path):
    tr = simulate_telegraph(RatePair(100.0, 300.0), duration=0.002, dt=1e-5,
                            filter_cutoff=1e4, seed=1)
    tr.meta["seed"] = "1"
    path = tmp_path / "trace.txt"
    write_trace(path, tr)
    back = read_trace(path)
    assert back.dt == tr.dt
    assert back.filter_cutoff == tr.filter_cutoff
    assert np.allclose(back.i_samples, tr.i_samples)
    assert np.array_equal(back.truth_labels, tr.truth_labels)
    assert back.meta["seed"] == "1"


# ------------------------------------------------------------- manifests

def test_manifest_round_trip(tmp_path):
    art = tmp_path / "a.txt"
    art.write_text("hello\n")
    m = make_manifest("map --seed 1", "[lattice]\n", 1, [art])
    path = tmp_path / "manifest.json"
    m.write(path)
    back = RunManifest.read(path)
    assert back.command == "map --seed 1"
    assert back.config_hash == text_digest("[lattice]\n")
    assert back.artifact_digests["a.txt"] == file_digest(art)


def test_digest_is_content_addressed(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    a.write_text("same")
    b.write_text("same")
    assert file_digest(a) == file_digest(b)
    b.write_text("different")
    assert file_digest(a) != file_digest(b)
