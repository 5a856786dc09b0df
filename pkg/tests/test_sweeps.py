import math

import numpy as np
import pytest

from qchain.params import ParameterError, reference_params
from qchain.sweeps import (
    PROTOCOL_FRESH,
    PROTOCOL_SWEEP_DOWN,
    PROTOCOL_SWEEP_UP,
    HysteresisMap,
    SweepGrid,
    frequency_power_map,
    hysteresis_map,
    power_sweep,
    pulse_initialized_point,
    two_seed_map,
)

TWO_PI = 2.0 * math.pi


@pytest.fixture(scope="module")
def small_params():
    return reference_params(n_sites=3)


@pytest.fixture(scope="module")
def linear_params():
    return reference_params(n_sites=3).replace(u_kerr=0.0)


def _axes(p, n_f=3, n_p=3, p_max=1e7):
    freqs = np.linspace(p.omega_r - p.t_hop, p.omega_r + p.t_hop, n_f)
    powers = TWO_PI * np.geomspace(1e4, p_max, n_p)
    return freqs, powers


def test_map_shape_and_reference(small_params):
    freqs, powers = _axes(small_params)
    grid = frequency_power_map(small_params, freqs, powers, PROTOCOL_FRESH)
    assert len(grid.cells) == 3 and len(grid.cells[0]) == 3
    # the reference is the largest lowest-power-row ratio, so the dB map
    # peaks at exactly 0 somewhere in that row
    low = [grid.cells[i][0].transmission_db for i in range(3)]
    assert max(low) == pytest.approx(0.0, abs=1e-9)


def test_map_is_deterministic(small_params):
    freqs, powers = _axes(small_params)
    g1 = frequency_power_map(small_params, freqs, powers, PROTOCOL_FRESH, seed=5)
    g2 = frequency_power_map(small_params, freqs, powers, PROTOCOL_FRESH, seed=5)
    for r1, r2 in zip(g1.cells, g2.cells):
        for c1, c2 in zip(r1, r2):
            assert c1.ratio == c2.ratio
            assert c1.classification == c2.classification


def test_map_parallel_matches_serial(small_params):
    freqs, powers = _axes(small_params)
    g1 = frequency_power_map(small_params, freqs, powers, PROTOCOL_FRESH, jobs=1)
    g2 = frequency_power_map(small_params, freqs, powers, PROTOCOL_FRESH, jobs=2)
    for r1, r2 in zip(g1.cells, g2.cells):
        for c1, c2 in zip(r1, r2):
            assert c1.ratio == c2.ratio


def test_low_power_cells_are_fixed_points(small_params):
    freqs, powers = _axes(small_params, p_max=1e5)
    grid = frequency_power_map(small_params, freqs, powers, PROTOCOL_FRESH)
    for row in grid.cells:
        for c in row:
            assert c.classification == "fixed_point"
            assert c.g2 == pytest.approx(1.0, abs=1e-3)


def test_linear_chain_shows_no_hysteresis(linear_params):
    freqs, powers = _axes(linear_params, p_max=1e8)
    hyst = hysteresis_map(linear_params, freqs, powers)
    assert hyst.hysteretic_cells(threshold_db=3.0) == []
    hyst2 = two_seed_map(linear_params, freqs, powers)
    assert hyst2.hysteretic_cells(threshold_db=3.0) == []


def test_power_sweep_orders_and_directions(small_params):
    p = small_params
    powers = TWO_PI * np.geomspace(1e4, 1e6, 4)
    up = power_sweep(p, p.omega_r, powers, "up")
    down = power_sweep(p, p.omega_r, powers, "down")
    assert [c.epsilon for c in up] == [c.epsilon for c in down]
    assert [c.epsilon for c in up] == sorted(c.epsilon for c in up)
    # in the weakly driven linear-response regime both directions agree
    for cu, cd in zip(up, down):
        assert cu.ratio == pytest.approx(cd.ratio, rel=1e-3)


def test_power_sweep_rejects_bad_direction(small_params):
    with pytest.raises(ParameterError):
        power_sweep(small_params, small_params.omega_r,
                    TWO_PI * np.array([1e4, 1e5]), "sideways")


def test_pulse_point_up_equals_low_power_fresh(small_params):
    p = small_params
    xi = TWO_PI * 1e4
    res = pulse_initialized_point(p, p.omega_r, xi, "up")
    assert res.classification == "fixed_point"
    res2 = pulse_initialized_point(p, p.omega_r, xi, "down")
    # one attractor at low power: both preparations land on it
    assert res.alpha_abs_mean == pytest.approx(res2.alpha_abs_mean, rel=1e-3)


def test_pulse_rejects_bad_kind(small_params):
    with pytest.raises(ParameterError):
        pulse_initialized_point(small_params, small_params.omega_r,
                                TWO_PI * 1e4, "sideways")


def test_grid_validation():
    p = reference_params(n_sites=2)
    with pytest.raises(ParameterError):
        SweepGrid(freqs=np.array([1.0]), powers=np.array([2.0, 1.0]),
                  cells=[[None, None]], protocol=PROTOCOL_FRESH, params=p)
    with pytest.raises(ParameterError):
        SweepGrid(freqs=np.array([1.0]), powers=np.array([1.0]),
                  cells=[], protocol=PROTOCOL_FRESH, params=p)


def test_hysteresis_map_requires_shared_axes(small_params):
    freqs, powers = _axes(small_params)
    g1 = frequency_power_map(small_params, freqs, powers, PROTOCOL_SWEEP_UP)
    g2 = frequency_power_map(small_params, freqs[:-1], powers, PROTOCOL_SWEEP_DOWN)
    with pytest.raises(ParameterError):
        HysteresisMap(grid_a=g1, grid_b=g2)
