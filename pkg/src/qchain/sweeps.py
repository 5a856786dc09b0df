"""Sweep protocols over drive frequency and power.

Builds transmission maps cell by cell from long-time integrations, with the
initial-state protocols needed to expose multistability: fresh starts from
vacuum, directional continuation sweeps, two-seed comparisons, and
pulse-initialized single points.

Transmission is reported per unit drive: each cell stores
|alpha_out| / |epsilon|, and map decibel values are normalized to the largest
such ratio in the lowest-power row, so a map reads in dB relative to the
strongest low-power peak.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import (
    CLASS_DIVERGED,
    CLASS_FIXED_POINT,
    CLASS_NON_STATIONARY,
    DivergenceError,
    IntegratorConfig,
    SteadyStateResult,
    find_steady_state,
    linear_steady_state,
)
from .observables import g2_zero
from .params import DriveSpec, LatticeParams, MeanFieldState, ParameterError

PROTOCOL_FRESH = "fresh_start"
PROTOCOL_SWEEP_UP = "sweep_up"
PROTOCOL_SWEEP_DOWN = "sweep_down"
PROTOCOL_SEED_VACUUM = "seed_vacuum"
PROTOCOL_SEED_EXCITED = "seed_excited"

_PROTOCOLS = (
    PROTOCOL_FRESH,
    PROTOCOL_SWEEP_UP,
    PROTOCOL_SWEEP_DOWN,
    PROTOCOL_SEED_VACUUM,
    PROTOCOL_SEED_EXCITED,
)

#: dB value reported for cells whose mean output amplitude is exactly zero.
TRANSMISSION_FLOOR_DB = -200.0


@dataclass
class CellSummary:
    """Per-cell record of a map: what happened at one (frequency, power)."""

    freq: float                # drive frequency [rad/s]
    epsilon: float             # drive amplitude |eps| [rad/s]
    classification: str        # fixed_point | non_stationary | diverged
    ratio: float               # time-averaged |alpha_out| / |eps|; NaN if diverged
    g2: float                  # second-moment g2(0) of the tail; NaN if diverged
    g2_fourth: float           # fourth-moment variant; NaN if diverged
    transmission_db: float = float("nan")  # filled once the map reference is known

    @property
    def diverged(self) -> bool:
        return self.classification == CLASS_DIVERGED


@dataclass
class SweepGrid:
    """Frequency x power map of steady-state summaries."""

    freqs: np.ndarray          # [rad/s], shape (F,)
    powers: np.ndarray         # drive amplitudes |eps| [rad/s], shape (P,), increasing
    cells: list                # list of F lists of P CellSummary
    protocol: str
    params: LatticeParams
    reference_ratio: float = float("nan")

    def __post_init__(self):
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.powers = np.asarray(self.powers, dtype=float)
        if self.protocol not in _PROTOCOLS:
            raise ParameterError(f"unknown protocol {self.protocol!r}")
        if self.freqs.size == 0 or self.powers.size == 0:
            raise ParameterError("sweep axes must be nonempty")
        if np.any(np.diff(self.powers) <= 0):
            raise ParameterError("powers must be strictly increasing")
        if len(self.cells) != self.freqs.size or any(
            len(row) != self.powers.size for row in self.cells
        ):
            raise ParameterError("cells shape must be |freqs| x |powers|")

    def transmission_matrix(self) -> np.ndarray:
        """(F, P) array of transmission in dB (NaN for diverged cells)."""
        return np.array(
            [[c.transmission_db for c in row] for row in self.cells], dtype=float
        )

    def classification_matrix(self) -> np.ndarray:
        return np.array(
            [[c.classification for c in row] for row in self.cells], dtype=object
        )

    def g2_matrix(self, fourth_moment: bool = False) -> np.ndarray:
        if fourth_moment:
            return np.array([[c.g2_fourth for c in row] for row in self.cells])
        return np.array([[c.g2 for c in row] for row in self.cells])


@dataclass
class HysteresisMap:
    """Pair of sweeps over identical axes plus their cellwise dB difference."""

    grid_a: SweepGrid
    grid_b: SweepGrid
    difference: np.ndarray = field(default=None)

    def __post_init__(self):
        if not np.array_equal(self.grid_a.freqs, self.grid_b.freqs) or not np.array_equal(
            self.grid_a.powers, self.grid_b.powers
        ):
            raise ParameterError("hysteresis grids must share axes")
        if self.difference is None:
            # Compare raw per-drive ratios, not the per-grid normalized dB
            # values: the two grids may have different low-row references.
            ra = np.array([[c.ratio for c in row] for row in self.grid_a.cells])
            rb = np.array([[c.ratio for c in row] for row in self.grid_b.cells])
            with np.errstate(divide="ignore", invalid="ignore"):
                self.difference = 20.0 * np.log10(ra / rb)

    def hysteretic_cells(self, threshold_db: float = 3.0) -> list:
        """Indices (i_freq, i_power) where |difference| exceeds the threshold."""
        out = []
        for i in range(self.difference.shape[0]):
            for k in range(self.difference.shape[1]):
                d = self.difference[i, k]
                if np.isfinite(d) and abs(d) > threshold_db:
                    out.append((i, k))
        return out


def _cell_config(
    params: LatticeParams, epsilon: float, options: dict | None
) -> IntegratorConfig:
    opts = dict(options or {})
    return IntegratorConfig.for_params(params, **opts)


def excited_seed(
    params: LatticeParams, drive: DriveSpec, seed: int
) -> MeanFieldState:
    """Highly excited initial state for attractor-selection protocols.

    Cavity amplitudes are set to 10x the largest linear-response amplitude at
    this drive, with independent random phases drawn from `seed`; qubit
    amplitudes start at zero.
    """
    linear = linear_steady_state(params.replace(u_kerr=0.0), drive)
    a_seed = 10.0 * float(np.abs(linear.alpha).max())
    rng = np.random.default_rng(seed)
    phases = rng.uniform(0.0, 2.0 * np.pi, params.n_sites)
    alpha = a_seed * np.exp(1j * phases)
    beta = np.zeros(params.n_sites, dtype=complex)
    return MeanFieldState(alpha=alpha, beta=beta)


def _summarize(
    freq: float, epsilon: float, result: SteadyStateResult
) -> CellSummary:
    return CellSummary(
        freq=freq,
        epsilon=epsilon,
        classification=result.classification,
        ratio=result.alpha_abs_mean / epsilon,
        g2=g2_zero(result.alpha_out_tail),
        g2_fourth=g2_zero(result.alpha_out_tail, fourth_moment=True),
    )


def _diverged_cell(freq: float, epsilon: float) -> CellSummary:
    nan = float("nan")
    return CellSummary(
        freq=freq,
        epsilon=epsilon,
        classification=CLASS_DIVERGED,
        ratio=nan,
        g2=nan,
        g2_fourth=nan,
    )


# Per-cell integration protocol.  Chaotic cells accumulate a slow numerical
# heating that grows with rel_tol and integration time, so cells run with a
# short window first; cells that look non-stationary but whose fluctuation
# level is still decaying (a slowly ringing fixed point, time scale 2/gamma_q)
# are extended rather than run long unconditionally.  A divergence triggers a
# retry at tighter tolerance before the cell is marked diverged.
_CELL_REL_TOL = 1e-6
_RETRY_ATTEMPTS = 3
_RETRY_SHRINK = 4.0
_SETTLING_RATIO = 0.75
_MAX_EXTENSIONS = 3


def _tail_settling(tail: np.ndarray) -> bool:
    """True when fluctuations in the record's second half are markedly smaller
    than in its first half, i.e. the cell is still ringing down."""
    a = np.abs(tail)
    half = a.size // 2
    s_first = float(a[:half].std())
    s_second = float(a[half:].std())
    if s_first <= 0.0:
        return False
    return s_second < _SETTLING_RATIO * s_first


def _run_cell(
    params: LatticeParams,
    freq: float,
    epsilon: float,
    state0: MeanFieldState,
    options: dict | None,
) -> tuple[CellSummary, MeanFieldState | None]:
    drive = DriveSpec(omega_p=freq, epsilon=complex(epsilon))
    opts = dict(options or {})
    opts.setdefault("rel_tol", _CELL_REL_TOL)
    opts.setdefault("t_transient", 20.0 / params.kappa)
    opts.setdefault("t_average", 20.0 / params.kappa)

    result = None
    rel_tol = opts["rel_tol"]
    for _ in range(_RETRY_ATTEMPTS):
        config = IntegratorConfig.for_params(params, **{**opts, "rel_tol": rel_tol})
        try:
            result = find_steady_state(params, drive, state0, config)
            break
        except DivergenceError:
            rel_tol /= _RETRY_SHRINK
    if result is None:
        return _diverged_cell(freq, epsilon), None

    ext_opts = {**opts, "rel_tol": rel_tol, "t_transient": 60.0 / params.kappa}
    for _ in range(_MAX_EXTENSIONS):
        if result.classification != CLASS_NON_STATIONARY:
            break
        if not _tail_settling(result.alpha_out_tail):
            break
        config = IntegratorConfig.for_params(params, **ext_opts)
        try:
            result = find_steady_state(params, drive, result.final_state, config)
        except DivergenceError:
            break  # keep the statistics gathered before the numerical failure
    return _summarize(freq, epsilon, result), result.final_state


def _apply_reference(grid: SweepGrid) -> None:
    """Normalize all cells to the strongest lowest-power-row ratio."""
    low = [row[0].ratio for row in grid.cells if np.isfinite(row[0].ratio)]
    ref = max(low) if low else float("nan")
    grid.reference_ratio = ref
    for row in grid.cells:
        for cell in row:
            if not np.isfinite(cell.ratio) or not np.isfinite(ref) or ref <= 0:
                cell.transmission_db = float("nan")
            elif cell.ratio <= 0:
                cell.transmission_db = TRANSMISSION_FLOOR_DB
            else:
                cell.transmission_db = 20.0 * np.log10(cell.ratio / ref)


def _map_row(
    params: LatticeParams,
    freq: float,
    powers: np.ndarray,
    protocol: str,
    integrator_options: dict | None,
    seed: int,
) -> list:
    """All cells of one frequency row (the unit of parallel work)."""
    if protocol in (PROTOCOL_SWEEP_UP, PROTOCOL_SWEEP_DOWN):
        direction = "up" if protocol == PROTOCOL_SWEEP_UP else "down"
        return power_sweep(
            params, freq, powers, direction,
            integrator_options=integrator_options, seed=seed,
        )
    row = []
    for eps in powers:
        if protocol == PROTOCOL_SEED_EXCITED:
            drive = DriveSpec(omega_p=float(freq), epsilon=complex(eps))
            state0 = excited_seed(params, drive, seed)
        else:
            state0 = MeanFieldState.vacuum(params.n_sites)
        cell, _ = _run_cell(params, float(freq), float(eps), state0, integrator_options)
        row.append(cell)
    return row


def frequency_power_map(
    params: LatticeParams,
    freqs,
    powers,
    protocol: str = PROTOCOL_FRESH,
    integrator_options: dict | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> SweepGrid:
    """Run one steady-state extraction per (frequency, power) cell.

    fresh_start and seed_vacuum start every cell from vacuum; seed_excited
    starts every cell from the excited seed; sweep_up / sweep_down chain cells
    along the power axis with state continuation per frequency.  Frequency
    rows are independent; jobs > 1 runs them in a process pool.
    """
    freqs = np.asarray(freqs, dtype=float)
    powers = np.asarray(powers, dtype=float)
    if protocol not in _PROTOCOLS:
        raise ParameterError(f"unknown protocol {protocol!r}")
    if jobs > 1 and freqs.size > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(
                _map_row,
                [params] * freqs.size,
                [float(f) for f in freqs],
                [powers] * freqs.size,
                [protocol] * freqs.size,
                [integrator_options] * freqs.size,
                [seed] * freqs.size,
            ))
    else:
        rows = [_map_row(params, float(f), powers, protocol,
                         integrator_options, seed) for f in freqs]
    grid = SweepGrid(freqs, powers, rows, protocol, params)
    _apply_reference(grid)
    return grid


def power_sweep(
    params: LatticeParams,
    freq: float,
    powers,
    direction: str,
    integrator_options: dict | None = None,
    seed: int = 0,
) -> list:
    """Directional power sweep with state continuation at fixed frequency.

    The up sweep starts from vacuum at the lowest power.  The down sweep
    starts at the highest power from the excited seed (the reproducible
    stand-in for "arriving from high power"), then tracks the attractor it
    lands on downward by continuation.  Once a step diverges, the remaining
    steps are flagged as diverged: the continuation chain is broken and cannot
    be resumed honestly, so grids should keep the top power inside the bounded
    regime if a complete down branch is wanted.

    Returns cells in ascending-power order regardless of direction.
    """
    powers = np.asarray(powers, dtype=float)
    if powers.size == 0:
        raise ParameterError("power axis must be nonempty")
    if np.any(np.diff(powers) <= 0):
        raise ParameterError("powers must be strictly increasing")
    if direction not in ("up", "down"):
        raise ParameterError(f"direction must be 'up' or 'down', got {direction!r}")

    order = range(powers.size) if direction == "up" else range(powers.size - 1, -1, -1)
    order = list(order)
    if direction == "up":
        state = MeanFieldState.vacuum(params.n_sites)
    else:
        top_drive = DriveSpec(omega_p=float(freq), epsilon=complex(powers[-1]))
        state = excited_seed(params, top_drive, seed)

    cells: list = [None] * powers.size
    broken = False
    for k in order:
        eps = float(powers[k])
        if broken:
            cells[k] = _diverged_cell(float(freq), eps)
            continue
        cell, final_state = _run_cell(params, float(freq), eps, state, integrator_options)
        cells[k] = cell
        if final_state is None:
            broken = True
        else:
            state = final_state
    return cells


def hysteresis_map(
    params: LatticeParams,
    freqs,
    powers,
    integrator_options: dict | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> HysteresisMap:
    """Up-minus-down continuation sweeps over a (frequency, power) grid."""
    up = frequency_power_map(
        params, freqs, powers, PROTOCOL_SWEEP_UP,
        integrator_options=integrator_options, seed=seed, jobs=jobs,
    )
    down = frequency_power_map(
        params, freqs, powers, PROTOCOL_SWEEP_DOWN,
        integrator_options=integrator_options, seed=seed, jobs=jobs,
    )
    return HysteresisMap(grid_a=up, grid_b=down)


def two_seed_map(
    params: LatticeParams,
    freqs,
    powers,
    integrator_options: dict | None = None,
    seed: int = 0,
    jobs: int = 1,
) -> HysteresisMap:
    """Vacuum-seed minus excited-seed fresh runs over the same grid."""
    vac = frequency_power_map(
        params, freqs, powers, PROTOCOL_SEED_VACUUM,
        integrator_options=integrator_options, seed=seed, jobs=jobs,
    )
    exc = frequency_power_map(
        params, freqs, powers, PROTOCOL_SEED_EXCITED,
        integrator_options=integrator_options, seed=seed, jobs=jobs,
    )
    return HysteresisMap(grid_a=vac, grid_b=exc)


def pulse_initialized_point(
    params: LatticeParams,
    freq: float,
    xi: float,
    pulse: str,
    pulse_duration: float | None = None,
    pulse_amplitude: float | None = None,
    integrator_options: dict | None = None,
) -> SteadyStateResult:
    """Measure at amplitude xi after an initializing ramp.

    pulse='up' ramps the drive from zero up to xi (selects the attractor
    reachable from below); pulse='down' ramps from `pulse_amplitude`
    (default 10x xi) down to xi (selects the attractor reachable from above).
    The steady-state transient window starts only after the ramp ends.
    """
    if pulse not in ("up", "down"):
        raise ParameterError(f"pulse must be 'up' or 'down', got {pulse!r}")
    if xi < 0:
        raise ParameterError("xi must be >= 0")
    config = _cell_config(params, max(xi, 1e-30), integrator_options)
    duration = pulse_duration if pulse_duration is not None else 20.0 / params.kappa
    if pulse == "up":
        drive = DriveSpec(
            omega_p=float(freq), epsilon=complex(xi),
            envelope="up_pulse", duration=duration,
        )
    else:
        start = complex(pulse_amplitude) if pulse_amplitude is not None else 10.0 * complex(xi)
        drive = DriveSpec(
            omega_p=float(freq), epsilon=complex(xi),
            envelope="down_pulse", start=start, duration=duration,
        )
    state0 = MeanFieldState.vacuum(params.n_sites)
    return find_steady_state(params, drive, state0, config, settle_offset=duration)
