"""Mean-field simulator and analysis toolkit for a driven-dissipative
cavity-qubit chain: steady-state maps, hysteresis protocols, eigenmode
analysis, and telegraph switching-rate extraction."""

from .config import ConfigError, RunConfig, default_config, load_config
from .engine import (
    CLASS_DIVERGED,
    CLASS_FIXED_POINT,
    CLASS_NON_STATIONARY,
    DivergenceError,
    IntegratorConfig,
    SteadyStateResult,
    classify_attractor,
    find_steady_state,
    integrate,
    linear_steady_state,
    mft_rhs,
)
from .io import FormatError, RunManifest, read_grid, read_trace, write_grid, write_trace
from .observables import (
    EigenmodeSet,
    chain_eigenmodes,
    g2_zero,
    map_u_sign,
    predict_emission_peaks,
    transmission,
)
from .params import (
    DriveSpec,
    LatticeParams,
    MeanFieldState,
    ParameterError,
    reference_params,
    validate,
)
from .sweeps import (
    CellSummary,
    HysteresisMap,
    SweepGrid,
    excited_seed,
    frequency_power_map,
    hysteresis_map,
    power_sweep,
    pulse_initialized_point,
    two_seed_map,
)
from .telegraph import (
    AdrEstimate,
    MonostablePoint,
    NoiseSpec,
    RatePair,
    TelegraphTrace,
    adr_from_rates,
    detect_bimodality,
    estimate_adr,
    fit_switching_time,
    homodyne_from_iq,
    rate_liouvillian,
    simulate_telegraph,
)

__version__ = "0.1.0"
