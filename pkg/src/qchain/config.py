"""INI configuration loading.

One self-describing file per run with sections [lattice], [drive], [sweep],
[analysis], [telegraph].  All frequencies, rates, and drive amplitudes are
given in ordinary Hz (nu = omega / 2pi); the loader multiplies by 2pi since
everything internal is angular.  Unknown sections or keys fail loudly so a
typo can never fall back to a silent default.
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field
from pathlib import Path

from .params import LatticeParams, ParameterError, validate

TWO_PI = 2.0 * math.pi


class ConfigError(ValueError):
    """The configuration file is missing, malformed, or violates the schema."""


# schema: section -> {key: (converter, default)}; defaults of None mean required
_LATTICE_SCHEMA = {
    "n_sites": (int, 72),
    "omega_r": (float, 7.5e9),        # Hz
    "omega_q": (float, 8.4e9),        # Hz
    "u_kerr": (float, -180e6),        # Hz
    "g_coupling": (float, 265e6),     # Hz
    "t_hop": (float, 144e6),          # Hz
    "kappa": (float, 1.6e6),          # Hz
    "gamma_q": (float, 1e6 / TWO_PI), # Hz (1e6 rad/s)
    "drive_site": (int, 1),
    "output_site": (int, None),       # default: last site
}
_ANGULAR_LATTICE_KEYS = ("omega_r", "omega_q", "u_kerr", "g_coupling",
                         "t_hop", "kappa", "gamma_q")

_DRIVE_SCHEMA = {
    "freq": (float, 7.5e9),        # Hz
    "epsilon": (float, 1e4),       # Hz
    "envelope": (str, "constant"),
    "duration": (float, 0.0),      # s
    "direction": (str, "up"),      # sweep subcommand
    "pulse": (str, "up"),          # pulse subcommand
}

_SWEEP_SCHEMA = {
    "freq_min": (float, 7.212e9),  # Hz
    "freq_max": (float, 7.788e9),  # Hz
    "n_freqs": (int, 49),
    "power_min": (float, 1e4),     # Hz, log-spaced power axis
    "power_max": (float, 1e9),     # Hz
    "n_powers": (int, 11),
    "protocol": (str, "fresh_start"),
    "seed": (int, 0),
}

_ANALYSIS_SCHEMA = {
    "rel_tol": (float, 1e-6),
    "t_transient": (float, 0.0),   # s; 0 -> protocol default
    "t_average": (float, 0.0),     # s; 0 -> protocol default
    "sigma_rel_threshold": (float, 1e-3),
    "n_samples": (int, 2000),
}

_TELEGRAPH_SCHEMA = {
    "gamma_12": (float, 50.0),     # 1/s
    "gamma_21": (float, 200.0),    # 1/s
    "n_traces": (int, 7),
    "duration": (float, 0.3),      # s
    "dt": (float, 2e-7),           # s
    "noise_sigma": (float, 0.2),
    "filter_cutoff": (float, 1.9e6),  # Hz
    "amp_low": (float, 1.0),
    "phase_low": (float, -1.0),
    "amp_high": (float, 1.0),
    "phase_high": (float, 1.0),
}

_SCHEMAS = {
    "lattice": _LATTICE_SCHEMA,
    "drive": _DRIVE_SCHEMA,
    "sweep": _SWEEP_SCHEMA,
    "analysis": _ANALYSIS_SCHEMA,
    "telegraph": _TELEGRAPH_SCHEMA,
}


@dataclass
class RunConfig:
    """Fully resolved configuration of one run."""

    params: LatticeParams
    drive: dict = field(default_factory=dict)
    sweep: dict = field(default_factory=dict)
    analysis: dict = field(default_factory=dict)
    telegraph: dict = field(default_factory=dict)
    source_text: str = ""

    def integrator_options(self) -> dict:
        """Nonzero [analysis] values as keyword overrides for the integrator."""
        opts = {"rel_tol": self.analysis["rel_tol"],
                "sigma_rel_threshold": self.analysis["sigma_rel_threshold"],
                "n_samples": self.analysis["n_samples"]}
        if self.analysis["t_transient"] > 0:
            opts["t_transient"] = self.analysis["t_transient"]
        if self.analysis["t_average"] > 0:
            opts["t_average"] = self.analysis["t_average"]
        return opts


def _parse_section(cp: configparser.ConfigParser, name: str) -> dict:
    schema = _SCHEMAS[name]
    out = {}
    if cp.has_section(name):
        for key in cp[name]:
            if key not in schema:
                raise ConfigError(f"unknown key [{name}] {key}")
    for key, (conv, default) in schema.items():
        if cp.has_section(name) and key in cp[name]:
            raw = cp[name][key]
            try:
                out[key] = conv(raw) if conv is not str else raw.strip()
            except ValueError as exc:
                raise ConfigError(f"bad value for [{name}] {key}: {raw!r}") from exc
        else:
            out[key] = default
    return out


def load_config(path: str | Path) -> RunConfig:
    """Load, validate, and resolve a configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_config_text(text)


def default_config() -> RunConfig:
    """All schema defaults: the reference 72-site device."""
    return parse_config_text("")


def parse_config_text(text: str) -> RunConfig:
    """Validate and resolve configuration text (see load_config)."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    for section in cp.sections():
        if section not in _SCHEMAS:
            raise ConfigError(f"unknown section [{section}]")

    lattice = _parse_section(cp, "lattice")
    drive = _parse_section(cp, "drive")
    sweep = _parse_section(cp, "sweep")
    analysis = _parse_section(cp, "analysis")
    telegraph = _parse_section(cp, "telegraph")

    if lattice["output_site"] is None:
        lattice["output_site"] = lattice["n_sites"]
    for key in _ANGULAR_LATTICE_KEYS:
        lattice[key] = TWO_PI * lattice[key]
    for key in ("freq", "epsilon"):
        drive[key] = TWO_PI * drive[key]
    for key in ("freq_min", "freq_max", "power_min", "power_max"):
        sweep[key] = TWO_PI * sweep[key]

    try:
        params = validate(LatticeParams(**lattice))
    except ParameterError as exc:
        raise ConfigError(f"invalid [lattice] values: {exc}") from exc
    if sweep["n_freqs"] < 1 or sweep["n_powers"] < 1:
        raise ConfigError("n_freqs and n_powers must be >= 1")
    if sweep["power_min"] <= 0 or sweep["power_max"] < sweep["power_min"]:
        raise ConfigError("power axis must satisfy 0 < power_min <= power_max")
    if telegraph["gamma_12"] < 0 or telegraph["gamma_21"] < 0 \
            or (telegraph["gamma_12"] == 0 and telegraph["gamma_21"] == 0):
        raise ConfigError("telegraph rates must be >= 0 and not both zero")

    return RunConfig(params=params, drive=drive, sweep=sweep,
                     analysis=analysis, telegraph=telegraph, source_text=text)
