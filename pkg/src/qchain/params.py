"""Physical parameters, drive specification, and mean-field state containers.

All frequencies and rates are stored internally as angular quantities
[rad/s].  Configuration files and the CLI accept ordinary frequencies
nu = omega / 2pi in Hz; the loader multiplies by 2pi (see config.py).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

TWO_PI = 2.0 * math.pi


class ParameterError(ValueError):
    """A lattice/drive parameter violates one of its invariants."""


@dataclass(frozen=True)
class LatticeParams:
    """All physical rates of the cavity-qubit chain, in angular units.

    Site indices (drive_site, output_site) are 1-based, matching the
    usual labeling of the chain ends as 1 and N.
    """

    n_sites: int
    omega_r: float      # cavity frequency [rad/s]
    omega_q: float      # qubit frequency [rad/s]
    u_kerr: float       # Kerr/Hubbard interaction, may be negative [rad/s]
    g_coupling: float   # qubit-cavity coupling [rad/s]
    t_hop: float        # nearest-neighbor hopping [rad/s]
    kappa: float        # photon loss rate [1/s]
    gamma_q: float      # qubit relaxation rate [1/s]
    drive_site: int = 1
    output_site: int = 1

    def to_dict(self) -> dict:
        return {
            "n_sites": self.n_sites,
            "omega_r": self.omega_r,
            "omega_q": self.omega_q,
            "u_kerr": self.u_kerr,
            "g_coupling": self.g_coupling,
            "t_hop": self.t_hop,
            "kappa": self.kappa,
            "gamma_q": self.gamma_q,
            "drive_site": self.drive_site,
            "output_site": self.output_site,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "LatticeParams":
        return cls(**d)

    def replace(self, **kw) -> "LatticeParams":
        return replace(self, **kw)


def reference_params(n_sites: int = 72, output_site: int | None = None) -> LatticeParams:
    """Reference device parameters for the 72-site chain.

    nu = omega/2pi values: cavity 7.5 GHz, qubit 8.4 GHz (mid-band of the
    fabricated 8-8.8 GHz spread; the model chain is uniform), hopping
    144 MHz, coupling 265 MHz, Kerr U/2pi = -180 MHz (U = -E_C), photon
    loss 1.6 MHz.  Qubit relaxation is 1/T1 with T1 = 1 us.
    """
    if output_site is None:
        output_site = n_sites
    return LatticeParams(
        n_sites=n_sites,
        omega_r=TWO_PI * 7.5e9,
        omega_q=TWO_PI * 8.4e9,
        u_kerr=-TWO_PI * 180e6,
        g_coupling=TWO_PI * 265e6,
        t_hop=TWO_PI * 144e6,
        kappa=TWO_PI * 1.6e6,
        gamma_q=1.0 / 1e-6,
        drive_site=1,
        output_site=output_site,
    )


def validate(params: LatticeParams) -> LatticeParams:
    """Check all invariants; return the record unchanged if they hold.

    Raises ParameterError naming the violated invariant.  Idempotent and
    total on finite inputs.
    """
    p = params
    if not isinstance(p.n_sites, (int, np.integer)) or p.n_sites < 1:
        raise ParameterError(f"n_sites must be a positive integer, got {p.n_sites!r}")
    for name in ("omega_r", "omega_q", "u_kerr", "g_coupling", "t_hop", "kappa", "gamma_q"):
        v = getattr(p, name)
        if not math.isfinite(v):
            raise ParameterError(f"{name} must be finite, got {v!r}")
    if p.kappa <= 0:
        raise ParameterError(
            f"kappa must be > 0 (lossless chain has no steady state by time evolution), got {p.kappa!r}"
        )
    if p.gamma_q < 0:
        raise ParameterError(f"gamma_q must be >= 0, got {p.gamma_q!r}")
    for name in ("drive_site", "output_site"):
        s = getattr(p, name)
        if not isinstance(s, (int, np.integer)) or not (1 <= s <= p.n_sites):
            raise ParameterError(f"{name} out of range: {s!r} not in [1, {p.n_sites}]")
    return p


# Drive envelope kinds.  All envelopes ramp (or stay) during an initial
# window of length `duration` and are constant equal to `epsilon` afterwards.
ENV_CONSTANT = "constant"
ENV_UP_PULSE = "up_pulse"
ENV_DOWN_PULSE = "down_pulse"
ENV_LINEAR_RAMP = "linear_ramp"

_ENVELOPES = (ENV_CONSTANT, ENV_UP_PULSE, ENV_DOWN_PULSE, ENV_LINEAR_RAMP)


@dataclass(frozen=True)
class DriveSpec:
    """Coherent drive on the drive site: frequency, amplitude, envelope.

    envelope:
      constant               -- amplitude epsilon for all t
      up_pulse               -- ramp 0 -> epsilon over `duration`, then hold
      down_pulse             -- ramp `start` -> epsilon over `duration`, then hold
                                (start defaults to 10x |epsilon|)
      linear_ramp            -- ramp `start` -> `stop` over `duration`, then hold
                                at `stop` (epsilon must equal stop)
    """

    omega_p: float             # drive frequency [rad/s]
    epsilon: complex           # final/constant drive amplitude [rad/s]
    envelope: str = ENV_CONSTANT
    start: complex = 0.0 + 0.0j
    duration: float = 0.0

    def __post_init__(self):
        if self.envelope not in _ENVELOPES:
            raise ParameterError(f"unknown envelope {self.envelope!r}")
        if not math.isfinite(self.omega_p):
            raise ParameterError("omega_p must be finite")
        if not (math.isfinite(self.epsilon.real) and math.isfinite(self.epsilon.imag)):
            raise ParameterError("epsilon must be finite")
        if self.envelope != ENV_CONSTANT and self.duration <= 0:
            raise ParameterError(f"{self.envelope} envelope requires duration > 0")

    def ramp_endpoints(self) -> tuple[complex, complex, float]:
        """Return (e_initial, e_final, t_ramp) describing epsilon(t).

        epsilon(t) interpolates linearly from e_initial to e_final over
        [0, t_ramp] and equals e_final afterwards; t_ramp = 0 means
        constant drive.
        """
        eps = complex(self.epsilon)
        if self.envelope == ENV_CONSTANT:
            return eps, eps, 0.0
        if self.envelope == ENV_UP_PULSE:
            return 0.0 + 0.0j, eps, self.duration
        if self.envelope == ENV_DOWN_PULSE:
            start = complex(self.start) if self.start != 0 else 10.0 * eps
            return start, eps, self.duration
        return complex(self.start), eps, self.duration

    def epsilon_at(self, t: float) -> complex:
        e0, e1, tr = self.ramp_endpoints()
        if tr <= 0.0 or t >= tr:
            return e1
        if t <= 0.0:
            return e0
        return e0 + (e1 - e0) * (t / tr)


@dataclass
class MeanFieldState:
    """The 2N complex amplitudes (alpha_j = <a_j>, beta_j = <b_j>)."""

    alpha: np.ndarray
    beta: np.ndarray

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=np.complex128)
        self.beta = np.asarray(self.beta, dtype=np.complex128)
        if self.alpha.ndim != 1 or self.beta.ndim != 1:
            raise ParameterError("alpha and beta must be 1-D vectors")
        if self.alpha.shape != self.beta.shape:
            raise ParameterError("alpha and beta must have equal length")
        if not (np.all(np.isfinite(self.alpha.view(np.float64)))
                and np.all(np.isfinite(self.beta.view(np.float64)))):
            raise ParameterError("non-finite amplitude in MeanFieldState")

    @property
    def n_sites(self) -> int:
        return self.alpha.shape[0]

    @classmethod
    def vacuum(cls, n_sites: int) -> "MeanFieldState":
        return cls(np.zeros(n_sites, np.complex128), np.zeros(n_sites, np.complex128))

    @classmethod
    def from_vector(cls, y: np.ndarray) -> "MeanFieldState":
        n = y.shape[0] // 2
        return cls(y[:n].copy(), y[n:].copy())

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.alpha, self.beta])

    def copy(self) -> "MeanFieldState":
        return MeanFieldState(self.alpha.copy(), self.beta.copy())
