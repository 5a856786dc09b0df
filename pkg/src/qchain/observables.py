"""Observables derived from steady states and trajectory tails.

Transmission in dB, the time-averaged second-order coherence g2(0),
eigenmodes of the bare hopping chain, the multimode-emission peak
prediction, and the interaction-sign mapping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal

from .engine import NON_STATIONARY, SteadyStateResult
from .params import DriveSpec, LatticeParams, validate

TRANSMISSION_FLOOR_DB = -200.0


def transmission(result: SteadyStateResult, reference: float) -> float:
    """Steady-state transmission 20*log10(|alpha_out| / reference) in dB.

    For non-stationary attractors the time-averaged magnitude <|alpha_out|>
    replaces |<alpha_out>| (a phase-coherent mean would wash out under
    chaotic dynamics).  The zero state maps to the -200 dB floor.
    """
    if reference <= 0:
        raise ValueError("reference must be > 0")
    mag = result.alpha_abs_mean if result.classification == NON_STATIONARY \
        else abs(result.alpha_out_mean)
    if mag <= 0:
        return TRANSMISSION_FLOOR_DB
    return max(20.0 * math.log10(mag / reference), TRANSMISSION_FLOOR_DB)


def g2_zero(alpha_tail: np.ndarray, fourth_moment: bool = False) -> float:
    """Time-averaged second-order coherence of the output amplitude.

    Default: <<|a|^2>>_t / <<|a|>>_t^2 computed on the tail samples.
    fourth_moment=True selects the variant <<|a|^4>>_t / <<|a|^2>>_t^2
    instead.  Returns NaN when the mean amplitude vanishes (undefined).
    """
    a = np.abs(np.asarray(alpha_tail))
    if a.size == 0:
        raise ValueError("empty trajectory tail")
    if fourth_moment:
        denom = float((a ** 2).mean()) ** 2
        num = float((a ** 4).mean())
    else:
        denom = float(a.mean()) ** 2
        num = float((a ** 2).mean())
    if denom == 0.0:
        return float("nan")
    return num / denom


@dataclass(frozen=True)
class EigenmodeSet:
    """Normal modes of the bare hopping chain.

    frequencies[mu] is the mode frequency, weights[j, mu] the weight of
    mode mu at site j; weights columns are orthonormal.
    """

    frequencies: np.ndarray
    weights: np.ndarray


def chain_eigenmodes(params: LatticeParams) -> EigenmodeSet:
    """Diagonalize the tridiagonal hopping matrix (diag omega_r, off-diag t).

    For the uniform open chain the closed form is
      frequencies[mu] = omega_r + 2 t cos(mu pi / (N+1)),   mu = 1..N
      weights[j, mu]  = sqrt(2/(N+1)) sin(j mu pi / (N+1)).
    Frequencies are returned sorted ascending.
    """
    validate(params)
    n = params.n_sites
    if n == 1:
        return EigenmodeSet(np.array([params.omega_r]), np.array([[1.0]]))
    freqs, vecs = eigh_tridiagonal(np.full(n, params.omega_r),
                                   np.full(n - 1, params.t_hop))
    return EigenmodeSet(freqs, vecs)


def predict_emission_peaks(params: LatticeParams) -> np.ndarray:
    """Predicted multimode emission comb: the chain eigenmode frequencies.

    Frequencies only; the qubit bath that redistributes emission among
    modes is treated qualitatively, so no amplitudes are predicted.
    """
    return chain_eigenmodes(params).frequencies.copy()


def map_u_sign(params: LatticeParams, drive: DriveSpec) -> tuple[LatticeParams, DriveSpec]:
    """Parameter transformation that flips the effective sign of u_kerr.

    Returns (params', drive') with
        omega_p' = 2 omega_r - omega_p
        omega_q' = 2 omega_r - omega_q   (detuning sign flip)
        g' = -g,  t' = -t,  epsilon' = -conj(epsilon)
    and u_kerr unchanged.  Steady states of (params', drive') run with
    -u_kerr are the complex conjugates of the original steady states, so
    |alpha_j|, |beta_j| profiles agree.  The caller supplies the -u_kerr
    run for comparison.
    """
    validate(params)
    p2 = params.replace(
        omega_q=2.0 * params.omega_r - params.omega_q,
        g_coupling=-params.g_coupling,
        t_hop=-params.t_hop,
    )
    d2 = DriveSpec(
        omega_p=2.0 * params.omega_r - drive.omega_p,
        epsilon=-complex(drive.epsilon).conjugate(),
        envelope=drive.envelope,
        start=-complex(drive.start).conjugate(),
        duration=drive.duration,
    )
    return p2, d2
