"""Two-state switching model, synthetic telegraph traces, and rate recovery.

The slow dynamics between two metastable states is modeled as a classical
two-state Markov process with switching rates gamma_12 (low -> high) and
gamma_21 (high -> low).  The exact 4x4 Liouvillian of the corresponding
two-level quantum model factorizes into a population block (the classical
rate matrix) and a coherence block, giving the closed-form spectrum
{0, -gamma_sum, -gamma_sum/2 +- i*e_21}.

The analysis pipeline mirrors a homodyne measurement chain: quadratures ->
amplitude/phase -> bimodality detection -> threshold classification with
de-bounce -> dwell-time statistics -> censored exponential fit -> asymptotic
decay rate (ADR) = gamma_12 + gamma_21.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import find_peaks, lfilter

from .params import ParameterError

CENSOR_MEASURED = "measured"
CENSOR_FLOOR = "floor_at_1_over_tau_m"

CHANNEL_AMPLITUDE = "amplitude"
CHANNEL_PHASE = "phase"
CHANNEL_AUTO = "auto"


@dataclass(frozen=True)
class RatePair:
    """Switching rates between the two metastable states [1/s]."""

    gamma_12: float  # low -> high
    gamma_21: float  # high -> low

    def __post_init__(self):
        if self.gamma_12 < 0 or self.gamma_21 < 0:
            raise ParameterError("switching rates must be >= 0")
        if self.gamma_12 == 0 and self.gamma_21 == 0:
            raise ParameterError("switching rates must not both be zero")

    @property
    def total(self) -> float:
        return self.gamma_12 + self.gamma_21


@dataclass
class TelegraphTrace:
    """A sampled homodyne record of two-state switching.

    i_samples/q_samples hold the quadratures; truth_labels (synthetic traces
    only) hold the generating state (0 = low, 1 = high) at each sample.
    filter_cutoff is the single-pole low-pass cutoff applied to the
    quadratures [Hz]; it sets the de-bounce time scale downstream.
    """

    dt: float
    i_samples: np.ndarray
    q_samples: np.ndarray
    truth_labels: np.ndarray | None = None
    filter_cutoff: float = 0.0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.i_samples = np.asarray(self.i_samples, dtype=float)
        self.q_samples = np.asarray(self.q_samples, dtype=float)
        if self.dt <= 0:
            raise ParameterError("dt must be > 0")
        if self.i_samples.shape != self.q_samples.shape or self.i_samples.ndim != 1:
            raise ParameterError("i/q sample vectors must be equal-length 1-D arrays")
        if self.truth_labels is not None:
            self.truth_labels = np.asarray(self.truth_labels)
            if self.truth_labels.shape != self.i_samples.shape:
                raise ParameterError("truth_labels length must match samples")

    @property
    def duration(self) -> float:
        return self.i_samples.size * self.dt


@dataclass(frozen=True)
class NoiseSpec:
    """Measurement model for synthetic traces.

    level_means maps each state to its (amplitude, phase) mean; white Gaussian
    noise of standard deviation gaussian_sigma is added to each quadrature.
    """

    level_means: tuple[tuple[float, float], tuple[float, float]] = ((1.0, -1.0), (1.0, 1.0))
    gaussian_sigma: float = 0.2


@dataclass
class DwellHistogram:
    """Dwell-time histogram with non-uniform (merged geometric) bins."""

    bin_edges: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        self.bin_edges = np.asarray(self.bin_edges, dtype=float)
        self.counts = np.asarray(self.counts, dtype=int)
        if self.counts.size != self.bin_edges.size - 1:
            raise ParameterError("counts length must be len(bin_edges) - 1")
        if np.any(np.diff(self.bin_edges) <= 0):
            raise ParameterError("bin edges must be strictly increasing")
        if np.any(self.counts < 0):
            raise ParameterError("counts must be >= 0")


@dataclass
class DwellRecord:
    """Dwell times [s] per state; boundary dwells are censored."""

    complete_low: np.ndarray
    complete_high: np.ndarray
    censored_low: np.ndarray
    censored_high: np.ndarray

    def pooled(self, other: "DwellRecord") -> "DwellRecord":
        return DwellRecord(
            complete_low=np.concatenate([self.complete_low, other.complete_low]),
            complete_high=np.concatenate([self.complete_high, other.complete_high]),
            censored_low=np.concatenate([self.censored_low, other.censored_low]),
            censored_high=np.concatenate([self.censored_high, other.censored_high]),
        )


@dataclass(frozen=True)
class AdrEstimate:
    """Recovered switching rates and asymptotic decay rate."""

    rates: RatePair
    adr: float
    censoring: tuple[str, str]  # (gamma_12 flag, gamma_21 flag)
    channel: str = CHANNEL_AMPLITUDE

    def __post_init__(self):
        if not math.isclose(self.adr, self.rates.total, rel_tol=1e-12):
            raise ParameterError("adr must equal gamma_12 + gamma_21")


@dataclass(frozen=True)
class MonostablePoint:
    """Pipeline outcome when no bimodality is found in either channel."""

    channel: str = CHANNEL_AUTO


# ---------------------------------------------------------------------------
# Rate model
# ---------------------------------------------------------------------------

def rate_liouvillian(e_21: float, rates: RatePair) -> np.ndarray:
    """4x4 Liouvillian of the two-state model in the basis
    {|1><1|, |2><2|, |1><2|, |2><1|}.

    Block-diagonal: the population block is the classical rate matrix
    [[-g12, g21], [g12, -g21]]; the coherence block is
    diag(-g_sum/2 + i e_21, -g_sum/2 - i e_21).
    """
    g12, g21 = rates.gamma_12, rates.gamma_21
    gs = g12 + g21
    liou = np.zeros((4, 4), dtype=complex)
    liou[0, 0] = -g12
    liou[0, 1] = g21
    liou[1, 0] = g12
    liou[1, 1] = -g21
    liou[2, 2] = -0.5 * gs + 1j * e_21
    liou[3, 3] = -0.5 * gs - 1j * e_21
    return liou


def adr_from_rates(rates: RatePair) -> float:
    """Asymptotic decay rate: slowest nonzero relaxation rate, gamma_12 + gamma_21."""
    return rates.total


# ---------------------------------------------------------------------------
# Synthetic trace generation
# ---------------------------------------------------------------------------

def simulate_telegraph(
    rates: RatePair,
    duration: float,
    dt: float,
    noise: NoiseSpec = NoiseSpec(),
    filter_cutoff: float = 1.9e6,
    seed: int = 0,
    start_state: int | None = None,
) -> TelegraphTrace:
    """Sample a continuous-time two-state Markov chain into a homodyne record.

    Dwell times are exponential with means 1/gamma; each state maps to its
    (amplitude, phase) mean, white Gaussian noise is added per quadrature,
    and a single-pole low-pass at filter_cutoff shapes the record.
    Deterministic for a given seed.
    """
    if duration <= 0 or dt <= 0:
        raise ParameterError("duration and dt must be > 0")
    if filter_cutoff > 0 and dt >= 1.0 / filter_cutoff:
        raise ParameterError("dt must resolve the filter cutoff (dt < 1/filter_cutoff)")
    rng = np.random.default_rng(seed)

    g = (rates.gamma_12, rates.gamma_21)
    if start_state is None:
        # stationary occupancy (g21, g12)/g_sum
        p_low = rates.gamma_21 / rates.total
        state = 0 if rng.random() < p_low else 1
    else:
        state = int(start_state)

    # switching instants of the continuous-time chain
    switch_times = []
    states = [state]
    t = 0.0
    while True:
        rate = g[state]
        if rate <= 0:
            break  # absorbing state
        t += rng.exponential(1.0 / rate)
        if t >= duration:
            break
        switch_times.append(t)
        state = 1 - state
        states.append(state)

    n = int(round(duration / dt))
    sample_t = dt * np.arange(n)
    labels = np.asarray(states)[np.searchsorted(switch_times, sample_t, side="right")]

    amps = np.array([noise.level_means[0][0], noise.level_means[1][0]])
    phases = np.array([noise.level_means[0][1], noise.level_means[1][1]])
    i_clean = amps[labels] * np.sin(phases[labels])
    q_clean = amps[labels] * np.cos(phases[labels])
    i_noisy = i_clean + rng.normal(0.0, noise.gaussian_sigma, n)
    q_noisy = q_clean + rng.normal(0.0, noise.gaussian_sigma, n)

    if filter_cutoff > 0:
        a = math.exp(-2.0 * math.pi * filter_cutoff * dt)
        i_noisy = lfilter([1.0 - a], [1.0, -a], i_noisy)
        q_noisy = lfilter([1.0 - a], [1.0, -a], q_noisy)

    return TelegraphTrace(
        dt=dt,
        i_samples=i_noisy,
        q_samples=q_noisy,
        truth_labels=labels,
        filter_cutoff=filter_cutoff,
        meta={"seed": seed, "true_gamma_12": rates.gamma_12,
              "true_gamma_21": rates.gamma_21},
    )


# ---------------------------------------------------------------------------
# Homodyne & classification
# ---------------------------------------------------------------------------

ANALYSIS_BANDWIDTH = 50e3  # [Hz]


def downsample_trace(trace: TelegraphTrace,
                     analysis_bandwidth: float = ANALYSIS_BANDWIDTH) -> TelegraphTrace:
    """Boxcar-decimate a fast record to the dwell-analysis bandwidth.

    Switching rates of interest sit orders of magnitude below the raw
    detection bandwidth; averaging the quadratures over 1/(4 f_a) windows
    suppresses noise-induced threshold crossings without biasing any dwell
    longer than the de-bounce window.  Records already at or below the
    analysis bandwidth are returned unchanged.
    """
    if analysis_bandwidth <= 0:
        raise ParameterError("analysis_bandwidth must be > 0")
    window = 1.0 / (4.0 * analysis_bandwidth)
    m = int(window / trace.dt)
    if m <= 1:
        return trace
    n = (trace.i_samples.size // m) * m
    if n == 0:
        return trace
    i_ds = trace.i_samples[:n].reshape(-1, m).mean(axis=1)
    q_ds = trace.q_samples[:n].reshape(-1, m).mean(axis=1)
    labels = None
    if trace.truth_labels is not None:
        labels = trace.truth_labels[m // 2:n:m][: i_ds.size]
    cutoff = analysis_bandwidth
    if trace.filter_cutoff > 0:
        cutoff = min(trace.filter_cutoff, analysis_bandwidth)
    return TelegraphTrace(dt=m * trace.dt, i_samples=i_ds, q_samples=q_ds,
                          truth_labels=labels, filter_cutoff=cutoff,
                          meta=dict(trace.meta))


def homodyne_from_iq(i_samples, q_samples) -> tuple[np.ndarray, np.ndarray]:
    """Amplitude A = sqrt(I^2 + Q^2) and full-quadrant phase theta = atan2(I, Q).

    Argument order (I, Q) so that the convention table reads:
    (I,Q)=(0,1) -> theta=0; (1,1) -> pi/4; (-1,0) -> -pi/2.  A=0 -> theta=0.
    """
    i_arr = np.asarray(i_samples, dtype=float)
    q_arr = np.asarray(q_samples, dtype=float)
    amp = np.hypot(i_arr, q_arr)
    theta = np.arctan2(i_arr, q_arr)
    theta = np.where(amp == 0.0, 0.0, theta)
    return amp, theta


_HIST_BINS = 200
_SMOOTH_WINDOW = 5
_PEAK_PROMINENCE_FRAC = 0.10
_VALLEY_FRAC = 0.50


def _smoothed_histogram(samples: np.ndarray):
    counts, edges = np.histogram(samples, bins=_HIST_BINS)
    kernel = np.ones(_SMOOTH_WINDOW) / _SMOOTH_WINDOW
    smooth = np.convolve(counts.astype(float), kernel, mode="same")
    centers = 0.5 * (edges[:-1] + edges[1:])
    return smooth, centers


def detect_bimodality(samples) -> float | None:
    """Histogram-based bimodality test; returns the discriminating threshold.

    Declared convention: 200 bins, moving-average smoothing of window 5, two
    peaks each with prominence >= 10% of the maximum count, valley between
    them <= 50% of the lower peak.  Threshold = mean of the two peak
    locations.  Returns None when the distribution is not bimodal.
    """
    a = np.asarray(samples, dtype=float)
    if a.size < 1000:
        raise ParameterError("bimodality detection needs >= 1000 samples")
    if np.ptp(a) == 0.0:
        return None
    smooth, centers = _smoothed_histogram(a)
    peaks, props = find_peaks(smooth, prominence=_PEAK_PROMINENCE_FRAC * smooth.max())
    if peaks.size < 2:
        return None
    # two most prominent peaks
    order = np.argsort(props["prominences"])[::-1][:2]
    p1, p2 = sorted(peaks[order])
    valley = smooth[p1:p2 + 1].min()
    lower_peak = min(smooth[p1], smooth[p2])
    if valley > _VALLEY_FRAC * lower_peak:
        return None
    return float(0.5 * (centers[p1] + centers[p2]))


_DEBOUNCE_FILTER_CONSTANTS = 3.0


def _debounce_samples(trace: TelegraphTrace) -> int:
    """De-bounce window: a state change must persist >= 3 filter time constants."""
    if trace.filter_cutoff <= 0:
        return 1
    tau_f = 1.0 / (2.0 * math.pi * trace.filter_cutoff)
    return max(1, int(math.ceil(_DEBOUNCE_FILTER_CONSTANTS * tau_f / trace.dt)))


def _channel_samples(trace: TelegraphTrace, channel: str) -> np.ndarray:
    amp, theta = homodyne_from_iq(trace.i_samples, trace.q_samples)
    if channel == CHANNEL_AMPLITUDE:
        return amp
    if channel == CHANNEL_PHASE:
        return theta
    raise ParameterError(f"unknown channel {channel!r}")


def _counts_at_threshold(samples: np.ndarray, threshold: float) -> float:
    smooth, centers = _smoothed_histogram(samples)
    idx = int(np.argmin(np.abs(centers - threshold)))
    return float(smooth[idx])


def select_channel(trace: TelegraphTrace) -> tuple[str, float] | None:
    """Pick amplitude or phase by the fewest-histogram-counts-at-threshold rule.

    Returns (channel, threshold), or None when neither channel is bimodal.
    """
    best = None
    for channel in (CHANNEL_AMPLITUDE, CHANNEL_PHASE):
        samples = _channel_samples(trace, channel)
        thr = detect_bimodality(samples)
        if thr is None:
            continue
        score = _counts_at_threshold(samples, thr)
        if best is None or score < best[2]:
            best = (channel, thr, score)
    if best is None:
        return None
    return best[0], best[1]


def classify_and_dwell(
    trace: TelegraphTrace, threshold: float, channel: str = CHANNEL_AMPLITUDE
) -> DwellRecord:
    """Threshold the chosen channel into dwell intervals with de-bounce.

    A candidate state change is accepted only when the new state persists for
    at least 3 filter time constants; shorter excursions are folded into the
    surrounding dwell.  The final dwell is right-censored: the record ends
    before its switch is seen.  The first dwell, by contrast, ends with an
    observed switch; for a stationary (memoryless) process its length is a
    fresh exponential sample, so it counts as complete -- censoring it would
    discard one event per trace and bias slow rates upward.  A record that
    never crosses the threshold is one censored dwell in its single state.
    """
    samples = _channel_samples(trace, channel)
    raw = (samples > threshold).astype(np.int8)
    n_db = _debounce_samples(trace)

    # run-length encode, then fold runs shorter than the de-bounce window
    change = np.flatnonzero(np.diff(raw)) + 1
    starts = np.concatenate([[0], change])
    lengths = np.diff(np.concatenate([starts, [raw.size]]))
    states = raw[starts]

    kept_states = []
    kept_lengths = []
    for st, ln in zip(states, lengths):
        if kept_states and (ln < n_db or st == kept_states[-1]):
            # too short to count as a real transition (or same state): absorb
            kept_lengths[-1] += ln
        else:
            kept_states.append(int(st))
            kept_lengths.append(int(ln))
    # folding may have created adjacent equal states; merge once more
    merged_states: list[int] = []
    merged_lengths: list[int] = []
    for st, ln in zip(kept_states, kept_lengths):
        if merged_states and st == merged_states[-1]:
            merged_lengths[-1] += ln
        else:
            merged_states.append(st)
            merged_lengths.append(ln)

    dwells = np.asarray(merged_lengths, dtype=float) * trace.dt
    st_arr = np.asarray(merged_states)
    censored = np.zeros(dwells.size, dtype=bool)
    censored[-1] = True
    low, high = st_arr == 0, st_arr == 1
    return DwellRecord(
        complete_low=dwells[low & ~censored],
        complete_high=dwells[high & ~censored],
        censored_low=dwells[low & censored],
        censored_high=dwells[high & censored],
    )


# ---------------------------------------------------------------------------
# Dwell statistics
# ---------------------------------------------------------------------------

_MIN_BIN_COUNT = 5


def bin_dwells(dwells, min_count: int = _MIN_BIN_COUNT) -> DwellHistogram:
    """Geometric (octave) dwell-time bins, merged left-to-right so every
    emitted bin holds >= min_count dwells (a trailing light bin is folded
    into the previous one)."""
    d = np.asarray(dwells, dtype=float)
    if d.size == 0:
        raise ParameterError("bin_dwells needs at least one dwell")
    lo, hi = d.min(), d.max()
    if lo <= 0:
        raise ParameterError("dwell times must be > 0")
    if lo == hi:
        edges = np.array([lo * 0.5, hi * 1.5])
        return DwellHistogram(bin_edges=edges, counts=np.array([d.size]))
    n_oct = int(math.ceil(math.log2(hi / lo))) + 1
    raw_edges = lo * 2.0 ** np.arange(n_oct + 1)
    raw_edges[-1] = max(raw_edges[-1], hi * (1 + 1e-12))
    raw_counts, _ = np.histogram(d, bins=raw_edges)

    edges = [raw_edges[0]]
    counts: list[int] = []
    acc = 0
    for k, c in enumerate(raw_counts):
        acc += int(c)
        if acc >= min_count:
            counts.append(acc)
            edges.append(raw_edges[k + 1])
            acc = 0
    if acc > 0:
        if counts:
            counts[-1] += acc
            edges[-1] = raw_edges[-1]
        else:
            counts.append(acc)
            edges.append(raw_edges[-1])
    return DwellHistogram(bin_edges=np.asarray(edges), counts=np.asarray(counts))


FIT_MLE = "mle"
FIT_HISTOGRAM = "histogram"


def fit_switching_time(
    data, mode: str = FIT_MLE, censored=None
) -> float:
    """Characteristic switching time tau_c of exponential dwell data.

    mode='mle': right-censored maximum likelihood,
    tau_c = (sum of all dwell time, censored included) / (number of complete
    dwells).  mode='histogram': weighted least squares of log(count density)
    against bin centers of a DwellHistogram.
    """
    if mode == FIT_MLE:
        complete = np.asarray(data, dtype=float)
        if complete.size < 1:
            raise ParameterError("MLE fit needs at least one complete dwell")
        total = complete.sum()
        if censored is not None:
            total += np.asarray(censored, dtype=float).sum()
        return float(total / complete.size)
    if mode == FIT_HISTOGRAM:
        hist = data
        if not isinstance(hist, DwellHistogram):
            hist = bin_dwells(np.asarray(data, dtype=float))
        occupied = hist.counts > 0
        if occupied.sum() < 2:
            raise ParameterError("histogram fit needs >= 2 occupied bins")
        centers = 0.5 * (hist.bin_edges[:-1] + hist.bin_edges[1:])[occupied]
        widths = np.diff(hist.bin_edges)[occupied]
        density = hist.counts[occupied] / widths
        # weighted linear fit of log(density) = log(n0) - t/tau
        w = hist.counts[occupied].astype(float)  # Poisson weight ~ count
        coeffs = np.polyfit(centers, np.log(density), 1, w=np.sqrt(w))
        slope = coeffs[0]
        if slope >= 0:
            raise ParameterError("histogram fit found non-decaying dwell density")
        return float(-1.0 / slope)
    raise ParameterError(f"unknown fit mode {mode!r}")


# ---------------------------------------------------------------------------
# End-to-end ADR estimation
# ---------------------------------------------------------------------------

def estimate_adr(
    traces, channel: str = CHANNEL_AUTO, fit_mode: str = FIT_MLE,
    analysis_bandwidth: float = ANALYSIS_BANDWIDTH,
) -> AdrEstimate | MonostablePoint:
    """Full pipeline over a bundle of traces sharing drive conditions.

    Downsample to the analysis bandwidth -> homodyne -> bimodality ->
    threshold classification -> pooled dwell statistics -> censored
    exponential fits -> rates and ADR.  Rates below the resolution floor
    1/tau_m (tau_m = single-trace duration) are replaced by the smallest
    extracted rate exceeding the floor and flagged.
    """
    traces = [downsample_trace(t, analysis_bandwidth) for t in traces]
    if not traces:
        raise ParameterError("estimate_adr needs at least one trace")
    tau_m = traces[0].duration

    if channel == CHANNEL_AUTO:
        picked = select_channel(traces[0])
        if picked is None:
            return MonostablePoint()
        channel, threshold = picked
    else:
        threshold = detect_bimodality(_channel_samples(traces[0], channel))
        if threshold is None:
            return MonostablePoint(channel=channel)

    pooled: DwellRecord | None = None
    for trace in traces:
        rec = classify_and_dwell(trace, threshold, channel)
        pooled = rec if pooled is None else pooled.pooled(rec)

    def _rate(complete, censored):
        if complete.size < 1:
            return 0.0  # no complete dwell resolved: below floor by definition
        if fit_mode == FIT_MLE:
            tau = fit_switching_time(complete, FIT_MLE, censored=censored)
        else:
            tau = fit_switching_time(complete, FIT_HISTOGRAM)
        return 1.0 / tau

    # dwell in the low state ends with a low->high switch and vice versa
    gamma_12 = _rate(pooled.complete_low, pooled.censored_low)
    gamma_21 = _rate(pooled.complete_high, pooled.censored_high)

    floor = 1.0 / tau_m
    flags = [CENSOR_MEASURED, CENSOR_MEASURED]
    candidates = [r for r in (gamma_12, gamma_21) if r > floor]
    fallback = min(candidates) if candidates else floor
    if gamma_12 < floor:
        gamma_12, flags[0] = fallback, CENSOR_FLOOR
    if gamma_21 < floor:
        gamma_21, flags[1] = fallback, CENSOR_FLOOR

    rates = RatePair(gamma_12=gamma_12, gamma_21=gamma_21)
    return AdrEstimate(
        rates=rates, adr=rates.total, censoring=(flags[0], flags[1]),
        channel=channel,
    )
