"""Transfer functions to calibrated, averaged, thresholded and gated PDPs.

Normalisation convention: the impulse response is the unitary IFFT of the
(windowed, zero-padded) transfer function divided by sqrt(N_f), so that the
summed PDP equals the band-averaged power gain ``mean_k |H_k|^2``. The
Kaiser window is scaled to unit mean-square, which keeps that sum unchanged
for a single path.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Mapping, Sequence

import numpy as np

from .core import SPEED_OF_LIGHT, LinkGeometry, LosState, WaveformSpec
from .waveform import generate_multitone

log = logging.getLogger(__name__)

KAISER_BROADENING = 1.2
DEFAULT_OVERSAMPLE = 10


@dataclass(frozen=True)
class TransferFunctionSnapshot:
    """Frequency response of one (snapshot, receiver) link.

    ``H`` is ``(R, N_f)`` for raw per-repetition data, ``(N_f,)`` once averaged,
    and ``(oversample * N_f,)`` after windowing and zero-padding.
    """

    H: np.ndarray
    spec: WaveformSpec
    m: int = 0
    j: int = 0
    timestamp: float = 0.0
    repetition_count: int = 1
    window_beta: float | None = None
    oversample: int = 1

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.shape[-1] != self.spec.n_subcarriers * self.oversample:
            raise ValueError(
                f"H has {H.shape[-1]} bins, expected {self.spec.n_subcarriers * self.oversample}")
        if not np.all(np.isfinite(H)):
            raise ValueError("non-finite transfer function values")
        object.__setattr__(self, "H", H)

    @property
    def active(self) -> np.ndarray:
        """Occupied subcarriers (last axis cropped to N_f)."""
        return self.H[..., : self.spec.n_subcarriers]


@dataclass(frozen=True)
class CalibrationRecord:
    H_cal: np.ndarray
    tx_port: int = 0
    rx_port: int = 0

    def __post_init__(self):
        H = np.asarray(self.H_cal, dtype=complex)
        if np.any(np.abs(H) == 0):
            raise ValueError("zero calibration bin inside passband")
        object.__setattr__(self, "H_cal", H)

    @classmethod
    def identity(cls, n: int) -> "CalibrationRecord":
        return cls(np.ones(n, dtype=complex))


@dataclass(frozen=True)
class ThresholdConfig:
    delta_n_db: float = 7.0
    delta_dr_db: float = 20.0
    gate_distance: float = 343.0
    precursor_guard_bins: int = 4
    ssa_window: float = 0.5
    pg_window_wavelengths: float = 20.0
    noise_region: tuple = (0.8, 1.0)

    def __post_init__(self):
        for name in ("delta_n_db", "delta_dr_db", "gate_distance", "precursor_guard_bins",
                     "ssa_window", "pg_window_wavelengths"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        lo, hi = self.noise_region
        if not 0 <= lo < hi <= 1:
            raise ValueError("noise_region must be a sub-interval of [0, 1]")

    @property
    def gate_delay(self) -> float:
        return self.gate_distance / SPEED_OF_LIGHT


@dataclass(frozen=True)
class PowerDelayProfile:
    power: np.ndarray
    delay_bin: float
    oversample: int = 1
    resolution: float | None = None
    noise_floor: float | None = None
    threshold: float | None = None
    gate_delay: float | None = None
    window: int | None = None
    dynamic_range_db: float | None = None
    peak_fraction: float | None = None

    def __post_init__(self):
        p = np.asarray(self.power, dtype=float)
        if np.any(p < 0):
            raise ValueError("PDP must be non-negative")
        object.__setattr__(self, "power", p)
        if self.resolution is None:
            object.__setattr__(self, "resolution", self.delay_bin * self.oversample)

    @property
    def delays(self) -> np.ndarray:
        return np.arange(len(self.power)) * self.delay_bin

    @property
    def total_power(self) -> float:
        return float(self.power.sum())

    @property
    def is_empty(self) -> bool:
        return not np.any(self.power > 0)


# -- pre-processing ------------------------------------------------------

def kaiser_window(n: int, beta: float) -> np.ndarray:
    """Kaiser-Bessel taper scaled to unit mean-square."""
    w = np.kaiser(n, beta)
    return w / np.sqrt(np.mean(w ** 2))


def crop_subcarriers(spectra: np.ndarray, n_subcarriers: int) -> np.ndarray:
    """Pick the occupied FFT bins (centred on DC) in subcarrier order."""
    n_fft = spectra.shape[-1]
    bins = (np.arange(n_subcarriers) - n_subcarriers // 2) % n_fft
    return spectra[..., bins]


def preprocess_spectra(spectra, cal: CalibrationRecord, spec: WaveformSpec,
                       beta: float | None = 3.0, oversample: int = DEFAULT_OVERSAMPLE,
                       sounding_spectrum=None, m: int = 0, j: int = 0,
                       timestamp: float = 0.0) -> TransferFunctionSnapshot:
    """Average repetitions, de-embed sequence and calibration, window, zero-pad.

    ``spectra`` holds the received tone values ``(R, N_f)`` in subcarrier order.
    """
    Y = np.atleast_2d(np.asarray(spectra, dtype=complex))
    R = Y.shape[0]
    if R != spec.repetitions_per_burst:
        raise ValueError(f"repetition count mismatch: got {R}, expected {spec.repetitions_per_burst}")
    if Y.shape[1] != spec.n_subcarriers:
        raise ValueError("spectra do not match the subcarrier count")
    if len(cal.H_cal) != spec.n_subcarriers:
        raise ValueError("calibration length does not match the subcarrier count")
    X = generate_multitone(spec).spectrum if sounding_spectrum is None else np.asarray(sounding_spectrum)
    H = Y.mean(axis=0) / X / cal.H_cal
    if beta is not None:
        H = H * kaiser_window(spec.n_subcarriers, beta)
    padded = np.zeros(spec.n_subcarriers * oversample, dtype=complex)
    padded[: spec.n_subcarriers] = H
    return TransferFunctionSnapshot(padded, spec, m, j, timestamp, R, beta, oversample)


def preprocess(burst, cal: CalibrationRecord, spec: WaveformSpec, beta: float | None = 3.0,
               oversample: int = DEFAULT_OVERSAMPLE, sounding_spectrum=None, **meta) -> TransferFunctionSnapshot:
    """Time-domain burst ``(R, n_samples)`` -> calibrated, windowed, padded H."""
    x = np.atleast_2d(np.asarray(burst, dtype=complex))
    if x.shape[1] < spec.n_subcarriers:
        raise ValueError("burst repetition shorter than the subcarrier count")
    spectra = crop_subcarriers(np.fft.fft(x, axis=-1) / x.shape[1], spec.n_subcarriers)
    return preprocess_spectra(spectra, cal, spec, beta, oversample, sounding_spectrum, **meta)


# -- PDP -----------------------------------------------------------------

def impulse_response(H: TransferFunctionSnapshot) -> np.ndarray:
    h = H.H if H.H.ndim == 1 else H.H.mean(axis=0)
    return np.fft.ifft(h, norm="ortho") / math.sqrt(H.spec.n_subcarriers)


def _peak_fraction(spec: WaveformSpec, beta: float | None, oversample: int) -> float:
    n = spec.n_subcarriers
    w = kaiser_window(n, beta) if beta is not None else np.ones(n)
    return float(w.sum() ** 2 / (n * n * oversample))


def compute_pdp(H: TransferFunctionSnapshot) -> PowerDelayProfile:
    """``|IFFT(H)|^2`` on the (oversampled) delay grid."""
    h = impulse_response(H)
    return PowerDelayProfile(
        np.abs(h) ** 2,
        delay_bin=1.0 / (len(h) * H.spec.subcarrier_spacing),
        oversample=H.oversample,
        resolution=H.spec.resolution,
        peak_fraction=_peak_fraction(H.spec, H.window_beta, H.oversample),
    )


def shift_delay(H: TransferFunctionSnapshot, delay: float) -> TransferFunctionSnapshot:
    """Advance every component by ``delay`` seconds (exact, sub-bin)."""
    spec = H.spec
    phase = np.exp(2j * np.pi * spec.baseband_offsets() * spec.subcarrier_spacing * delay)
    out = H.H.copy()
    out[..., : spec.n_subcarriers] *= phase
    return replace(H, H=out)


# -- small-scale averaging -------------------------------------------------

@dataclass(frozen=True)
class SsaWindow:
    index: int
    center: float
    members: tuple
    pdp: PowerDelayProfile | None

    @property
    def empty(self) -> bool:
        return self.pdp is None


def _track(positions) -> np.ndarray:
    p = np.asarray(positions, dtype=float)
    if p.ndim == 1:
        return p
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(steps)])


def ssa_average(pdps: Sequence[PowerDelayProfile], positions, window: float = 0.5,
                step: float | None = None, origin: float | None = None) -> list[SsaWindow]:
    """Arithmetic mean of PDPs whose AP track position falls in each window.

    ``positions`` is either the along-track distance per PDP or an ``(M, 3)``
    array of AP positions in travel order. Windows are ``[c - w/2, c + w/2)``
    stepped by ``step`` (default: ``window``). Empty windows are returned with
    ``pdp=None``.
    """
    if window <= 0:
        raise ValueError("window must be positive")
    s = _track(positions)
    if len(s) != len(pdps):
        raise ValueError("one position per PDP required")
    if len(s) == 0:
        return []
    step = window if step is None else step
    start = s.min() if origin is None else origin
    n_win = int(math.floor((s.max() - start) / step)) + 1
    out = []
    for i in range(n_win):
        c = start + window / 2 + i * step
        members = tuple(int(k) for k in np.flatnonzero((s >= c - window / 2) & (s < c + window / 2)))
        if not members:
            out.append(SsaWindow(i, c, (), None))
            continue
        ref = pdps[members[0]]
        avg = np.mean([pdps[k].power for k in members], axis=0)
        out.append(SsaWindow(i, c, members, replace(ref, power=avg, window=i, noise_floor=None,
                                                    threshold=None, dynamic_range_db=None)))
    return out


# -- noise, threshold, gate ----------------------------------------------

NUMERICAL_FLOOR_REL = 1e-18


def noise_region_slice(pdp: PowerDelayProfile, region=(0.8, 1.0)) -> slice:
    n = len(pdp.power)
    return slice(int(math.floor(region[0] * n)), int(math.floor(region[1] * n)))


def estimate_noise_floor(pdp: PowerDelayProfile, region=(0.8, 1.0)) -> float:
    """Mean linear power over the tail fraction ``region`` of the delay axis."""
    sl = noise_region_slice(pdp, region)
    seg = pdp.power[sl]
    if seg.size == 0:
        raise ValueError("noise region empty")
    if pdp.gate_delay is not None and sl.start * pdp.delay_bin <= pdp.gate_delay:
        raise ValueError("noise region overlaps the delay gate")
    return float(seg.mean())


def noise_floor_is_numerical(p_n: float, pdp: PowerDelayProfile) -> bool:
    """True when the floor estimate is at round-off level relative to the peak."""
    peak = float(pdp.power.max()) if pdp.power.size else 0.0
    return p_n <= NUMERICAL_FLOOR_REL * peak or p_n == 0.0


def dynamic_range_db(pdp: PowerDelayProfile, noise_floor: float) -> float:
    peak = float(pdp.power.max())
    if noise_floor <= 0:
        return math.inf
    if peak <= 0:
        return -math.inf
    return 10 * math.log10(peak / noise_floor)


def threshold_level(peak: float, noise_floor: float, cfg: ThresholdConfig) -> float:
    return max(noise_floor * 10 ** (cfg.delta_n_db / 10), peak * 10 ** (-cfg.delta_dr_db / 10))


def threshold_and_gate(pdp: PowerDelayProfile, cfg: ThresholdConfig = ThresholdConfig(),
                       noise_floor: float | None = None, noise_only: bool = False) -> PowerDelayProfile:
    """Zero bins below the threshold or beyond the gate delay.

    The noise floor comes from the argument, then the PDP metadata, then a
    fresh estimate. ``noise_only`` keeps only the noise arm of the threshold
    (for display-style PDPs).
    """
    if noise_floor is None:
        noise_floor = pdp.noise_floor
    if noise_floor is None:
        noise_floor = estimate_noise_floor(pdp, cfg.noise_region)
    peak = float(pdp.power.max()) if pdp.power.size else 0.0
    if noise_only:
        theta = noise_floor * 10 ** (cfg.delta_n_db / 10)
    else:
        theta = threshold_level(peak, noise_floor, cfg)
    keep = (pdp.delays <= cfg.gate_delay) & (pdp.power >= theta)
    dr = pdp.dynamic_range_db if pdp.dynamic_range_db is not None else dynamic_range_db(pdp, noise_floor)
    return replace(pdp, power=np.where(keep, pdp.power, 0.0), noise_floor=noise_floor,
                   threshold=theta, gate_delay=cfg.gate_delay, dynamic_range_db=dr)


def remove_precursors(pdp: PowerDelayProfile, los_delay: float, guard_bins: int = 4) -> PowerDelayProfile:
    """Zero everything earlier than ``guard_bins`` resolvable bins before the LOS delay."""
    limit = pdp.gate_delay if pdp.gate_delay is not None else len(pdp.power) * pdp.delay_bin
    if los_delay > limit:
        raise ValueError("los_delay beyond gate")
    cutoff = los_delay - guard_bins * pdp.resolution
    return replace(pdp, power=np.where(pdp.delays < cutoff, 0.0, pdp.power))


# -- peak finding ----------------------------------------------------------

def _parabolic_offset(y_m: float, y_0: float, y_p: float) -> float:
    den = y_m - 2 * y_0 + y_p
    if den >= 0:
        return 0.0
    return float(np.clip(0.5 * (y_m - y_p) / den, -0.5, 0.5))


def refine_peak(power: np.ndarray, n: int) -> float:
    """Sub-bin peak position from a parabola through the log-power neighbours."""
    L = len(power)
    tiny = np.finfo(float).tiny
    y = np.log(np.maximum(power[[(n - 1) % L, n, (n + 1) % L]], tiny))
    return n + _parabolic_offset(*y)


def first_peak_delay(pdp: PowerDelayProfile, expected_delay: float | None = None,
                     search: float = 15.0 / SPEED_OF_LIGHT, rel_db: float = 6.0) -> float:
    """Delay of the earliest local maximum within ``rel_db`` of the strongest one.

    With ``expected_delay`` the search is restricted to ``expected +/- search``.
    """
    p = pdp.power
    lo, hi = 0, len(p)
    if expected_delay is not None:
        lo = max(int(math.floor((expected_delay - search) / pdp.delay_bin)), 0)
        hi = min(int(math.ceil((expected_delay + search) / pdp.delay_bin)) + 1, len(p))
    seg = p[lo:hi]
    if seg.size == 0 or seg.max() <= 0:
        raise ValueError("no peak inside the search window")
    level = seg.max() * 10 ** (-rel_db / 10)
    k = int(np.argmax(seg >= level))
    while k + 1 < len(seg) and seg[k + 1] > seg[k]:
        k += 1
    return refine_peak(p, lo + k) * pdp.delay_bin


# -- clock drift -----------------------------------------------------------

@dataclass(frozen=True)
class DriftCorrection:
    """Per-snapshot delay offsets expressed as distance (m)."""

    snapshots: np.ndarray
    offsets: np.ndarray
    anchor: np.ndarray
    unreliable: np.ndarray
    residual_rms: tuple = ()
    residual_decorrelation: tuple = ()

    def offset_for(self, m: int) -> float:
        idx = np.searchsorted(self.snapshots, m)
        if idx >= len(self.snapshots) or self.snapshots[idx] != m:
            raise KeyError(m)
        return float(self.offsets[idx])

    def is_unreliable(self, m: int) -> bool:
        idx = np.searchsorted(self.snapshots, m)
        return bool(self.unreliable[idx])

    @property
    def residual_rms_mean(self) -> float:
        return float(np.mean(self.residual_rms)) if self.residual_rms else math.nan


def decorrelation_distance(err, spacing: float) -> float:
    """Lag (m) at which the normalised autocorrelation of ``err`` first drops to 1/e.

    Returns the series span when it never decorrelates.
    """
    e = np.asarray(err, dtype=float)
    e = e - e.mean()
    n = len(e)
    var = float(e @ e)
    if n < 2 or var == 0:
        return 0.0
    nfft = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(e, nfft)
    acf = np.fft.irfft(spec * np.conj(spec), nfft)[:n] / var
    below = np.flatnonzero(acf <= 1 / math.e)
    if below.size == 0:
        return (n - 1) * spacing
    k = int(below[0])
    frac = (acf[k - 1] - 1 / math.e) / (acf[k - 1] - acf[k])
    return (k - 1 + frac) * spacing


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    out = []
    start = None
    for i, v in enumerate(mask):
        if v and start is None:
            start = i
        elif not v and start is not None:
            out.append((start, i))
            start = None
    if start is not None:
        out.append((start, len(mask)))
    return out


def interpolation_residuals(times, offsets, track=None, min_anchors: int = 3):
    """Linear interpolation across each LOS stretch vs the measured offsets.

    Returns ``(rms per stretch, decorrelation distance per stretch)``.
    """
    times = np.asarray(times, dtype=float)
    offsets = np.asarray(offsets, dtype=float)
    mask = np.isfinite(offsets)
    rms, corr = [], []
    for a, b in _runs(mask):
        if b - a < min_anchors:
            continue
        t = times[a:b]
        y = offsets[a:b]
        line = y[0] + (y[-1] - y[0]) * (t - t[0]) / (t[-1] - t[0])
        err = y - line
        rms.append(float(np.sqrt(np.mean(err ** 2))))
        if track is not None:
            tr = np.asarray(track, dtype=float)[a:b]
            spacing = (tr[-1] - tr[0]) / (len(tr) - 1) if len(tr) > 1 else 0.0
            corr.append(decorrelation_distance(err, spacing))
    return rms, corr


def estimate_drift(times, measured_offsets, track=None, snapshots=None) -> DriftCorrection:
    """Two-stage drift model from per-snapshot anchor offsets (NaN where no anchor).

    Stage 1 keeps anchor offsets as measured; stage 2 interpolates linearly in
    time between the LOS anchors that bound each gap. Gaps bounded on one side
    only hold the nearest anchor and are flagged unreliable.
    """
    times = np.asarray(times, dtype=float)
    y = np.asarray(measured_offsets, dtype=float)
    snaps = np.arange(len(y)) if snapshots is None else np.asarray(snapshots)
    anchor = np.isfinite(y)
    if not anchor.any():
        log.warning("no LOS anchors: drift left uncorrected")
        return DriftCorrection(snaps, np.zeros(len(y)), anchor, np.ones(len(y), bool))
    ta, ya = times[anchor], y[anchor]
    offsets = np.where(anchor, y, np.interp(times, ta, ya))
    unreliable = (times < ta[0]) | (times > ta[-1])
    rms, corr = interpolation_residuals(times, y, track)
    return DriftCorrection(snaps, offsets, anchor, unreliable, tuple(rms), tuple(corr))


def correct_clock_drift(pdps: Mapping, geometry: Sequence[LinkGeometry], times,
                        track=None, search: float = 15.0, rel_db: float = 6.0) -> DriftCorrection:
    """Estimate per-snapshot drift from LOS first-peak delays.

    ``pdps`` maps ``(m, j)`` to an un-thresholded PDP; ``geometry`` lists the
    links. A snapshot is an anchor when any receiver sees LOS there; the
    offsets of its LOS receivers are combined by the median.
    """
    times = np.asarray(times, dtype=float)
    per_snap: dict[int, list[float]] = {}
    for g in geometry:
        if g.los_state != LosState.LOS or (g.m, g.j) not in pdps:
            continue
        d = first_peak_delay(pdps[g.m, g.j], g.delay, search / SPEED_OF_LIGHT, rel_db)
        per_snap.setdefault(g.m, []).append((d - g.delay) * SPEED_OF_LIGHT)
    y = np.full(len(times), np.nan)
    for m, vals in per_snap.items():
        y[m] = float(np.median(vals))
    return estimate_drift(times, y, track)


def apply_drift(H: TransferFunctionSnapshot, offset_m: float) -> TransferFunctionSnapshot:
    return shift_delay(H, offset_m / SPEED_OF_LIGHT)


# -- path extraction (verification aid) -------------------------------------

@dataclass(frozen=True)
class ExtractedPath:
    delay: float
    amplitude: complex

    @property
    def power(self) -> float:
        return float(abs(self.amplitude) ** 2)


def path_kernel(H: TransferFunctionSnapshot, delay: float) -> np.ndarray:
    """Complex impulse response of a unit-power path at ``delay``."""
    spec = H.spec
    n = spec.n_subcarriers
    w = kaiser_window(n, H.window_beta) if H.window_beta is not None else np.ones(n)
    spectrum = np.zeros(len(H.H), dtype=complex)
    spectrum[:n] = w * np.exp(-2j * np.pi * np.arange(n) * spec.subcarrier_spacing * delay)
    return np.fft.ifft(spectrum, norm="ortho") / math.sqrt(n)


def extract_paths(H: TransferFunctionSnapshot, max_paths: int = 24, stop_db: float = 30.0,
                  sweeps: int = 3, min_separation: float | None = None) -> list[ExtractedPath]:
    """Successive cancellation of known path kernels on the complex CIR.

    Peaks are taken strongest first down to ``stop_db`` below the first; then
    each delay is re-estimated against the others and all amplitudes are
    solved jointly by least squares. Candidates closer than
    ``min_separation`` (default one resolution) to an accepted path are
    treated as cancellation residue and skipped.
    """
    cir = impulse_response(H)
    dbin = 1.0 / (len(cir) * H.spec.subcarrier_spacing)
    sep = H.spec.resolution if min_separation is None else min_separation
    near = int(np.floor(sep / dbin))
    resid = cir.copy()
    blocked = np.zeros(len(cir), dtype=bool)
    delays: list[float] = []
    kernels: list[np.ndarray] = []
    stop = None
    for _ in range(max_paths):
        p = np.where(blocked, 0.0, np.abs(resid) ** 2)
        n = int(np.argmax(p))
        if stop is None:
            stop = p[n] * 10 ** (-stop_db / 10)
        elif p[n] < stop:
            break
        tau = refine_peak(p, n) * dbin
        g = path_kernel(H, tau)
        c = np.vdot(g, resid) / np.vdot(g, g)
        resid = resid - c * g
        blocked[np.arange(n - near, n + near + 1) % len(cir)] = True
        delays.append(tau)
        kernels.append(g)
    if not delays:
        return []
    G = np.column_stack(kernels)
    amps = np.linalg.lstsq(G, cir, rcond=None)[0]
    for _ in range(sweeps):
        for i in range(len(delays)):
            others = G @ amps - G[:, i] * amps[i]
            r = cir - others
            p = np.abs(r) ** 2
            n0 = int(round(delays[i] / dbin))
            lo, hi = n0 - 3, n0 + 4
            idx = np.arange(lo, hi) % len(p)
            n = int(idx[np.argmax(p[idx])])
            delays[i] = refine_peak(p, n) * dbin
            G[:, i] = path_kernel(H, delays[i])
        amps = np.linalg.lstsq(G, cir, rcond=None)[0]
    return sorted((ExtractedPath(d, complex(a)) for d, a in zip(delays, amps)), key=lambda x: x.delay)
