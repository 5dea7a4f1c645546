"""Ground-truth channel synthesis, impairment injection and a statistical generator.

All randomness is derived from a master seed with counter-based splitting per
(stream, snapshot, receiver), so any subset of links can be generated in any
order and still reproduce the serial result bit for bit.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .core import SPEED_OF_LIGHT, LinkGeometry, LosState, Scenario, WaveformSpec, classify_link, link_distance
from .pipeline import TransferFunctionSnapshot

log = logging.getLogger(__name__)

STREAM_PATHS, STREAM_NOISE, STREAM_DRIFT, STREAM_SHADOW, STREAM_FLOOR = range(5)

PATH_KINDS = ("direct", "reflection", "diffraction", "foliage", "precursor")


def link_rng(seed: int, m: int = 0, j: int = 0, stream: int = STREAM_PATHS) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), stream, int(m), int(j)]))


def friis_amplitude(distance: float, wavelength: float) -> float:
    return wavelength / (4 * math.pi * distance)


@dataclass(frozen=True)
class Path:
    delay: float
    amplitude: complex
    kind: str = "reflection"

    @property
    def power(self) -> float:
        return abs(self.amplitude) ** 2


@dataclass(frozen=True)
class MultipathSet:
    paths: tuple
    m: int = 0
    j: int = 0
    los_state: LosState = LosState.LOS
    distance: float = math.nan

    def __post_init__(self):
        if not self.paths:
            raise ValueError("a multipath set needs at least one path")
        if not all(np.isfinite(p.amplitude) for p in self.paths):
            raise ValueError("non-finite path amplitude")
        direct = [p for p in self.paths if p.kind in ("direct", "foliage")]
        if direct and min(p.delay for p in self.paths if p.kind != "precursor") < direct[0].delay - 1e-15:
            raise ValueError("direct path must be the earliest")

    @property
    def delays(self) -> np.ndarray:
        return np.array([p.delay for p in self.paths])

    @property
    def amplitudes(self) -> np.ndarray:
        return np.array([p.amplitude for p in self.paths])

    @property
    def powers(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def total_power(self) -> float:
        return float(self.powers.sum())

    def to_dict(self) -> dict:
        return {"m": self.m, "j": self.j, "los_state": self.los_state.value, "distance": self.distance,
                "paths": [{"delay": p.delay, "re": p.amplitude.real, "im": p.amplitude.imag,
                           "kind": p.kind} for p in self.paths]}


@dataclass(frozen=True)
class PathConfig:
    """Free parameters of the oracle's multipath draw (not measured values)."""

    n_reflections: int = 6
    excess_delay_mean: float = 60e-9
    min_excess_delay: float = 3e-9
    max_excess_delay: float = 800e-9
    decay_constant: float = 80e-9
    first_reflection_db: float = -6.0
    power_spread_db: float = 2.0
    nlos_excess_loss_db: float = 15.0
    nlos_loss_slope_db: float = 15.0
    soft_onset: bool = True
    soft_onset_db: float = -15.0
    antenna_gain_db: float = 0.0
    min_separation: float = 0.0

    def __post_init__(self):
        if self.n_reflections < 0:
            raise ValueError("n_reflections must be >= 0")
        if self.decay_constant <= 0 or self.excess_delay_mean <= 0:
            raise ValueError("delay constants must be positive")


def _excess_delays(rng, cfg: PathConfig, n: int, taken: list[float]) -> np.ndarray:
    out: list[float] = []
    for _ in range(n):
        for _attempt in range(200):
            x = cfg.min_excess_delay + rng.exponential(cfg.excess_delay_mean)
            if x > cfg.max_excess_delay:
                continue
            if all(abs(x - y) >= cfg.min_separation for y in taken + out):
                out.append(x)
                break
    return np.sort(np.array(out))


def synth_paths(scenario: Scenario, m: int, j: int, seed: int = 0,
                cfg: PathConfig = PathConfig()) -> MultipathSet:
    """Draw the ground-truth multipath set of link (m, j).

    LOS links get a Friis direct path (foliage-attenuated when OLOS) and
    exponentially decaying reflections; NLOS links have no direct path, an
    optional weak late "soft onset" component and the same decaying tail.
    """
    rng = link_rng(seed, m, j, STREAM_PATHS)
    ap = scenario.ap_positions[m]
    ue = scenario.ue_positions[j]
    state, olos, fol_db = classify_link(scenario, ap, ue)
    d = link_distance(ap, ue)
    lam = scenario.wavelength
    gain = 10 ** (cfg.antenna_gain_db / 20)
    a_fs = friis_amplitude(d, lam) * gain
    tau0 = d / SPEED_OF_LIGHT
    paths: list[Path] = []
    if state == LosState.LOS:
        kind = "foliage" if olos else "direct"
        paths.append(Path(tau0, complex(a_fs * 10 ** (-fol_db / 20)), kind))
        ref_power = a_fs ** 2 * 10 ** (cfg.first_reflection_db / 10)
        taken = [0.0]
    else:
        extra = cfg.nlos_excess_loss_db + cfg.nlos_loss_slope_db * math.log10(max(d, 1.0) / 20.0)
        ref_power = a_fs ** 2 * 10 ** (-extra / 10)
        taken = []
        if cfg.soft_onset:
            x = rng.uniform(0.5, 3.0) / SPEED_OF_LIGHT
            amp = math.sqrt(ref_power * 10 ** (cfg.soft_onset_db / 10))
            paths.append(Path(tau0 + x, amp * np.exp(2j * np.pi * rng.uniform()), "diffraction"))
            taken.append(x)
    excess = _excess_delays(rng, cfg, cfg.n_reflections, taken)
    jitter = rng.normal(0.0, cfg.power_spread_db, len(excess))
    phases = rng.uniform(0.0, 2 * np.pi, len(excess))
    for x, jdb, ph in zip(excess, jitter, phases):
        p = ref_power * math.exp(-x / cfg.decay_constant) * 10 ** (jdb / 10)
        paths.append(Path(tau0 + x, math.sqrt(p) * np.exp(1j * ph), "reflection"))
    if not paths:
        # NLOS without soft onset and no reflections: keep one weak late path
        paths.append(Path(tau0 + cfg.min_excess_delay, complex(math.sqrt(ref_power)), "reflection"))
    paths.sort(key=lambda p: p.delay)
    return MultipathSet(tuple(paths), m, j, state, d)


def paths_to_transfer_function(paths: MultipathSet, spec: WaveformSpec,
                               timestamp: float = 0.0) -> TransferFunctionSnapshot:
    """``H(f_k) = sum_i a_i exp(-j 2 pi f_k tau_i)`` on the absolute subcarrier frequencies."""
    f = spec.frequencies()
    H = np.exp(-2j * np.pi * np.outer(f, paths.delays)) @ paths.amplitudes
    return TransferFunctionSnapshot(H, spec, paths.m, paths.j, timestamp)


# -- impairments --------------------------------------------------------------

@dataclass(frozen=True)
class ImpairmentConfig:
    """Noise, clock drift and precursor settings.

    ``noise_floor_db`` is the per-subcarrier noise power of a single repetition
    (same units as ``|H|^2``); ``None`` disables noise. Drift offsets are in
    seconds; the random-walk part is a Gauss-Markov process over AP distance.
    """

    noise_floor_db: float | None = None
    noise_floor_std_db: float = 0.0
    segment_snapshots: int | None = None
    repetitions: int = 1
    drift_rate: float = 0.0
    drift_step_std: float = 0.0
    drift_decorrelation: float = 10.0
    drift_initial: float = 0.0
    precursor: bool = False
    precursor_distance: float = 5.0
    precursor_power_db: float = -30.0

    def __post_init__(self):
        if self.noise_floor_std_db < 0 or self.drift_step_std < 0:
            raise ValueError("std values must be >= 0")
        if self.drift_decorrelation <= 0:
            raise ValueError("decorrelation distance must be positive")
        if self.repetitions < 1:
            raise ValueError("repetitions must be >= 1")

    @property
    def has_drift(self) -> bool:
        return self.drift_rate != 0 or self.drift_step_std > 0 or self.drift_initial != 0

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def drift_series(times, track, cfg: ImpairmentConfig, seed: int = 0) -> np.ndarray:
    """Per-snapshot clock offset (s): linear trend plus Gauss-Markov deviation.

    The deviation decorrelates as ``exp(-ds / drift_decorrelation)`` over AP
    travel ``ds`` and is driven by innovations of std ``drift_step_std``.
    """
    times = np.asarray(times, dtype=float)
    track = np.asarray(track, dtype=float)
    n = len(times)
    if n == 0:
        return np.zeros(0)
    rng = link_rng(seed, 0, 0, STREAM_DRIFT)
    eps = rng.standard_normal(n)
    dev = np.zeros(n)
    if cfg.drift_step_std > 0:
        ds = np.abs(np.diff(track))
        rho = np.exp(-ds / cfg.drift_decorrelation)
        dev[0] = cfg.drift_step_std / math.sqrt(max(1 - float(np.median(rho)) ** 2, 1e-12)) * eps[0] if n > 1 else 0.0
        for i in range(1, n):
            dev[i] = rho[i - 1] * dev[i - 1] + cfg.drift_step_std * eps[i]
    return cfg.drift_initial + cfg.drift_rate * (times - times[0]) + dev


def noise_floor_series(n_snapshots: int, cfg: ImpairmentConfig, seed: int = 0) -> np.ndarray:
    """Per-snapshot single-repetition noise level (dB), piecewise constant per segment."""
    if cfg.noise_floor_db is None:
        return np.full(n_snapshots, -np.inf)
    seg = cfg.segment_snapshots or max(n_snapshots, 1)
    n_seg = -(-n_snapshots // seg)
    rng = link_rng(seed, 0, 0, STREAM_FLOOR)
    levels = cfg.noise_floor_db + cfg.noise_floor_std_db * rng.standard_normal(n_seg)
    return np.repeat(levels, seg)[:n_snapshots]


def expected_pdp_noise_floor(noise_floor_db: float, spec: WaveformSpec, repetitions: int,
                             oversample: int = 10) -> float:
    """Mean PDP noise power per oversampled bin after repetition averaging."""
    return 10 ** (noise_floor_db / 10) / (repetitions * oversample * spec.n_subcarriers)


def precursor_path(cfg: ImpairmentConfig, wavelength: float) -> Path:
    d = cfg.precursor_distance
    amp = friis_amplitude(d, wavelength) * 10 ** (cfg.precursor_power_db / 20)
    return Path(d / SPEED_OF_LIGHT, complex(amp), "precursor")


def inject_impairments(H: TransferFunctionSnapshot, cfg: ImpairmentConfig,
                       geometry: LinkGeometry | None = None, seed: int = 0,
                       drift: float = 0.0, noise_floor_db: float | None = None) -> TransferFunctionSnapshot:
    """Add precursor (LOS links only), apply the snapshot's drift, add noise.

    Returns ``(R, N_f)`` per-repetition data with ``R = cfg.repetitions``.
    ``drift`` is this snapshot's clock offset in seconds (see :func:`drift_series`).
    """
    spec = H.spec
    h = H.H if H.H.ndim == 1 else H.H.mean(axis=0)
    h = h.copy()
    f = spec.frequencies()
    if cfg.precursor and (geometry is None or geometry.los_state == LosState.LOS):
        p = precursor_path(cfg, SPEED_OF_LIGHT / spec.center_frequency)
        h = h + p.amplitude * np.exp(-2j * np.pi * f * p.delay)
    if drift:
        h = h * np.exp(-2j * np.pi * f * drift)
    R = cfg.repetitions
    Y = np.broadcast_to(h, (R, len(h))).copy()
    level = cfg.noise_floor_db if noise_floor_db is None else noise_floor_db
    if level is not None and np.isfinite(level):
        rng = link_rng(seed, H.m, H.j, STREAM_NOISE)
        sigma = math.sqrt(10 ** (level / 10) / 2)
        Y = Y + sigma * (rng.standard_normal(Y.shape) + 1j * rng.standard_normal(Y.shape))
    return TransferFunctionSnapshot(Y, spec, H.m, H.j, H.timestamp, R)


# -- drift population tuned to reported LOS residual statistics ---------------

@dataclass(frozen=True)
class DriftPopulation:
    """Distribution of per-channel drift deviations over LOS stretches.

    Per channel, the Gauss-Markov decorrelation distance, deviation std and
    LOS stretch length are lognormal. Defaults were tuned by simulation so
    that linear interpolation residuals across each stretch have a mean RMS
    near 0.43 m (std near 0.64 m across channels) and the residual
    decorrelation distances have mean near 10 m with a 10th percentile near
    3 m.
    """

    decorrelation_median: float = 17.0
    decorrelation_log_std: float = 0.8
    deviation_median: float = 0.24
    deviation_log_std: float = 1.1
    stretch_median: float = 120.0
    stretch_log_std: float = 0.6
    spacing: float = 0.05

    def sample(self, rng: np.random.Generator) -> tuple[float, float, float]:
        """(decorrelation distance, deviation std, stretch length) in metres."""
        z = rng.standard_normal(3)
        dc = self.decorrelation_median * math.exp(self.decorrelation_log_std * z[0])
        dev = self.deviation_median * math.exp(self.deviation_log_std * z[1])
        length = float(np.clip(self.stretch_median * math.exp(self.stretch_log_std * z[2]), 5.0, 600.0))
        return dc, dev, length

    def residual_statistics(self, n_channels: int, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Simulated per-stretch interpolation-residual RMS and decorrelation distance (m)."""
        from .pipeline import interpolation_residuals

        rng = np.random.default_rng(seed)
        rms, dec = [], []
        for _ in range(n_channels):
            dc, sd, length = self.sample(rng)
            n = int(length / self.spacing) + 1
            s = np.arange(n) * self.spacing
            r, c = interpolation_residuals(s, gauss_markov(n, self.spacing, dc, sd, rng), s)
            rms += r
            dec += c
        return np.array(rms), np.array(dec)


def gauss_markov(n: int, spacing: float, decorrelation: float, std: float, rng) -> np.ndarray:
    rho = math.exp(-spacing / decorrelation)
    innov = std * math.sqrt(1 - rho ** 2)
    eps = rng.standard_normal(n)
    x = np.empty(n)
    x[0] = std * eps[0]
    for i in range(1, n):
        x[i] = rho * x[i - 1] + innov * eps[i]
    return x


# -- statistical channel generator -------------------------------------------

@dataclass(frozen=True)
class StateParams:
    alpha: float
    beta: float
    sigma_s: float
    ds_mu: float
    ds_sigma: float
    validity: tuple = (0.0, math.inf)

    def __post_init__(self):
        if self.sigma_s < 0 or self.ds_sigma < 0:
            raise ValueError("standard deviations must be >= 0")
        if not 1.0 <= self.alpha <= 6.0:
            warnings.warn(f"pathloss exponent {self.alpha} outside [1, 6]", stacklevel=3)


@dataclass(frozen=True)
class StatChannelParams:
    los: StateParams
    nlos: StateParams
    shadowing_decorrelation: float = 10.0

    def __post_init__(self):
        if self.shadowing_decorrelation <= 0:
            raise ValueError("shadowing decorrelation distance must be positive")

    def for_state(self, state: LosState) -> StateParams:
        return self.los if state == LosState.LOS else self.nlos

    @classmethod
    def example(cls) -> "StatChannelParams":
        """Illustrative values only; validity ranges follow the measured supports."""
        return cls(StateParams(2.5, 35.0, 6.0, -75.0, 3.0, (12.0, 178.0)),
                   StateParams(4.0, 20.0, 8.0, -70.0, 3.0, (20.0, 262.0)))


@dataclass(frozen=True)
class StatChannels:
    path_gain_db: np.ndarray
    pathloss_db: np.ndarray
    shadowing_db: np.ndarray
    delay_spread: np.ndarray
    distance: np.ndarray
    los: np.ndarray
    out_of_range: np.ndarray


def correlated_shadowing(positions, sigma: float, decorrelation: float, rng) -> np.ndarray:
    """Zero-mean Gaussian shadowing along an ordered AP track.

    Consecutive samples are linked by ``rho = exp(-|dp| / d_corr)`` using the
    Euclidean step between positions, so co-located samples repeat the draw.
    """
    p = np.asarray(positions, dtype=float)
    n = len(p)
    out = np.empty(n)
    if n == 0:
        return out
    eps = rng.standard_normal(n)
    out[0] = sigma * eps[0]
    steps = np.linalg.norm(np.diff(p, axis=0), axis=1) if n > 1 else np.zeros(0)
    for i in range(1, n):
        rho = math.exp(-steps[i - 1] / decorrelation)
        out[i] = rho * out[i - 1] + sigma * math.sqrt(1 - rho * rho) * eps[i]
    return out


def generate_stat_channels(params: StatChannelParams, scenario: Scenario, seed: int = 0) -> StatChannels:
    """Alpha-beta pathloss with correlated shadowing and lognormal DS per (UE, AP sample).

    Arrays are shaped ``(n_receivers, n_snapshots)``. Distances outside the
    state's validity range are flagged in ``out_of_range``.
    """
    M, J = scenario.n_snapshots, scenario.n_receivers
    pl = np.empty((J, M))
    sh = np.empty((J, M))
    ds = np.empty((J, M))
    dist = np.empty((J, M))
    los = np.empty((J, M), dtype=bool)
    oor = np.empty((J, M), dtype=bool)
    for j in range(J):
        rng = link_rng(seed, 0, j, STREAM_SHADOW)
        z = correlated_shadowing(scenario.ap_positions, 1.0, params.shadowing_decorrelation, rng)
        u = rng.standard_normal(M)
        for m in range(M):
            ap, ue = scenario.ap_positions[m], scenario.ue_positions[j]
            d = link_distance(ap, ue)
            state = classify_link(scenario, ap, ue)[0]
            sp = params.for_state(state)
            sh[j, m] = sp.sigma_s * z[m]
            pl[j, m] = sp.alpha * 10 * math.log10(d) + sp.beta + sh[j, m]
            ds[j, m] = 10 ** ((sp.ds_mu + sp.ds_sigma * u[m]) / 10)
            dist[j, m] = d
            los[j, m] = state == LosState.LOS
            oor[j, m] = not (sp.validity[0] <= d <= sp.validity[1])
    if oor.any():
        log.info("%d links outside the model validity range (flagged)", int(oor.sum()))
    return StatChannels(-pl, pl, sh, ds, dist, los, oor)
