"""RMS delay spread, Q-window / Q-tap and the DS distribution fits."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats as sps

from ..core import LosState
from ..pipeline import KAISER_BROADENING, PowerDelayProfile
from .pathloss import FitError

MIN_DYNAMIC_RANGE_DB = 20.0
# sums within this relative distance of the target count as reaching it
_REL_TOL = 1e-9


class LowDynamicRange(ValueError):
    """A PDP whose dynamic range is too small for delay-spread statistics."""

    def __init__(self, dynamic_range_db: float, required: float = MIN_DYNAMIC_RANGE_DB):
        super().__init__(f"dynamic range {dynamic_range_db:.1f} dB below {required:.1f} dB")
        self.dynamic_range_db = dynamic_range_db


def delay_spread(power, delays) -> float:
    """Square root of the second central moment of a power-weighted delay profile."""
    p = np.asarray(power, dtype=float)
    t = np.asarray(delays, dtype=float)
    if not p.max(initial=0.0) > 0:
        raise ValueError("empty PDP")
    p = p / p.max()
    total = p.sum()
    t0 = t[np.argmax(p)]
    u = t - t0
    mean = (p * u).sum() / total
    var = (p * (u - mean) ** 2).sum() / total
    return math.sqrt(max(var, 0.0))


def rms_delay_spread(pdp: PowerDelayProfile, min_dynamic_range_db: float = MIN_DYNAMIC_RANGE_DB) -> float:
    """RMS delay spread (s) of a thresholded, gated PDP.

    Raises :class:`LowDynamicRange` when the PDP's recorded dynamic range is
    below ``min_dynamic_range_db``; callers log the exclusion.
    """
    dr = pdp.dynamic_range_db
    if dr is not None and dr < min_dynamic_range_db:
        raise LowDynamicRange(dr, min_dynamic_range_db)
    return delay_spread(pdp.power, pdp.delays)


def to_dbs(seconds):
    return 10 * np.log10(seconds)


# -- Q parameters -------------------------------------------------------------

def gamma_from_sir(sir_db: float) -> float:
    s = 10 ** (sir_db / 10)
    g = s / (s + 1)
    if not g < 1:
        raise ValueError(f"SIR {sir_db} dB unreachable (gamma >= 1)")
    return g


def resolvable_bins(power, oversample: int) -> np.ndarray:
    """Energy-sum consecutive groups of ``oversample`` bins (last group may be short)."""
    p = np.asarray(power, dtype=float)
    if oversample <= 1:
        return p.copy()
    n = -(-len(p) // oversample)
    padded = np.zeros(n * oversample)
    padded[:len(p)] = p
    return padded.reshape(n, oversample).sum(axis=1)


def _check(p: np.ndarray, gamma: float) -> tuple[np.ndarray, float]:
    """Peak-normalised powers (guards against underflow) and the power target."""
    if not 0 < gamma < 1:
        raise ValueError("gamma must lie in (0, 1)")
    if not p.max(initial=0.0) > 0:
        raise ValueError("empty PDP")
    p = p / p.max()
    return p, gamma * p.sum() * (1 - _REL_TOL)


def q_window_bins(power, gamma: float) -> int:
    """Shortest contiguous window holding at least ``gamma`` of the total power."""
    p, target = _check(np.asarray(power, dtype=float), gamma)
    csum = np.concatenate([[0.0], np.cumsum(p)])
    ends = np.searchsorted(csum, csum[:-1] + target, side="left")
    ok = ends <= len(p)
    return int((ends[ok] - np.arange(len(p))[ok]).min())


def q_tap_bins(power, gamma: float) -> int:
    """Fewest (not necessarily contiguous) bins holding ``gamma`` of the power."""
    p, target = _check(np.asarray(power, dtype=float), gamma)
    csum = np.cumsum(np.sort(p)[::-1])
    return int(np.searchsorted(csum, target, side="left")) + 1


def q_window(pdp: PowerDelayProfile, sir_db: float) -> int:
    return q_window_bins(resolvable_bins(pdp.power, pdp.oversample), gamma_from_sir(sir_db))


def q_tap(pdp: PowerDelayProfile, sir_db: float) -> int:
    return q_tap_bins(resolvable_bins(pdp.power, pdp.oversample), gamma_from_sir(sir_db))


def q_to_seconds(q: int, resolution: float, broadening: float = KAISER_BROADENING) -> float:
    """Convert a resolvable-bin count to time including the window's main-lobe broadening."""
    return q * resolution * broadening


# -- ensemble fits ------------------------------------------------------------

def _qq_r2(x_sorted: np.ndarray, fitted_quantiles: np.ndarray) -> float:
    ss_res = ((x_sorted - fitted_quantiles) ** 2).sum()
    ss_tot = ((x_sorted - x_sorted.mean()) ** 2).sum()
    return float(1 - ss_res / ss_tot)


@dataclass(frozen=True)
class DsFit:
    """Normal fit of DS in dBs with 95 % normal-theory intervals."""

    mu: float
    sigma: float
    mu_ci: tuple
    sigma_ci: tuple
    r2: float
    n: int
    state: LosState | None = None
    alt: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"state": self.state.value if self.state else None, "mu": self.mu, "sigma": self.sigma,
                "mu_ci": list(self.mu_ci), "sigma_ci": list(self.sigma_ci), "r2": self.r2,
                "n": self.n, "alt_lognormal_magnitude": self.alt}


def fit_ds_distribution(ds_dbs, state=None, min_samples: int = 30) -> DsFit:
    """Gaussian ML fit of DS on the dBs scale.

    R^2 compares sorted samples with the fitted quantiles at plotting
    positions ``(i - 0.5) / n``. A second fit (``alt``) models the magnitude
    ``|dBs|`` as lognormal, which is the other reading of "lognormal on a dB
    scale"; both are reported.
    """
    x = np.sort(np.asarray(ds_dbs, dtype=float))
    n = len(x)
    if n < min_samples:
        raise FitError(f"need at least {min_samples} DS samples, got {n}")
    mu = float(x.mean())
    sigma = float(x.std())
    if not sigma > 0:
        raise FitError("degenerate DS sample (zero variance)")
    s1 = float(x.std(ddof=1))
    tq = sps.t.ppf(0.975, n - 1)
    mu_ci = (mu - tq * s1 / math.sqrt(n), mu + tq * s1 / math.sqrt(n))
    chi_hi, chi_lo = sps.chi2.ppf([0.975, 0.025], n - 1)
    sigma_ci = (min(math.sqrt((n - 1) * s1 ** 2 / chi_hi), sigma), math.sqrt((n - 1) * s1 ** 2 / chi_lo))
    pp = (np.arange(1, n + 1) - 0.5) / n
    r2 = _qq_r2(x, mu + sigma * sps.norm.ppf(pp))
    alt = {}
    mag = np.abs(x)
    if np.all(mag > 0) and (np.all(x < 0) or np.all(x > 0)):
        lm = np.log(mag)
        ls = float(lm.std())
        if ls > 0:
            sign = -1.0 if x[0] < 0 else 1.0
            q = np.exp(lm.mean() + ls * sps.norm.ppf(pp))
            fitted = np.sort(sign * q)
            alt = {"log_mu": float(lm.mean()), "log_sigma": ls, "sign": sign, "r2": _qq_r2(x, fitted)}
    st = LosState(state) if state is not None else None
    return DsFit(mu, sigma, mu_ci, sigma_ci, r2, n, st, alt)


@dataclass(frozen=True)
class DsDistanceFit:
    slope: float            # dBs per dB of distance (10log10 d)
    intercept: float
    n_bins: int
    bin_width: float

    @property
    def slope_per_decade(self) -> float:
        return 10 * self.slope

    def to_dict(self) -> dict:
        return {"slope": self.slope, "slope_per_decade": self.slope_per_decade,
                "intercept": self.intercept, "n_bins": self.n_bins, "bin_width": self.bin_width}


def fit_ds_vs_distance(ds_dbs, distances, bin_width: float = 5.0) -> DsDistanceFit:
    """Least squares of bin-mean DS (dBs) against bin-mean 10log10(d)."""
    y = np.asarray(ds_dbs, dtype=float)
    d = np.asarray(distances, dtype=float)
    if y.shape != d.shape or y.size == 0:
        raise FitError("need matching, non-empty DS and distance arrays")
    _, inv, counts = np.unique(np.floor(d / bin_width).astype(int), return_inverse=True, return_counts=True)
    if len(counts) < 2:
        raise FitError("degenerate regression")
    xb = np.bincount(inv, weights=10 * np.log10(d)) / counts
    yb = np.bincount(inv, weights=y) / counts
    slope, intercept = np.polyfit(xb, yb, 1)
    return DsDistanceFit(float(slope), float(intercept), len(counts), bin_width)


@dataclass
class DispersionStats:
    """Per-window dispersion results plus ensemble fits for one state."""

    state: LosState
    windows: list = field(default_factory=list)      # window ids
    ds_seconds: list = field(default_factory=list)
    distances: list = field(default_factory=list)
    q_win: dict = field(default_factory=dict)        # SIR dB -> list of bins
    q_tap: dict = field(default_factory=dict)
    fit: DsFit | None = None
    distance_fit: DsDistanceFit | None = None

    @property
    def ds_dbs(self) -> np.ndarray:
        return to_dbs(np.asarray(self.ds_seconds, dtype=float))

    def outage(self, sir_db: float, percentile: float = 90.0) -> tuple[int, int]:
        """(Q_win, Q_tap) at the given percentile across windows."""
        from .cdf import EmpiricalCDF
        p = percentile / 100
        return (int(EmpiricalCDF(self.q_win[sir_db]).quantile(p)),
                int(EmpiricalCDF(self.q_tap[sir_db]).quantile(p)))
