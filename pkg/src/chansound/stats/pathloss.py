"""Path gain extraction and alpha-beta pathloss fitting with censored samples."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize
from scipy.stats import norm

from ..core import LosState
from ..pipeline import PowerDelayProfile


class FitError(ValueError):
    """Raised when a model cannot be fitted to the supplied samples."""


@dataclass(frozen=True)
class PathGainSample:
    """One path gain observation; censored samples carry the sensitivity ceiling."""

    pg: float | None
    distance: float
    los_state: LosState = LosState.LOS
    window: int | None = None
    censored: bool = False
    ceiling: float | None = None
    receiver: int | None = None

    def __post_init__(self):
        if self.censored:
            if self.ceiling is None or not self.ceiling > 0:
                raise ValueError("censored samples need a positive sensitivity ceiling")
        elif self.pg is None or not self.pg > 0:
            raise ValueError("uncensored path gain must be positive")

    @property
    def pl_db(self) -> float:
        """Pathloss in dB; for censored samples the lower bound from the ceiling."""
        return -10 * math.log10(self.ceiling if self.censored else self.pg)


def path_gain(pdp: PowerDelayProfile, distance: float = math.nan, los_state=LosState.LOS,
              window: int | None = None, receiver: int | None = None) -> PathGainSample:
    """Sum of a thresholded, gated PDP; an all-zero PDP becomes a censored sample.

    The ceiling is the gain of a single path whose kernel peak just reaches the
    threshold.
    """
    pg = pdp.total_power
    if pg > 0:
        return PathGainSample(pg, distance, los_state, window, False, None, receiver)
    if pdp.threshold is None or pdp.peak_fraction is None:
        raise ValueError("censored PDP without threshold metadata")
    return PathGainSample(None, distance, los_state, window, True,
                          pdp.threshold / pdp.peak_fraction, receiver)


def average_path_gain(samples: list[PathGainSample], track, window: float) -> list[PathGainSample]:
    """Average consecutive samples over blocks of ``window`` metres of AP travel.

    A block is censored when more than half its members are; otherwise it takes
    the mean linear gain of its uncensored members. Distance is the block mean.
    """
    track = np.asarray(track, dtype=float)
    if len(track) != len(samples):
        raise ValueError("one track position per sample required")
    if not samples:
        return []
    block = np.floor((track - track.min()) / window).astype(int)
    out = []
    for b in np.unique(block):
        idx = np.flatnonzero(block == b)
        mem = [samples[i] for i in idx]
        cens = [s for s in mem if s.censored]
        unc = [s for s in mem if not s.censored]
        states = [s.los_state for s in mem]
        state = max(set(states), key=states.count)
        dist = float(np.mean([s.distance for s in mem]))
        if len(cens) * 2 > len(mem):
            out.append(PathGainSample(None, dist, state, int(b), True,
                                      float(np.mean([s.ceiling for s in cens])), mem[0].receiver))
        else:
            out.append(PathGainSample(float(np.mean([s.pg for s in unc])), dist, state, int(b),
                                      False, None, mem[0].receiver))
    return out


@dataclass(frozen=True)
class PathlossFit:
    alpha: float
    beta: float
    sigma_s: float
    alpha_ci: tuple
    beta_ci: tuple
    sigma_ci: tuple
    bin_width: float
    state: LosState
    validity: tuple
    n_samples: int
    n_censored: int
    n_bins: int
    method: str = "tobit"
    ci_method: str = "bootstrap"

    def predict(self, distance) -> np.ndarray:
        return self.alpha * 10 * np.log10(np.asarray(distance, dtype=float)) + self.beta

    def to_dict(self) -> dict:
        return {
            "state": self.state.value, "alpha": self.alpha, "beta": self.beta, "sigma_s": self.sigma_s,
            "alpha_ci": list(self.alpha_ci), "beta_ci": list(self.beta_ci), "sigma_ci": list(self.sigma_ci),
            "bin_width": self.bin_width, "validity": list(self.validity), "n_samples": self.n_samples,
            "n_censored": self.n_censored, "n_bins": self.n_bins, "method": self.method,
            "ci_method": self.ci_method,
        }


@dataclass
class _Design:
    x: np.ndarray          # bin-mean 10log10(d), one per sample
    y: np.ndarray          # PL (dB) or ceiling for censored samples
    cens: np.ndarray
    w: np.ndarray          # 1 / samples in the bin
    bins: np.ndarray
    d: np.ndarray = field(default_factory=lambda: np.zeros(0))


def _design(samples, bin_width: float) -> _Design:
    d = np.array([s.distance for s in samples], dtype=float)
    y = np.array([s.pl_db for s in samples], dtype=float)
    cens = np.array([s.censored for s in samples], dtype=bool)
    bins = np.floor(d / bin_width).astype(int)
    _, inv, counts = np.unique(bins, return_inverse=True, return_counts=True)
    logd = 10 * np.log10(d)
    xb = np.bincount(inv, weights=logd) / counts
    return _Design(xb[inv], y, cens, 1.0 / counts[inv], bins, d)


def _ols_bin_means(D: _Design) -> tuple[float, float, float]:
    """Closed-form weighted ML without censoring (OLS on bin means)."""
    sw = D.w.sum()
    xm = (D.w * D.x).sum() / sw
    ym = (D.w * D.y).sum() / sw
    sxx = (D.w * (D.x - xm) ** 2).sum()
    if sxx <= 0:
        raise FitError("degenerate regression")
    a = (D.w * (D.x - xm) * (D.y - ym)).sum() / sxx
    b = ym - a * xm
    r = D.y - a * D.x - b
    s = math.sqrt((D.w * r * r).sum() / sw)
    return a, b, s


def _per_sample_grad(theta, D: _Design):
    """Log-likelihood per sample and its gradient wrt (alpha, beta, log sigma)."""
    a, b, ls = theta
    s = math.exp(ls)
    mu = a * D.x + b
    z = (D.y - mu) / s
    ll = np.where(D.cens, 0.0, norm.logpdf(z) - ls)
    dmu = np.where(D.cens, 0.0, z / s)
    dls = np.where(D.cens, 0.0, z * z - 1)
    if D.cens.any():
        zc = z[D.cens]
        logsf = norm.logsf(zc)
        mills = np.exp(norm.logpdf(zc) - logsf)
        ll[D.cens] = logsf
        dmu[D.cens] = mills / s
        dls[D.cens] = mills * zc
    grad = np.column_stack([dmu * D.x, dmu, dls])
    return ll, grad


def _tobit(D: _Design, start) -> np.ndarray:
    def nll(theta):
        ll, g = _per_sample_grad(theta, D)
        return -(D.w * ll).sum(), -(D.w[:, None] * g).sum(axis=0)

    res = optimize.minimize(nll, np.asarray(start, dtype=float), jac=True, method="BFGS",
                            options={"gtol": 1e-9, "maxiter": 500})
    return res.x


def _fit_params(D: _Design, method: str, start=None) -> tuple[float, float, float]:
    if len(np.unique(D.bins)) < 2:
        raise FitError("degenerate regression")
    if D.cens.all():
        raise FitError("all samples censored")
    if method == "naive" or not D.cens.any():
        return _ols_bin_means(D)
    if method != "tobit":
        raise ValueError(f"unknown method {method!r}")
    if start is None:
        unc = _Design(D.x[~D.cens], D.y[~D.cens], D.cens[~D.cens], D.w[~D.cens], D.bins[~D.cens])
        try:
            a0, b0, s0 = _ols_bin_means(unc)
        except FitError:
            a0, b0, s0 = 2.0, float(np.mean(D.y)), float(np.std(D.y)) or 1.0
        start = (a0, b0, math.log(max(s0, 1e-3)))
    else:
        start = (start[0], start[1], math.log(max(start[2], 1e-3)))
    a, b, ls = _tobit(D, start)
    return float(a), float(b), float(math.exp(ls))


def _subset(D: _Design, idx) -> _Design:
    """Rebuild weights for a resampled index set (bins may repeat)."""
    return _Design(D.x[idx], D.y[idx], D.cens[idx], D.w[idx], D.bins[idx], D.d[idx])


def _bootstrap(D: _Design, method: str, point, n_boot: int, rng) -> np.ndarray:
    groups = [np.flatnonzero(D.bins == b) for b in np.unique(D.bins)]
    draws = []
    for _ in range(n_boot):
        pick = rng.integers(0, len(groups), len(groups))
        idx = np.concatenate([groups[k] for k in pick])
        sub = _subset(D, idx)
        # distinct draws of the same bin count as separate bins
        sub.bins = np.concatenate([np.full(len(groups[k]), i) for i, k in enumerate(pick)])
        try:
            draws.append(_fit_params(sub, method, point))
        except FitError:
            continue
    return np.array(draws)


def _sandwich(D: _Design, theta) -> np.ndarray:
    """Robust covariance of (alpha, beta, log sigma) for the weighted likelihood."""
    eps = 1e-5
    hess = np.zeros((3, 3))
    for k in range(3):
        tp = np.array(theta, dtype=float)
        tm = tp.copy()
        tp[k] += eps
        tm[k] -= eps
        gp = (D.w[:, None] * _per_sample_grad(tp, D)[1]).sum(axis=0)
        gm = (D.w[:, None] * _per_sample_grad(tm, D)[1]).sum(axis=0)
        hess[:, k] = -(gp - gm) / (2 * eps)
    hess = 0.5 * (hess + hess.T)
    g = D.w[:, None] * _per_sample_grad(theta, D)[1]
    meat = g.T @ g
    hinv = np.linalg.pinv(hess)
    return hinv @ meat @ hinv


def fit_pathloss(samples: list[PathGainSample], bin_width: float = 2.0, state=None,
                 method: str = "tobit", ci: str = "bootstrap", n_bootstrap: int = 1000,
                 distance_range: tuple | None = None, seed: int = 0) -> PathlossFit:
    """Fit ``PL = alpha * 10 log10(d) + beta + S`` by weighted censored ML.

    Samples are grouped into distance bins of ``bin_width`` metres. Each sample
    is regressed on its bin's mean log-distance and weighted by one over the
    bin occupancy, so every bin counts once; without censoring this is exactly
    OLS on the bin means. Censored samples enter through the Gaussian survival
    function at their ceiling (pathloss known only to exceed it). ``sigma_s``
    is the ML residual std of individual samples. ``method="naive"`` treats
    ceilings as observed values. Confidence intervals (95 %) come from a bin
    bootstrap (``ci="bootstrap"``) or a sandwich estimate (``ci="sandwich"``).
    """
    if distance_range is not None:
        lo, hi = distance_range
        samples = [s for s in samples if lo <= s.distance <= hi]
    if state is not None:
        state = LosState(state)
        samples = [s for s in samples if s.los_state == state]
    if not samples:
        raise FitError("no samples")
    D = _design(samples, bin_width)
    a, b, s = _fit_params(D, method)
    if ci == "bootstrap" and n_bootstrap > 0:
        draws = _bootstrap(D, method, (a, b, s), n_bootstrap, np.random.default_rng(seed))
        if len(draws) < 2:
            raise FitError("bootstrap produced no valid refits")
        lo, hi = np.percentile(draws, [2.5, 97.5], axis=0)
        a_ci, b_ci, s_ci = (min(lo[0], a), max(hi[0], a)), (min(lo[1], b), max(hi[1], b)), \
            (min(lo[2], s), max(hi[2], s))
    elif ci in ("sandwich", "bootstrap"):
        cov = _sandwich(D, (a, b, math.log(max(s, 1e-12))))
        se = np.sqrt(np.clip(np.diag(cov), 0, None))
        z = norm.ppf(0.975)
        a_ci = (a - z * se[0], a + z * se[0])
        b_ci = (b - z * se[1], b + z * se[1])
        s_ci = (s * math.exp(-z * se[2]), s * math.exp(z * se[2]))
        ci = "sandwich"
    else:
        raise ValueError(f"unknown ci method {ci!r}")
    st = state if state is not None else samples[0].los_state
    return PathlossFit(a, b, s, tuple(map(float, a_ci)), tuple(map(float, b_ci)), tuple(map(float, s_ci)),
                       bin_width, st, (float(D.d.min()), float(D.d.max())), len(samples),
                       int(D.cens.sum()), int(len(np.unique(D.bins))), method, ci)
