"""Condensed channel parameters and ensemble model fits."""

from .cdf import EmpiricalCDF, empirical_cdf
from .dispersion import (
    DispersionStats,
    DsDistanceFit,
    DsFit,
    LowDynamicRange,
    delay_spread,
    fit_ds_distribution,
    fit_ds_vs_distance,
    gamma_from_sir,
    q_tap,
    q_tap_bins,
    q_to_seconds,
    q_window,
    q_window_bins,
    resolvable_bins,
    rms_delay_spread,
    to_dbs,
)
from .pathloss import FitError, PathGainSample, PathlossFit, average_path_gain, fit_pathloss, path_gain

__all__ = [
    "DispersionStats", "DsDistanceFit", "DsFit", "EmpiricalCDF", "FitError", "LowDynamicRange",
    "PathGainSample", "PathlossFit", "average_path_gain", "delay_spread", "empirical_cdf",
    "fit_ds_distribution", "fit_ds_vs_distance", "fit_pathloss", "gamma_from_sir", "path_gain",
    "q_tap", "q_tap_bins", "q_to_seconds", "q_window", "q_window_bins", "resolvable_bins",
    "rms_delay_spread", "to_dbs",
]
