"""Wideband channel-sounding toolkit: waveform, synthesis, processing and statistics."""

from .core import (
    SPEED_OF_LIGHT,
    Building,
    Foliage,
    LinkGeometry,
    LosState,
    Scenario,
    WaveformSpec,
    classify_los,
    demo_scenario,
    link_distance,
)
from .pipeline import (
    CalibrationRecord,
    PowerDelayProfile,
    ThresholdConfig,
    TransferFunctionSnapshot,
    compute_pdp,
    correct_clock_drift,
    preprocess,
    preprocess_spectra,
    remove_precursors,
    ssa_average,
    threshold_and_gate,
)
from .waveform import SoundingWaveform, generate_multitone, papr

__version__ = "0.1.0"

__all__ = [
    "SPEED_OF_LIGHT", "Building", "CalibrationRecord", "Foliage", "LinkGeometry", "LosState",
    "PowerDelayProfile", "Scenario", "SoundingWaveform", "ThresholdConfig", "TransferFunctionSnapshot",
    "WaveformSpec", "classify_los", "compute_pdp", "correct_clock_drift", "demo_scenario",
    "generate_multitone", "link_distance", "papr", "preprocess", "preprocess_spectra",
    "remove_precursors", "ssa_average", "threshold_and_gate",
]
