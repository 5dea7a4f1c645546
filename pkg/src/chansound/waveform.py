"""Flat-spectrum multitone sounding sequence and its PAPR."""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import WaveformSpec

PHASE_RULES = ("newman", "zadoff_chu", "zero", "user")


def newman_phases(n: int) -> np.ndarray:
    k = np.arange(1, n + 1)
    return np.pi * (k - 1) ** 2 / n


def zadoff_chu_phases(n: int, root: int = 1) -> np.ndarray:
    k = np.arange(n)
    return np.pi * root * k * (k + (n % 2)) / n


@dataclass(frozen=True)
class SoundingWaveform:
    spec: WaveformSpec
    subcarrier_phases: np.ndarray
    oversample: int = 4

    @property
    def spectrum(self) -> np.ndarray:
        """Unit-magnitude complex tone weights in subcarrier order."""
        return np.exp(1j * self.subcarrier_phases)

    @property
    def time_samples(self) -> np.ndarray:
        return periodic_samples(self.subcarrier_phases, self.oversample)

    @property
    def sample_rate(self) -> float:
        return self.oversample * self.spec.n_subcarriers * self.spec.subcarrier_spacing


def periodic_samples(phases: np.ndarray, oversample: int = 1) -> np.ndarray:
    """One period of the complex-baseband multitone on ``oversample * N`` samples.

    Tone k sits on FFT bin ``k - N//2`` so the band is centred on DC.
    """
    n = len(phases)
    if n == 0:
        raise ValueError("empty waveform")
    if oversample < 1:
        raise ValueError("oversample must be >= 1")
    length = int(oversample) * n
    grid = np.zeros(length, dtype=complex)
    bins = (np.arange(n) - n // 2) % length
    grid[bins] = np.exp(1j * np.asarray(phases, dtype=float))
    return np.fft.ifft(grid) * length


def generate_multitone(spec: WaveformSpec, phase_rule: str = "newman",
                       phases=None, oversample: int = 4) -> SoundingWaveform:
    n = spec.n_subcarriers
    if n < 1:
        raise ValueError("zero subcarriers")
    if phase_rule == "newman":
        ph = newman_phases(n)
    elif phase_rule == "zadoff_chu":
        ph = zadoff_chu_phases(n)
    elif phase_rule == "zero":
        ph = np.zeros(n)
    elif phase_rule == "user":
        if phases is None:
            raise ValueError("phase_rule 'user' requires phases")
        ph = np.asarray(phases, dtype=float)
        if ph.shape != (n,):
            raise ValueError(f"expected {n} phases, got {ph.shape}")
    else:
        raise ValueError(f"unknown phase rule {phase_rule!r}; choose from {PHASE_RULES}")
    return SoundingWaveform(spec, np.mod(ph, 2 * np.pi), oversample)


def papr(w, oversample: int = 4) -> float:
    """Peak-to-average power ratio (dB) over one period.

    ``w`` may be a :class:`SoundingWaveform` or a raw phase vector.
    """
    phases = w.subcarrier_phases if isinstance(w, SoundingWaveform) else np.asarray(w)
    return sample_papr(periodic_samples(phases, oversample))


def sample_papr(x) -> float:
    p = np.abs(np.asarray(x)) ** 2
    if p.size == 0:
        raise ValueError("empty waveform")
    return float(10 * np.log10(p.max() / p.mean()))


def export_waveform(w: SoundingWaveform, path) -> tuple[Path, Path]:
    """Write little-endian interleaved float64 I/Q plus a JSON sidecar."""
    path = Path(path)
    x = w.time_samples
    iq = np.empty(2 * len(x), dtype="<f8")
    iq[0::2] = x.real
    iq[1::2] = x.imag
    path.write_bytes(iq.tobytes())
    side = path.with_suffix(path.suffix + ".json")
    meta = dict(w.spec.to_dict(), oversample=w.oversample, sample_rate=w.sample_rate,
                n_samples=len(x), duration=w.spec.duration, format="complex128-interleaved-le",
                subcarrier_phases=w.subcarrier_phases.tolist())
    side.write_text(json.dumps(meta, indent=1, sort_keys=True))
    return path, side


def load_waveform(path) -> tuple[np.ndarray, dict]:
    path = Path(path)
    meta = json.loads(path.with_suffix(path.suffix + ".json").read_text())
    iq = np.frombuffer(path.read_bytes(), dtype="<f8")
    return iq[0::2] + 1j * iq[1::2], meta
