import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from chansound.core import WaveformSpec
from chansound.waveform import (
    export_waveform,
    generate_multitone,
    load_waveform,
    newman_phases,
    papr,
    periodic_samples,
    sample_papr,
)


def dense_papr(phases, factor=64):
    """Brute-force PAPR by direct evaluation of the tone sum on a dense grid."""
    n = len(phases)
    k = np.arange(n) - n // 2
    t = np.arange(factor * n) / (factor * n)
    x = np.exp(1j * (2 * np.pi * np.outer(t, k) + phases)).sum(axis=1)
    p = np.abs(x) ** 2
    return 10 * np.log10(p.max() / p.mean())


def test_single_tone_is_constant_envelope():
    w = generate_multitone(WaveformSpec(n_subcarriers=1))
    assert papr(w) == pytest.approx(0.0, abs=1e-12)
    assert np.allclose(np.abs(w.time_samples), 1.0)


def test_two_tones_zero_phase():
    assert papr(np.zeros(2), 8) == pytest.approx(10 * math.log10(2), abs=1e-9)
    assert papr(np.zeros(2), 8) == pytest.approx(3.01, abs=5e-3)


def test_newman_phase_rule():
    ph = newman_phases(5)
    np.testing.assert_allclose(ph, np.pi * np.arange(5) ** 2 / 5)


def test_newman_64_low_papr():
    assert dense_papr(newman_phases(64)) < 6.0
    assert papr(newman_phases(64), 64) == pytest.approx(dense_papr(newman_phases(64)), abs=1e-9)


def test_newman_beats_zero_phase_full_size():
    spec = WaveformSpec()
    assert papr(generate_multitone(spec, "newman")) < papr(generate_multitone(spec, "zero"))


def test_duration_and_bandwidth():
    w = generate_multitone(WaveformSpec())
    assert w.spec.duration == pytest.approx(8e-6)
    assert w.spec.bandwidth == pytest.approx(350e6)
    assert len(w.time_samples) / w.sample_rate == pytest.approx(8e-6)


def test_flat_spectrum_recovered():
    w = generate_multitone(WaveformSpec(n_subcarriers=101), oversample=3)
    x = w.time_samples
    spec = np.fft.fft(x) / len(x)
    bins = (np.arange(101) - 50) % len(x)
    np.testing.assert_allclose(spec[bins], w.spectrum, rtol=1e-9, atol=1e-12)
    mask = np.ones(len(x), bool)
    mask[bins] = False
    assert np.abs(spec[mask]).max() < 1e-9


def test_samples_match_tone_sum_and_are_periodic():
    ph = newman_phases(7)
    x = periodic_samples(ph, 4)
    n = len(ph)
    k = np.arange(n) - n // 2
    t = np.arange(len(x)) / len(x)
    direct = np.exp(1j * (2 * np.pi * np.outer(t, k) + ph)).sum(axis=1)
    np.testing.assert_allclose(x, direct, atol=1e-9)
    shifted = np.exp(1j * (2 * np.pi * np.outer(t + 1.0, k) + ph)).sum(axis=1)
    np.testing.assert_allclose(shifted, direct, atol=1e-9)


phases = st.lists(st.floats(0, 2 * np.pi), min_size=1, max_size=24).map(np.array)


@given(phases, st.floats(0, 2 * np.pi), st.floats(1e-3, 1e3))
@settings(max_examples=100)
def test_papr_invariant_rotation_and_scale(ph, rot, scale):
    base = papr(ph, 4)
    assert papr(ph + rot, 4) == pytest.approx(base, abs=1e-9)
    assert sample_papr(scale * periodic_samples(ph, 4)) == pytest.approx(base, abs=1e-9)


@given(phases)
@settings(max_examples=100)
def test_papr_non_decreasing_in_oversampling(ph):
    vals = [papr(ph, f) for f in (1, 2, 4, 8)]
    assert all(b >= a - 1e-9 for a, b in zip(vals, vals[1:]))


def test_errors():
    with pytest.raises(ValueError):
        WaveformSpec(n_subcarriers=0)
    with pytest.raises(ValueError):
        sample_papr([])
    with pytest.raises(ValueError):
        generate_multitone(WaveformSpec(n_subcarriers=4), "bogus")
    with pytest.raises(ValueError):
        generate_multitone(WaveformSpec(n_subcarriers=4), "user", phases=[0, 1])
    w = generate_multitone(WaveformSpec(n_subcarriers=4), "user", phases=[0, 1, 2, 3])
    np.testing.assert_allclose(w.subcarrier_phases, [0, 1, 2, 3])
    zc = generate_multitone(WaveformSpec(n_subcarriers=16), "zadoff_chu")
    np.testing.assert_allclose(np.abs(zc.spectrum), 1.0)


def test_export_round_trip(tmp_path):
    w = generate_multitone(WaveformSpec(n_subcarriers=33), oversample=2)
    path, side = export_waveform(w, tmp_path / "wf.iq")
    assert path.stat().st_size == 2 * 8 * 66
    x, meta = load_waveform(path)
    np.testing.assert_array_equal(x, w.time_samples)
    assert meta["n_subcarriers"] == 33 and meta["oversample"] == 2
    assert meta["duration"] == pytest.approx(8e-6)
