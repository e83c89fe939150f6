import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from srattack.audio import Waveform
from srattack.defenses import (DefenseSpec, audio_squeeze, audio_squeeze_array, median_filter,
                               median_filter_array, quantize, quantize_array)
from srattack.oracle import RecognizerOracle
from srattack.recognizer import NoVoicedFramesError

FS = 16000
signals = arrays(np.float64, st.integers(1, 200), elements=st.floats(-1, 1))
odd_k = st.sampled_from([1, 3, 5, 7, 9])


def _median_oracle(x, k):
    h = k // 2
    padded = np.concatenate([np.full(h, x[0]), x, np.full(h, x[-1])])
    return np.array([np.sort(padded[i:i + k])[h] for i in range(x.size)])


def _tone(freq, seconds=0.5):
    t = np.arange(int(FS * seconds)) / FS
    return 0.5 * np.sin(2 * np.pi * freq * t)


def test_median_example():
    out = median_filter_array(np.array([0.1, 0.2, 0.9, 0.2, 0.1]), 3)
    assert np.array_equal(out, [0.1, 0.2, 0.2, 0.2, 0.1])


@given(signals, odd_k)
def test_median_matches_window_sort(x, k):
    assert np.array_equal(median_filter_array(x, k), _median_oracle(x, k))


@given(signals)
def test_median_k1_identity(x):
    assert np.array_equal(median_filter_array(x, 1), x)


@given(st.floats(-1, 1), st.integers(1, 50), odd_k)
def test_median_constant_unchanged(c, n, k):
    assert np.array_equal(median_filter_array(np.full(n, c), k), np.full(n, c))


@given(signals, odd_k)
def test_median_commutes_with_sign_flip(x, k):
    assert np.array_equal(median_filter_array(-x, k), -median_filter_array(x, k))


@given(arrays(np.float64, st.integers(1, 100), elements=st.floats(-1, 1)), odd_k)
def test_median_idempotent_on_monotone_signals(x, k):
    x = np.sort(x)
    once = median_filter_array(x, k)
    assert np.array_equal(once, x) and np.array_equal(median_filter_array(once, k), once)


def test_median_not_idempotent_in_general():
    # an alternating signal needs two passes to reach its root
    x = np.array([0.0, 1.0, 0.0, 1.0, 0.0])
    once = median_filter_array(x, 3)
    assert not np.array_equal(median_filter_array(once, 3), once)


def test_median_rejects_even_k():
    for k in (0, 2, 4):
        with pytest.raises(ValueError):
            median_filter_array(np.zeros(4), k)


@given(signals)
def test_squeeze_tau_one_bit_identical(x):
    assert np.array_equal(audio_squeeze_array(x, 1.0), x)


def test_squeeze_keeps_low_tone():
    x = _tone(200)
    y = audio_squeeze_array(x, 0.5)
    rms = np.sqrt(np.mean(x ** 2))
    assert np.sqrt(np.mean((y - x) ** 2)) <= 0.05 * rms


def test_squeeze_destroys_tone_above_reduced_nyquist():
    x = _tone(7000)
    y = audio_squeeze_array(x, 0.5)
    assert abs(np.corrcoef(x, y)[0, 1]) < 0.5
    # and the 7 kHz DFT bin loses most of its magnitude
    k = int(7000 * x.size / FS)
    assert abs(np.fft.rfft(y)[k]) < 0.5 * abs(np.fft.rfft(x)[k])


@given(signals, st.floats(0.05, 1.0))
def test_squeeze_preserves_length_and_range(x, tau):
    w = audio_squeeze(Waveform(x, FS), tau)
    assert len(w) == x.size and w.sample_rate == FS and np.all(np.abs(w.samples) <= 1.0)


def test_squeeze_rejects_bad_tau():
    for tau in (0.0, -0.5, 1.5):
        with pytest.raises(ValueError):
            audio_squeeze_array(np.zeros(4), tau)


@pytest.mark.parametrize("v,q,expected", [(16384, 1024, 16384), (1500, 1024, 1024), (1537, 1024, 2048),
                                          (-1537, 1024, -2048), (512, 1024, 1024), (-512, 1024, -1024)])
def test_quantize_examples(v, q, expected):
    assert quantize_array(np.array([v / 32767]), q)[0] * 32767 == pytest.approx(expected, abs=1e-9)
    assert np.rint(quantize_array(np.array([v / 32767]), q)[0] * 32767) == expected


@given(arrays(np.int16, st.integers(1, 100)))
def test_quantize_q1_identity_on_int16_grid(v):
    v = np.clip(v.astype(np.int64), -32767, 32767)
    x = v / 32767.0
    assert np.array_equal(quantize_array(x, 1), x)


@given(signals, st.integers(1, 40000))
def test_quantize_idempotent_and_odd(x, q):
    once = quantize_array(x, q)
    assert np.array_equal(quantize_array(once, q), once)
    assert np.array_equal(quantize_array(-x, q), -once)
    assert once.shape == x.shape and np.all(np.abs(once) <= 1.0)


def test_large_q_silences_voice_for_recognizer(desk_csi):
    voice = desk_csi.corpus.test_set(desk_csi.corpus.enrolled_ids[0])[0].waveform
    spec = DefenseSpec.quantization(32767)
    assert not np.any(spec.apply(Waveform(voice.samples * 0.4, FS)).samples)
    oracle = RecognizerOracle(desk_csi.recognizer, spec.transform())
    with pytest.raises(NoVoicedFramesError):
        oracle.query(Waveform(voice.samples * 0.4, FS))


def test_defense_spec_validation_and_round_trip():
    for bad in (("median", 4), ("squeeze", 0.0), ("quantize", 0), ("blur", 3)):
        with pytest.raises(ValueError):
            DefenseSpec(*bad)
    for spec in (DefenseSpec.median(7), DefenseSpec.squeeze(0.5), DefenseSpec.quantization(256)):
        assert DefenseSpec.from_dict(spec.to_dict()) == spec
        assert not spec.is_identity
    assert DefenseSpec.median(1).is_identity and DefenseSpec.squeeze(1.0).is_identity


@given(signals)
def test_waveform_wrappers_match_arrays(x):
    w = Waveform(x, FS)
    assert np.array_equal(median_filter(w, 5).samples, median_filter_array(x, 5))
    assert np.array_equal(quantize(w, 64).samples, quantize_array(x, 64))
    assert np.array_equal(DefenseSpec.median(5).transform()(x), median_filter_array(x, 5))
