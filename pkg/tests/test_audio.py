import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from srattack.audio import (EmptyPayloadError, clip_eps_array, MalformedHeaderError, UndefinedSnrError, UnsupportedEncodingError,
                            Waveform, clip_eps, linf_distance, read_wav, snr, snr_from_powers,
                            snr_of_perturbation, to_int16, write_wav)

amplitudes = arrays(np.float64, st.integers(1, 300), elements=st.floats(-1.0, 1.0))


def wav_bytes(ints, tag=1, channels=1, bits=16, rate=16000):
    payload = np.asarray(ints, dtype="<i2").tobytes()
    fmt = struct.pack("<HHIIHH", tag, channels, rate, rate * channels * bits // 8, channels * bits // 8, bits)
    body = b"WAVE" + b"fmt " + struct.pack("<I", 16) + fmt + b"data" + struct.pack("<I", len(payload)) + payload
    return b"RIFF" + struct.pack("<I", len(body)) + body


# --- waveform invariants

def test_waveform_rejects_out_of_range():
    with pytest.raises(ValueError):
        Waveform(np.array([0.0, 1.5]))


def test_waveform_rejects_nan_and_empty():
    with pytest.raises(ValueError):
        Waveform(np.array([np.nan]))
    with pytest.raises(ValueError):
        Waveform(np.array([]))


def test_waveform_samples_are_read_only():
    w = Waveform(np.zeros(4))
    with pytest.raises(ValueError):
        w.samples[0] = 0.5


# --- WAV decoding

def test_read_max_int16():
    w = read_wav(wav_bytes([32767]))
    assert w.samples[0] == 32767 / 32768


def test_read_zero():
    assert read_wav(wav_bytes([0])).samples[0] == 0.0


def test_read_keeps_sample_rate():
    assert read_wav(wav_bytes([1, 2], rate=8000)).sample_rate == 8000


def test_malformed_header():
    with pytest.raises(MalformedHeaderError):
        read_wav(b"RIFX0000WAVE")
    with pytest.raises(MalformedHeaderError):
        read_wav(wav_bytes([1, 2])[:20])


@pytest.mark.parametrize("kw", [{"tag": 3}, {"channels": 2}, {"bits": 8}])
def test_unsupported_encoding(kw):
    with pytest.raises(UnsupportedEncodingError):
        read_wav(wav_bytes([1, 2], **kw))


def test_empty_payload():
    with pytest.raises(EmptyPayloadError):
        read_wav(wav_bytes([]))


def test_parse_errors_are_distinct():
    kinds = {MalformedHeaderError, UnsupportedEncodingError, EmptyPayloadError}
    assert len(kinds) == 3
    assert not any(issubclass(a, b) for a in kinds for b in kinds if a is not b)


# --- WAV encoding

def test_write_full_scale():
    assert to_int16(np.array([1.0]))[0] == 32767
    assert to_int16(np.array([-1.0]))[0] == -32767


def test_write_silence_gives_zero_payload():
    data = write_wav(Waveform(np.zeros(10)))
    assert data[-20:] == b"\x00" * 20


@given(amplitudes)
def test_round_trip_within_one_step(a):
    w = Waveform(a)
    back = read_wav(write_wav(w))
    assert back.sample_rate == w.sample_rate
    assert np.max(np.abs(back.samples - w.samples)) <= 1 / 32768


@given(arrays(np.int16, st.integers(1, 200), elements=st.integers(-32767, 32767)))
def test_int16_waveforms_round_trip_bit_exactly(ints):
    w = read_wav(wav_bytes(ints))
    assert read_wav(write_wav(w)) == w


# --- clip_eps

def test_clip_identity_inside_ball():
    o = Waveform(np.array([0.1, -0.3, 0.9]))
    assert clip_eps(o, o, 0.01) == o


def test_clip_eps_bound_binds():
    # a candidate of 1.5 is not a valid Waveform, so use the array form
    assert clip_eps_array(np.array([1.5]), np.array([0.9]), 0.05)[0] == 0.95


def test_clip_validity_bound_binds():
    assert clip_eps_array(np.array([1.2]), np.array([0.999]), 0.05)[0] == 1.0


def test_clip_length_mismatch():
    with pytest.raises(ValueError):
        clip_eps(Waveform(np.zeros(3)), Waveform(np.zeros(4)), 0.1)


@given(amplitudes, st.floats(0.0, 0.5), st.integers(0, 2**32 - 1))
def test_clip_idempotent_and_bounded(o, eps, seed):
    r = np.random.default_rng(seed)
    orig = Waveform(o)
    cand = Waveform(np.clip(o + r.uniform(-1, 1, o.size), -1, 1))
    raw = clip_eps_array(o + r.uniform(-3, 3, o.size), o, eps)
    assert np.all(np.abs(raw - o) <= eps) and np.all(np.abs(raw) <= 1)
    once = clip_eps(cand, orig, eps)
    assert clip_eps(once, orig, eps) == once
    assert linf_distance(once, orig) <= eps


# --- distortion

def test_snr_direct_formula():
    rep = snr_from_powers(1.0, 0.01)
    assert rep.snr_db == 20.0


def test_snr_square_wave_constant_perturbation():
    sq = np.tile([1.0, -1.0], 50)
    rep = snr_of_perturbation(sq, np.full(100, 0.1))
    assert rep.signal_power == 1.0
    assert rep.snr_db == pytest.approx(20.0, rel=1e-12)


def test_snr_doubling_perturbation_costs_6_dB(rng):
    o = Waveform(rng.uniform(-0.5, 0.5, 200))
    d = rng.uniform(-0.01, 0.01, 200)
    a = snr(o, o.with_samples(o.samples + d)).snr_db
    b = snr(o, o.with_samples(o.samples + 2 * d)).snr_db
    assert a - b == pytest.approx(10 * np.log10(4), abs=1e-9)


def test_snr_zero_perturbation_is_error():
    o = Waveform(np.array([0.1, 0.2]))
    with pytest.raises(UndefinedSnrError):
        snr(o, o)


@given(arrays(np.float64, 50, elements=st.floats(-0.5, 0.5)), st.floats(0.1, 10.0), st.integers(0, 2**32 - 1))
def test_snr_scaling_law(o, k, seed):
    if not np.any(o):
        return
    d = np.random.default_rng(seed).uniform(0.001, 0.01, 50)
    base = snr_of_perturbation(o, d)
    scaled = snr_of_perturbation(o, k * d)
    assert scaled.snr_db == pytest.approx(base.snr_db - 20 * np.log10(k), abs=1e-9)


def test_linf_examples():
    a = Waveform(np.array([0.1, 0.2, 0.3]))
    assert linf_distance(a, a) == 0.0
    b = a.with_samples(a.samples + np.array([0.0, 0.003, 0.0]))
    assert linf_distance(a, b) == pytest.approx(0.003, abs=1e-15)


@given(amplitudes, st.integers(0, 2**32 - 1))
def test_linf_matches_brute_force(a, seed):
    b = np.random.default_rng(seed).uniform(-1, 1, a.size)
    expected = max(abs(x - y) for x, y in zip(a.tolist(), b.tolist()))
    assert linf_distance(Waveform(a), Waveform(b)) == expected
