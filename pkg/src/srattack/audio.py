"""Waveform container, 16-bit PCM WAV I/O, L-inf clipping and SNR."""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass, field

import numpy as np

INT16_READ_SCALE = 32768.0
INT16_WRITE_SCALE = 32768.0


class WavParseError(ValueError):
    """Base class for WAV decoding failures."""


class MalformedHeaderError(WavParseError):
    pass


class UnsupportedEncodingError(WavParseError):
    pass


class EmptyPayloadError(WavParseError):
    pass


class UndefinedSnrError(ValueError):
    """Raised when the perturbation is identically zero."""


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono audio with amplitudes normalized to [-1, 1]."""

    samples: np.ndarray
    sample_rate: int = 16000

    def __post_init__(self):
        s = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if s.size < 1:
            raise ValueError("waveform must contain at least one sample")
        if not np.all(np.isfinite(s)):
            raise ValueError("waveform contains non-finite samples")
        if np.any(np.abs(s) > 1.0):
            raise ValueError("waveform samples must lie in [-1, 1]")
        if int(self.sample_rate) <= 0:
            raise ValueError("sample_rate must be positive")
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    def __eq__(self, other):
        if not isinstance(other, Waveform):
            return NotImplemented
        return self.sample_rate == other.sample_rate and np.array_equal(self.samples, other.samples)

    __hash__ = None

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate)


@dataclass(frozen=True)
class SnrReport:
    snr_db: float
    signal_power: float
    noise_power: float


def _check_pair(a: Waveform, b: Waveform):
    if len(a) != len(b):
        raise ValueError(f"length mismatch: {len(a)} vs {len(b)}")
    if a.sample_rate != b.sample_rate:
        raise ValueError(f"sample rate mismatch: {a.sample_rate} vs {b.sample_rate}")


def _chunks(data: bytes):
    pos = 12
    while pos + 8 <= len(data):
        cid, size = struct.unpack("<4sI", data[pos:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise MalformedHeaderError(f"chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def read_wav(data: bytes) -> Waveform:
    """Decode a 16-bit PCM mono WAV byte string; each int16 v maps to v / 32768."""
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise MalformedHeaderError("missing RIFF/WAVE header")
    fmt = None
    payload = None
    for cid, body in _chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise MalformedHeaderError("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
        elif cid == b"data":
            payload = body
    if fmt is None:
        raise MalformedHeaderError("no fmt chunk")
    if payload is None:
        raise MalformedHeaderError("no data chunk")
    tag, channels, rate, _, _, bits = fmt
    if tag != 1:
        raise UnsupportedEncodingError(f"format tag {tag} is not PCM")
    if channels != 1:
        raise UnsupportedEncodingError(f"{channels} channels; only mono is supported")
    if bits != 16:
        raise UnsupportedEncodingError(f"{bits} bits per sample; only 16 is supported")
    if rate <= 0:
        raise MalformedHeaderError("sample rate must be positive")
    n = len(payload) // 2
    if n == 0:
        raise EmptyPayloadError("data chunk holds no samples")
    ints = np.frombuffer(payload[:2 * n], dtype="<i2")
    return Waveform(ints.astype(np.float64) / INT16_READ_SCALE, rate)


def to_int16(samples: np.ndarray) -> np.ndarray:
    """Scale by 32768 and clamp symmetrically to +-32767.

    Using the read divisor keeps int16-derived waveforms bit-exact on a
    round trip; the symmetric clamp maps +-1.0 to +-32767.
    """
    v = np.rint(np.asarray(samples, dtype=np.float64) * INT16_WRITE_SCALE)
    return np.clip(v, -32767, 32767).astype(np.int16)


def write_wav(w: Waveform) -> bytes:
    pcm = to_int16(w.samples).astype("<i2").tobytes()
    buf = io.BytesIO()
    buf.write(b"RIFF")
    buf.write(struct.pack("<I", 36 + len(pcm)))
    buf.write(b"WAVE")
    buf.write(b"fmt ")
    buf.write(struct.pack("<IHHIIHH", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16))
    buf.write(b"data")
    buf.write(struct.pack("<I", len(pcm)))
    buf.write(pcm)
    return buf.getvalue()


def load_wav(path) -> Waveform:
    with open(path, "rb") as fh:
        return read_wav(fh.read())


def save_wav(path, w: Waveform) -> None:
    with open(path, "wb") as fh:
        fh.write(write_wav(w))


def clip_eps_array(candidate: np.ndarray, original: np.ndarray, epsilon: float) -> np.ndarray:
    """max{min{c, 1, o + eps}, -1, o - eps}, elementwise.

    o + eps can round one ulp past the ball; such bounds are pulled back so
    that |output - o| <= eps holds in floating point too.
    """
    original = np.asarray(original, dtype=np.float64)
    upper = original + epsilon
    upper = np.where(upper - original > epsilon, np.nextafter(upper, -np.inf), upper)
    lower = original - epsilon
    lower = np.where(original - lower > epsilon, np.nextafter(lower, np.inf), lower)
    upper = np.minimum(1.0, upper)
    lower = np.maximum(-1.0, lower)
    return np.maximum(np.minimum(candidate, upper), lower)


def clip_eps(candidate: Waveform, original: Waveform, epsilon: float) -> Waveform:
    _check_pair(candidate, original)
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    return original.with_samples(clip_eps_array(candidate.samples, original.samples, epsilon))


def linf_distance(a: Waveform, b: Waveform) -> float:
    _check_pair(a, b)
    return float(np.max(np.abs(a.samples - b.samples)))


def snr_from_powers(signal_power: float, noise_power: float) -> SnrReport:
    if noise_power == 0.0:
        raise UndefinedSnrError("perturbation is zero; SNR is undefined")
    if signal_power == 0.0:
        return SnrReport(-np.inf, signal_power, noise_power)  # silent original
    return SnrReport(10.0 * np.log10(signal_power / noise_power), signal_power, noise_power)


def snr_of_perturbation(signal: np.ndarray, delta: np.ndarray) -> SnrReport:
    """SNR of a signal against an additive perturbation, both as arrays."""
    signal = np.asarray(signal, dtype=np.float64)
    delta = np.asarray(delta, dtype=np.float64)
    if signal.shape != delta.shape:
        raise ValueError("signal and perturbation lengths differ")
    return snr_from_powers(float(np.mean(signal ** 2)), float(np.mean(delta ** 2)))


def snr(original: Waveform, adversarial: Waveform) -> SnrReport:
    _check_pair(original, adversarial)
    return snr_of_perturbation(original.samples, adversarial.samples - original.samples)
