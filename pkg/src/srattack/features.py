"""MFCC front end with regression deltas and an energy VAD.

Everything here operates on a batch axis internally so the attack can score
many NES probes in one pass; the single-waveform functions are thin wrappers.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from functools import lru_cache

import numpy as np
from scipy.fft import dct, rfft

from .audio import Waveform

LOG_FLOOR = 1e-10


@dataclass(frozen=True)
class FeatureConfig:
    frame_len_ms: float = 25.0
    frame_step_ms: float = 10.0
    preemphasis: float = 0.97
    n_mels: int = 26
    n_ceps: int = 13
    delta_window: int = 2
    vad_energy_ratio: float = 0.05

    def __post_init__(self):
        if not self.frame_len_ms >= self.frame_step_ms > 0:
            raise ValueError("need frame_len_ms >= frame_step_ms > 0")
        if not 0 < self.n_ceps <= self.n_mels:
            raise ValueError("need 0 < n_ceps <= n_mels")
        if not 0 <= self.preemphasis < 1:
            raise ValueError("preemphasis must lie in [0, 1)")
        if not 0 < self.vad_energy_ratio < 1:
            raise ValueError("vad_energy_ratio must lie in (0, 1)")
        if self.delta_window < 1:
            raise ValueError("delta_window must be positive")

    def frame_geometry(self, sample_rate: int) -> tuple[int, int, int]:
        """(frame length, hop, FFT size) in samples."""
        flen = int(round(self.frame_len_ms * sample_rate / 1000.0))
        step = int(round(self.frame_step_ms * sample_rate / 1000.0))
        nfft = 1 << max(0, (flen - 1).bit_length())
        return flen, step, nfft

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True, eq=False)
class FeatureMatrix:
    frames: np.ndarray
    voiced_mask: np.ndarray

    def __post_init__(self):
        if self.frames.ndim != 2 or self.frames.shape[0] != self.voiced_mask.shape[0]:
            raise ValueError("frames must be T x D with a length-T mask")

    @property
    def voiced(self) -> np.ndarray:
        return self.frames[self.voiced_mask]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=32)
def mel_filterbank(n_mels: int, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangular filters evaluated at the exact FFT bin frequencies, shape (n_mels, nfft//2+1)."""
    edges = mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    fb.setflags(write=False)
    return fb


def filter_centers(n_mels: int, sample_rate: int) -> np.ndarray:
    return mel_to_hz(np.linspace(0.0, hz_to_mel(sample_rate / 2.0), n_mels + 2))[1:-1]


def frame_signals(x: np.ndarray, flen: int, step: int) -> np.ndarray:
    """(B, N) -> (B, T, flen) without padding; T = 1 + (N - flen) // step."""
    n = x.shape[-1]
    if n < flen:
        raise ValueError(f"signal of {n} samples is shorter than one frame ({flen})")
    n_frames = 1 + (n - flen) // step
    idx = np.arange(flen)[None, :] + step * np.arange(n_frames)[:, None]
    return x[..., idx]


def log_mel_energies(x: np.ndarray, sample_rate: int, cfg: FeatureConfig) -> np.ndarray:
    flen, step, nfft = cfg.frame_geometry(sample_rate)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    emph = np.empty_like(x)
    emph[:, 0] = x[:, 0]
    np.subtract(x[:, 1:], cfg.preemphasis * x[:, :-1], out=emph[:, 1:])
    framed = frame_signals(emph, flen, step)
    padded = np.zeros(framed.shape[:-1] + (nfft,))
    np.multiply(framed, _hamming(flen), out=padded[..., :flen])
    spec = rfft(padded, axis=-1, overwrite_x=True)
    power = spec.real ** 2 + spec.imag ** 2
    energies = power @ mel_filterbank(cfg.n_mels, nfft, sample_rate).T
    return np.log(np.maximum(energies, LOG_FLOOR))


@lru_cache(maxsize=8)
def _hamming(n: int) -> np.ndarray:
    return np.hamming(n)


def static_cepstra(x: np.ndarray, sample_rate: int, cfg: FeatureConfig) -> np.ndarray:
    logmel = log_mel_energies(x, sample_rate, cfg)
    return dct(logmel, type=2, norm="ortho", axis=-1)[..., :cfg.n_ceps]


def deltas(c: np.ndarray, window: int) -> np.ndarray:
    """Regression deltas along the frame axis (-2) with edge replication."""
    T = c.shape[-2]
    pad = [(0, 0)] * c.ndim
    pad[-2] = (window, window)
    padded = np.pad(c, pad, mode="edge")
    num = np.zeros_like(c)
    for n in range(1, window + 1):
        num += n * (padded[..., window + n:window + n + T, :] - padded[..., window - n:window - n + T, :])
    return num / (2.0 * sum(n * n for n in range(1, window + 1)))


def with_deltas(c: np.ndarray, window: int) -> np.ndarray:
    d1 = deltas(c, window)
    return np.concatenate([c, d1, deltas(d1, window)], axis=-1)


def frame_rms(x: np.ndarray, sample_rate: int, cfg: FeatureConfig) -> np.ndarray:
    flen, step, _ = cfg.frame_geometry(sample_rate)
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    if x.shape[-1] < flen:
        raise ValueError(f"signal of {x.shape[-1]} samples is shorter than one frame ({flen})")
    n_frames = 1 + (x.shape[-1] - flen) // step
    csum = np.concatenate([np.zeros((x.shape[0], 1)), np.cumsum(x ** 2, axis=-1)], axis=-1)
    starts = step * np.arange(n_frames)
    energy = np.maximum(csum[:, starts + flen] - csum[:, starts], 0.0)
    return np.sqrt(energy / flen)


def frame_vad(x: np.ndarray, sample_rate: int, cfg: FeatureConfig) -> np.ndarray:
    """Voiced iff frame RMS >= vad_energy_ratio * loudest frame RMS (and nonzero)."""
    rms = frame_rms(x, sample_rate, cfg)
    peak = rms.max(axis=-1, keepdims=True)
    return (rms >= cfg.vad_energy_ratio * peak) & (rms > 0)


def batch_features(x: np.ndarray, sample_rate: int, cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Full pipeline on a (B, N) batch: features (B, T, 3*n_ceps) and mask (B, T)."""
    feats = with_deltas(static_cepstra(x, sample_rate, cfg), cfg.delta_window)
    return feats, frame_vad(x, sample_rate, cfg)


def mfcc(w: Waveform, cfg: FeatureConfig) -> FeatureMatrix:
    """Static cepstra only (D = n_ceps)."""
    c = static_cepstra(w.samples[None, :], w.sample_rate, cfg)[0]
    return FeatureMatrix(c, frame_vad(w.samples[None, :], w.sample_rate, cfg)[0])


def append_deltas(f: FeatureMatrix, window: int) -> FeatureMatrix:
    return FeatureMatrix(with_deltas(f.frames, window), f.voiced_mask)


def energy_vad(w: Waveform, cfg: FeatureConfig) -> np.ndarray:
    return frame_vad(w.samples[None, :], w.sample_rate, cfg)[0]


def extract(w: Waveform, cfg: FeatureConfig) -> FeatureMatrix:
    """mfcc followed by append_deltas: the matrix the recognizer scores."""
    feats, mask = batch_features(w.samples[None, :], w.sample_rate, cfg)
    return FeatureMatrix(feats[0], mask[0])
