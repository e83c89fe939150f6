"""Deterministic synthetic speech corpus.

Speakers share one vowel inventory; what makes them distinct is a source-filter
voice: pitch (low or high family), vocal-tract length scaling, per-formant
idiosyncrasies, formant count (3-5), bandwidths, spectral tilt and breathiness.
An utterance is a run of syllables, each gliding between two vowels, separated
by short pauses so the VAD has unvoiced frames to drop.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import sosfilt

from .audio import Waveform

LOW, HIGH = "low", "high"
TARGET_RMS = 0.05
BLOCK = 80

# F1..F5 (Hz) for a reference adult vocal tract
_VOWELS = np.array([
    [730, 1090, 2440, 3400, 4500],   # a
    [270, 2290, 3010, 3600, 4600],   # i
    [300, 870, 2240, 3350, 4400],    # u
    [530, 1840, 2480, 3450, 4500],   # e
    [570, 840, 2410, 3300, 4400],    # o
    [660, 1720, 2410, 3500, 4550],   # ae
], dtype=np.float64)


@dataclass(frozen=True)
class SpeakerParams:
    speaker_id: str
    family: str
    f0: float
    tract_scale: float
    quirks: np.ndarray        # per-formant multiplicative offsets
    bandwidths: np.ndarray    # Hz, one per formant
    breath: float
    tilt: float

    @property
    def n_formants(self) -> int:
        return self.bandwidths.size

    def vowel(self, v: int) -> np.ndarray:
        return _VOWELS[v, :self.n_formants] * self.tract_scale * self.quirks


@dataclass(frozen=True)
class Utterance:
    speaker_id: str
    family: str
    index: int
    waveform: Waveform

    @property
    def utt_id(self) -> str:
        return f"{self.speaker_id}_u{self.index:02d}"


def speaker_params(seed: int, index: int) -> SpeakerParams:
    rng = np.random.default_rng([seed, index, 0])
    family = LOW if index % 2 == 0 else HIGH
    if family == LOW:
        f0, scale = rng.uniform(90, 140), rng.uniform(0.88, 1.04)
    else:
        f0, scale = rng.uniform(180, 250), rng.uniform(1.04, 1.20)
    n_form = int(rng.integers(3, 6))
    return SpeakerParams(
        speaker_id=f"spk{index:02d}",
        family=family,
        f0=float(f0),
        tract_scale=float(scale),
        quirks=rng.uniform(0.88, 1.12, size=n_form),
        bandwidths=rng.uniform(50, 200, size=n_form) * (1 + 0.3 * np.arange(n_form)),
        breath=float(rng.uniform(0.05, 0.3)),
        tilt=float(rng.uniform(0.8, 0.97)),
    )


def _resonator_sos(freqs, bws, fs):
    r = np.exp(-np.pi * np.asarray(bws) / fs)
    a1 = -2 * r * np.cos(2 * np.pi * np.asarray(freqs) / fs)
    a2 = r * r
    g = 1 + a1 + a2  # unit gain at DC
    z = np.zeros_like(g)
    return np.stack([g, z, z, np.ones_like(g), a1, a2], axis=1)


def _glide(src, start, end, bws, fs):
    """Filter src through resonators whose centers move linearly from start to end."""
    out = np.empty_like(src)
    zi = None
    n_blocks = max(1, int(np.ceil(src.size / BLOCK)))
    for b in range(n_blocks):
        frac = b / max(1, n_blocks - 1)
        sos = _resonator_sos((1 - frac) * start + frac * end, bws, fs)
        if zi is None:
            zi = np.zeros((sos.shape[0], 2))
        seg = slice(b * BLOCK, min(src.size, (b + 1) * BLOCK))
        out[seg], zi = sosfilt(sos, src[seg], zi=zi)
    return out


def synthesize(params: SpeakerParams, duration_s: float, sample_rate: int, rng) -> np.ndarray:
    n = int(round(duration_s * sample_rate))
    out = np.zeros(n)
    n_syl = max(1, int(round(duration_s / 0.18)))
    bounds = np.linspace(0, n, n_syl + 1).astype(int)
    f0_utt = params.f0 * rng.uniform(0.9, 1.1)
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        gap = int(rng.uniform(0.15, 0.3) * (hi - lo))
        seg = hi - lo - gap
        if seg < BLOCK:
            continue
        t = np.arange(seg) / sample_rate
        f0 = f0_utt * (1 + rng.uniform(-0.08, 0.08) * t / t[-1] + 0.02 * rng.standard_normal())
        phase = np.cumsum(f0 / sample_rate)
        src = np.zeros(seg)
        src[1:][np.diff(np.floor(phase)) > 0] = 1.0
        src = sosfilt([[1.0, 0.0, 0.0, 1.0, -params.tilt, 0.0]], src)
        src = src / max(np.std(src), 1e-12) + params.breath * 3.0 * rng.standard_normal(seg)
        v0, v1 = rng.integers(len(_VOWELS), size=2)
        voiced = _glide(src, params.vowel(v0), params.vowel(v1), params.bandwidths, sample_rate)
        out[lo + gap // 2:lo + gap // 2 + seg] = voiced * np.hanning(seg) ** 0.5
    out *= TARGET_RMS / max(np.sqrt(np.mean(out ** 2)), 1e-12)
    # room noise, about 30 dB below the speech level
    out = out + TARGET_RMS * 0.03 * rng.standard_normal(n)
    return np.clip(out, -1.0, 1.0)


def generate_synthetic_corpus(n_speakers: int, utts_per_speaker: int, duration_s: float = 0.5,
                              sample_rate: int = 16000, seed: int = 0) -> list[Utterance]:
    if n_speakers < 2:
        raise ValueError("need at least two speakers")
    corpus = []
    for s in range(n_speakers):
        params = speaker_params(seed, s)
        for u in range(utts_per_speaker):
            rng = np.random.default_rng([seed, s, u + 1])
            w = Waveform(synthesize(params, duration_s, sample_rate, rng), sample_rate)
            corpus.append(Utterance(params.speaker_id, params.family, u, w))
    return corpus
