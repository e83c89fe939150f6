"""Input-transformation defenses: median smoothing, audio squeezing, quantization."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .audio import Waveform

QUANT_SCALE = 32767.0


def median_filter_array(x: np.ndarray, k: int) -> np.ndarray:
    if k < 1 or k % 2 == 0:
        raise ValueError("median kernel size must be a positive odd integer")
    if k == 1:
        return np.array(x, dtype=np.float64, copy=True)
    h = k // 2
    padded = np.pad(np.asarray(x, dtype=np.float64), h, mode="edge")
    return np.median(np.lib.stride_tricks.sliding_window_view(padded, k), axis=1)


def audio_squeeze_array(x: np.ndarray, tau: float) -> np.ndarray:
    """Linear-interpolation resample to tau * fs and back, same length."""
    if not 0.0 < tau <= 1.0:
        raise ValueError("tau must lie in (0, 1]")
    x = np.asarray(x, dtype=np.float64)
    if tau == 1.0:
        return x.copy()
    n = x.size
    t = np.arange(n, dtype=np.float64)
    n_low = max(1, int(round(n * tau)))
    t_low = np.arange(n_low, dtype=np.float64) / tau
    low = np.interp(t_low, t, x)
    return np.interp(t, t_low, low)


def quantize_array(x: np.ndarray, q: int) -> np.ndarray:
    if q < 1:
        raise ValueError("q must be a positive integer")
    v = np.rint(np.asarray(x, dtype=np.float64) * QUANT_SCALE)
    # nearest multiple of q, ties away from zero
    m = np.sign(v) * np.floor(np.abs(v) / q + 0.5) * q
    return np.clip(m, -QUANT_SCALE, QUANT_SCALE) / QUANT_SCALE


def median_filter(w: Waveform, k: int) -> Waveform:
    return w.with_samples(median_filter_array(w.samples, k))


def audio_squeeze(w: Waveform, tau: float) -> Waveform:
    return w.with_samples(np.clip(audio_squeeze_array(w.samples, tau), -1.0, 1.0))


def quantize(w: Waveform, q: int) -> Waveform:
    return w.with_samples(quantize_array(w.samples, q))


@dataclass(frozen=True)
class DefenseSpec:
    """kind is "median" (param k), "squeeze" (param tau) or "quantize" (param q)."""

    kind: str
    param: float

    def __post_init__(self):
        if self.kind == "median":
            if self.param < 1 or int(self.param) != self.param or int(self.param) % 2 == 0:
                raise ValueError("median kernel size must be a positive odd integer")
        elif self.kind == "squeeze":
            if not 0.0 < self.param <= 1.0:
                raise ValueError("tau must lie in (0, 1]")
        elif self.kind == "quantize":
            if self.param < 1 or int(self.param) != self.param:
                raise ValueError("q must be a positive integer")
        else:
            raise ValueError(f"unknown defense {self.kind!r}")

    @classmethod
    def median(cls, k: int):
        return cls("median", k)

    @classmethod
    def squeeze(cls, tau: float):
        return cls("squeeze", tau)

    @classmethod
    def quantization(cls, q: int):
        return cls("quantize", q)

    @classmethod
    def from_dict(cls, d: dict):
        kind = d["kind"]
        key = {"median": "k", "squeeze": "tau", "quantize": "q"}.get(kind, "param")
        return cls(kind, d.get(key, d.get("param")))

    def to_dict(self):
        key = {"median": "k", "squeeze": "tau", "quantize": "q"}[self.kind]
        return {"kind": self.kind, key: self.param}

    @property
    def is_identity(self) -> bool:
        return self.param == 1

    def transform(self) -> Callable[[np.ndarray], np.ndarray]:
        if self.kind == "median":
            k = int(self.param)
            return lambda x: median_filter_array(x, k)
        if self.kind == "squeeze":
            tau = float(self.param)
            return lambda x: np.clip(audio_squeeze_array(x, tau), -1.0, 1.0)
        q = int(self.param)
        return lambda x: quantize_array(x, q)

    def apply(self, w: Waveform) -> Waveform:
        return w.with_samples(self.transform()(w.samples))
