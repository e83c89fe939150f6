"""Attack losses for the three recognition tasks.

All loss functions accept a score vector, or a (B, n) matrix of score vectors
in which case they are evaluated row-wise.  Speaker indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .recognizer import DecisionOutcome


def _scores(scores) -> np.ndarray:
    s = np.asarray(scores, dtype=np.float64)
    if s.shape[-1] < 1:
        raise ValueError("empty score vector")
    return s


def _check_index(s: np.ndarray, idx: int, name: str):
    if not 0 <= idx < s.shape[-1]:
        raise IndexError(f"{name}={idx} is not a valid speaker index for {s.shape[-1]} speakers")


def _max_excluding(s: np.ndarray, idx: int) -> np.ndarray:
    others = np.delete(s, idx, axis=-1)
    if others.shape[-1] == 0:
        return np.full(s.shape[:-1], -np.inf)
    return others.max(axis=-1)


def _out(v):
    return float(v) if np.ndim(v) == 0 else v


def loss_osi_targeted(scores, theta: float, t: int, kappa: float):
    s = _scores(scores)
    _check_index(s, t, "t")
    return _out(np.maximum(np.maximum(theta, _max_excluding(s, t)) - s[..., t], -kappa))


def loss_osi_untargeted(scores, theta: float, kappa: float):
    s = _scores(scores)
    return _out(np.maximum(theta - s.max(axis=-1), -kappa))


def loss_csi_targeted(scores, t: int, kappa: float):
    s = _scores(scores)
    if s.shape[-1] < 2:
        raise ValueError("CSI losses need at least two speakers")
    _check_index(s, t, "t")
    return _out(np.maximum(_max_excluding(s, t) - s[..., t], -kappa))


def loss_csi_untargeted(scores, source: int, kappa: float):
    s = _scores(scores)
    if s.shape[-1] < 2:
        raise ValueError("CSI losses need at least two speakers")
    _check_index(s, source, "source")
    return _out(np.maximum(s[..., source] - _max_excluding(s, source), -kappa))


def loss_sv(score, theta: float, kappa: float):
    s = np.asarray(score, dtype=np.float64)
    return _out(np.maximum(theta - s, -kappa))


@dataclass(frozen=True)
class LossKind:
    """Attack goal: which loss to minimise and how to read success off a decision.

    ``name`` is one of osi_targeted, osi_untargeted, csi_targeted,
    csi_untargeted, sv.  ``index`` is the target speaker for targeted goals and
    the true (source) speaker for csi_untargeted.
    """

    name: str
    index: Optional[int] = None

    NAMES = ("osi_targeted", "osi_untargeted", "csi_targeted", "csi_untargeted", "sv")

    def __post_init__(self):
        if self.name not in self.NAMES:
            raise ValueError(f"unknown loss kind {self.name!r}")
        needs_index = self.name in ("osi_targeted", "csi_targeted", "csi_untargeted")
        if needs_index and self.index is None:
            raise ValueError(f"{self.name} needs a speaker index")

    @classmethod
    def osi_targeted(cls, t):
        return cls("osi_targeted", t)

    @classmethod
    def osi_untargeted(cls):
        return cls("osi_untargeted")

    @classmethod
    def csi_targeted(cls, t):
        return cls("csi_targeted", t)

    @classmethod
    def csi_untargeted(cls, source):
        return cls("csi_untargeted", source)

    @classmethod
    def sv_targeted(cls):
        return cls("sv")

    @property
    def needs_theta(self) -> bool:
        return self.name in ("osi_targeted", "osi_untargeted", "sv")

    @property
    def targeted(self) -> bool:
        return self.name in ("osi_targeted", "csi_targeted", "sv")

    def __call__(self, scores, theta: Optional[float], kappa: float):
        if self.needs_theta and theta is None:
            raise ValueError(f"{self.name} needs a threshold")
        if self.name == "osi_targeted":
            return loss_osi_targeted(scores, theta, self.index, kappa)
        if self.name == "osi_untargeted":
            return loss_osi_untargeted(scores, theta, kappa)
        if self.name == "csi_targeted":
            return loss_csi_targeted(scores, self.index, kappa)
        if self.name == "csi_untargeted":
            return loss_csi_untargeted(scores, self.index, kappa)
        return loss_sv(np.asarray(scores)[..., 0], theta, kappa)

    def achieved(self, outcome: DecisionOutcome) -> bool:
        """Whether the oracle's decision meets this goal."""
        if self.name in ("osi_targeted", "csi_targeted"):
            return outcome.index == self.index
        if self.name == "csi_untargeted":
            return outcome.index != self.index
        return not outcome.rejected

    def to_dict(self):
        return {"name": self.name, "index": self.index}
