"""GMM-UBM speaker recognizer: LLR scoring and the OSI / CSI / SV decision rules."""

from __future__ import annotations

import json
import zipfile
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from .audio import Waveform
from .features import FeatureConfig, batch_features, extract
from .gmm import LOG_2PI, DiagGmm, SpeakerModel, map_adapt

FORMAT_VERSION = 1
REJECT = "reject"
ACCEPT = "accept"


class Task(str, Enum):
    OSI = "osi"
    CSI = "csi"
    SV = "sv"


class NoVoicedFramesError(ValueError):
    """The VAD found nothing to score."""


class ModelFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class DecisionOutcome:
    scores: np.ndarray
    decision: str
    index: Optional[int]

    @property
    def rejected(self) -> bool:
        return self.decision == REJECT


@dataclass(frozen=True, eq=False)
class Recognizer:
    task: Task
    ubm: DiagGmm
    speakers: tuple
    threshold: Optional[float] = None
    feature_config: FeatureConfig = field(default_factory=FeatureConfig)

    def __post_init__(self):
        object.__setattr__(self, "task", Task(self.task))
        object.__setattr__(self, "speakers", tuple(self.speakers))
        n = len(self.speakers)
        if self.task is Task.SV and n != 1:
            raise ValueError("SV needs exactly one enrolled speaker")
        if self.task is Task.CSI and n < 2:
            raise ValueError("CSI needs at least two enrolled speakers")
        if n < 1:
            raise ValueError("no enrolled speakers")
        for s in self.speakers:
            if s.gmm.means.shape != self.ubm.means.shape:
                raise ValueError(f"speaker {s.speaker_id} does not match the UBM shape")
        # stacked parameters for one-shot scoring: row 0 is the UBM
        means = np.stack([self.ubm.means] + [s.gmm.means for s in self.speakers])
        prec = 1.0 / self.ubm.variances
        K, D = self.ubm.means.shape
        const = (np.log(self.ubm.weights) - 0.5 * (D * LOG_2PI + np.log(self.ubm.variances).sum(1)))[None, :] \
            - 0.5 * (means ** 2 * prec[None]).sum(2)
        object.__setattr__(self, "_prec_t", prec.T.copy())
        object.__setattr__(self, "_lin", (means * prec[None]).transpose(2, 0, 1).reshape(D, -1).copy())
        object.__setattr__(self, "_const", const)

    @property
    def n_speakers(self) -> int:
        return len(self.speakers)

    @property
    def speaker_ids(self) -> list[str]:
        return [s.speaker_id for s in self.speakers]

    def with_threshold(self, theta: Optional[float]) -> "Recognizer":
        return replace(self, threshold=None if theta is None else float(theta))

    def score_batch(self, samples: np.ndarray, sample_rate: int) -> np.ndarray:
        """Frame-averaged LLR for a (B, N) batch of signals; shape (B, n_speakers)."""
        feats, mask = batch_features(samples, sample_rate, self.feature_config)
        B, T, D = feats.shape
        counts = mask.sum(1)
        if np.any(counts == 0):
            raise NoVoicedFramesError("input has no voiced frames")
        x = feats[mask]
        K = self.ubm.n_components
        lp = (-0.5 * (x ** 2) @ self._prec_t)[:, None, :] + (x @ self._lin).reshape(-1, self.n_speakers + 1, K) \
            + self._const[None]
        peak = lp.max(axis=2, keepdims=True)
        ll = np.log(np.exp(lp - peak).sum(axis=2)) + peak[..., 0]
        per_frame = np.zeros((B, T, self.n_speakers))
        per_frame[mask] = ll[:, 1:] - ll[:, :1]
        sums = per_frame.sum(axis=1)
        return sums / counts[:, None]

    def decide_scores(self, scores: np.ndarray) -> DecisionOutcome:
        scores = np.asarray(scores, dtype=np.float64)
        best = int(np.argmax(scores))
        if self.task is Task.CSI:
            return DecisionOutcome(scores, self.speakers[best].speaker_id, best)
        if self.threshold is None:
            raise ValueError(f"{self.task.value} recognizer has no threshold")
        if scores[best] < self.threshold:
            return DecisionOutcome(scores, REJECT, None)
        if self.task is Task.SV:
            return DecisionOutcome(scores, ACCEPT, 0)
        return DecisionOutcome(scores, self.speakers[best].speaker_id, best)


def score(rec: Recognizer, w: Waveform) -> np.ndarray:
    return rec.score_batch(w.samples[None, :], w.sample_rate)[0]


def decide(rec: Recognizer, w: Waveform) -> DecisionOutcome:
    return rec.decide_scores(score(rec, w))


def enroll(ubm: DiagGmm, utterances: dict, cfg: FeatureConfig, relevance: float = 16.0) -> list[SpeakerModel]:
    """MAP-enroll each speaker from the pooled voiced frames of their utterances."""
    from .features import FeatureMatrix

    models = []
    for spk, waves in utterances.items():
        fms = [extract(w, cfg) for w in waves]
        pooled = FeatureMatrix(np.concatenate([f.frames for f in fms]), np.concatenate([f.voiced_mask for f in fms]))
        models.append(map_adapt(ubm, pooled, relevance, speaker_id=str(spk)))
    return models


def max_scores(rec: Recognizer, voices: Sequence[Waveform]) -> np.ndarray:
    return np.array([score(rec, v).max() for v in voices])


def threshold_from_scores(imposter_max: np.ndarray, target_far: float) -> float:
    s = np.sort(np.asarray(imposter_max, dtype=np.float64))[::-1]
    if s.size < 20:
        raise ValueError("need at least 20 imposter voices to calibrate")
    if not 0.0 <= target_far < 1.0:
        raise ValueError("target_far must lie in [0, 1)")
    k = int(np.floor(target_far * s.size + 1e-9))
    if k == 0:
        return float(np.nextafter(s[0], np.inf))
    # midway between the k-th and (k+1)-th largest keeps exactly k above threshold
    return float(0.5 * (s[k - 1] + s[k]))


def calibrate_threshold(rec: Recognizer, imposter_voices: Sequence[Waveform], target_far: float) -> float:
    if rec.task is Task.CSI:
        raise ValueError("CSI has no threshold to calibrate")
    return threshold_from_scores(max_scores(rec, imposter_voices), target_far)


def _open_npz(path):
    try:
        return np.load(path, allow_pickle=False)
    except (ValueError, OSError, zipfile.BadZipFile) as e:
        if isinstance(e, FileNotFoundError):
            raise
        raise ModelFormatError(f"{path}: not a model file ({e})") from None


def save_recognizer(path, rec: Recognizer, extra: Optional[dict] = None) -> None:
    meta = {
        "format": "srattack-recognizer",
        "format_version": FORMAT_VERSION,
        "task": rec.task.value,
        "threshold": rec.threshold,
        "speaker_ids": rec.speaker_ids,
        "feature_config": rec.feature_config.to_dict(),
        "extra": extra or {},
    }
    with open(path, "wb") as fh:
        np.savez(
            fh,
            meta=np.array(json.dumps(meta)),
            ubm_weights=rec.ubm.weights,
            ubm_means=rec.ubm.means,
            ubm_variances=rec.ubm.variances,
            speaker_means=np.stack([s.gmm.means for s in rec.speakers]),
        )


def load_recognizer(path) -> tuple[Recognizer, dict]:
    """Returns the recognizer and the free-form ``extra`` metadata stored with it."""
    with _open_npz(path) as z:
        try:
            meta = json.loads(str(z["meta"]))
        except KeyError:
            raise ModelFormatError(f"{path}: not a recognizer file") from None
        if meta.get("format") != "srattack-recognizer" or meta.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: format version {meta.get('format_version')!r}, expected {FORMAT_VERSION}")
        ubm = DiagGmm(z["ubm_weights"], z["ubm_means"], z["ubm_variances"])
        speakers = [SpeakerModel(sid, DiagGmm(ubm.weights, m, ubm.variances))
                    for sid, m in zip(meta["speaker_ids"], z["speaker_means"])]
    rec = Recognizer(Task(meta["task"]), ubm, speakers, meta["threshold"], FeatureConfig(**meta["feature_config"]))
    return rec, meta.get("extra", {})


def save_ubm(path, ubm: DiagGmm, extra: Optional[dict] = None) -> None:
    meta = {"format": "srattack-ubm", "format_version": FORMAT_VERSION, "extra": extra or {}}
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta)), weights=ubm.weights, means=ubm.means,
                 variances=ubm.variances)


def load_ubm(path) -> tuple[DiagGmm, dict]:
    with _open_npz(path) as z:
        try:
            meta = json.loads(str(z["meta"]))
        except KeyError:
            raise ModelFormatError(f"{path}: not a UBM file") from None
        if meta.get("format") != "srattack-ubm" or meta.get("format_version") != FORMAT_VERSION:
            raise ModelFormatError(
                f"{path}: format version {meta.get('format_version')!r}, expected {FORMAT_VERSION}")
        return DiagGmm(z["weights"], z["means"], z["variances"]), meta.get("extra", {})
