"""Desk-scale recognizers built from the synthetic corpus."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field, replace
from functools import lru_cache
from typing import Optional, Union

import numpy as np

from ..audio import load_wav, save_wav
from ..corpus import Utterance, generate_synthetic_corpus
from ..features import FeatureConfig, extract
from ..gmm import fit_em
from ..recognizer import Recognizer, Task, enroll, max_scores, threshold_from_scores


@dataclass(frozen=True)
class CorpusSpec:
    """Speaker roles are assigned by position: background (UBM), enrolled, imposters."""

    n_background: int = 12
    n_enrolled: int = 5
    n_imposters: int = 10
    utts_per_speaker: int = 16
    enroll_utts: int = 10
    calib_utts: int = 10
    duration_s: float = 0.5
    sample_rate: int = 16000
    seed: int = 1

    @property
    def n_speakers(self) -> int:
        return self.n_background + self.n_enrolled + self.n_imposters

    def to_dict(self):
        return asdict(self)


@dataclass(frozen=True)
class WavCorpusSpec:
    """A corpus directory written by ``save_corpus_dir``."""

    wav_dir: str
    enroll_utts: int = 10
    calib_utts: int = 10

    def to_dict(self):
        return asdict(self)


AnyCorpusSpec = Union[CorpusSpec, WavCorpusSpec]


def corpus_spec_from_dict(d: dict) -> AnyCorpusSpec:
    d = dict(d)
    if "wav_dir" in d:
        return WavCorpusSpec(**d)
    return CorpusSpec(**d)


@dataclass(frozen=True)
class SystemSpec:
    task: str = "osi"
    n_components: int = 64
    em_iters: int = 20
    relevance: float = 16.0
    target_far: float = 0.10
    seed: int = 0
    features: FeatureConfig = field(default_factory=FeatureConfig)

    def to_dict(self):
        d = asdict(self)
        d["features"] = self.features.to_dict()
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        if "features" in d and not isinstance(d["features"], FeatureConfig):
            d["features"] = FeatureConfig(**d["features"])
        return cls(**d)


@dataclass
class DeskCorpus:
    spec: AnyCorpusSpec
    background: list
    enrolled: dict          # speaker id -> list[Utterance]
    imposters: dict         # speaker id -> list[Utterance]
    by_id: dict = field(default_factory=dict)

    @property
    def enrolled_ids(self) -> list[str]:
        return list(self.enrolled)

    def enroll_set(self, spk):
        return self.enrolled[spk][:self.spec.enroll_utts]

    def test_set(self, spk):
        return self.enrolled[spk][self.spec.enroll_utts:]

    def calibration_voices(self):
        return [u for utts in self.imposters.values() for u in utts[:self.spec.calib_utts]]

    def imposter_sources(self):
        """Imposter utterances held out of threshold calibration."""
        return [u for utts in self.imposters.values() for u in utts[self.spec.calib_utts:]]

    def family(self, spk: str) -> str:
        return self.by_id[spk]


MANIFEST = "manifest.json"


def save_corpus_dir(corpus: DeskCorpus, out_dir) -> None:
    """One WAV per utterance under <speaker>/<utt_id>.wav plus a role manifest."""
    os.makedirs(out_dir, exist_ok=True)
    roles = {"background": [], "enrolled": list(corpus.enrolled), "imposters": list(corpus.imposters)}
    utts = {}
    groups = {}
    for u in corpus.background:
        groups.setdefault(u.speaker_id, []).append(u)
    groups.update(corpus.enrolled)
    groups.update(corpus.imposters)
    roles["background"] = [s for s in groups if s not in corpus.enrolled and s not in corpus.imposters]
    for spk, group in groups.items():
        os.makedirs(os.path.join(out_dir, spk), exist_ok=True)
        utts[spk] = []
        for u in group:
            save_wav(os.path.join(out_dir, spk, f"{u.utt_id}.wav"), u.waveform)
            utts[spk].append(u.utt_id)
    manifest = {"roles": roles, "families": dict(corpus.by_id), "utterances": utts}
    with open(os.path.join(out_dir, MANIFEST), "w") as fh:
        json.dump(manifest, fh, indent=1)


def _load_corpus_dir(spec: WavCorpusSpec) -> DeskCorpus:
    with open(os.path.join(spec.wav_dir, MANIFEST)) as fh:
        manifest = json.load(fh)
    fam = manifest["families"]

    def group(spk):
        out = []
        for i, utt_id in enumerate(manifest["utterances"][spk]):
            w = load_wav(os.path.join(spec.wav_dir, spk, f"{utt_id}.wav"))
            out.append(Utterance(spk, fam[spk], i, w))
        return out

    roles = manifest["roles"]
    return DeskCorpus(
        spec=spec,
        background=[u for s in roles["background"] for u in group(s)],
        enrolled={s: group(s) for s in roles["enrolled"]},
        imposters={s: group(s) for s in roles["imposters"]},
        by_id=dict(fam),
    )


@lru_cache(maxsize=8)
def build_corpus(spec: AnyCorpusSpec) -> DeskCorpus:
    if isinstance(spec, WavCorpusSpec):
        return _load_corpus_dir(spec)
    utts = generate_synthetic_corpus(spec.n_speakers, spec.utts_per_speaker, spec.duration_s,
                                     spec.sample_rate, spec.seed)
    grouped: dict[str, list[Utterance]] = {}
    families = {}
    for u in utts:
        grouped.setdefault(u.speaker_id, []).append(u)
        families[u.speaker_id] = u.family
    ids = list(grouped)
    nb, ne = spec.n_background, spec.n_enrolled
    return DeskCorpus(
        spec=spec,
        background=[u for s in ids[:nb] for u in grouped[s]],
        enrolled={s: grouped[s] for s in ids[nb:nb + ne]},
        imposters={s: grouped[s] for s in ids[nb + ne:]},
        by_id=families,
    )


def find_utterance(corpus: DeskCorpus, utt_id: str) -> Utterance:
    for group in (corpus.background, *corpus.enrolled.values(), *corpus.imposters.values()):
        for u in group:
            if u.utt_id == utt_id:
                return u
    raise KeyError(utt_id)


@dataclass
class DeskSystem:
    """The recognizer(s) for one task. SV has one single-speaker recognizer per enrolled speaker."""

    spec: SystemSpec
    corpus: DeskCorpus
    recognizer: Optional[Recognizer] = None
    sv: dict = field(default_factory=dict)

    def for_target(self, t: int) -> Recognizer:
        if Task(self.spec.task) is Task.SV:
            return self.sv[self.corpus.enrolled_ids[t]]
        return self.recognizer


def train_background_ubm(corpus: DeskCorpus, spec: SystemSpec):
    """UBM on the pooled voiced frames of the background speakers; returns (ubm, EM history)."""
    data = np.concatenate([extract(u.waveform, spec.features).voiced for u in corpus.background])
    return fit_em(data, spec.n_components, spec.em_iters, spec.seed)


def enroll_speakers(corpus: DeskCorpus, ubm, spec: SystemSpec):
    return enroll(ubm, {s: [u.waveform for u in corpus.enroll_set(s)] for s in corpus.enrolled_ids},
                  spec.features, spec.relevance)


def calibrated(rec: Recognizer, corpus: DeskCorpus, target_far: float) -> Recognizer:
    calib = [u.waveform for u in corpus.calibration_voices()]
    return rec.with_threshold(threshold_from_scores(max_scores(rec, calib), target_far))


def assemble(spec: SystemSpec, corpus: DeskCorpus, ubm, models) -> DeskSystem:
    """Task recognizer(s) from trained parts; OSI and SV thresholds are calibrated."""
    task = Task(spec.task)
    system = DeskSystem(spec, corpus)
    if task is Task.SV:
        for m in models:
            system.sv[m.speaker_id] = calibrated(Recognizer(task, ubm, [m], None, spec.features), corpus,
                                                 spec.target_far)
    else:
        rec = Recognizer(task, ubm, models, None, spec.features)
        system.recognizer = calibrated(rec, corpus, spec.target_far) if task is Task.OSI else rec
    return system


@lru_cache(maxsize=16)
def _train(corpus_spec: AnyCorpusSpec, spec: SystemSpec):
    corpus = build_corpus(corpus_spec)
    ubm, history = train_background_ubm(corpus, spec)
    return ubm, enroll_speakers(corpus, ubm, spec), history


def em_history(corpus_spec: AnyCorpusSpec, spec: SystemSpec) -> list[float]:
    return _train(corpus_spec, replace(spec, task="csi"))[2]


def build_system(corpus_spec: AnyCorpusSpec, spec: SystemSpec) -> DeskSystem:
    # the UBM and speaker models do not depend on the task
    ubm, models, _ = _train(corpus_spec, replace(spec, task="csi"))
    return assemble(spec, build_corpus(corpus_spec), ubm, models)
