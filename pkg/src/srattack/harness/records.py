"""Trial records: JSONL log, CSV summary, adversarial WAVs named by trial id."""

from __future__ import annotations

import csv
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Iterable, Optional

import numpy as np

from ..audio import Waveform, load_wav, save_wav

RECORDS_FILE = "records.jsonl"
SUMMARY_FILE = "summary.csv"
REPORT_FILE = "report.json"
WAV_DIR = "wav"
RECORD_VERSION = 1


class MissingWaveformError(FileNotFoundError):
    pass


def samples_digest(samples: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(samples, dtype="<f8").tobytes()).hexdigest()


@dataclass
class TrialRecord:
    """Everything needed to re-run one attack trial and to score its output.

    ``system`` holds the corpus and recognizer specs the target was built
    from; ``models`` optionally points at the recognizer files actually used.
    """

    trial_id: str
    trial_index: int
    task: str
    goal: str
    group: str
    source_utt: str
    source_speaker: str
    target_speaker: Optional[str]
    target_index: Optional[int]
    master_seed: int
    seed: int
    method: str
    attack_config: dict
    theta_for_loss: Optional[float]
    result: dict
    adversarial_sha256: str
    oracle_queries: int
    wall_s: float
    system: dict = field(default_factory=dict)
    models: Optional[dict] = None
    defense: Optional[dict] = None
    theta_estimate: Optional[dict] = None
    version: int = RECORD_VERSION

    @property
    def scenario(self) -> str:
        return f"{self.task}/{self.goal}/{self.group}"

    @property
    def success(self) -> bool:
        return bool(self.result["success"])

    @property
    def wav_name(self) -> str:
        return f"{self.trial_id}.wav"

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "TrialRecord":
        return cls(**d)


def trial_id(index: int) -> str:
    return f"t{index:05d}"


def append_record(path, record: TrialRecord) -> None:
    with open(path, "a") as fh:
        fh.write(record.to_json() + "\n")


def read_records(path) -> list[TrialRecord]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(TrialRecord.from_dict(json.loads(line)))
    return out


SUMMARY_COLUMNS = ("trial_id", "scenario", "source_utt", "target_speaker", "method", "epsilon", "kappa",
                   "success", "final_decision", "iterations", "queries", "snr_db", "wall_s")


def write_summary_csv(path, records: Iterable[TrialRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in records:
            w.writerow([r.trial_id, r.scenario, r.source_utt, r.target_speaker or "", r.method,
                        r.attack_config.get("epsilon"), r.attack_config.get("kappa"), int(r.success),
                        r.result["final_decision"], r.result["iterations"], r.result["queries"],
                        "" if r.result["snr_db"] is None else f"{r.result['snr_db']:.4f}", f"{r.wall_s:.3f}"])


class CampaignStore:
    """On-disk layout of one campaign directory."""

    def __init__(self, root):
        self.root = str(root)

    @property
    def records_path(self) -> str:
        return os.path.join(self.root, RECORDS_FILE)

    @property
    def summary_path(self) -> str:
        return os.path.join(self.root, SUMMARY_FILE)

    @property
    def report_path(self) -> str:
        return os.path.join(self.root, REPORT_FILE)

    def wav_path(self, record: TrialRecord) -> str:
        return os.path.join(self.root, WAV_DIR, record.wav_name)

    def exists(self) -> bool:
        return os.path.exists(self.records_path)

    def load(self) -> list[TrialRecord]:
        return read_records(self.records_path) if self.exists() else []

    def append(self, record: TrialRecord, adversarial: Waveform) -> None:
        os.makedirs(os.path.join(self.root, WAV_DIR), exist_ok=True)
        save_wav(self.wav_path(record), adversarial)
        append_record(self.records_path, record)

    def finish(self, records: list[TrialRecord], report: dict) -> None:
        write_summary_csv(self.summary_path, records)
        with open(self.report_path, "w") as fh:
            json.dump(report, fh, indent=2, sort_keys=True)

    def adversarial(self, record: TrialRecord) -> Waveform:
        path = self.wav_path(record)
        if not os.path.exists(path):
            raise MissingWaveformError(f"adversarial waveform {path} is missing")
        return load_wav(path)
