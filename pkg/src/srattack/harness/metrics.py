"""Attack and recognizer metrics with integer numerators and denominators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ..recognizer import ACCEPT, REJECT

CELLS = ("asr", "utr", "far", "frr", "osier", "accuracy")


class EmptySubsetError(ValueError):
    """A requested metric has no applicable outcomes."""


@dataclass(frozen=True)
class LabeledOutcome:
    """One decision plus what it should be judged against.

    ``kind`` is "adversarial" or "normal".  ``source`` is the true speaker of
    the voice (an imposter id when it is not enrolled).  ``target`` is the
    speaker a targeted attack aims at; for SV it is the verified speaker.
    """

    task: str
    kind: str
    decision: str
    source: Optional[str] = None
    source_enrolled: bool = False
    target: Optional[str] = None
    group: Optional[str] = None
    success: Optional[bool] = None
    snr_db: Optional[float] = None
    iterations: Optional[int] = None
    queries: Optional[int] = None
    time_s: Optional[float] = None

    def __post_init__(self):
        if self.task not in ("osi", "csi", "sv"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.kind not in ("adversarial", "normal"):
            raise ValueError(f"unknown outcome kind {self.kind!r}")


@dataclass
class MetricsReport:
    """Each cell maps to (numerator, denominator); cells with no applicable
    outcomes are absent, never reported as zero."""

    counts: dict = field(default_factory=dict)
    mean_snr_db: Optional[float] = None
    mean_iterations: Optional[float] = None
    mean_queries: Optional[float] = None
    mean_time_s: Optional[float] = None
    n_outcomes: int = 0
    groups: dict = field(default_factory=dict)

    def fraction(self, cell: str) -> Optional[float]:
        if cell not in self.counts:
            return None
        num, den = self.counts[cell]
        return num / den

    def __getattr__(self, name):
        if name in CELLS:
            return self.fraction(name)
        raise AttributeError(name)

    def to_dict(self) -> dict:
        d = {"n_outcomes": self.n_outcomes}
        for cell in CELLS:
            if cell in self.counts:
                num, den = self.counts[cell]
                d[cell] = {"value": num / den, "numerator": int(num), "denominator": int(den)}
        for key in ("mean_snr_db", "mean_iterations", "mean_queries", "mean_time_s"):
            v = getattr(self, key)
            if v is not None:
                d[key] = v
        if self.groups:
            d["groups"] = {g: r.to_dict() for g, r in sorted(self.groups.items())}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MetricsReport":
        counts = {c: (d[c]["numerator"], d[c]["denominator"]) for c in CELLS if c in d}
        groups = {g: cls.from_dict(r) for g, r in d.get("groups", {}).items()}
        return cls(counts, d.get("mean_snr_db"), d.get("mean_iterations"), d.get("mean_queries"),
                   d.get("mean_time_s"), d.get("n_outcomes", 0), groups)


def _judge(o: LabeledOutcome) -> dict:
    """Which cells this outcome falls in, and whether it counts as a hit."""
    cells = {}
    if o.kind == "adversarial":
        if o.target is not None:
            cells["asr"] = (o.decision == ACCEPT) if o.task == "sv" else (o.decision == o.target)
        if o.task == "csi":
            cells["utr"] = o.decision != o.source
        else:
            cells["utr"] = o.decision != REJECT
        return cells
    if o.task == "csi":
        if o.source_enrolled:
            cells["accuracy"] = o.decision == o.source
        return cells
    if o.source_enrolled:
        cells["frr"] = o.decision == REJECT
        if o.task == "osi":
            cells["osier"] = o.decision not in (REJECT, o.source)
    else:
        cells["far"] = o.decision != REJECT
    return cells


def _mean(values) -> Optional[float]:
    vals = [v for v in values if v is not None]
    return float(np.mean(vals)) if vals else None


def _report(outcomes: Sequence[LabeledOutcome]) -> MetricsReport:
    counts: dict = {}
    for o in outcomes:
        for cell, hit in _judge(o).items():
            num, den = counts.get(cell, (0, 0))
            counts[cell] = (num + int(hit), den + 1)
    adv = [o for o in outcomes if o.kind == "adversarial"]
    # distortion and cost are averaged over successful attacks only
    won = [o for o in adv if o.success]
    return MetricsReport(
        counts=counts,
        mean_snr_db=_mean(o.snr_db for o in won),
        mean_iterations=_mean(o.iterations for o in won),
        mean_queries=_mean(o.queries for o in won),
        mean_time_s=_mean(o.time_s for o in won),
        n_outcomes=len(outcomes),
    )


def compute_metrics(outcomes: Iterable[LabeledOutcome], require: Sequence[str] = ()) -> MetricsReport:
    """Aggregate outcomes; ``require`` names cells that must be non-empty."""
    outcomes = list(outcomes)
    if not outcomes:
        raise EmptySubsetError("no outcomes to aggregate")
    report = _report(outcomes)
    for cell in require:
        if cell not in CELLS:
            raise ValueError(f"unknown metric {cell!r}")
        if cell not in report.counts:
            raise EmptySubsetError(f"no outcomes applicable to {cell}")
    groups = sorted({o.group for o in outcomes if o.group is not None})
    report.groups = {g: _report([o for o in outcomes if o.group == g]) for g in groups}
    return report
