"""Black-box query interface the attacks talk to."""

from __future__ import annotations

from typing import Callable, Optional, Protocol

import numpy as np

from .audio import Waveform
from .recognizer import DecisionOutcome, Recognizer


class QueryOracle(Protocol):
    """Anything that returns decisions plus scores and counts its queries."""

    queries: int

    def query(self, w: Waveform) -> DecisionOutcome: ...

    def query_batch(self, samples: np.ndarray, sample_rate: int) -> list[DecisionOutcome]: ...


class RecognizerOracle:
    """Wraps a Recognizer, optionally behind an input transform (a defense).

    Every waveform scored counts as one query, whether it arrives alone or in a
    batch.  Batches are scored in one vectorized pass; results come back in
    input order so callers reduce deterministically.
    """

    def __init__(self, recognizer: Recognizer, transform: Optional[Callable[[np.ndarray], np.ndarray]] = None):
        self.recognizer = recognizer
        self.transform = transform
        self.queries = 0

    def _prepare(self, samples: np.ndarray) -> np.ndarray:
        if self.transform is None:
            return samples
        return np.stack([self.transform(row) for row in samples])

    def query_batch(self, samples: np.ndarray, sample_rate: int) -> list[DecisionOutcome]:
        samples = np.atleast_2d(samples)
        self.queries += samples.shape[0]
        scores = self.recognizer.score_batch(self._prepare(samples), sample_rate)
        return [self.recognizer.decide_scores(s) for s in scores]

    def query(self, w: Waveform) -> DecisionOutcome:
        return self.query_batch(w.samples[None, :], w.sample_rate)[0]

    def scores(self, samples: np.ndarray, sample_rate: int) -> np.ndarray:
        return np.stack([o.scores for o in self.query_batch(samples, sample_rate)])
