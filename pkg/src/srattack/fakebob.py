"""Query-only L-inf attack: antithetic NES gradient estimates driving sign-BIM
steps, plus black-box threshold estimation for OSI and SV targets."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Optional

import numpy as np

from .audio import UndefinedSnrError, Waveform, clip_eps_array, snr
from .losses import LossKind
from .oracle import QueryOracle

PATIENCE = 10
MAX_OUTER = 100


class EstimationBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.002
    kappa: float = 0.0
    m: int = 50
    sigma: float = 1e-3
    eta_max: float = 1e-3
    eta_min: float = 1e-6
    max_iter: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")
        if self.kappa < 0:
            raise ValueError("kappa must be non-negative")
        if self.m < 2 or self.m % 2:
            raise ValueError("m must be a positive even integer")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")
        if not 0 < self.eta_min <= self.eta_max:
            raise ValueError("need 0 < eta_min <= eta_max")
        if self.max_iter < 1:
            raise ValueError("max_iter must be positive")

    def to_dict(self):
        return asdict(self)


@dataclass(eq=False)
class AttackResult:
    adversarial: Waveform
    success: bool
    iterations: int
    queries: int
    snr_db: Optional[float]
    loss_trace: list = field(default_factory=list)
    final_scores: Optional[np.ndarray] = None
    final_decision: Optional[str] = None

    def summary(self) -> dict:
        return {
            "success": bool(self.success),
            "iterations": int(self.iterations),
            "queries": int(self.queries),
            "snr_db": self.snr_db,
            "final_decision": self.final_decision,
            "final_scores": None if self.final_scores is None else [float(v) for v in self.final_scores],
            "loss_trace": [float(v) for v in self.loss_trace],
        }


@dataclass(eq=False)
class ThresholdEstimate:
    theta_hat: float
    queries: int
    probe: Waveform
    outer_iterations: int = 0
    inner_iterations: int = 0


class PlateauSchedule:
    """Start at eta_max; halve after `patience` iterations without a new best loss."""

    def __init__(self, eta_max: float, eta_min: float, patience: int = PATIENCE):
        self.eta = eta_max
        self.eta_min = eta_min
        self.patience = patience
        self.best = np.inf
        self.stall = 0

    def update(self, loss: float) -> float:
        if loss < self.best:
            self.best = loss
            self.stall = 0
        else:
            self.stall += 1
            if self.stall >= self.patience:
                self.eta = max(self.eta / 2.0, self.eta_min)
                self.stall = 0
        return self.eta


def nes_gradient(x: np.ndarray, loss_at: Callable[[np.ndarray], np.ndarray], m: int, sigma: float,
                 rng: np.random.Generator) -> np.ndarray:
    """Antithetic NES estimate of the loss gradient at x.

    ``loss_at`` maps a (m, N) batch of probes to m losses.  Probes are
    x + sigma * u_j with u_{m+1-j} = -u_j, clipped to the valid amplitude range.
    """
    if m < 2 or m % 2:
        raise ValueError("m must be a positive even integer")
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    half = rng.standard_normal((m // 2, x.size))
    u = np.concatenate([half, -half[::-1]])
    losses = np.asarray(loss_at(np.clip(x[None, :] + sigma * u, -1.0, 1.0)), dtype=np.float64)
    # pairing j with m+1-j makes constant losses cancel exactly
    diff = losses[:m // 2] - losses[::-1][:m // 2]
    return (diff @ half) / (m * sigma)


def _snr_or_none(original: Waveform, adv: Waveform) -> Optional[float]:
    try:
        return float(snr(original, adv).snr_db)
    except UndefinedSnrError:
        return None


def run_fakebob(original: Waveform, oracle: QueryOracle, loss_kind: LossKind, theta_for_loss: Optional[float],
                cfg: AttackConfig) -> AttackResult:
    if loss_kind.needs_theta and theta_for_loss is None:
        raise ValueError(f"{loss_kind.name} needs theta_for_loss")
    start_queries = oracle.queries
    rng = np.random.default_rng(cfg.seed)
    fs = original.sample_rate
    x0 = original.samples
    x = x0.copy()

    def loss_of(outcomes):
        return loss_kind(np.stack([o.scores for o in outcomes]), theta_for_loss, cfg.kappa)

    def done(outcome, loss):
        return loss_kind.achieved(outcome) and loss <= -cfg.kappa

    outcome = oracle.query(original)
    loss = float(loss_of([outcome])[0])
    trace = [loss]
    schedule = PlateauSchedule(cfg.eta_max, cfg.eta_min)
    schedule.update(loss)
    success = done(outcome, loss)
    it = 0
    while not success and it < cfg.max_iter:
        it += 1
        grad = nes_gradient(x, lambda probes: loss_of(oracle.query_batch(probes, fs)), cfg.m, cfg.sigma, rng)
        x = clip_eps_array(x - schedule.eta * np.sign(grad), x0, cfg.epsilon)
        outcome = oracle.query_batch(x[None, :], fs)[0]
        loss = float(loss_of([outcome])[0])
        trace.append(loss)
        success = done(outcome, loss)
        schedule.update(loss)
    adv = original.with_samples(x)
    return AttackResult(
        adversarial=adv,
        success=bool(success),
        iterations=it,
        queries=oracle.queries - start_queries,
        snr_db=_snr_or_none(original, adv),
        loss_trace=trace,
        final_scores=outcome.scores,
        final_decision=outcome.decision,
    )


def estimate_threshold(oracle: QueryOracle, seed_voice: Waveform, cfg: AttackConfig,
                       max_outer: int = MAX_OUTER) -> ThresholdEstimate:
    """Raise a candidate threshold in steps of |s0/10| (s0 = the seed voice's best
    score) and push the voice's best score towards each candidate until the
    oracle stops rejecting it; the accepted probe's best score is returned.

    Each candidate gets at most ``cfg.max_iter`` inner steps.
    """
    start_queries = oracle.queries
    fs = seed_voice.sample_rate
    first = oracle.query(seed_voice)
    if not first.rejected:
        raise ValueError("seed voice must be rejected by the target system")
    theta_hat = float(np.max(first.scores))
    delta = abs(theta_hat / 10.0) or 1e-3
    rng = np.random.default_rng(cfg.seed)
    x0 = seed_voice.samples
    x = x0.copy()
    inner_total = 0
    for outer in range(1, max_outer + 1):
        theta_hat += delta
        candidate = theta_hat

        def loss_at(probes):
            s = np.stack([o.scores for o in oracle.query_batch(probes, fs)])
            return np.maximum(candidate - s.max(axis=1), -cfg.kappa)

        schedule = PlateauSchedule(cfg.eta_max, cfg.eta_min)
        for _ in range(cfg.max_iter):
            inner_total += 1
            grad = nes_gradient(x, loss_at, cfg.m, cfg.sigma, rng)
            x = clip_eps_array(x - schedule.eta * np.sign(grad), x0, cfg.epsilon)
            outcome = oracle.query_batch(x[None, :], fs)[0]
            best = float(np.max(outcome.scores))
            if not outcome.rejected:
                return ThresholdEstimate(best, oracle.queries - start_queries, seed_voice.with_samples(x),
                                         outer, inner_total)
            if best >= candidate:
                break
            schedule.update(max(candidate - best, -cfg.kappa))
        else:
            raise EstimationBudgetExhausted(
                f"candidate {candidate:.4g} not reached within {cfg.max_iter} steps")
    raise EstimationBudgetExhausted(f"no acceptance after {max_outer} threshold increments")
