"""Particle swarm baseline over the L-inf ball, sharing the attack losses."""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from .audio import Waveform, clip_eps_array
from .fakebob import AttackResult, _snr_or_none
from .losses import LossKind
from .oracle import QueryOracle


@dataclass(frozen=True)
class PsoConfig:
    particles: int = 50
    epochs: int = 35
    iters_per_epoch: int = 30
    w_init: float = 0.9
    w_end: float = 0.1
    c1: float = 1.4961
    c2: float = 1.4961
    epsilon: float = 0.002
    kappa: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.particles < 2:
            raise ValueError("need at least two particles")
        if self.w_end > self.w_init:
            raise ValueError("w_end must not exceed w_init")
        if self.epochs < 1 or self.iters_per_epoch < 1:
            raise ValueError("epochs and iters_per_epoch must be positive")
        if self.epsilon < 0:
            raise ValueError("epsilon must be non-negative")

    @property
    def total_iterations(self) -> int:
        return self.epochs * self.iters_per_epoch

    def to_dict(self):
        return asdict(self)


@dataclass
class Swarm:
    """Particle state; positions are perturbations relative to the original."""

    position: np.ndarray
    velocity: np.ndarray
    best_position: np.ndarray
    best_loss: np.ndarray


def pso_attack(original: Waveform, oracle: QueryOracle, loss_kind: LossKind, theta_for_loss: Optional[float],
               cfg: PsoConfig, trace_swarm: Optional[list] = None) -> AttackResult:
    """Minimize the attack loss with a linearly-decaying-inertia swarm.

    Success is read from the oracle decision of each evaluated particle, so
    queries are exactly 1 (the original) + particles * (iterations + 1).
    ``trace_swarm``, when given, collects (personal best losses, global best
    loss) after every iteration.
    """
    if loss_kind.needs_theta and theta_for_loss is None:
        raise ValueError(f"{loss_kind.name} needs theta_for_loss")
    start_queries = oracle.queries
    rng = np.random.default_rng(cfg.seed)
    fs = original.sample_rate
    x0 = original.samples
    eps = cfg.epsilon
    vmax = 2.0 * eps

    def evaluate(pos):
        outcomes = oracle.query_batch(clip_eps_array(x0[None, :] + pos, x0, eps), fs)
        losses = loss_kind(np.stack([o.scores for o in outcomes]), theta_for_loss, cfg.kappa)
        return outcomes, np.asarray(losses, dtype=np.float64)

    def hit(outcome, loss):
        return loss_kind.achieved(outcome) and loss <= -cfg.kappa

    first = oracle.query(original)
    first_loss = float(loss_kind(first.scores, theta_for_loss, cfg.kappa))
    trace = [first_loss]
    if hit(first, first_loss):
        return AttackResult(original, True, 0, oracle.queries - start_queries, None, trace, first.scores,
                            first.decision)

    pos = rng.uniform(-eps, eps, size=(cfg.particles, x0.size))
    pos = clip_eps_array(x0[None, :] + pos, x0, eps) - x0[None, :]
    outcomes, losses = evaluate(pos)
    swarm = Swarm(pos, np.zeros_like(pos), pos.copy(), losses.copy())
    g = int(np.argmin(losses))
    gbest, gbest_loss, gbest_out = pos[g].copy(), float(losses[g]), outcomes[g]
    trace.append(gbest_loss)
    success = any(hit(o, l) for o, l in zip(outcomes, losses))
    if success:
        g = next(i for i, (o, l) in enumerate(zip(outcomes, losses)) if hit(o, l))
        gbest, gbest_loss, gbest_out = pos[g].copy(), float(losses[g]), outcomes[g]

    total = cfg.total_iterations
    step = 0
    for _epoch in range(cfg.epochs):
        if success:
            break
        for _ in range(cfg.iters_per_epoch):
            w = cfg.w_init - (cfg.w_init - cfg.w_end) * step / max(1, total - 1)
            r1 = rng.random(swarm.position.shape)
            r2 = rng.random(swarm.position.shape)
            swarm.velocity = (w * swarm.velocity
                              + cfg.c1 * r1 * (swarm.best_position - swarm.position)
                              + cfg.c2 * r2 * (gbest[None, :] - swarm.position))
            np.clip(swarm.velocity, -vmax, vmax, out=swarm.velocity)
            swarm.position = clip_eps_array(x0[None, :] + swarm.position + swarm.velocity, x0, eps) - x0[None, :]
            step += 1
            outcomes, losses = evaluate(swarm.position)
            better = losses < swarm.best_loss
            swarm.best_position[better] = swarm.position[better]
            swarm.best_loss[better] = losses[better]
            g = int(np.argmin(swarm.best_loss))
            if swarm.best_loss[g] < gbest_loss:
                gbest, gbest_loss = swarm.best_position[g].copy(), float(swarm.best_loss[g])
                gbest_out = outcomes[g]  # a new global best can only come from this iteration
            winners = [i for i, (o, l) in enumerate(zip(outcomes, losses)) if hit(o, l)]
            if winners:
                i = winners[0]
                gbest, gbest_loss, gbest_out = swarm.position[i].copy(), float(losses[i]), outcomes[i]
                success = True
            trace.append(gbest_loss)
            if trace_swarm is not None:
                trace_swarm.append((swarm.best_loss.copy(), gbest_loss))
            if success:
                break

    adv = original.with_samples(clip_eps_array(x0 + gbest, x0, eps))
    return AttackResult(
        adversarial=adv,
        success=bool(success),
        iterations=step,
        queries=oracle.queries - start_queries,
        snr_db=_snr_or_none(original, adv),
        loss_trace=trace,
        final_scores=gbest_out.scores,
        final_decision=gbest_out.decision,
    )
