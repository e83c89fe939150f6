import numpy as np
import pytest
from fakes import FunctionOracle, linear_scores
from hypothesis import given, settings
from hypothesis import strategies as st

from srattack.audio import Waveform, linf_distance
from srattack.fakebob import AttackConfig, EstimationBudgetExhausted, estimate_threshold, run_fakebob
from srattack.losses import LossKind

N = 32


def _toy(seed=0, n_spk=2, theta=0.0, task="osi", gap=0.3):
    """Linear scores; the original sits `gap` below theta for every speaker."""
    rng = np.random.default_rng(seed)
    w = rng.normal(size=(n_spk, N))
    x0 = rng.uniform(-0.3, 0.3, N)
    b = theta - gap - w @ x0
    b[0] -= 0.1 * gap
    return Waveform(x0), FunctionOracle(linear_scores(w, b), task=task, theta=theta), w


class Recorder(FunctionOracle):
    def __init__(self, inner):
        super().__init__(inner.score_fn, inner.task, inner.theta)
        self.iterates = []

    def query_batch(self, samples, sample_rate):
        samples = np.atleast_2d(samples)
        if samples.shape[0] == 1:
            self.iterates.append(samples[0].copy())
        return super().query_batch(samples, sample_rate)


def test_early_exit_when_goal_already_met():
    x, oracle, _ = _toy(gap=-1.0)
    res = run_fakebob(x, oracle, LossKind.osi_untargeted(), 0.0, AttackConfig(epsilon=0.05))
    assert res.success and res.iterations == 0 and res.queries == 1 == oracle.queries
    assert res.adversarial == x


def test_zero_epsilon_returns_original_after_max_iter():
    x, oracle, _ = _toy()
    res = run_fakebob(x, oracle, LossKind.osi_targeted(1), 0.0, AttackConfig(epsilon=0.0, m=4, max_iter=30))
    assert not res.success and res.iterations == 30
    assert res.adversarial == x


@pytest.mark.parametrize("kind,task,theta", [
    (LossKind.osi_targeted(1), "osi", 0.0),
    (LossKind.osi_untargeted(), "osi", 0.0),
    (LossKind.csi_targeted(1), "csi", None),
    (LossKind.sv_targeted(), "sv", 0.0),
])
def test_linear_toy_succeeds_and_meets_goal(kind, task, theta):
    n_spk = 1 if task == "sv" else 2
    x, oracle, _ = _toy(n_spk=n_spk, task=task, theta=0.0)
    res = run_fakebob(x, oracle, kind, theta, AttackConfig(epsilon=0.05, m=10, max_iter=200))
    assert res.success
    assert kind.achieved(oracle.query(res.adversarial))
    assert res.loss_trace[-1] <= 0.0


def test_margin_kappa_is_attained():
    x, oracle, _ = _toy()
    res = run_fakebob(x, oracle, LossKind.osi_targeted(1), 0.0, AttackConfig(epsilon=0.1, kappa=0.5, m=10))
    assert res.success
    s = res.final_scores
    assert s[1] - max(0.0, s[0]) >= 0.5


@settings(max_examples=15)
@given(st.integers(0, 10_000), st.sampled_from([0.0, 0.003, 0.02]))
def test_iterates_stay_in_ball_and_queries_add_up(seed, eps):
    x, inner, _ = _toy(seed=seed)
    oracle = Recorder(inner)
    cfg = AttackConfig(epsilon=eps, m=6, max_iter=25, seed=seed)
    res = run_fakebob(x, oracle, LossKind.osi_targeted(1), 0.0, cfg)
    for it in oracle.iterates:
        assert np.max(np.abs(it - x.samples)) <= eps and np.all(np.abs(it) <= 1.0)
    assert linf_distance(x, res.adversarial) <= eps
    assert res.queries == oracle.queries == 1 + (cfg.m + 1) * res.iterations
    # with kappa = 0 success coincides with the final decision meeting the goal
    assert res.success == LossKind.osi_targeted(1).achieved(oracle.query(res.adversarial))


def test_deterministic_per_seed():
    runs = []
    for _ in range(2):
        x, oracle, _ = _toy(seed=3)
        runs.append(run_fakebob(x, oracle, LossKind.osi_targeted(1), 0.0,
                                AttackConfig(epsilon=0.02, m=8, max_iter=40, seed=11)))
    a, b = runs
    assert a.adversarial == b.adversarial and a.summary() == b.summary()


def test_needs_theta_for_threshold_losses():
    x, oracle, _ = _toy()
    with pytest.raises(ValueError):
        run_fakebob(x, oracle, LossKind.osi_targeted(1), None, AttackConfig())


@pytest.mark.parametrize("theta", [-0.7, 0.5, 2.0, 4.0])
def test_threshold_estimate_brackets_true_theta(theta):
    x, oracle, w = _toy(seed=5, theta=theta, gap=0.3)
    cfg = AttackConfig(epsilon=0.2, m=10, max_iter=300)
    est = estimate_threshold(oracle, x, cfg)
    s0 = float(np.max(oracle.score_fn(x.samples[None, :])[0]))
    delta = abs(s0 / 10)
    granularity = cfg.eta_max * np.abs(w).sum(1).max()
    assert theta <= est.theta_hat <= theta + delta + granularity
    probe = oracle.query(est.probe)
    assert not probe.rejected and est.theta_hat == float(np.max(probe.scores))
    assert linf_distance(x, est.probe) <= cfg.epsilon


def test_threshold_precondition_rejects_accepted_seed():
    x, oracle, _ = _toy(gap=-1.0)
    with pytest.raises(ValueError):
        estimate_threshold(oracle, x, AttackConfig())
    assert oracle.queries == 1


def test_threshold_budget_exhausted_on_flat_scores():
    oracle = FunctionOracle(lambda p: np.zeros((p.shape[0], 2)), theta=1.0)
    with pytest.raises(EstimationBudgetExhausted):
        estimate_threshold(oracle, Waveform(np.zeros(N)), AttackConfig(m=2, max_iter=5))


def test_config_validation():
    with pytest.raises(ValueError):
        AttackConfig(m=3)
    with pytest.raises(ValueError):
        AttackConfig(epsilon=-1)
    with pytest.raises(ValueError):
        AttackConfig(eta_min=1e-2, eta_max=1e-3)
