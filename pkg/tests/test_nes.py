import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from srattack.fakebob import PlateauSchedule, nes_gradient


def _cosine(a, b):
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b)))


@given(st.integers(1, 40), st.sampled_from([2, 4, 10, 50]), st.floats(-5, 5), st.integers(0, 2**31))
def test_constant_loss_gives_exact_zero(n, m, c, seed):
    x = np.random.default_rng(seed).uniform(-0.5, 0.5, n)
    g = nes_gradient(x, lambda p: np.full(p.shape[0], c), m, 1e-3, np.random.default_rng(seed))
    assert np.all(g == 0.0)


def test_linear_slope_mean_over_seeds():
    c = 3.0
    est = [nes_gradient(np.zeros(1), lambda p: c * p[:, 0], 50, 1e-3, np.random.default_rng(s))[0]
           for s in range(1000)]
    assert abs(np.mean(est) - c) <= 0.05 * c


def test_quadratic_cosine_matches_sampling_theory():
    # with N = m/2 independent Gaussian directions in n dims, the estimate is
    # (1/N) sum (u.g) u and its cosine with g concentrates near
    # 1 / sqrt(1 + (n + 1) / N)
    n, m = 64, 500
    c = np.random.default_rng(7).uniform(-0.5, 0.5, n)
    g = -2 * c
    cos = [_cosine(nes_gradient(np.zeros(n), lambda p: ((p - c) ** 2).sum(1), m, 1e-3,
                                np.random.default_rng(s)), g) for s in range(200)]
    expected = 1.0 / np.sqrt(1.0 + (n + 1) / (m // 2))
    assert abs(np.mean(cos) - expected) < 0.01


def test_probes_are_antithetic_and_clipped():
    seen = []

    def loss(p):
        seen.append(p.copy())
        return p.sum(1)

    x = np.array([0.9995, 0.0, -0.9995])
    nes_gradient(x, loss, 6, 1e-3, np.random.default_rng(0))
    probes = seen[0]
    assert probes.shape == (6, 3)
    assert probes.min() >= -1.0 and probes.max() <= 1.0
    # the unclipped middle coordinate pairs probe j with probe m+1-j
    assert np.allclose(probes[:, 1], -probes[::-1, 1])


def test_invalid_arguments():
    with pytest.raises(ValueError):
        nes_gradient(np.zeros(3), lambda p: p.sum(1), 3, 1e-3, np.random.default_rng(0))
    with pytest.raises(ValueError):
        nes_gradient(np.zeros(3), lambda p: p.sum(1), 4, 0.0, np.random.default_rng(0))


def test_plateau_schedule_halves_and_floors():
    s = PlateauSchedule(1e-3, 3e-4, patience=2)
    assert s.update(1.0) == 1e-3
    assert s.update(1.0) == 1e-3
    assert s.update(1.0) == 5e-4
    s.update(1.0)
    assert s.update(1.0) == 3e-4
    assert s.update(0.5) == 3e-4
