import time

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsrlsvi.feasibility import INSIDE
from nsrlsvi.oracles import (LinOpt, OracleFailure, RegressionProblem, apx_reward_oracle,
                             apx_value_oracle, constrained_lsq, exact_lsq, feature_radius,
                             loss_level_separation, separation_for_Kapx)

E2 = np.eye(2)
S2 = 1 / np.sqrt(2)
THREE_POINT = (np.array([[1.0, 0.0], [0.0, 1.0], [S2, S2]]), np.array([1.0, 2.0, 3 * S2]))


def test_exact_single_datum_min_norm():
    out = exact_lsq(RegressionProblem(np.array([[1.0, 0.0]]), [1.0], 10.0), LinOpt(E2))
    assert np.allclose(out.theta, [1.0, 0.0])


def test_exact_empty_dataset():
    out = exact_lsq(RegressionProblem(np.zeros((0, 3)), [], 1.0))
    assert np.array_equal(out.theta, np.zeros(3)) and out.objective == 0.0


def test_exact_consistent_three_points():
    F, y = THREE_POINT
    out = exact_lsq(RegressionProblem(F, y, 10.0), LinOpt(E2))
    assert np.allclose(out.theta, [1.0, 2.0]) and out.objective <= 1e-20


def test_exact_falls_back_inside_ball():
    F = np.array([[1.0, 0.0]])
    out = exact_lsq(RegressionProblem(F, [3.0], 1.0), LinOpt(E2))
    assert out.fallback == "constrained-qp"
    assert np.allclose(out.theta[0], 1.0, atol=1e-6) and out.functional <= 1.0


def test_apx_single_datum():
    out = apx_value_oracle(RegressionProblem(np.array([[1.0, 0.0]]), [0.5], 1.0), 1e-3, 0.1,
                           LinOpt(E2), np.random.default_rng(0))
    assert abs(out.theta[0] - 0.5) <= 1e-3 and out.functional <= 1 + 1e-3


def test_apx_three_points_against_exact():
    F, y = THREE_POINT
    prob = RegressionProblem(F, y, 10.0)
    out = apx_value_oracle(prob, 1e-4, 0.1, LinOpt(E2), np.random.default_rng(1))
    ref = exact_lsq(prob, LinOpt(E2))
    assert out.objective <= 3e-4
    assert out.objective - ref.objective <= 3 * 1e-4


def test_apx_inconsistent_data_fails_fast():
    prob = RegressionProblem(np.array([[1.0, 0.0], [1.0, 0.0]]), [0.0, 1.0], 1.0)
    start = time.perf_counter()
    with pytest.raises(OracleFailure):
        apx_value_oracle(prob, 1e-3, 0.1, LinOpt(E2), np.random.default_rng(2))
    assert time.perf_counter() - start < 30


def test_reward_noiseless_targets():
    rng = np.random.default_rng(3)
    F = np.eye(3)[rng.integers(3, size=12)]
    omega = np.array([0.2, 0.5, 0.9])
    out = apx_reward_oracle(RegressionProblem(F, F @ omega, 1.0), 1e-2, 0.1, LinOpt(np.eye(3)), rng)
    assert out.level == 0.0 and out.objective <= 1e-2


def test_reward_repeated_datum_mean():
    F = np.array([[1.0, 0.0]] * 5)
    y = np.array([0.0, 0.0, 0.0, 0.0, 1.0])
    out = apx_reward_oracle(RegressionProblem(F, y, 1.0), 1e-3, 0.1, LinOpt(E2), np.random.default_rng(4))
    assert out.objective <= 0.8 + 1e-3
    assert out.objective >= 0.8 - 1e-12


def test_reward_empty_dataset():
    out = apx_reward_oracle(RegressionProblem(np.zeros((0, 2)), [], 1.0), 1e-3, 0.1, LinOpt(E2),
                            np.random.default_rng(0))
    assert out.level == 0.0 and LinOpt(E2).contains(out.theta, 1.0 + 1e-3)


def test_reward_search_modes_agree():
    F = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 0.0]])
    y = np.array([0.2, 0.7, 0.4])
    prob = RegressionProblem(F, y, 1.0)
    a = apx_reward_oracle(prob, 0.05, 0.1, LinOpt(E2), np.random.default_rng(0), search="linear")
    b = apx_reward_oracle(prob, 0.05, 0.1, LinOpt(E2), np.random.default_rng(0))
    assert a.level == b.level


def test_separation_examples():
    lin = LinOpt(E2)
    prob = RegressionProblem(np.array([[1.0, 0.0]]), [0.05], 1.0)
    assert separation_for_Kapx(np.zeros(2), prob, lin, 0.1) is INSIDE
    a, b = separation_for_Kapx(3 * np.array([1.0, 0.0]), RegressionProblem(np.array([[1.0, 0.0]]), [0.0], 5.0),
                               lin, 0.1)
    assert np.allclose(a, [1.0, 0.0]) and b == pytest.approx(0.1)


def test_separation_at_linopt_maximizer():
    F = np.eye(4)
    lin = LinOpt(F)
    W, eps = 1.0, 0.01
    theta = np.array([0.1, W + 2 * eps, -0.3, 0.0])
    a, b = separation_for_Kapx(theta, RegressionProblem(np.zeros((0, 4)), [], W), lin, eps)
    assert np.allclose(a, F[1]) and b == pytest.approx(W + eps)


def test_loss_level_cut_separates():
    prob = RegressionProblem(np.array([[1.0, 0.0]]), [1.0], 1.0)
    theta = np.array([-0.5, 0.0])
    a, b = loss_level_separation(theta, prob, LinOpt(E2), 0.1, 1.0)
    assert a @ theta > b
    # the level-set point theta = (1, 0) stays on the feasible side
    assert a @ np.array([1.0, 0.0]) <= b


def test_feature_radius():
    assert feature_radius(np.eye(3)) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        feature_radius(np.array([[1.0, 0.0]]))


def test_constrained_matches_projected_box():
    # with one-hot features the constrained minimizer is the clipped mean
    F = np.eye(3)[[0, 0, 1, 2, 2]]
    y = np.array([2.0, 4.0, -0.5, 0.2, 0.4])
    out = constrained_lsq(RegressionProblem(F, y, 1.0), LinOpt(np.eye(3)))
    assert np.allclose(out.theta, [1.0, -0.5, 0.3], atol=1e-6)


@settings(max_examples=10, deadline=None)
@given(st.integers(1, 4), st.integers(1, 6), st.integers(0, 10_000))
def test_apx_value_within_sandwich(d, n, seed):
    rng = np.random.default_rng(seed)
    reps = np.vstack([np.eye(d), rng.normal(size=(3, d))])
    lin = LinOpt(reps)
    theta_star = rng.uniform(-1, 1, size=d)
    W = lin.functional_norm(theta_star)[0] + 0.5
    F = reps[rng.integers(reps.shape[0], size=n)]
    prob = RegressionProblem(F, F @ theta_star, W)
    eps = 1e-3
    out = apx_value_oracle(prob, eps, 0.1, lin, rng)
    assert out.objective <= n * eps
    assert lin.functional_norm(out.theta)[0] <= W + eps + 1e-12
    assert out.objective - exact_lsq(prob, lin).objective <= n * eps


def test_reward_level_monotone_in_noise():
    rng = np.random.default_rng(7)
    F = np.eye(2)[rng.integers(2, size=10)]
    clean = F @ np.array([0.3, 0.6])
    noise = rng.choice([-1.0, 1.0], size=10)
    levels = []
    for scale in [0.0, 0.1, 0.2, 0.3]:
        prob = RegressionProblem(F, clean + scale * noise, 1.0)
        levels.append(apx_reward_oracle(prob, 0.05, 0.1, LinOpt(E2), np.random.default_rng(0)).level)
    assert levels == sorted(levels)
    assert levels[-1] > levels[0]
