import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from nsrlsvi.envs import (EnvError, TabularEnv, build_anisotropic, build_expansive, build_lqr,
                          build_tabular, env_from_dict, estimate_gamma, load_env, reduce_to_span,
                          save_env, step, verify_lbc)
from nsrlsvi.harness import fixture_path


def brute_force_value(env, s):
    """Max over all action sequences of the summed mean rewards."""
    best = -np.inf
    for seq in itertools.product(range(env.A), repeat=env.H):
        x, total = s, 0.0
        for h, a in enumerate(seq):
            total += env.mean_reward(h, x, a)
            if h + 1 < env.H:
                x = env.next_state(h, x, a)
        best = max(best, total)
    return best


def test_expansive_backup_grows_norm():
    S = 5
    env = build_expansive(S)
    assert all(env.optimal_value(s) == 1.0 for s in range(S))
    theta2 = np.zeros(S + 1)
    theta2[S] = 1.0
    theta1 = env.backup(0, theta2)
    assert np.allclose(theta1[:S], 1.0)
    assert np.linalg.norm(theta1) / np.linalg.norm(theta2) == pytest.approx(np.sqrt(S))


def test_single_path_value():
    env = build_tabular(1, 1, seed=3, H=4)
    assert env.optimal_value(0) == pytest.approx(sum(float(r[0, 0]) for r in env.rewards))


@pytest.mark.parametrize("H", [2, 3, 4])
def test_dp_matches_enumeration(H):
    env = build_tabular(3, 2, seed=7, H=H)
    for s in range(3):
        assert env.optimal_value(s) == pytest.approx(brute_force_value(env, s), abs=1e-12)


def test_dp_satisfies_bellman_recursion():
    env = build_tabular(4, 3, seed=2, H=3)
    for h in range(env.H):
        for s in range(env.num_states[h]):
            q = [env.mean_reward(h, s, a) + (env.optimal_value(env.next_state(h, s, a), h + 1)
                                            if h + 1 < env.H else 0.0) for a in range(env.A)]
            assert env.optimal_value(s, h) == pytest.approx(max(q), abs=1e-12)


@pytest.mark.parametrize("eps,theta,expected", [
    (1.0, [3.0, 0.0], [3.0, 0.0]),
    (0.01, [1.0, 0.0], [100.0, 0.0]),
    (0.5, [2.0, 3.0], [4.0, 0.0]),
])
def test_anisotropic_backup(eps, theta, expected):
    env = build_anisotropic(eps)
    assert np.allclose(env.backup(0, np.array(theta)), expected)


def test_lqr_dimension_and_origin():
    A = B = Q = R = np.eye(2)
    env = build_lqr(A, np.eye(2)[:, :1], Q, np.eye(1), 3)
    assert env.d == 8
    env = build_lqr(np.eye(2), np.eye(2), np.eye(2), np.eye(2), 3)
    v, controls, feasible = env.optimal_rollout(np.zeros(2))
    assert feasible and all(np.allclose(u, 0) for u in controls)
    assert v == pytest.approx(3 * env.mean_reward(0, np.zeros(2), np.zeros(2)))


def test_lqr_riccati_matches_control_grid():
    rng = np.random.default_rng(5)
    A = rng.normal(size=(2, 2))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    B = np.array([[0.5], [0.3]])
    env = build_lqr(A, B, np.eye(2), np.eye(1), 3, state_box=4.0, control_box=2.0)
    x0 = np.array([0.4, -0.3])
    v, _, feasible = env.optimal_rollout(x0)
    assert feasible
    grid = np.linspace(-1.0, 1.0, 81)
    U = np.array(np.meshgrid(grid, grid, grid, indexing="ij")).reshape(3, -1).T
    X = np.tile(x0, (U.shape[0], 1))
    total = np.zeros(U.shape[0])
    for h in range(3):
        u = U[:, h:h + 1]
        total += 1.0 - (np.einsum("ni,ij,nj->n", X, env.Q_mat, X) + env.R_mat[0, 0] * u[:, 0] ** 2) / env.c_max
        X = X @ A.T + u @ B.T
    best = float(total.max())
    # grid value is a lower bound within the grid resolution
    assert best <= v + 1e-12
    assert v - best <= 1e-3


def test_lqr_greedy_closed_form_matches_grid():
    env = build_lqr(np.eye(2) * 0.5, np.array([[0.3], [0.2]]), np.eye(2), np.eye(1), 2)
    theta = env.from_blocks(-np.eye(2), -np.eye(1) * 2.0, np.array([[0.4], [0.2]]), 0.5)
    x = np.array([0.5, -0.2])
    ch = env.greedy(0, x, theta)
    assert not ch.flagged
    us = np.linspace(-env.control_box, env.control_box, 20001)
    vals = [env.feature(0, x, np.array([u])) @ theta for u in us]
    assert ch.value >= max(vals) - 1e-12
    assert abs(ch.action[0] - us[int(np.argmax(vals))]) <= 2 * (us[1] - us[0])


def test_tabular_lbc_exact():
    rep = verify_lbc(build_tabular(3, 2, seed=1, H=3), num_probes=50)
    assert rep.max_violation <= 1e-9 and rep.is_lbc


def test_lqr_lbc():
    env = load_env(fixture_path("lqr.json"))
    rep = verify_lbc(env, num_probes=100)
    assert rep.backup_residual <= 1e-6 and rep.reward_residual <= 1e-9


def test_perturbed_rewards_within_eps_b():
    base = build_tabular(3, 2, seed=4, H=2)
    rng = np.random.default_rng(0)
    pert = [np.clip(rng.choice([-0.05, 0.05], size=r.shape), -r, 1 - r) for r in base.rewards]
    env = TabularEnv(2, base.transitions, base.rewards, base.index, d=base.d, perturbation=pert, eps_b=0.05)
    rep = verify_lbc(env)
    assert rep.max_violation <= 0.05 + 1e-7 and rep.max_violation > 0.04


def test_rewards_outside_unit_interval_rejected():
    base = build_tabular(2, 2, seed=0).to_dict()
    base["rewards"] = [[[2 * v for v in row] for row in layer] for layer in base["rewards"]]
    base["rewards"][0][0][0] = 1.9
    with pytest.raises(EnvError, match=r"\[0,1\]"):
        env_from_dict(base)


def test_step_reward_models():
    env = TabularEnv(1, [], [[[1.0]]], [[[0]]])
    rng = np.random.default_rng(0)
    assert all(step(env, 0, 0, 0, rng)[1] == 1.0 for _ in range(100))
    env = TabularEnv(1, [], [[[0.3]]], [[[0]]])
    draws = [step(env, 0, 0, 0, rng)[1] for _ in range(100_000)]
    assert abs(np.mean(draws) - 0.3) <= 0.01
    assert step(env, 0, 0, 0, rng, noise="none")[1] == 0.3


def test_step_is_deterministic_in_state():
    env = build_tabular(3, 2, seed=9, H=3)
    rng = np.random.default_rng(1)
    assert step(env, 0, 1, 1, rng)[0] == step(env, 0, 1, 1, rng)[0]


def test_tabular_gamma_is_one():
    env = build_tabular(2, 2, seed=0)
    assert env.gamma == 1.0
    assert estimate_gamma(env.feature_set()) == pytest.approx(1.0)


def test_reduction_keeps_values():
    env = load_env(fixture_path("lqr.json"))
    red = reduce_to_span(env)
    assert red.d == 7 and red.base is env
    rng = np.random.default_rng(2)
    theta = rng.normal(size=red.d)
    x, u = np.array([0.3, -0.1]), np.array([0.2])
    assert red.feature(0, x, u) @ theta == pytest.approx(env.feature(0, x, u) @ red.lift(theta))


@pytest.mark.parametrize("name", ["tabular", "optimism", "hidden_reward", "lqr", "anisotropic", "expansive"])
def test_fixture_round_trip(tmp_path, name):
    env = load_env(fixture_path(f"{name}.json"))
    save_env(env, tmp_path / "e.json")
    again = load_env(tmp_path / "e.json")
    assert again.to_dict() == env.to_dict()


def test_unknown_kind():
    with pytest.raises(EnvError, match="unknown"):
        env_from_dict({"kind": "nope"})


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 4), st.integers(1, 3), st.integers(1, 4), st.integers(0, 10_000))
def test_random_tabular_dp_and_lbc(S, A, H, seed):
    env = build_tabular(S, A, seed=seed, H=H)
    if A ** H <= 256:
        for s in range(S):
            assert env.optimal_value(s) == pytest.approx(brute_force_value(env, s), abs=1e-12)
    assert verify_lbc(env, num_probes=5).max_violation <= 1e-9
