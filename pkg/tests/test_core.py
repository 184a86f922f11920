import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import random_env
from oracles import agent_policies, agent_utility, principal_utility
from pamdp_lab import core
from pamdp_lab.errors import InvalidInputError


def small_env(seed):
    rng = np.random.default_rng(seed)
    S, A, H = (int(v) for v in rng.integers(1, 4, 3))
    return random_env(rng, S, A, H, eta=float(rng.choice([1.0, 2.0])))


def random_contract(env, rng):
    return env.eta * rng.random((env.H, env.S, env.S))


def random_policy(env, rng):
    return rng.integers(0, env.A, (env.H, env.S))


def test_validation_rejects_malformed_input():
    P = np.full((1, 2, 1, 2), 0.5)
    ok = dict(P=P, r=np.zeros((1, 2, 1)), c=np.zeros((1, 2, 1)), P0=[1, 0], eta=1)
    core.Pamdp(**ok)
    for bad in ({"P": np.full((1, 2, 1, 2), 0.6)}, {"P": np.full((2, 2), 0.5)},
                {"r": np.full((1, 2, 1), 1.5)}, {"c": np.zeros((1, 1, 1))},
                {"P0": [0.5, 0.6]}, {"eta": 0}, {"eta": np.inf},
                {"iota": np.ones((1, 2, 2))}):
        with pytest.raises(InvalidInputError):
            core.Pamdp(**{**ok, **bad})


def test_rows_within_tolerance_are_renormalized():
    P = np.array([[[[0.5, 0.5 + 5e-7]]]]).reshape(1, 1, 1, 2)
    P = np.concatenate([P, P], axis=1)
    env = core.Pamdp(P, np.zeros((1, 2, 1)), np.zeros((1, 2, 1)), [1, 0], 1.0)
    np.testing.assert_allclose(env.P.sum(-1), 1.0, atol=1e-15)


def test_contract_and_policy_checks():
    env = small_env(0)
    with pytest.raises(InvalidInputError):
        env.check_contract(-np.ones((env.H, env.S, env.S)))
    with pytest.raises(InvalidInputError):
        env.check_contract(np.full((env.H, env.S, env.S), env.eta + 1), bounded=True)
    with pytest.raises(InvalidInputError):
        env.check_policy(np.full((env.H, env.S), env.A))


@pytest.mark.parametrize("seed", range(30))
def test_best_response_maximizes_agent_utility(seed):
    env = small_env(seed)
    rng = np.random.default_rng(seed)
    x = random_contract(env, rng)
    pi, U = core.agent_best_response(env, x)
    best = max(agent_utility(env, x, p) for p in agent_policies(env.H, env.S, env.A))
    assert core.expected(env, U) == pytest.approx(best, abs=1e-10)
    assert agent_utility(env, x, pi) == pytest.approx(best, abs=1e-10)


def test_ties_favour_the_principal():
    # two actions with the same outcome distribution and cost; action 1 pays more reward
    P = np.full((1, 1, 2, 1), 1.0)
    env = core.Pamdp(P, [[[0.2, 0.9]]], [[[0.1, 0.1]]], [1.0], 1.0)
    pi, _ = core.agent_best_response(env, env.zero_contract())
    assert pi[0, 0] == 1
    env2 = core.Pamdp(P, [[[0.5, 0.5]]], [[[0.1, 0.1]]], [1.0], 1.0)
    assert core.agent_best_response(env2, env2.zero_contract())[0][0, 0] == 0


@given(st.integers(0, 100_000))
def test_value_decomposition(seed):
    env = small_env(seed)
    rng = np.random.default_rng(seed + 1)
    x, pi = random_contract(env, rng), random_policy(env, rng)
    V, U = core.evaluate_values(env, x, pi)
    R, C = core.evaluate_reward_cost(env, pi)
    np.testing.assert_allclose(V + U, R - C, atol=1e-12)


@given(st.integers(0, 100_000))
def test_values_match_forward_visitation(seed):
    env = small_env(seed)
    rng = np.random.default_rng(seed + 2)
    x, pi = random_contract(env, rng), random_policy(env, rng)
    V, U = core.evaluate_values(env, x, pi)
    assert core.expected(env, U) == pytest.approx(agent_utility(env, x, pi), abs=1e-12)
    assert core.expected(env, V) == pytest.approx(principal_utility(env, x, pi), abs=1e-12)
    assert core.agent_value_by_visitation(env, x, pi) == pytest.approx(core.expected(env, U), abs=1e-12)


@given(st.integers(0, 100_000))
def test_visitation_rows_are_distributions(seed):
    env = small_env(seed)
    rho = core.visitation(env, random_policy(env, np.random.default_rng(seed)))
    np.testing.assert_allclose(rho.sum(1), 1.0, atol=1e-12)
    assert np.all(rho >= 0)


def test_zero_contract_agent_value_is_minus_cost_of_cheapest_plan():
    env = small_env(7)
    _, U = core.agent_best_response(env, env.zero_contract())
    # with no payments the agent minimizes expected cost, so U <= 0 and equals -min cost
    best = max(agent_utility(env, env.zero_contract(), p) for p in agent_policies(env.H, env.S, env.A))
    assert core.expected(env, U) == pytest.approx(best)
    assert np.all(U <= 1e-12)


def test_simulation_matches_values_by_monte_carlo():
    env = small_env(11)
    rng = np.random.default_rng(5)
    x = random_contract(env, rng)
    pi, _ = core.agent_best_response(env, x)
    V, _ = core.evaluate_values(env, x, pi)
    n = 20_000
    tot = np.empty(n)
    for k in range(n):
        tr = core.simulate_episode(env, x, pi, rng, sigma=0.1)
        tot[k] = tr.rewards.sum() - tr.payments.sum()
    se = tot.std() / np.sqrt(n)
    assert abs(tot.mean() - core.expected(env, V)) < 4 * se + 1e-3


def test_simulation_follows_policy_and_is_seeded():
    env = small_env(12)
    pi = random_policy(env, np.random.default_rng(0))
    x = env.zero_contract()
    a = core.simulate_episode(env, x, pi, 42)
    b = core.simulate_episode(env, x, pi, 42)
    np.testing.assert_array_equal(a.states, b.states)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    for h, (s, act, _, pay, _) in enumerate(a.steps()):
        assert act == pi[h, s]
        assert pay == 0.0


def test_iota_rewards_are_used_by_the_simulator():
    P = np.array([[[[0.3, 0.7]], [[0.3, 0.7]]]])
    iota = np.array([[[1.0, 0.0], [1.0, 0.0]]])
    r = np.einsum("hsat,hst->hsa", P, iota)
    env = core.Pamdp(P, r, np.zeros((1, 2, 1)), [1, 0], 1.0, iota=iota)
    tr = core.simulate_episode(env, env.zero_contract(), np.zeros((1, 2), int), 0, sigma=0.0)
    assert tr.rewards[0] == iota[0, 0, tr.states[1]]


def test_reward_noise_is_clipped():
    z = core.reward_noise(np.random.default_rng(0), 0.5, 100_000)
    assert np.abs(z).max() <= 2.0
    assert abs(z.mean()) < 0.01
