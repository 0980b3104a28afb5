import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import cesaro_stationary, chain
from mdpembed import (CountableModel, Distribution, FiniteMdp, StationaryPolicy,
                      average_cost_of_policy, controlled_queue, expected_hitting,
                      random_unichain_mdp, recurrent_classes, stationary_distribution)
from mdpembed.core import hitting_solve, solve_linear
from mdpembed.errors import ModelError, MultiChain, NotAbsorbed


# -- Distribution ---------------------------------------------------------------


def test_distribution_rejects_bad_input():
    with pytest.raises(ModelError):
        Distribution((0, 1), (0.5, 0.6))
    with pytest.raises(ModelError):
        Distribution((0, 0), (0.5, 0.5))
    with pytest.raises(ModelError):
        Distribution((0, 1), (1.0, 0.0))
    with pytest.raises(ModelError):
        Distribution((-1,), (1.0,))


def test_from_pairs_merges_and_drops_zeros():
    d = Distribution.from_pairs([(2, 0.25), (0, 0.5), (2, 0.25), (5, 0.0)])
    assert dict(d.items()) == {0: 0.5, 2: 0.5}
    assert d.prob(5) == 0.0


@given(st.lists(st.floats(0.0, 1.0), min_size=1, max_size=12).filter(lambda w: sum(w) > 1e-3))
def test_normalised_weights_form_a_distribution(w):
    total = sum(w)
    d = Distribution.from_pairs((i, x / total) for i, x in enumerate(w))
    assert abs(sum(d.probs) - 1.0) <= 1e-12
    assert all(p > 0 for p in d.probs)
    assert len(set(d.states)) == len(d.states)


# -- stationary distribution and gain -----------------------------------------


def test_self_loop():
    m = chain([[1.0]], [5.0])
    p = StationaryPolicy([0])
    assert stationary_distribution(m, p).tolist() == [1.0]
    assert average_cost_of_policy(m, p) == 5.0


def test_two_cycle(two_cycle):
    p = StationaryPolicy([0, 0])
    assert np.allclose(stationary_distribution(two_cycle, p), [0.5, 0.5], atol=1e-15)
    assert average_cost_of_policy(two_cycle, p) == pytest.approx(1.0, abs=1e-15)


def test_three_state_chain(three_chain):
    p = StationaryPolicy([0, 0, 0])
    P = [[0, 1, 0], [0, 0, 1], [0.5, 0, 0.5]]
    pi = stationary_distribution(three_chain, p)
    assert np.allclose(pi, cesaro_stationary(P), atol=1e-12)
    assert np.allclose(pi, [0.25, 0.25, 0.5], atol=1e-14)
    assert average_cost_of_policy(three_chain, p) == pytest.approx(1.5, abs=1e-14)


def test_transient_states_get_zero_mass():
    m = chain([[0.5, 0.5, 0], [0, 0, 1], [0, 1, 0]], [1, 2, 3])
    pi = stationary_distribution(m, StationaryPolicy([0, 0, 0]))
    assert pi[0] == 0.0
    assert np.allclose(pi[1:], [0.5, 0.5])


def test_multichain_detected():
    m = chain([[1, 0], [0, 1]], [0, 1])
    with pytest.raises(MultiChain) as err:
        stationary_distribution(m, StationaryPolicy([0, 0]))
    assert err.value.classes == [[0], [1]]


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 10))
def test_stationary_vector_is_invariant(seed, n):
    mdp = random_unichain_mdp(np.random.default_rng(seed), n, 3)
    p = StationaryPolicy([0] * n)
    pi = stationary_distribution(mdp, p)
    P = mdp.policy_matrix(p).toarray()
    assert np.max(np.abs(pi @ P - pi)) < 1e-10
    assert np.allclose(pi, cesaro_stationary(P), atol=1e-9)


# -- hitting ------------------------------------------------------------------


def test_one_step_hit_cost_seven():
    m = chain([[0, 1], [0, 1]], [7, 0])
    h = expected_hitting(m, StationaryPolicy([0, 0]), [1], cost=[7, 0])
    assert h[0] == 7.0 and h[1] == 0.0


def test_two_step_path():
    m = chain([[0, 1, 0], [0, 0, 1], [0, 0, 1]], [1, 1, 1])
    h = expected_hitting(m, StationaryPolicy([0, 0, 0]), [2])
    assert h.tolist() == [2.0, 1.0, 0.0]


def test_birth_death_level_crossing():
    # up 0.12, down 0.42, stay 0.46 on 0..N; target {0}.  From level k the
    # expected hitting time is k / (0.42 - 0.12) up to a negligible boundary term.
    N = 400
    P = np.zeros((N + 1, N + 1))
    P[0, 0] = 1.0
    for x in range(1, N + 1):
        up = 0.12 if x < N else 0.0
        P[x, x - 1] = 0.42
        if up:
            P[x, x + 1] = up
        P[x, x] = 1.0 - 0.42 - up
    m = chain(P, np.ones(N + 1))
    h = expected_hitting(m, StationaryPolicy([0] * (N + 1)), [0])
    assert h[1] == pytest.approx(10 / 3, abs=1e-10)
    assert h[5] == pytest.approx(50 / 3, abs=1e-10)


def test_birth_death_monte_carlo_agrees():
    rng = np.random.default_rng(11)
    n = 200_000
    level = np.ones(n, dtype=np.int64)
    hit = np.zeros(n, dtype=np.int64)
    alive = np.ones(n, dtype=bool)
    t = 0
    while alive.any():
        t += 1
        u = rng.random(alive.sum())
        level[alive] += np.where(u < 0.12, 1, np.where(u < 0.54, -1, 0))
        done = alive & (level <= 0)
        hit[done] = t
        alive &= ~done
    se = hit.std(ddof=1) / np.sqrt(n)
    assert abs(hit.mean() - 10 / 3) < 4 * se


def test_not_absorbed_when_target_unreachable():
    m = chain([[0, 1, 0], [0, 1, 0], [0, 0, 1]], [1, 1, 1])
    with pytest.raises(NotAbsorbed):
        expected_hitting(m, StationaryPolicy([0, 0, 0]), [2])
    # querying only states that do reach the target is fine
    h = expected_hitting(chain([[0, 0, 1], [0, 1, 0], [0, 0, 1]], [1, 1, 1]),
                         StationaryPolicy([0, 0, 0]), [2], states=[0])
    assert h[0] == 1.0 and np.isnan(h[1])


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 9))
def test_kac_return_time(seed, n):
    rng = np.random.default_rng(seed)
    P = rng.dirichlet(np.ones(n), size=n)
    m = chain(P, np.ones(n))
    p = StationaryPolicy([0] * n)
    pi = stationary_distribution(m, p)
    z = int(rng.integers(n))
    h = expected_hitting(m, p, [z])
    ret = 1.0 + P[z] @ h
    assert ret == pytest.approx(1.0 / pi[z], rel=1e-9)


def test_solve_linear_sparse_path_matches_dense():
    import scipy.sparse as sp

    rng = np.random.default_rng(0)
    n = 2500
    A = sp.random(n, n, density=2e-3, random_state=1, format="csr") + 4.0 * sp.identity(n)
    b = rng.random(n)
    x = solve_linear(A, b)
    assert np.max(np.abs(A @ x - b)) < 1e-10


def test_hitting_solve_with_two_rewards():
    P = np.array([[0.5, 0.5, 0], [0, 0.5, 0.5], [0, 0, 1]])
    X = hitting_solve(P, np.array([False, False, True]), np.column_stack([[1, 1, 0], [3, 0, 0]]))
    assert np.allclose(X[:, 0], [4, 2, 0])
    assert np.allclose(X[:, 1], [6, 0, 0])


# -- countable models ---------------------------------------------------------


def test_recurrent_classes_closed_only():
    P = np.array([[0.5, 0.5, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]])
    assert recurrent_classes(P) == [[1, 2], [3]]


def test_finite_mdp_validation():
    d = Distribution.point(0)
    with pytest.raises(ModelError):
        FiniteMdp(((d,),), ((1.0, 2.0),))
    with pytest.raises(ModelError):
        FiniteMdp(((Distribution.point(3),),), ((1.0,),))
    with pytest.raises(ModelError):
        FiniteMdp(((d, d),), ((1.0, 2.0),), (((1.0,), ()),))


def test_capacity_queue_enumerates_to_finite():
    m = controlled_queue(capacity=6, levels=4)
    mdp, order = m.to_finite_mdp()
    assert order[:4] == [0, 1, 2, 3] and sorted(order) == list(range(7))
    assert mdp.n_actions(0) == 6 and mdp.n_actions(order.index(5)) == 1
    for s in range(mdp.n_states):
        for d in mdp.kernel[s]:
            assert abs(sum(d.probs) - 1) < 1e-12


def test_countable_model_validate_checks_exterior_policy():
    m = controlled_queue()
    bad = CountableModel(m.actions, m.transition, m.cost, m.interior, (lambda x: 3,))
    with pytest.raises(ModelError):
        bad.validate()
    with pytest.raises(ModelError):
        CountableModel(m.actions, m.transition, m.cost, (0, 1, 1))


def test_kernel_rows_are_pure_functions():
    m = controlled_queue()
    assert m.transition(5, 0) == m.transition(5, 0)
    assert m.cost(2, 3) == m.cost(2, 3) == 2 + 0.4
