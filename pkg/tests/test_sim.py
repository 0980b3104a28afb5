import numpy as np
import pytest

from mdpembed import (StationaryPolicy, average_cost_of_policy, build_embedding, compare_embedded,
                      controlled_queue, explicit_table, lift_policy, policy_iteration,
                      simulate_average_cost, summarize_exits)
from mdpembed.errors import CycleTooLong, ModelError
from mdpembed.sim import BLOCK, simulate_cycles


@pytest.fixture(scope="module")
def demo():
    m = controlled_queue()
    e = build_embedding(m, summarize_exits(m))
    res = policy_iteration(e.base)
    interior, ext = lift_policy(e, res.policy)
    return m, e, res, interior, ext


def two_cycle_model():
    return explicit_table({0: [{"cost": 0, "next": [[1, 1.0]]}], 1: [{"cost": 2, "next": [[0, 1.0]]}]},
                          interior=[0, 1])


def test_deterministic_two_cycle():
    est = simulate_average_cost(two_cycle_model(), StationaryPolicy([0, 0]), z=0, n_cycles=1000)
    assert est.mean == 1.0 and est.half_width == 0.0
    assert est.steps == 2000 and est.cycles == 1000


def test_queue_demo_matches_embedded_gain(demo):
    m, e, res, interior, ext = demo
    est = simulate_average_cost(m, interior, ext, z=1, n_cycles=100_000, seed=4)
    assert est.covers(res.gain)


def test_two_seeds_overlap(demo):
    m, _, _, interior, ext = demo
    a = simulate_average_cost(m, interior, ext, z=1, n_cycles=50_000, seed=1)
    b = simulate_average_cost(m, interior, ext, z=1, n_cycles=50_000, seed=2)
    assert a.mean != b.mean
    assert abs(a.mean - b.mean) <= a.half_width + b.half_width


def test_fixed_seed_is_bit_identical(demo):
    m, _, _, interior, ext = demo
    a = simulate_average_cost(m, interior, ext, z=0, n_cycles=70_000, seed=12)
    b = simulate_average_cost(m, interior, ext, z=0, n_cycles=70_000, seed=12)
    assert a == b


def test_blocks_are_independent_of_total(demo):
    m, _, _, interior, ext = demo
    # walkers in a block share one stream, so reproducibility is per whole block
    small = simulate_cycles(m, interior, ext, 0, BLOCK, seed=3)
    large = simulate_cycles(m, interior, ext, 0, BLOCK + 5000, seed=3)
    assert np.array_equal(small[0], large[0][:BLOCK])
    assert np.array_equal(small[1], large[1][:BLOCK])


def test_half_width_shrinks_like_root_n(demo):
    m, _, _, interior, ext = demo
    hw = [simulate_average_cost(m, interior, ext, z=1, n_cycles=n, seed=8).half_width
          for n in (60_000, 120_000)]
    assert hw[1] / hw[0] == pytest.approx(1 / np.sqrt(2), rel=0.2)


def test_exterior_free_model_converges_to_exact_gain():
    m = controlled_queue(capacity=6, interior=range(7))
    mdp, order = m.to_finite_mdp()
    res = policy_iteration(mdp)
    interior = StationaryPolicy([res.policy[order.index(x)] for x in m.interior])
    est = simulate_average_cost(m, interior, z=0, n_cycles=100_000, seed=5)
    assert est.covers(res.gain)


def test_cycle_cap():
    m = controlled_queue(0.3, (0.35,), levels=1)
    with pytest.raises(CycleTooLong):
        simulate_average_cost(m, StationaryPolicy([0]), n_cycles=5000, max_cycle_steps=3)


def test_regeneration_state_must_be_interior(demo):
    m, _, _, interior, ext = demo
    with pytest.raises(ModelError):
        simulate_average_cost(m, interior, ext, z=9)


def test_compare_exterior_free_is_exact():
    m = two_cycle_model()
    e = build_embedding(m, [])
    rep = compare_embedded(m, e, StationaryPolicy([0, 0]), z=0, n_cycles=1000)
    assert rep.channels == []
    assert rep.simulated.mean == rep.cycle_ratio == 1.0
    assert rep.passed


def test_compare_queue_demo(demo):
    m, e, res, interior, ext = demo
    rep = compare_embedded(m, e, interior, ext, z=1, n_cycles=100_000, seed=2)
    (ch,) = rep.channels
    assert ch.boundary_state == 3
    assert ch.q_observed == [0.0, 0.0, 0.0, 1.0]
    assert ch.p_value >= 1e-3
    assert abs(ch.cost_observed - 44 / 3) < 4 * ch.cost_stderr
    assert rep.cycle_ratio == pytest.approx(res.gain, abs=1e-12)
    assert rep.passed


def test_compare_reservoir_entrance_law():
    from mdpembed import reservoir

    m = reservoir()
    e = build_embedding(m, summarize_exits(m))
    res = policy_iteration(e.base)
    interior, ext = lift_policy(e, res.policy)
    rep = compare_embedded(m, e, interior, ext, z=m.interior[-1], n_cycles=50_000, seed=6)
    assert all(c.df >= 1 for c in rep.channels)
    assert rep.passed
