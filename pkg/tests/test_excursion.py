import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mdpembed import (CountableModel, Distribution, ExcursionSummary, Truncation,
                      analyze_excursion, controlled_queue, explicit_table, monte_carlo_excursion,
                      reservoir, skipfree_closed_form, summarize_exits)
from mdpembed.errors import (ExcursionTooLong, NoExit, NotAbsorbed, NumericalError,
                             TruncationDiverged, Unstable)
from mdpembed.excursion import (exit_mass, exterior_statistics, queue_kac_return_time,
                                queue_rho)

TOP = 5  # index of service rate 0.6 in the demo grid


def queue_first_step_oracle(p=0.12, q=0.42, levels=4, n=600):
    """Dense first-step solve of the exterior above Z = {0..levels-1}, written out by hand.

    h(x) = c(x) + p h(x+1) + (1-p-q) h(x) + q h(x-1) for x >= levels, h(levels-1) = 0,
    with c(x) = x (cost) and c = 1 (time), reflecting far above.
    """
    xs = np.arange(levels, levels + n)
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = p + q if i < n - 1 else q
        if i > 0:
            A[i, i - 1] = -q
        if i < n - 1:
            A[i, i + 1] = -p
    cost = np.linalg.solve(A, xs.astype(float))
    time = np.linalg.solve(A, np.ones(n))
    return time[0], cost[0]


@pytest.fixture(scope="module")
def demo():
    return controlled_queue()


# -- exit mass ------------------------------------------------------------------


def test_exit_mass_examples(demo):
    assert exit_mass(demo, 3, TOP) == pytest.approx(0.12, abs=1e-15)
    assert exit_mass(demo, 2, TOP) == 0.0
    jump = explicit_table({0: [{"cost": 0, "next": [[1, 1.0]]}], 1: [{"cost": 1, "next": [[0, 1.0]]}]},
                          interior=[0])
    assert exit_mass(jump, 0, 0) == 1.0
    closed = explicit_table({0: [{"cost": 0, "next": [[0, 1.0]]}]}, interior=[0])
    assert exit_mass(closed, 0, 0) == 0.0


# -- truncated solve ------------------------------------------------------------


def test_queue_demo_excursion(demo):
    s = analyze_excursion(demo, 3, TOP)
    assert s.q == (0.0, 0.0, 0.0, 1.0)
    assert s.e_tau_given_exit == pytest.approx(13 / 3, abs=1e-8)
    assert s.lam == pytest.approx(0.3, abs=1e-8)
    assert s.excursion_cost == pytest.approx(44 / 3, abs=1e-8)
    assert s.omega_cost == pytest.approx(4.4, abs=1e-8)
    t, c = queue_first_step_oracle()
    assert s.e_tau_given_exit == pytest.approx(1 + t, abs=1e-9)
    assert s.excursion_cost == pytest.approx(c, abs=1e-9)


def test_exit_channel_does_not_change_summary_for_skip_free_queue(demo):
    ss = [analyze_excursion(demo, 3, a) for a in range(6)]
    for s in ss[1:]:
        assert s.q == ss[0].q
        assert (s.lam, s.omega_cost) == pytest.approx((ss[0].lam, ss[0].omega_cost), abs=1e-12)
    assert [s.exit_mass for s in ss] == pytest.approx([0.3 * (1 - a) for a in (0.1, 0.2, 0.3, 0.4, 0.5, 0.6)])


def test_closed_form_constants():
    assert queue_rho(0.3, 0.6) == pytest.approx(2 / 7, abs=1e-15)
    assert queue_kac_return_time(0.3, 0.6) == pytest.approx(7 / 5, abs=1e-14)
    s = skipfree_closed_form(0.3, 0.6)
    assert s.lam == pytest.approx(0.3, abs=1e-14)
    assert s.omega_cost == pytest.approx(4.4, abs=1e-13)
    assert s.q == (0.0, 0.0, 0.0, 1.0)


def test_closed_form_rejects_unstable():
    with pytest.raises(Unstable):
        skipfree_closed_form(0.6, 0.6)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.5), st.floats(0.1, 0.95), st.integers(1, 6),
       st.floats(-3, 3), st.floats(0, 3))
def test_closed_form_matches_truncated_solve(arrival, service, levels, c0, c1):
    # stay away from near-critical load where the truncation needs to be huge
    if arrival * (1 - service) > 0.7 * service * (1 - arrival):
        return
    m = controlled_queue(arrival, (service,), levels,
                         cost=lambda x, a: c0 + c1 * x)
    s = analyze_excursion(m, levels - 1, 0)
    cf = skipfree_closed_form(arrival, service, (c0, c1), levels)
    assert s.q == pytest.approx(cf.q, abs=1e-10)
    for f in ("e_tau_given_exit", "excursion_cost", "lam", "omega_cost"):
        assert getattr(s, f) == pytest.approx(getattr(cf, f), rel=1e-8, abs=1e-8), f


def test_kac_return_time_via_single_state_interior():
    std = controlled_queue(0.3, (0.6,), levels=1)
    s = analyze_excursion(std, 0, 0)
    ret = (1 - s.exit_mass) + s.exit_mass * s.e_tau_given_exit
    assert ret == pytest.approx(7 / 5, abs=1e-9)


def test_aux_excursion_cost_is_exterior_occupancy(demo):
    m = controlled_queue(aux=[lambda x, a: float(x >= 4)])
    s = analyze_excursion(m, 3, TOP)
    assert s.aux_excursion_costs[0] == pytest.approx(10 / 3, abs=1e-9)
    assert s.aux_omega_costs[0] == pytest.approx(1.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.floats(0.05, 0.4), st.floats(0.45, 0.9))
def test_summary_invariants(arrival, service):
    m = controlled_queue(arrival, (service,), 3)
    s = analyze_excursion(m, 2, 0)
    assert abs(sum(s.q) - 1) < 1e-10
    assert 0 < s.lam <= 1
    assert 1 + 1 / s.lam == pytest.approx(s.e_tau_given_exit, rel=1e-12)
    assert s.omega_cost / s.lam == pytest.approx(s.excursion_cost, rel=1e-12)
    assert s.e_tau_given_exit >= 2


def test_truncation_refinement_is_stable(demo):
    coarse = analyze_excursion(demo, 3, TOP, trunc=Truncation(start=40))
    fine = analyze_excursion(demo, 3, TOP, trunc=Truncation(start=640))
    for f in ("e_tau_given_exit", "excursion_cost", "lam", "omega_cost"):
        assert abs(getattr(coarse, f) - getattr(fine, f)) <= 1e-9 * max(1, abs(getattr(fine, f)))


def test_reservoir_entrance_distribution_is_spread():
    m = reservoir()
    s = analyze_excursion(m, 5, m.n_actions(5) - 1)
    assert sum(s.q) == pytest.approx(1, abs=1e-12)
    assert sum(x > 1e-6 for x in s.q) == 2


def test_immediate_return_gives_lambda_one():
    m = explicit_table({0: [{"cost": 0, "next": [[1, 1.0]]}], 1: [{"cost": 7, "next": [[0, 1.0]]}]},
                       interior=[0])
    s = analyze_excursion(m, 0, 0)
    assert (s.e_tau_given_exit, s.lam, s.excursion_cost, s.omega_cost) == (2.0, 1.0, 7.0, 7.0)


def test_no_exit_raises(demo):
    with pytest.raises(NoExit):
        analyze_excursion(demo, 1, 0)


def test_unstable_queue_diverges():
    m = controlled_queue(0.5, (0.2, 0.4), levels=2)
    with pytest.raises((TruncationDiverged, NotAbsorbed)):
        analyze_excursion(m, 1, 1, trunc=Truncation(max_states=4096))


def test_drifting_exterior_not_absorbed():
    # outside Z = {0} the walk only climbs
    m = CountableModel(actions=lambda x: (0,),
                       transition=lambda x, a: Distribution.point(x + 1),
                       cost=lambda x, a: 1.0, interior=(0,))
    with pytest.raises(NotAbsorbed):
        analyze_excursion(m, 0, 0, trunc=Truncation(max_states=512))


def test_finite_exterior_is_solved_exactly():
    m = controlled_queue(capacity=6, levels=4)
    stats = exterior_statistics(m, 0, [4])
    assert stats.exact and stats.n_states == 3


# -- Monte Carlo --------------------------------------------------------------


def test_mc_one_step_return_is_exact():
    m = explicit_table({0: [{"cost": 0, "next": [[1, 1.0]]}], 1: [{"cost": 7, "next": [[0, 1.0]]}]},
                       interior=[0])
    est = monte_carlo_excursion(m, 0, 0, n_excursions=1000, seed=3)
    assert est.summary.excursion_cost == 7.0
    assert est.stderr["excursion_cost"] == 0.0
    assert est.summary.lam == 1.0


def test_mc_queue_return_time_within_three_se(demo):
    est = monte_carlo_excursion(demo, 3, TOP, n_excursions=200_000, seed=20)
    se = est.stderr["e_tau_given_exit"]
    assert abs(est.summary.e_tau_given_exit - 13 / 3) < 3 * se
    assert abs(est.summary.excursion_cost - 44 / 3) < 4 * est.stderr["excursion_cost"]


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_mc_entrance_frequencies_sum_to_one(seed):
    m = reservoir()
    est = monte_carlo_excursion(m, 5, m.n_actions(5) - 1, n_excursions=500, seed=seed)
    assert sum(est.summary.q) == pytest.approx(1.0, abs=1e-15)


def test_mc_agrees_with_solve_on_every_field():
    m = reservoir(aux=[lambda l, act: float(l >= 6)])
    a = m.n_actions(5) - 1
    exact = analyze_excursion(m, 5, a)
    est = monte_carlo_excursion(m, 5, a, n_excursions=200_000, seed=5)
    s = est.summary
    for f, key in (("e_tau_given_exit",) * 2, ("excursion_cost",) * 2, ("lam", "lambda"),
                   ("omega_cost",) * 2):
        # the reservoir's exterior cost is constant, so omega_cost has zero variance
        assert abs(getattr(s, f) - getattr(exact, f)) <= 4 * est.stderr[key] + 1e-12, f
    assert np.all(np.abs(np.subtract(s.q, exact.q)) <= 4 * est.stderr["q"] + 1e-12)
    assert np.all(np.abs(np.subtract(s.aux_excursion_costs, exact.aux_excursion_costs))
                  < 4 * est.stderr["aux_excursion_costs"])


def test_mc_is_deterministic(demo):
    a = monte_carlo_excursion(demo, 3, TOP, n_excursions=5000, seed=9)
    b = monte_carlo_excursion(demo, 3, TOP, n_excursions=5000, seed=9)
    c = monte_carlo_excursion(demo, 3, TOP, n_excursions=5000, seed=10)
    assert a.summary == b.summary
    assert a.summary != c.summary


def test_mc_step_cap():
    m = controlled_queue(0.3, (0.35,), levels=1)
    with pytest.raises(ExcursionTooLong):
        monte_carlo_excursion(m, 0, 0, n_excursions=2000, seed=0, max_steps=5)


# -- summaries ----------------------------------------------------------------


def test_summary_dict_round_trip(demo):
    s = analyze_excursion(demo, 3, TOP)
    d = s.to_dict()
    assert d["lambda"] == s.lam
    assert ExcursionSummary.from_dict(d) == s


def test_summarize_exits_covers_every_channel(demo):
    out = summarize_exits(demo)
    assert [(s.boundary_state, s.interior_action) for s in out] == [(3, a) for a in range(6)]
    mc = summarize_exits(demo, "mc", n_excursions=2000, seed=1)
    assert len(mc) == 6 and all(s.method == "mc" for s in mc)


def test_calibration_rejects_impossible_return_time():
    with pytest.raises(NumericalError):
        ExcursionSummary.calibrated(0, 0, 0, 1.0, [1.0], 1.5, 1.0)
