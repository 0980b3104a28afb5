import json
import math

import pytest
from hypothesis import given, settings, strategies as st

from mdpembed import build_embedding, summarize_exits
from mdpembed.errors import SpecError
from mdpembed.expr import Expression
from mdpembed.spec import (DEMOS, ModelSpec, append_record, demo_spec, finite_from_dict,
                           finite_to_dict, pack_pair, read_records, unpack_pair, write_csv)


# -- expressions ----------------------------------------------------------------


def test_expression_arithmetic_and_conditionals():
    e = Expression("x + a if x < levels else x", {"x", "a", "levels"})
    assert e(x=2, a=0.5, levels=4) == 2.5
    assert e(x=7, a=0.5, levels=4) == 7.0
    assert Expression("x + 2 * (x >= 4)", {"x"})(x=5) == 7.0
    assert Expression("max(x, 3) ** 2 - abs(-1) + sqrt(4)", {"x"})(x=1) == 10.0
    assert Expression("1 <= x < 3 and not x == 2", {"x"})(x=1) == 1.0


@pytest.mark.parametrize("text", ["__import__('os')", "x.real", "(lambda: 1)()", "[1][0]",
                                  "'s'", "y + 1", "open('f')", "x if", ""])
def test_expression_rejects_unsafe_or_unknown(text):
    with pytest.raises(SpecError):
        Expression(text, {"x"}, "cost")


# -- state packing --------------------------------------------------------------


@given(st.integers(0, 10**6), st.integers(0, 10**6))
def test_pair_packing_inverse(i, j):
    assert unpack_pair(pack_pair(i, j)) == (i, j)


def test_pair_packing_is_onto():
    assert sorted(pack_pair(i, j) for i in range(40) for j in range(40) if i + j < 40) == list(range(820))


# -- spec round trip -------------------------------------------------------------


def same_model(a, b, states):
    for x in states:
        assert a.actions(x) == b.actions(x)
        for k in range(a.n_actions(x)):
            assert a.transition(x, k) == b.transition(x, k)
            assert a.cost(x, k) == b.cost(x, k)
            assert a.aux(x, k) == b.aux(x, k)
    assert a.interior == b.interior


@pytest.mark.parametrize("name", sorted(DEMOS))
def test_demo_round_trip(name):
    spec = demo_spec(name)
    again = ModelSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again.to_dict() == spec.to_dict()
    same_model(spec.build(), again.build(), range(40))


@settings(max_examples=30, deadline=None)
@given(st.floats(0.05, 0.45), st.lists(st.floats(0.5, 1.0), min_size=1, max_size=4),
       st.integers(1, 6), st.sampled_from(["x", "x + a", "2 * x + a * a if x < levels else 3 * x"]))
def test_queue_spec_round_trip(arrival, grid, levels, cost):
    d = {"family": "controlled-queue", "name": "q",
         "params": {"arrival": arrival, "service_grid": grid, "levels": levels},
         "cost": cost, "aux_costs": ["x >= levels"], "constraints": [0.5],
         "interior": list(range(levels))}
    spec = ModelSpec.from_dict(d)
    again = ModelSpec.from_dict(json.loads(json.dumps(spec.to_dict())))
    assert again.to_dict() == spec.to_dict()
    same_model(spec.build(), again.build(), range(levels + 20))


def test_reservoir_spec_matches_demo_costs():
    m = demo_spec("reservoir").build()
    assert m.actions(1) == ((0, 0), (0, 1), (1, 0))
    assert m.cost(3, m.actions(3).index((1, 1))) == pytest.approx(-1.3)
    assert m.cost(9, 0) == 5.0


def test_pair_encoded_table():
    d = {"family": "explicit-table", "state_encoding": "pair", "cost": "x0 + 10 * x1",
         "interior": [[0, 0]],
         "table": {"0,0": [{"next": [[[1, 0], 0.5], [[0, 1], 0.5]]}],
                   "1,0": [{"next": [[[0, 0], 1.0]]}],
                   "0,1": [{"next": [[[0, 0], 1.0]]}]}}
    spec = ModelSpec.from_dict(d)
    m = spec.build()
    assert m.interior == (0,)
    assert dict(m.transition(0, 0).items()) == {pack_pair(1, 0): 0.5, pack_pair(0, 1): 0.5}
    assert m.cost(pack_pair(0, 1), 0) == 10.0
    spec2 = ModelSpec.from_dict(spec.to_dict())
    same_model(m, spec2.build(), [0, 1, 2])


# -- validation -------------------------------------------------------------------


def _queue(**over):
    d = json.loads(json.dumps(DEMOS["queue"]))
    for k, v in over.items():
        if v is None:
            d.pop(k)
        else:
            d[k] = v
    return d


@pytest.mark.parametrize("over,field", [
    ({"interior": None}, "interior"),
    ({"interior": []}, "interior"),
    ({"family": "nope"}, "family"),
    ({"cost": None}, "cost"),
    ({"cost": "x + foo"}, "cost"),
    ({"params": {"arrival": 1.2, "service_grid": [0.5], "levels": 2}}, "params.arrival"),
    ({"params": {"service_grid": [0.5], "levels": 2}}, "params.arrival"),
    ({"params": {"arrival": 0.2, "service_grid": [0.0], "levels": 2}}, "params.service_grid[0]"),
    ({"params": {"arrival": 0.2, "service_grid": [0.5], "levels": 2, "speed": 1}}, "params.speed"),
    ({"aux_costs": ["x"], "constraints": [1, 2]}, "constraints"),
    ({"exterior_policies": [1]}, "exterior_policies[0]"),
    ({"colour": "red"}, "colour"),
    ({"format": "other/1"}, "format"),
])
def test_validation_names_the_field(over, field):
    with pytest.raises(SpecError) as err:
        ModelSpec.from_dict(_queue(**over))
    assert err.value.field == field


def test_reservoir_validation():
    d = json.loads(json.dumps(DEMOS["reservoir"]))
    d["params"]["inflow"] = [0.5, 0.6]
    with pytest.raises(SpecError, match="params.inflow"):
        ModelSpec.from_dict(d)
    d["params"]["inflow"] = [0, 0, 0, 1.0]
    with pytest.raises(SpecError, match="mean inflow"):
        ModelSpec.from_dict(d)


@pytest.mark.parametrize("table,field", [
    ({"0": [{"cost": 1, "next": [[0, 0.7]]}]}, "table.0[0].next"),
    ({"0": [{"cost": 1, "next": [[3, 1.0]]}]}, "table.0[0].next[0]"),
    ({"0": [{"cost": 1, "next": [[0, 1.5], [0, -0.5]]}]}, "table.0[0].next[0]"),
    ({"0": []}, "table.0"),
    ({"0": [{"next": [[0, 1.0]]}]}, "table.0[0].cost"),
])
def test_table_validation(table, field):
    with pytest.raises(SpecError) as err:
        ModelSpec.from_dict({"family": "explicit-table", "interior": [0], "table": table})
    assert err.value.field == field


# -- closed-form backend ------------------------------------------------------------


def test_closed_form_summaries_match_solve():
    spec = demo_spec("queue")
    m = spec.build()
    cf = spec.closed_form_summaries()
    sv = summarize_exits(m)
    assert len(cf) == len(sv) == 6
    for a, b in zip(cf, sv):
        assert (a.boundary_state, a.interior_action) == (b.boundary_state, b.interior_action)
        assert a.q == b.q
        for f in ("exit_mass", "e_tau_given_exit", "excursion_cost", "lam", "omega_cost"):
            assert getattr(a, f) == pytest.approx(getattr(b, f), abs=1e-8)


def test_closed_form_preconditions():
    with pytest.raises(SpecError, match="affine"):
        ModelSpec.from_dict(_queue(cost="x * x")).closed_form_summaries()
    with pytest.raises(SpecError, match="interior"):
        ModelSpec.from_dict(_queue(interior=[0, 1, 2])).closed_form_summaries()
    with pytest.raises(SpecError, match="family"):
        demo_spec("reservoir").closed_form_summaries()


# -- file formats -------------------------------------------------------------------


def test_finite_file_round_trip():
    m = demo_spec("queue").build()
    e = build_embedding(m, summarize_exits(m))
    doc = json.loads(json.dumps(finite_to_dict(e.base, e, name="queue", backend="solve")))
    mdp, e2, extras = finite_from_dict(doc)
    assert mdp.kernel == e.base.kernel and mdp.cost == e.base.cost
    assert e2.omega_actions == e.omega_actions
    assert e2.embedding_map == e.embedding_map
    assert extras["backend"] == "solve"
    assert doc["embedding"]["omega_actions"][3][0]["cost"] == pytest.approx(4.4, abs=1e-9)


def test_finite_file_validation():
    bad = {"format": "mdpembed.finite/1",
           "states": [{"actions": [{"cost": 0, "next": [[1, 1.0]]}]}]}
    with pytest.raises(SpecError, match="states\\[0\\].actions\\[0\\].next\\[0\\]"):
        finite_from_dict(bad)


def test_results_append_and_non_finite(tmp_path):
    path = tmp_path / "r.ndjson"
    append_record(path, {"b": 1, "a": math.inf})
    append_record(path, {"c": [1.5, math.nan]})
    lines = path.read_text().splitlines()
    assert lines[0] == '{"a": "Infinity", "b": 1}'
    assert read_records(path)[1] == {"c": [1.5, "NaN"]}


def test_csv(tmp_path):
    path = tmp_path / "t.csv"
    write_csv(path, ["a", "b"], [[1, 0.5], [2, 0.25]])
    assert path.read_text() == "a,b\n1,0.5\n2,0.25\n"
