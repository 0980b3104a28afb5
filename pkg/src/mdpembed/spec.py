"""Model specs and the on-disk file formats.

Three file kinds, all UTF-8:

* **model spec** (JSON, ``"format": "mdpembed.model/1"``): a declarative
  countable model, see :class:`ModelSpec`.
* **finite model** (JSON, ``"format": "mdpembed.finite/1"``): an explicit
  finite MDP, optionally with an ``"embedding"`` annex written by ``embed``.
* **results** (NDJSON): one JSON object per line, appended, keys sorted.

Finite model schema::

    {"format": "mdpembed.finite/1", "name": str, "n_aux": K,
     "constraints": [V_1..V_K] (optional),
     "states": [{"label": any, "actions": [
         {"label": any, "cost": float, "aux": [K floats], "next": [[j, p], ...]}]}],
     "embedding": {"map": [z_0..z_{n-1}], "omega_unreachable": bool, "backend": str,
                   "omega_actions": [[{"lambda", "q", "cost", "aux", "provenance",
                                       "e_tau_given_exit", "excursion_cost", "inert"}]]}}

State encodings: ``"integer"`` uses states as given; ``"pair"`` (explicit
tables only) writes states as ``[i, j]`` and packs them with the Cantor
pairing ``(i + j)(i + j + 1)/2 + j``.
"""

from __future__ import annotations

import copy
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .core import CountableModel, Distribution, FiniteMdp
from .embedding import EmbeddedMdp, OmegaAction
from .errors import ModelError, SpecError
from .excursion import ExcursionSummary, skipfree_closed_form
from .expr import Expression
from .models import controlled_queue, explicit_table, reservoir

SPEC_FORMAT = "mdpembed.model/1"
FINITE_FORMAT = "mdpembed.finite/1"
FAMILIES = ("controlled-queue", "reservoir-random-walk", "explicit-table")
ENCODINGS = ("integer", "pair")


def pack_pair(i: int, j: int) -> int:
    return (i + j) * (i + j + 1) // 2 + j


def unpack_pair(k: int) -> tuple[int, int]:
    w = (math.isqrt(8 * k + 1) - 1) // 2
    j = k - w * (w + 1) // 2
    return w - j, j


# ----------------------------------------------------------------------------
# field checks


def _require(d: dict, key: str, where: str = ""):
    if key not in d:
        raise SpecError(where + key, "missing required field")
    return d[key]


def _number(v, field, lo=-math.inf, hi=math.inf, lo_open=False, hi_open=False) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise SpecError(field, f"expected a finite number, got {v!r}")
    if v < lo or v > hi or (lo_open and v == lo) or (hi_open and v == hi):
        lb, rb = "(" if lo_open else "[", ")" if hi_open else "]"
        raise SpecError(field, f"{v} not in {lb}{lo}, {hi}{rb}")
    return float(v)


def _integer(v, field, lo=None) -> int:
    if isinstance(v, bool) or not isinstance(v, int):
        raise SpecError(field, f"expected an integer, got {v!r}")
    if lo is not None and v < lo:
        raise SpecError(field, f"must be >= {lo}, got {v}")
    return v


def _prob_vector(v, field) -> list[float]:
    if not isinstance(v, list) or not v:
        raise SpecError(field, "expected a non-empty list of probabilities")
    ps = [_number(p, f"{field}[{k}]", 0.0, 1.0) for k, p in enumerate(v)]
    if abs(sum(ps) - 1.0) > 1e-12:
        raise SpecError(field, f"probabilities sum to {sum(ps)!r}, not 1")
    return ps


# ----------------------------------------------------------------------------
# the spec


_FAMILY_PARAMS = {
    "controlled-queue": {"arrival", "service_grid", "levels", "capacity"},
    "reservoir-random-walk": {"inflow", "ybar", "zbar", "levels"},
    "explicit-table": set(),
}


@dataclass
class ModelSpec:
    """Declarative countable model.

    ``cost`` and each ``aux_costs`` entry are expressions (see
    :mod:`mdpembed.expr`).  Available names: every scalar parameter, plus

    * controlled-queue: ``x`` (queue length), ``a`` (service rate);
    * reservoir-random-walk: ``l`` or ``x`` (level), ``y`` (spill), ``z`` (turbine);
    * explicit-table: ``x`` (packed state), ``a`` (action index), and
      ``x0``, ``x1`` under the pair encoding.  Table actions may instead give
      a numeric ``"cost"`` / ``"aux"`` directly.
    """

    name: str
    family: str
    interior: list
    params: dict = field(default_factory=dict)
    cost: str | None = None
    aux_costs: list = field(default_factory=list)
    constraints: list | None = None
    exterior_policies: list = field(default_factory=lambda: [0])
    state_encoding: str = "integer"
    table: dict | None = None

    # -- (de)serialisation ---------------------------------------------------

    @classmethod
    def from_dict(cls, d: Any) -> "ModelSpec":
        if not isinstance(d, dict):
            raise SpecError("<root>", "spec must be a JSON object")
        fmt = d.get("format", SPEC_FORMAT)
        if fmt != SPEC_FORMAT:
            raise SpecError("format", f"expected {SPEC_FORMAT!r}, got {fmt!r}")
        known = {"format", "name", "family", "interior", "params", "cost", "aux_costs",
                 "constraints", "exterior_policies", "state_encoding", "table"}
        for k in d:
            if k not in known:
                raise SpecError(k, "unknown field")
        spec = cls(
            name=d.get("name", ""),
            family=_require(d, "family"),
            interior=_require(d, "interior"),
            params=copy.deepcopy(d.get("params", {})),
            cost=d.get("cost"),
            aux_costs=list(d.get("aux_costs", [])),
            constraints=None if d.get("constraints") is None else list(d["constraints"]),
            exterior_policies=copy.deepcopy(d.get("exterior_policies", [0])),
            state_encoding=d.get("state_encoding", "integer"),
            table=copy.deepcopy(d.get("table")),
        )
        spec.validate()
        return spec

    def to_dict(self) -> dict:
        d = {"format": SPEC_FORMAT, "name": self.name, "family": self.family,
             "state_encoding": self.state_encoding, "params": copy.deepcopy(self.params),
             "cost": self.cost, "aux_costs": list(self.aux_costs),
             "constraints": None if self.constraints is None else list(self.constraints),
             "interior": copy.deepcopy(self.interior),
             "exterior_policies": copy.deepcopy(self.exterior_policies)}
        if self.table is not None:
            d["table"] = copy.deepcopy(self.table)
        return d

    # -- validation ----------------------------------------------------------

    def _scalars(self) -> dict:
        return {k: v for k, v in self.params.items()
                if isinstance(v, (int, float)) and not isinstance(v, bool)}

    def _variables(self) -> set:
        base = {"controlled-queue": {"x", "a"},
                "reservoir-random-walk": {"x", "l", "y", "z"},
                "explicit-table": {"x", "a"} | ({"x0", "x1"} if self.state_encoding == "pair" else set())}
        return base[self.family] | set(self._scalars())

    def _state(self, v, field) -> int:
        if self.state_encoding == "pair":
            if (not isinstance(v, list) or len(v) != 2):
                raise SpecError(field, f"pair-encoded state must be [i, j], got {v!r}")
            return pack_pair(_integer(v[0], field, 0), _integer(v[1], field, 0))
        return _integer(v, field, 0)

    def _key_state(self, key: str, field) -> int:
        try:
            parts = [int(t) for t in key.split(",")]
        except ValueError:
            raise SpecError(field, f"bad state key {key!r}") from None
        return self._state(parts if self.state_encoding == "pair" else parts[0], field)

    def validate(self):
        if not isinstance(self.name, str):
            raise SpecError("name", "must be a string")
        if self.family not in FAMILIES:
            raise SpecError("family", f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if self.state_encoding not in ENCODINGS:
            raise SpecError("state_encoding", f"expected one of {ENCODINGS}")
        if self.state_encoding == "pair" and self.family != "explicit-table":
            raise SpecError("state_encoding", "pair encoding is only available for explicit tables")
        if not isinstance(self.params, dict):
            raise SpecError("params", "must be an object")
        for k in self.params:
            if k not in _FAMILY_PARAMS[self.family]:
                raise SpecError(f"params.{k}", f"not a parameter of {self.family}")
        if not isinstance(self.interior, list) or not self.interior:
            raise SpecError("interior", "must be a non-empty list of states")
        z = [self._state(v, f"interior[{k}]") for k, v in enumerate(self.interior)]
        if len(set(z)) != len(z):
            raise SpecError("interior", "contains duplicate states")
        if not isinstance(self.exterior_policies, list) or not self.exterior_policies:
            raise SpecError("exterior_policies", "must be a non-empty list")
        if not isinstance(self.aux_costs, list):
            raise SpecError("aux_costs", "must be a list of expressions")
        if self.constraints is not None:
            if not isinstance(self.constraints, list):
                raise SpecError("constraints", "must be a list of numbers")
            for k, v in enumerate(self.constraints):
                _number(v, f"constraints[{k}]")
        getattr(self, "_validate_" + self.family.replace("-", "_"))()
        self._expressions()
        n_aux = self.n_aux
        if self.constraints is not None and len(self.constraints) != n_aux:
            raise SpecError("constraints", f"{len(self.constraints)} bounds for {n_aux} aux costs")

    def _validate_controlled_queue(self):
        p = self.params
        _number(_require(p, "arrival", "params."), "params.arrival", 0.0, 1.0, True, True)
        grid = _require(p, "service_grid", "params.")
        if not isinstance(grid, list) or not grid:
            raise SpecError("params.service_grid", "must be a non-empty list")
        for k, a in enumerate(grid):
            _number(a, f"params.service_grid[{k}]", 0.0, 1.0, lo_open=True)
        levels = _integer(_require(p, "levels", "params."), "params.levels", 1)
        if p.get("capacity") is not None:
            _integer(p["capacity"], "params.capacity", levels)
        cap = p.get("capacity")
        for k, v in enumerate(self.interior):
            if cap is not None and v > cap:
                raise SpecError(f"interior[{k}]", f"state {v} above capacity {cap}")
        self._const_policies()

    def _validate_reservoir_random_walk(self):
        p = self.params
        inflow = _prob_vector(_require(p, "inflow", "params."), "params.inflow")
        ybar = _integer(_require(p, "ybar", "params."), "params.ybar", 0)
        zbar = _integer(_require(p, "zbar", "params."), "params.zbar", 0)
        levels = _integer(_require(p, "levels", "params."), "params.levels", 1)
        if levels < ybar + zbar:
            raise SpecError("params.levels", "must be >= ybar + zbar")
        if sum(d * q for d, q in enumerate(inflow)) >= ybar + zbar:
            raise SpecError("params.inflow", "mean inflow must be below ybar + zbar")
        self._const_policies()

    def _const_policies(self):
        for k, e in enumerate(self.exterior_policies):
            if e != 0:
                raise SpecError(f"exterior_policies[{k}]",
                                f"{self.family} forces a single exterior action; use 0")

    def _validate_explicit_table(self):
        if not isinstance(self.table, dict) or not self.table:
            raise SpecError("table", "explicit-table needs a non-empty table")
        states = {}
        for key, acts in self.table.items():
            s = self._key_state(key, f"table.{key}")
            if s in states:
                raise SpecError(f"table.{key}", "duplicate state")
            if not isinstance(acts, list) or not acts:
                raise SpecError(f"table.{key}", "needs a non-empty list of actions")
            states[s] = key
            for k, act in enumerate(acts):
                f = f"table.{key}[{k}]"
                if not isinstance(act, dict):
                    raise SpecError(f, "action must be an object")
                for name in act:
                    if name not in ("label", "cost", "aux", "next"):
                        raise SpecError(f"{f}.{name}", "unknown field")
                if "cost" in act:
                    _number(act["cost"], f + ".cost")
                elif self.cost is None:
                    raise SpecError(f + ".cost", "missing, and the spec has no cost expression")
                if "aux" in act:
                    if len(act["aux"]) != len(self.aux_costs) and self.aux_costs:
                        raise SpecError(f + ".aux", "conflicts with aux_costs expressions")
                    for m, v in enumerate(act["aux"]):
                        _number(v, f"{f}.aux[{m}]")
                nxt = _require(act, "next", f + ".")
                if not isinstance(nxt, list) or not nxt:
                    raise SpecError(f + ".next", "must be a non-empty list of [state, p]")
                total = 0.0
                for m, pair in enumerate(nxt):
                    if not isinstance(pair, list) or len(pair) != 2:
                        raise SpecError(f"{f}.next[{m}]", "expected [state, p]")
                    self._state(pair[0], f"{f}.next[{m}]")
                    total += _number(pair[1], f"{f}.next[{m}]", 0.0, 1.0)
                if abs(total - 1.0) > 1e-12:
                    raise SpecError(f + ".next", f"row sums to {total!r}, not 1")
        aux_lens = {len(a.get("aux", ())) for acts in self.table.values() for a in acts}
        if not self.aux_costs and len(aux_lens) > 1:
            raise SpecError("table", f"aux lengths differ across actions: {sorted(aux_lens)}")
        for key, acts in self.table.items():
            for k, act in enumerate(acts):
                for m, (j, _) in enumerate(act["next"]):
                    if self._state(j, "") not in states:
                        raise SpecError(f"table.{key}[{k}].next[{m}]", f"target {j} has no table entry")
        for k, v in enumerate(self.interior):
            if self._state(v, "") not in states:
                raise SpecError(f"interior[{k}]", f"state {v} has no table entry")
        for k, e in enumerate(self.exterior_policies):
            f = f"exterior_policies[{k}]"
            if isinstance(e, dict):
                for key, a in e.items():
                    s = self._key_state(key, f"{f}.{key}")
                    if s not in states:
                        raise SpecError(f"{f}.{key}", "state has no table entry")
                    if not 0 <= _integer(a, f"{f}.{key}") < len(self.table[states[s]]):
                        raise SpecError(f"{f}.{key}", f"action index {a} out of range")
            else:
                a = _integer(e, f, 0)
                for key, acts in self.table.items():
                    if a >= len(acts) and self._key_state(key, "") not in set(self._interior_ids()):
                        raise SpecError(f, f"action index {a} out of range at state {key}")

    def _interior_ids(self) -> list[int]:
        return [self._state(v, "interior") for v in self.interior]

    def _expressions(self) -> tuple[Expression | None, list[Expression]]:
        names = self._variables()
        cost = None if self.cost is None else Expression(self.cost, names, "cost")
        if cost is None and self.family != "explicit-table":
            raise SpecError("cost", "missing required field")
        aux = [Expression(t, names, f"aux_costs[{k}]") for k, t in enumerate(self.aux_costs)]
        return cost, aux

    @property
    def n_aux(self) -> int:
        if self.aux_costs or self.family != "explicit-table":
            return len(self.aux_costs)
        return max((len(a.get("aux", ())) for acts in self.table.values() for a in acts), default=0)

    # -- building --------------------------------------------------------------

    def build(self) -> CountableModel:
        cost, aux = self._expressions()
        env = self._scalars()
        p = self.params
        if self.family == "controlled-queue":
            return controlled_queue(
                arrival=p["arrival"], service_grid=p["service_grid"], levels=p["levels"],
                capacity=p.get("capacity"),
                cost=lambda x, a: cost(x=x, a=a, **env),
                aux=[lambda x, a, f=f: f(x=x, a=a, **env) for f in aux],
                interior=self._interior_ids(), name=self.name)
        if self.family == "reservoir-random-walk":
            m = reservoir(
                inflow=p["inflow"], ybar=p["ybar"], zbar=p["zbar"], levels=p["levels"],
                cost=lambda l, act: cost(x=l, l=l, y=act[0], z=act[1], **env),
                aux=[lambda l, act, f=f: f(x=l, l=l, y=act[0], z=act[1], **env) for f in aux],
                name=self.name)
            return CountableModel(m.actions, m.transition, m.cost, tuple(self._interior_ids()),
                                  m.exterior_policies, m.aux_cost, m.n_aux, m.name, m.states, m.meta)
        return self._build_table(cost, aux, env)

    def _build_table(self, cost, aux, env) -> CountableModel:
        pair = self.state_encoding == "pair"

        def extra(s):
            if pair:
                i, j = unpack_pair(s)
                return {"x0": i, "x1": j}
            return {}

        table = {}
        for key, acts in self.table.items():
            s = self._key_state(key, "")
            rows = []
            for k, act in enumerate(acts):
                c = act["cost"] if "cost" in act else cost(x=s, a=k, **extra(s), **env)
                d = act.get("aux", ())
                if aux:
                    d = [f(x=s, a=k, **extra(s), **env) for f in aux]
                rows.append({"label": act.get("label", k), "cost": c, "aux": d,
                             "next": [[self._state(j, ""), pj] for j, pj in act["next"]]})
            table[s] = rows
        ext = [e if not isinstance(e, dict) else {self._key_state(k, ""): v for k, v in e.items()}
               for e in self.exterior_policies]
        model = explicit_table(table, self._interior_ids(), ext, name=self.name)
        if self.n_aux and model.n_aux != self.n_aux:
            raise SpecError("table", "aux lengths differ across actions")
        return model

    # -- closed-form excursions ----------------------------------------------

    def closed_form_summaries(self) -> list[ExcursionSummary]:
        """Exact summaries for the uncapacitated controlled queue with Z = {0..levels-1}.

        The exterior cost (and each aux cost) must be affine in ``x`` above
        Z; this is checked on the first 64 exterior levels.
        """
        if self.family != "controlled-queue":
            raise SpecError("family", "closed-form excursions exist only for controlled-queue")
        p = self.params
        levels = p["levels"]
        if p.get("capacity") is not None:
            raise SpecError("params.capacity", "closed-form excursions need an unbounded queue")
        if self._interior_ids() != list(range(levels)):
            raise SpecError("interior", "closed-form excursions need Z = {0..levels-1}")
        model = self.build()
        top = max(p["service_grid"])

        def affine(f, field):
            xs = list(range(levels, levels + 64))
            vs = [f(x, top) for x in xs]
            c1 = vs[1] - vs[0]
            c0 = vs[0] - c1 * xs[0]
            for x, v in zip(xs, vs):
                if abs(c0 + c1 * x - v) > 1e-9 * max(1.0, abs(v)):
                    raise SpecError(field, "exterior cost is not affine in x; use --backend solve")
            return c0, c1

        cost, aux = self._expressions()
        env = self._scalars()
        c = affine(lambda x, a: cost(x=x, a=a, **env), "cost")
        d = [affine(lambda x, a, f=f: f(x=x, a=a, **env), f"aux_costs[{k}]") for k, f in enumerate(aux)]
        out = []
        z = levels - 1
        for ai, rate in enumerate(p["service_grid"]):
            if model.transition(z, ai).prob(levels) > 0:
                out.append(skipfree_closed_form(p["arrival"], top, c, levels, d,
                                                boundary_rate=rate, interior_action=ai))
        return out


def load_spec(path) -> ModelSpec:
    return ModelSpec.from_dict(read_json(path))


def save_spec(spec: ModelSpec, path):
    write_json(spec.to_dict(), path)


# ----------------------------------------------------------------------------
# JSON helpers


def _plain(v):
    if isinstance(v, float) and not math.isfinite(v):
        return "NaN" if math.isnan(v) else ("Infinity" if v > 0 else "-Infinity")
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if hasattr(v, "item") and callable(v.item):
        return _plain(v.item())
    return v


def dumps(obj, indent=None) -> str:
    return json.dumps(_plain(obj), sort_keys=True, indent=indent, allow_nan=False)


def read_json(path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError("<file>", f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc.strerror}") from None


def write_json(obj, path):
    Path(path).write_text(dumps(obj, indent=2) + "\n", encoding="utf-8")


def append_record(path, record: dict):
    """Append one results record (a single NDJSON line)."""
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(dumps(record) + "\n")


def read_records(path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


# ----------------------------------------------------------------------------
# finite (and embedded) model files


def _label(v):
    return tuple(_label(x) for x in v) if isinstance(v, list) else v


def finite_to_dict(mdp: FiniteMdp, emdp: EmbeddedMdp | None = None, name: str = "",
                   constraints=None, backend: str | None = None) -> dict:
    states = []
    for s in range(mdp.n_states):
        acts = []
        for a in range(mdp.n_actions(s)):
            d = mdp.kernel[s][a]
            acts.append({"label": mdp.action_labels[s][a] if mdp.action_labels else a,
                         "cost": mdp.cost[s][a], "aux": list(mdp.aux_costs[s][a]),
                         "next": [[j, p] for j, p in d.items()]})
        states.append({"label": mdp.state_labels[s] if mdp.state_labels else s, "actions": acts})
    out = {"format": FINITE_FORMAT, "name": name, "n_aux": mdp.n_aux, "states": states}
    if constraints is not None:
        out["constraints"] = list(constraints)
    if emdp is not None:
        out["embedding"] = {
            "map": list(emdp.embedding_map),
            "omega_unreachable": emdp.omega_unreachable,
            "backend": backend,
            "omega_actions": [[{"lambda": a.lam, "q": list(a.q), "cost": a.cost, "aux": list(a.aux),
                                "provenance": [list(t) for t in a.provenance],
                                "e_tau_given_exit": a.e_tau_given_exit,
                                "excursion_cost": a.excursion_cost, "inert": a.inert}
                               for a in acts] for acts in emdp.omega_actions],
        }
    return out


def finite_from_dict(d: dict) -> tuple[FiniteMdp, EmbeddedMdp | None, dict]:
    """Parse a finite model file; returns ``(mdp, embedding or None, extras)``."""
    if d.get("format") != FINITE_FORMAT:
        raise SpecError("format", f"expected {FINITE_FORMAT!r}, got {d.get('format')!r}")
    states = _require(d, "states")
    if not isinstance(states, list) or not states:
        raise SpecError("states", "must be a non-empty list")
    n_aux = _integer(d.get("n_aux", 0), "n_aux", 0)
    kernel, cost, aux, slabels, alabels = [], [], [], [], []
    for s, st in enumerate(states):
        acts = _require(st, "actions", f"states[{s}].")
        if not acts:
            raise SpecError(f"states[{s}].actions", "empty")
        krow, crow, arow, lrow = [], [], [], []
        for a, act in enumerate(acts):
            f = f"states[{s}].actions[{a}]"
            nxt = _require(act, "next", f + ".")
            for m, (j, _) in enumerate(nxt):
                if not (isinstance(j, int) and 0 <= j < len(states)):
                    raise SpecError(f"{f}.next[{m}]", f"target {j!r} is not a state index")
            try:
                krow.append(Distribution.from_pairs((j, _number(p, f + ".next", 0.0, 1.0)) for j, p in nxt))
            except ModelError as exc:
                raise SpecError(f + ".next", str(exc)) from None
            crow.append(_number(_require(act, "cost", f + "."), f + ".cost"))
            av = tuple(float(v) for v in act.get("aux", ()))
            if len(av) != n_aux:
                raise SpecError(f + ".aux", f"length {len(av)}, n_aux = {n_aux}")
            arow.append(av)
            lrow.append(_label(act.get("label", a)))
        kernel.append(tuple(krow))
        cost.append(tuple(crow))
        aux.append(tuple(arow))
        alabels.append(tuple(lrow))
        slabels.append(_label(st.get("label", s)))
    mdp = FiniteMdp(tuple(kernel), tuple(cost), tuple(aux), tuple(slabels), tuple(alabels))
    extras = {"name": d.get("name", ""), "constraints": d.get("constraints")}
    emb = d.get("embedding")
    if emb is None:
        return mdp, None, extras
    omega = tuple(
        tuple(OmegaAction(a["lambda"], tuple(a["q"]), a["cost"], tuple(a["aux"]),
                          tuple(tuple(t) for t in a["provenance"]), a.get("e_tau_given_exit"),
                          a.get("excursion_cost"), a.get("inert", False)) for a in acts)
        for acts in emb["omega_actions"])
    if 2 * len(emb["map"]) != mdp.n_states or len(omega) != len(emb["map"]):
        raise SpecError("embedding.map", "size does not match the model")
    extras["backend"] = emb.get("backend")
    return mdp, EmbeddedMdp(mdp, tuple(emb["map"]), omega), extras


def save_finite(path, mdp: FiniteMdp, emdp: EmbeddedMdp | None = None, **kw):
    write_json(finite_to_dict(mdp, emdp, **kw), path)


def load_finite(path):
    return finite_from_dict(read_json(path))


# ----------------------------------------------------------------------------
# shipped demos


DEMOS = {
    "queue": {
        "format": SPEC_FORMAT, "name": "queue", "family": "controlled-queue",
        "params": {"arrival": 0.3, "service_grid": [0.1, 0.2, 0.3, 0.4, 0.5, 0.6], "levels": 4},
        "cost": "x + a if x < levels else x",
        "interior": [0, 1, 2, 3], "exterior_policies": [0],
    },
    "reservoir": {
        "format": SPEC_FORMAT, "name": "reservoir", "family": "reservoir-random-walk",
        "params": {"inflow": [0.2, 0.3, 0.3, 0.2], "ybar": 1, "zbar": 1, "levels": 6},
        "cost": "-z * (1 + 0.1 * l) if l < levels else 5",
        "interior": [0, 1, 2, 3, 4, 5], "exterior_policies": [0],
    },
}


def demo_spec(name: str) -> ModelSpec:
    try:
        return ModelSpec.from_dict(copy.deepcopy(DEMOS[name]))
    except KeyError:
        raise ModelError(f"unknown demo {name!r}; available: {sorted(DEMOS)}") from None
