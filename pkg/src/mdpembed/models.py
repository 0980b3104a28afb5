"""Model families: controlled queue, reservoir random walk, explicit tables.

Also a seeded generator of random unichain finite MDPs for cross-checks.
"""

from __future__ import annotations

from typing import Any, Callable, Mapping, Sequence

import numpy as np

from .core import CountableModel, Distribution, FiniteMdp
from .errors import ModelError

# ----------------------------------------------------------------------------
# controlled single-server queue
#
# Bernoulli(arrival) arrivals each slot; the head-of-line job completes with
# probability a (the action).  From x > 0: up w.p. arrival*(1-a), down w.p.
# a*(1-arrival).  From 0 a job arriving in the slot may be served at once, so
# the up probability is arrival*(1-a) as well, which makes the uncontrolled
# queue's stationary law exactly geometric.


def queue_kernel(x: int, a: float, arrival: float, capacity: int | None = None) -> Distribution:
    up = arrival * (1.0 - a) if capacity is None or x < capacity else 0.0
    down = a * (1.0 - arrival) if x > 0 else 0.0
    return Distribution.from_pairs([(x + 1, up), (x - 1, down), (x, 1.0 - up - down)])


def controlled_queue(arrival: float = 0.3, service_grid: Sequence[float] = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6),
                     levels: int = 4, capacity: int | None = None,
                     cost: Callable[[int, float], float] | None = None,
                     aux: Sequence[Callable[[int, float], float]] = (),
                     interior: Sequence[int] | None = None, name: str = "queue") -> CountableModel:
    """Queue with rate control below ``levels`` and the maximal rate forced above.

    ``cost(x, a)`` defaults to ``x + a`` inside Z = {0..levels-1} and ``x``
    outside.  ``capacity`` blocks arrivals at that level (finite model).
    """
    grid = tuple(float(a) for a in service_grid)
    if not grid or not all(0.0 < a <= 1.0 for a in grid):
        raise ModelError("service rates must lie in (0, 1]")
    if not 0.0 < arrival < 1.0:
        raise ModelError("arrival probability must lie in (0, 1)")
    if levels < 1:
        raise ModelError("levels must be >= 1")
    if capacity is not None and capacity < levels:
        raise ModelError("capacity must be >= levels")
    top = (max(grid),)
    if cost is None:
        def cost(x, a):
            return x + a if x < levels else float(x)

    def actions(x):
        return grid if x < levels else top

    def valid(x):
        if x < 0 or (capacity is not None and x > capacity):
            raise ModelError(f"state {x} outside the queue")

    def transition(x, ai):
        valid(x)
        return queue_kernel(x, actions(x)[ai], arrival, capacity)

    def cost_fn(x, ai):
        return float(cost(x, actions(x)[ai]))

    def aux_fn(x, ai):
        a = actions(x)[ai]
        return tuple(float(f(x, a)) for f in aux)

    return CountableModel(
        actions=actions, transition=transition, cost=cost_fn,
        interior=tuple(range(levels)) if interior is None else tuple(interior),
        exterior_policies=(lambda x: 0,),
        aux_cost=aux_fn if aux else None, n_aux=len(aux), name=name,
        states=(lambda: range(capacity + 1)) if capacity is not None else None,
        meta={"family": "controlled-queue", "arrival": arrival, "service": max(grid),
              "levels": levels, "capacity": capacity},
    )


# ----------------------------------------------------------------------------
# reservoir with i.i.d. inflow
#
# Level l; action (y, z) releases y through spillways and z through turbines
# from stored water (y + z <= l); then inflow D ~ inflow arrives:
# l' = l - y - z + D.  At or above ``levels`` the maximal release is forced,
# so outside Z the level is a random walk with increments D - ybar - zbar.


def reservoir(inflow: Sequence[float] = (0.2, 0.3, 0.3, 0.2), ybar: int = 1, zbar: int = 1,
              levels: int = 6, cost: Callable[[int, tuple[int, int]], float] | None = None,
              aux: Sequence[Callable[[int, tuple[int, int]], float]] = (),
              name: str = "reservoir") -> CountableModel:
    """Reservoir model; default cost ``-z (1 + 0.1 l)`` inside Z and a flood cost 5 above."""
    inflow = tuple(float(p) for p in inflow)
    if abs(sum(inflow) - 1.0) > 1e-12 or min(inflow) < 0:
        raise ModelError("inflow must be a probability vector")
    if levels < ybar + zbar:
        raise ModelError("levels must be >= ybar + zbar so the forced release is feasible")
    mean_in = sum(d * p for d, p in enumerate(inflow))
    if mean_in >= ybar + zbar:
        raise ModelError("mean inflow must be below the maximal release for recurrence")
    forced = ((ybar, zbar),)
    if cost is None:
        def cost(l, act):
            return 5.0 if l >= levels else -act[1] * (1.0 + 0.1 * l)

    def actions(l):
        if l >= levels:
            return forced
        return tuple((y, z) for y in range(ybar + 1) for z in range(zbar + 1) if y + z <= l)

    def transition(l, ai):
        y, z = actions(l)[ai]
        base = l - y - z
        return Distribution.from_pairs((base + d, p) for d, p in enumerate(inflow))

    def aux_fn(l, ai):
        act = actions(l)[ai]
        return tuple(float(f(l, act)) for f in aux)

    return CountableModel(
        actions=actions, transition=transition,
        cost=lambda l, ai: float(cost(l, actions(l)[ai])),
        interior=tuple(range(levels)), exterior_policies=(lambda l: 0,),
        aux_cost=aux_fn if aux else None, n_aux=len(aux), name=name,
        meta={"family": "reservoir-random-walk", "levels": levels},
    )


# ----------------------------------------------------------------------------
# explicit finite tables


def explicit_table(table: Mapping[int, Sequence[Mapping[str, Any]]], interior: Sequence[int],
                   exterior_policies: Sequence[Mapping[int, int] | int] = (0,),
                   name: str = "table") -> CountableModel:
    """Model from ``{state: [{"label", "cost", "aux", "next": [[j, p], ...]}, ...]}``.

    Exterior policies are either a constant action index or a map from state
    to action index (missing states use index 0).
    """
    rows = {}
    n_aux = None
    for s, acts in table.items():
        if not acts:
            raise ModelError(f"state {s} has no actions")
        parsed = []
        for act in acts:
            d = Distribution.from_pairs((int(j), float(p)) for j, p in act["next"])
            aux = tuple(float(v) for v in act.get("aux", ()))
            if n_aux is None:
                n_aux = len(aux)
            elif len(aux) != n_aux:
                raise ModelError(f"state {s}: aux length {len(aux)} != {n_aux}")
            parsed.append((act.get("label", len(parsed)), float(act["cost"]), aux, d))
        rows[int(s)] = parsed
    for s, acts in rows.items():
        for _, _, _, d in acts:
            for j in d.states:
                if j not in rows:
                    raise ModelError(f"state {s} moves to {j}, which has no table entry")

    def lookup(x):
        try:
            return rows[x]
        except KeyError:
            raise ModelError(f"state {x} not in table") from None

    def make_policy(p):
        if isinstance(p, int):
            return lambda x, p=p: p
        m = {int(k): int(v) for k, v in p.items()}
        return lambda x: m.get(x, 0)

    order = sorted(rows)
    return CountableModel(
        actions=lambda x: tuple(r[0] for r in lookup(x)),
        transition=lambda x, a: lookup(x)[a][3],
        cost=lambda x, a: lookup(x)[a][1],
        interior=tuple(int(z) for z in interior),
        exterior_policies=tuple(make_policy(p) for p in exterior_policies),
        aux_cost=(lambda x, a: lookup(x)[a][2]) if n_aux else None,
        n_aux=n_aux or 0, name=name, states=lambda: iter(order),
        meta={"family": "explicit-table"},
    )


# ----------------------------------------------------------------------------
# random instances


def random_unichain_mdp(rng: np.random.Generator, n_states: int, n_actions: int,
                        n_aux: int = 0, branching: int | None = None) -> FiniteMdp:
    """Random finite MDP that is unichain under every stationary policy.

    Every state-action pair moves to state 0 with probability at least 0.05,
    so state 0 is reachable from everywhere and lies in the only closed class.
    Action counts per state vary between 1 and ``n_actions``.
    """
    kernel, cost, aux = [], [], []
    b = branching or max(1, n_states // 2)
    for s in range(n_states):
        m = int(rng.integers(1, n_actions + 1))
        krow, crow, arow = [], [], []
        for _ in range(m):
            k = int(rng.integers(1, b + 1))
            targets = rng.choice(n_states, size=k, replace=False)
            w = rng.dirichlet(np.ones(k)) * 0.95
            pairs = [(0, 0.05)] + list(zip(targets.tolist(), w.tolist()))
            krow.append(Distribution.from_pairs(pairs))
            crow.append(float(rng.uniform(0.0, 10.0)))
            arow.append(tuple(rng.uniform(0.0, 1.0, size=n_aux).tolist()))
        kernel.append(tuple(krow))
        cost.append(tuple(crow))
        aux.append(tuple(arow))
    return FiniteMdp(tuple(kernel), tuple(cost), tuple(aux))
