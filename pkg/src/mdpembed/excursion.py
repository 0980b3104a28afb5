"""Exterior excursion statistics.

An excursion starts when the chain leaves the interior Z from a boundary
state ``z`` under action ``a`` and ends at the first re-entry into Z.  Its
summary records the entrance distribution ``q`` over Z, the expected return
time conditioned on exit (counting the exit step), the expected cost
collected outside Z, and the geometric holding parameter ``lam`` and per-step
cost ``omega_cost`` that reproduce both in the embedded model:

    1 + 1/lam = e_tau_given_exit,     omega_cost / lam = excursion_cost.

Three backends compute summaries: a truncated linear solve
(:func:`analyze_excursion`), closed forms for the skip-free controlled queue
(:func:`skipfree_closed_form`) and Monte Carlo (:func:`monte_carlo_excursion`).
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace
from math import sqrt
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from ._walk import ChainTable, substream, walk
from .core import CountableModel, hitting_solve
from .errors import (ExcursionTooLong, ModelError, NoExit, NotAbsorbed, NumericalError,
                     TruncationDiverged, Unstable)


@dataclass(frozen=True)
class Truncation:
    """Schedule for the truncated exterior solve.

    The exterior is explored breadth-first from the first exterior states;
    the first ``start`` discovered states are kept (default ``|Z| + 32``),
    transitions leaving that set are folded back onto the source state, and
    the set size doubles until successive answers agree to ``tol``
    (relative) or ``max_states`` is exceeded.
    """

    start: int | None = None
    tol: float = 1e-9
    max_states: int = 1 << 16


@dataclass(frozen=True)
class ExcursionSummary:
    boundary_state: int
    interior_action: int
    exterior_policy_id: int
    exit_mass: float
    q: tuple[float, ...]
    e_tau_given_exit: float
    excursion_cost: float
    aux_excursion_costs: tuple[float, ...]
    lam: float
    omega_cost: float
    aux_omega_costs: tuple[float, ...]
    method: str = "solve"
    truncation: int | None = None

    @classmethod
    def calibrated(cls, z, a, ext, exit_mass, q, e_tau, cost, aux=(), method="solve",
                   truncation=None) -> "ExcursionSummary":
        """Fill in ``lam`` and the omega costs from the raw excursion statistics."""
        if not e_tau >= 2.0 - 1e-12:
            raise NumericalError(f"conditional return time {e_tau} < 2")
        e_tau = max(float(e_tau), 2.0)
        lam = 1.0 / (e_tau - 1.0)
        return cls(
            boundary_state=int(z), interior_action=int(a), exterior_policy_id=int(ext),
            exit_mass=float(exit_mass), q=tuple(float(x) for x in q),
            e_tau_given_exit=e_tau, excursion_cost=float(cost),
            aux_excursion_costs=tuple(float(x) for x in aux),
            lam=lam, omega_cost=lam * float(cost),
            aux_omega_costs=tuple(lam * float(x) for x in aux),
            method=method, truncation=truncation,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        d["q"] = list(self.q)
        d["aux_excursion_costs"] = list(self.aux_excursion_costs)
        d["aux_omega_costs"] = list(self.aux_omega_costs)
        return d

    @classmethod
    def from_dict(cls, d) -> "ExcursionSummary":
        d = dict(d)
        d["lam"] = d.pop("lambda")
        for k in ("q", "aux_excursion_costs", "aux_omega_costs"):
            d[k] = tuple(d[k])
        return cls(**d)


def exit_mass(model: CountableModel, z: int, a: int) -> float:
    """Probability of leaving Z in one step from ``z`` under action ``a``."""
    return float(sum(p for _, p in model.exit_states(z, a)))


# --------------------------------------------------------------------------
# truncated solve


@dataclass
class _ExteriorStats:
    """Per-entry-state excursion statistics from one truncated solve."""

    time: dict[int, float]
    cost: dict[int, float]
    aux: dict[int, np.ndarray]
    q: dict[int, np.ndarray]
    n_states: int
    exact: bool


class _Exterior:
    """Breadth-first exploration of the exterior under one exterior policy."""

    def __init__(self, model: CountableModel, ext: int):
        self.model = model
        self.ext = ext
        self.order: list[int] = []
        self.index: dict[int, int] = {}
        self.rows: list[list[tuple[int, float]]] = []
        self.costs: list[float] = []
        self.auxs: list[tuple[float, ...]] = []

    def add(self, x):
        if x not in self.index:
            self.index[x] = len(self.order)
            self.order.append(x)

    def expand_to(self, m):
        model = self.model
        while len(self.rows) < min(m, len(self.order)):
            x = self.order[len(self.rows)]
            a = model.exterior_action(self.ext, x)
            d = model.transition(x, a)
            row = list(d.items())
            for y, _ in row:
                if not model.in_interior(y):
                    self.add(y)
            self.rows.append(row)
            self.costs.append(float(model.cost(x, a)))
            self.auxs.append(model.aux(x, a))

    def solve(self, entries, m) -> _ExteriorStats:
        model = self.model
        self.expand_to(m)
        exact = len(self.rows) == len(self.order)
        m = len(self.rows)
        nz, K = len(model.interior), model.n_aux
        rows, cols, vals = [], [], []
        R = np.zeros((m, nz))
        for i, row in enumerate(self.rows):
            for y, p in row:
                j = model.interior_index.get(y)
                if j is not None:
                    R[i, j] += p
                    continue
                k = self.index[y]
                rows.append(i)
                cols.append(k if k < m else i)
                vals.append(p)
        # one extra absorbing node stands for Z
        absorb = R.sum(axis=1)
        P = sp.csr_matrix(
            (np.concatenate([vals, absorb, [1.0]]),
             (np.concatenate([rows, np.arange(m), [m]]).astype(np.int64),
              np.concatenate([cols, np.full(m, m), [m]]).astype(np.int64))),
            shape=(m + 1, m + 1),
        )
        rhs = np.zeros((m + 1, 2 + K + nz))
        rhs[:m, 0] = 1.0
        rhs[:m, 1] = self.costs
        if K:
            rhs[:m, 2:2 + K] = np.array(self.auxs)
        rhs[:m, 2 + K:] = R
        target = np.zeros(m + 1, dtype=bool)
        target[m] = True
        start = [self.index[x] for x in entries]
        X = hitting_solve(P, target, rhs, start=start)
        out = _ExteriorStats({}, {}, {}, {}, m, exact)
        for x in entries:
            r = X[self.index[x]]
            out.time[x] = float(r[0])
            out.cost[x] = float(r[1])
            out.aux[x] = r[2:2 + K].copy()
            out.q[x] = r[2 + K:].copy()
        return out


def _close(a, b, tol):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return bool(np.all(np.abs(a - b) <= tol * np.maximum(1.0, np.abs(b))))


def exterior_statistics(model: CountableModel, ext: int, entries: Sequence[int],
                        trunc: Truncation = Truncation()) -> _ExteriorStats:
    """Hitting time, cost, aux costs and entrance law from each exterior state in ``entries``."""
    entries = sorted(set(int(x) for x in entries))
    if any(model.in_interior(x) for x in entries):
        raise ModelError("entry states must lie outside Z")
    explorer = _Exterior(model, ext)
    for x in entries:
        explorer.add(x)
    m = trunc.start if trunc.start is not None else len(model.interior) + 32
    m = max(m, len(entries))
    prev = None
    while True:
        try:
            cur = explorer.solve(entries, m)
        except NotAbsorbed:
            # a state whose moves all leave the truncated set looks absorbing;
            # only an untruncated exterior certifies non-return
            if len(explorer.rows) == len(explorer.order) or 2 * m > trunc.max_states:
                raise
            prev, m = None, 2 * m
            continue
        except NumericalError as exc:
            raise TruncationDiverged(f"exterior solve broke down at {m} states: {exc}") from exc
        if cur.exact:
            return cur
        if prev is not None and all(
            _close(cur.time[x], prev.time[x], trunc.tol)
            and _close(cur.cost[x], prev.cost[x], trunc.tol)
            and _close(cur.aux[x], prev.aux[x], trunc.tol)
            and _close(cur.q[x], prev.q[x], trunc.tol)
            for x in entries
        ):
            return cur
        prev = cur
        m *= 2
        if m > trunc.max_states:
            raise TruncationDiverged(
                f"excursion statistics still moving at {cur.n_states} exterior states "
                f"(expected return time from {entries[0]} ~ {cur.time[entries[0]]:.6g})"
            )


def _mix(model, z, a, ext, stats, method="solve"):
    exits = model.exit_states(z, a)
    mass = sum(p for _, p in exits)
    w = {x: p / mass for x, p in exits}
    q = sum(w[x] * stats.q[x] for x in w)
    q = q / q.sum()
    e_tau = 1.0 + sum(w[x] * stats.time[x] for x in w)
    cost = sum(w[x] * stats.cost[x] for x in w)
    aux = sum((w[x] * stats.aux[x] for x in w), np.zeros(model.n_aux))
    return ExcursionSummary.calibrated(z, a, ext, mass, q, e_tau, cost, aux, method=method,
                                       truncation=None if stats.exact else stats.n_states)


def analyze_excursion(model: CountableModel, z: int, a: int, ext: int = 0,
                      trunc: Truncation = Truncation()) -> ExcursionSummary:
    """Excursion summary for the exit channel ``(z, a)`` under exterior policy ``ext``.

    Statistics are solved per first exterior state on a truncated exterior and
    mixed by the exit kernel.  Raises :class:`NoExit` if ``(z, a)`` cannot
    leave Z, :class:`NotAbsorbed` if return to Z is not certain, and
    :class:`TruncationDiverged` if the answers do not settle.
    """
    if not model.in_interior(z):
        raise ModelError(f"{z} is not an interior state")
    exits = model.exit_states(z, a)
    if not exits:
        raise NoExit(f"no exit from state {z} under action {a}")
    stats = exterior_statistics(model, ext, [x for x, _ in exits], trunc)
    return _mix(model, z, a, ext, stats)


def exit_channels(model: CountableModel) -> list[tuple[int, int]]:
    """All interior (state, action) pairs with positive exit mass."""
    return [(z, a) for z in model.interior for a in range(model.n_actions(z))
            if model.exit_states(z, a)]


def _exit_law(model, z, a):
    exits = model.exit_states(z, a)
    mass = sum(p for _, p in exits)
    return tuple(sorted((x, round(p / mass, 12)) for x, p in exits))


def summarize_exits(model: CountableModel, backend: str = "solve",
                    trunc: Truncation = Truncation(), n_excursions: int = 100_000,
                    seed: int = 0) -> list[ExcursionSummary]:
    """Summaries for every positive-exit channel and every exterior policy.

    ``backend`` is ``"solve"`` or ``"mc"``; the closed-form backend is
    model-specific and lives in :func:`skipfree_closed_form`.  With ``"mc"``,
    channels whose exits have the same conditional law reuse one simulation.
    """
    model.validate()
    channels = exit_channels(model)
    out = []
    for ext in range(len(model.exterior_policies)):
        if backend == "solve":
            entries = {x for z, a in channels for x, _ in model.exit_states(z, a)}
            stats = exterior_statistics(model, ext, sorted(entries), trunc) if entries else None
            out.extend(_mix(model, z, a, ext, stats) for z, a in channels)
        elif backend == "mc":
            # channels with the same conditional exit law share one sample, so
            # their summaries differ only in exit mass and not by noise
            shared = {}
            for z, a in channels:
                law = _exit_law(model, z, a)
                if law not in shared:
                    shared[law] = monte_carlo_excursion(model, z, a, ext, n_excursions, seed,
                                                        key=(len(shared), ext)).summary
                out.append(replace(shared[law], boundary_state=z, interior_action=a,
                                   exit_mass=exit_mass(model, z, a)))
        else:
            raise ModelError(f"unknown excursion backend {backend!r}")
    return out


# --------------------------------------------------------------------------
# closed forms for the skip-free controlled queue


def queue_rates(arrival: float, service: float) -> tuple[float, float]:
    """Per-slot up and down probabilities of the discrete-time queue above 0."""
    return arrival * (1.0 - service), service * (1.0 - arrival)


def queue_rho(arrival: float, service: float) -> float:
    p, q = queue_rates(arrival, service)
    return p / q


def queue_kac_return_time(arrival: float, service: float) -> float:
    """Mean return time to 0 of the uncontrolled queue, ``1 / pi_0 = 1 / (1 - rho)``."""
    if arrival >= service:
        raise Unstable(f"arrival {arrival} >= service {service}")
    return 1.0 / (1.0 - queue_rho(arrival, service))


def _linear_excursion_cost(c0, c1, p, q, levels):
    # Walk y = x - (levels - 1) from 1 down to 0.  Hitting time 1/d and
    # E sum_{k<tau} y_k = 1/(2d) + (p+q)/(2d^2) with d = q - p.
    d = q - p
    time = 1.0 / d
    height = 1.0 / (2 * d) + (p + q) / (2 * d * d)
    return c0 * time + c1 * (height + (levels - 1) * time)


def skipfree_closed_form(arrival: float, service: float, cost=(0.0, 1.0), levels: int = 4,
                         aux_costs: Sequence[tuple[float, float]] = (),
                         boundary_rate: float | None = None, interior_action: int = 0,
                         exterior_policy_id: int = 0) -> ExcursionSummary:
    """Excursion summary of the controlled queue with Z = {0..levels-1}.

    Above Z the maximal service rate ``service`` is forced; ``cost`` and each
    entry of ``aux_costs`` are ``(c0, c1)`` meaning ``c(x) = c0 + c1 * x`` on
    the exterior.  ``boundary_rate`` is the service rate used at the top
    interior state (default ``service``) and only affects ``exit_mass``.
    """
    if not 0 < arrival < 1 or not 0 < service <= 1:
        raise ModelError("arrival and service must be probabilities")
    if arrival >= service:
        raise Unstable(f"arrival {arrival} >= service {service}")
    if levels < 1:
        raise ModelError("levels must be >= 1")
    p, q = queue_rates(arrival, service)
    rate = service if boundary_rate is None else boundary_rate
    mass = arrival * (1.0 - rate)
    entrance = np.zeros(levels)
    entrance[levels - 1] = 1.0
    return ExcursionSummary.calibrated(
        levels - 1, interior_action, exterior_policy_id, mass, entrance,
        1.0 + 1.0 / (q - p),
        _linear_excursion_cost(*cost, p, q, levels),
        [_linear_excursion_cost(*c, p, q, levels) for c in aux_costs],
        method="closed-form",
    )


# --------------------------------------------------------------------------
# Monte Carlo


@dataclass(frozen=True)
class ExcursionEstimate:
    """Monte Carlo excursion summary with per-field standard errors."""

    summary: ExcursionSummary
    stderr: dict = field(default_factory=dict)
    n_excursions: int = 0
    entries: tuple[int, ...] = ()

    def half_width(self, name, level_z=1.96):
        return np.asarray(self.stderr[name]) * level_z


def monte_carlo_excursion(model: CountableModel, z: int, a: int, ext: int = 0,
                          n_excursions: int = 100_000, seed: int = 0, max_steps: int = 10**7,
                          key: tuple[int, ...] = ()) -> ExcursionEstimate:
    """Simulate ``n_excursions`` exits from ``(z, a)`` and summarise them.

    Deterministic given ``seed`` (and the optional substream ``key``).  Raises
    :class:`ExcursionTooLong` when an excursion exceeds ``max_steps``.
    """
    exits = model.exit_states(z, a)
    if not exits:
        raise NoExit(f"no exit from state {z} under action {a}")
    model.validate()
    n = int(n_excursions)
    if n < 2:
        raise ModelError("need at least 2 excursions")
    rng = substream(seed, *key)
    mass = sum(p for _, p in exits)
    cum = np.cumsum([p / mass for _, p in exits])
    cum[-1] = 1.0
    first = np.searchsorted(cum, rng.random(n), side="right")
    table = ChainTable(model, lambda x: model.exterior_action(ext, x), model.in_interior)
    locs = np.array([table.local(x) for x, _ in exits], dtype=np.int64)[first]
    steps, cost, aux, final = walk(table, locs, rng, max_steps, ExcursionTooLong)

    nz, K = len(model.interior), model.n_aux
    to_z = np.array([model.interior_index.get(x, -1) for x in table.states])
    counts = np.bincount(to_z[final], minlength=nz).astype(float)
    q = counts / n
    t = steps.astype(float)
    t_mean = t.mean()
    c_mean = cost.mean()
    aux_mean = aux.mean(axis=0) if K else np.zeros(0)
    summary = ExcursionSummary.calibrated(z, a, ext, mass, q, 1.0 + t_mean, c_mean, aux_mean,
                                          method="mc")
    rn = sqrt(n)
    lam = summary.lam
    stderr = {
        "q": np.sqrt(q * (1 - q) / n),
        "e_tau_given_exit": t.std(ddof=1) / rn,
        "excursion_cost": cost.std(ddof=1) / rn,
        "aux_excursion_costs": aux.std(axis=0, ddof=1) / rn if K else np.zeros(0),
        "lambda": t.std(ddof=1) / rn * lam * lam,
        "omega_cost": (cost - summary.omega_cost * t).std(ddof=1) / (rn * t_mean),
        "aux_omega_costs": np.array([(aux[:, k] - summary.aux_omega_costs[k] * t).std(ddof=1)
                                     / (rn * t_mean) for k in range(K)]),
    }
    return ExcursionEstimate(summary, stderr, n, tuple(x for x, _ in exits))
