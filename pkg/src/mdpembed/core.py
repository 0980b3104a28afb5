"""Finite and countable MDP representations and exact finite-chain analysis.

States are non-negative integers (``StateId``); actions are indices into the
finite action list of a state (``ActionId``).  Compact action sets are
represented by finite grids of labels chosen by the model author.
"""

from __future__ import annotations

import warnings
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from itertools import count
from typing import Any, Callable, Iterable, Iterator, Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse.csgraph import connected_components

from .errors import ModelError, MultiChain, NotAbsorbed, NumericalError

StateId = int
ActionId = int

PROB_TOL = 1e-12
DENSE_LIMIT = 2000


@dataclass(frozen=True)
class Distribution:
    """Finitely supported probability distribution over states."""

    states: tuple[int, ...]
    probs: tuple[float, ...]

    def __post_init__(self):
        if len(self.states) != len(self.probs):
            raise ModelError("states and probs differ in length")
        if len(set(self.states)) != len(self.states):
            raise ModelError(f"duplicate support states {self.states}")
        if any(not p > 0.0 for p in self.probs):
            raise ModelError(f"non-positive probability in {self.probs}")
        if any(s < 0 for s in self.states):
            raise ModelError(f"negative state id in {self.states}")
        total = float(np.sum(self.probs))
        if abs(total - 1.0) > PROB_TOL:
            raise ModelError(f"probabilities sum to {total!r}, not 1")

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, float]]) -> "Distribution":
        """Merge repeated states and drop zero entries."""
        merged: dict[int, float] = {}
        for s, p in pairs:
            if p < 0:
                raise ModelError(f"negative probability {p} for state {s}")
            if p > 0:
                merged[int(s)] = merged.get(int(s), 0.0) + float(p)
        return cls(tuple(merged), tuple(merged.values()))

    @classmethod
    def point(cls, state: int) -> "Distribution":
        return cls((int(state),), (1.0,))

    def items(self) -> Iterator[tuple[int, float]]:
        return zip(self.states, self.probs)

    def prob(self, state: int) -> float:
        for s, p in self.items():
            if s == state:
                return p
        return 0.0

    def __len__(self):
        return len(self.states)


@dataclass(frozen=True)
class StationaryPolicy:
    """Deterministic stationary policy: ``choice[s]`` is the action index at ``s``."""

    choice: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "choice", tuple(int(a) for a in self.choice))

    def __getitem__(self, s):
        return self.choice[s]

    def __len__(self):
        return len(self.choice)

    def __iter__(self):
        return iter(self.choice)


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """Finite MDP with an explicit kernel and cost tables.

    ``kernel[s][a]`` is a :class:`Distribution`, ``cost[s][a]`` a float and
    ``aux_costs[s][a]`` a tuple of K floats (K identical for all pairs).
    ``state_labels``/``action_labels`` are optional, for reporting only.
    """

    kernel: tuple[tuple[Distribution, ...], ...]
    cost: tuple[tuple[float, ...], ...]
    aux_costs: tuple[tuple[tuple[float, ...], ...], ...] | None = None
    state_labels: tuple[Any, ...] | None = None
    action_labels: tuple[tuple[Any, ...], ...] | None = None

    def __post_init__(self):
        n = len(self.kernel)
        if n == 0:
            raise ModelError("empty MDP")
        if len(self.cost) != n:
            raise ModelError("cost table does not match the number of states")
        for s in range(n):
            if len(self.kernel[s]) == 0:
                raise ModelError(f"state {s} has no actions")
            if len(self.cost[s]) != len(self.kernel[s]):
                raise ModelError(f"state {s}: cost/kernel action counts differ")
            for a, d in enumerate(self.kernel[s]):
                if max(d.states) >= n:
                    raise ModelError(f"kernel({s},{a}) leaves the state space")
        if self.aux_costs is None:
            object.__setattr__(self, "aux_costs", tuple(tuple(() for _ in row) for row in self.cost))
        ks = {len(v) for row in self.aux_costs for v in row}
        if len(ks) > 1:
            raise ModelError(f"aux cost vectors have differing lengths {sorted(ks)}")
        for s in range(n):
            if len(self.aux_costs[s]) != len(self.kernel[s]):
                raise ModelError(f"state {s}: aux/kernel action counts differ")

    @classmethod
    def from_arrays(cls, P, c, d=None) -> "FiniteMdp":
        """Build from a dense ``P[s, a, s']`` and ``c[s, a]`` (every state has all actions)."""
        P = np.asarray(P, dtype=float)
        c = np.asarray(c, dtype=float)
        n, m, _ = P.shape
        kernel = tuple(
            tuple(Distribution.from_pairs((j, P[s, a, j]) for j in range(n)) for a in range(m))
            for s in range(n)
        )
        cost = tuple(tuple(float(x) for x in c[s]) for s in range(n))
        aux = None
        if d is not None:
            d = np.asarray(d, dtype=float)
            aux = tuple(tuple(tuple(float(x) for x in d[s, a]) for a in range(m)) for s in range(n))
        return cls(kernel, cost, aux)

    @property
    def n_states(self) -> int:
        return len(self.kernel)

    @property
    def n_aux(self) -> int:
        for row in self.aux_costs:
            for v in row:
                return len(v)
        return 0

    def n_actions(self, s: int) -> int:
        return len(self.kernel[s])

    @cached_property
    def offsets(self) -> np.ndarray:
        """``offsets[s]:offsets[s+1]`` is the range of pair indices of state ``s``."""
        return np.concatenate([[0], np.cumsum([len(r) for r in self.kernel])]).astype(np.int64)

    @cached_property
    def pair_matrix(self) -> sp.csr_matrix:
        """Sparse (state-action pair) x state transition matrix."""
        rows, cols, vals = [], [], []
        k = 0
        for row in self.kernel:
            for d in row:
                rows.extend([k] * len(d))
                cols.extend(d.states)
                vals.extend(d.probs)
                k += 1
        return sp.csr_matrix((vals, (rows, cols)), shape=(k, self.n_states))

    @cached_property
    def pair_cost(self) -> np.ndarray:
        return np.array([c for row in self.cost for c in row], dtype=float)

    @cached_property
    def pair_aux(self) -> np.ndarray:
        return np.array([v for row in self.aux_costs for v in row], dtype=float).reshape(
            -1, self.n_aux
        )

    def check_policy(self, policy: StationaryPolicy):
        if len(policy) != self.n_states:
            raise ModelError(f"policy covers {len(policy)} states, MDP has {self.n_states}")
        for s, a in enumerate(policy):
            if not 0 <= a < self.n_actions(s):
                raise ModelError(f"invalid action {a} at state {s}")

    def policy_rows(self, policy: StationaryPolicy) -> np.ndarray:
        self.check_policy(policy)
        return self.offsets[:-1] + np.asarray(policy.choice, dtype=np.int64)

    def policy_matrix(self, policy: StationaryPolicy) -> sp.csr_matrix:
        return self.pair_matrix[self.policy_rows(policy)]

    def policy_costs(self, policy: StationaryPolicy) -> np.ndarray:
        return self.pair_cost[self.policy_rows(policy)]

    def policy_aux(self, policy: StationaryPolicy) -> np.ndarray:
        return self.pair_aux[self.policy_rows(policy)]

    def policies(self) -> Iterator[StationaryPolicy]:
        """Enumerate every deterministic stationary policy (small instances only)."""
        import itertools

        for choice in itertools.product(*(range(self.n_actions(s)) for s in range(self.n_states))):
            yield StationaryPolicy(choice)


def _const_policy(action: int) -> Callable[[int], int]:
    return lambda x: action


@dataclass(frozen=True, eq=False)
class CountableModel:
    """Countable-state MDP given through pure functions of (state, action).

    ``interior`` is the finite set Z kept explicitly.  ``exterior_policies`` is
    the finite family of stationary behaviours allowed outside Z; each maps an
    exterior state to an action index there.
    """

    actions: Callable[[int], Sequence[Any]]
    transition: Callable[[int, int], Distribution]
    cost: Callable[[int, int], float]
    interior: tuple[int, ...]
    exterior_policies: tuple[Callable[[int], int], ...] = (_const_policy(0),)
    aux_cost: Callable[[int, int], Sequence[float]] | None = None
    n_aux: int = 0
    name: str = ""
    states: Callable[[], Iterable[int]] | None = None
    meta: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        z = tuple(int(x) for x in self.interior)
        if len(set(z)) != len(z):
            raise ModelError(f"interior has duplicates: {z}")
        object.__setattr__(self, "interior", z)
        object.__setattr__(self, "exterior_policies", tuple(self.exterior_policies))

    @cached_property
    def interior_index(self) -> dict[int, int]:
        return {x: i for i, x in enumerate(self.interior)}

    def in_interior(self, x: int) -> bool:
        return x in self.interior_index

    def n_actions(self, x: int) -> int:
        return len(self.actions(x))

    def aux(self, x: int, a: int) -> tuple[float, ...]:
        if self.n_aux == 0:
            return ()
        v = tuple(float(t) for t in self.aux_cost(x, a))
        if len(v) != self.n_aux:
            raise ModelError(f"aux_cost({x},{a}) has length {len(v)}, expected {self.n_aux}")
        return v

    def exterior_action(self, ext: int, x: int) -> int:
        a = int(self.exterior_policies[ext](x))
        if not 0 <= a < self.n_actions(x):
            raise ModelError(f"exterior policy {ext} picks invalid action {a} at state {x}")
        return a

    def enumerate_states(self) -> Iterable[int]:
        return self.states() if self.states is not None else count()

    def exit_states(self, z: int, a: int) -> list[tuple[int, float]]:
        return [(x, p) for x, p in self.transition(z, a).items() if not self.in_interior(x)]

    def validate(self):
        """Check the one-step-exterior invariant for every exterior policy."""
        if not self.interior:
            raise ModelError("interior set is empty")
        if not self.exterior_policies:
            raise ModelError("no exterior policies")
        for z in self.interior:
            if self.n_actions(z) == 0:
                raise ModelError(f"interior state {z} has no actions")
            for a in range(self.n_actions(z)):
                for x, _ in self.exit_states(z, a):
                    for ext in range(len(self.exterior_policies)):
                        self.exterior_action(ext, x)

    def to_finite_mdp(self, max_states: int = 100_000) -> tuple[FiniteMdp, list[int]]:
        """Enumerate the states reachable from Z under any action.

        Only possible when that set is finite; returns the MDP and the list of
        source states in MDP index order (interior first, in Z order).
        """
        order = list(self.interior)
        index = {x: i for i, x in enumerate(order)}
        queue = deque(order)
        rows = {}
        while queue:
            x = queue.popleft()
            acts = []
            for a in range(self.n_actions(x)):
                d = self.transition(x, a)
                for y in d.states:
                    if y not in index:
                        if len(order) >= max_states:
                            raise ModelError(f"more than {max_states} reachable states")
                        index[y] = len(order)
                        order.append(y)
                        queue.append(y)
                acts.append((d, self.cost(x, a), self.aux(x, a)))
            rows[x] = acts
        kernel, cost, aux = [], [], []
        for x in order:
            kernel.append(tuple(
                Distribution(tuple(index[y] for y in d.states), d.probs) for d, _, _ in rows[x]
            ))
            cost.append(tuple(float(c) for _, c, _ in rows[x]))
            aux.append(tuple(v for _, _, v in rows[x]))
        mdp = FiniteMdp(
            tuple(kernel), tuple(cost), tuple(aux),
            state_labels=tuple(order),
            action_labels=tuple(tuple(self.actions(x)) for x in order),
        )
        return mdp, order

    @classmethod
    def from_finite(cls, mdp: FiniteMdp, interior: Sequence[int] | None = None,
                    exterior_policies: Sequence[Callable[[int], int]] | None = None,
                    name: str = "") -> "CountableModel":
        def actions(x):
            if mdp.action_labels is not None:
                return mdp.action_labels[x]
            return tuple(range(mdp.n_actions(x)))

        return cls(
            actions=actions,
            transition=lambda x, a: mdp.kernel[x][a],
            cost=lambda x, a: mdp.cost[x][a],
            interior=tuple(range(mdp.n_states)) if interior is None else tuple(interior),
            exterior_policies=tuple(exterior_policies or (_const_policy(0),)),
            aux_cost=(lambda x, a: mdp.aux_costs[x][a]) if mdp.n_aux else None,
            n_aux=mdp.n_aux,
            name=name,
            states=lambda: range(mdp.n_states),
        )


# --------------------------------------------------------------------------
# linear algebra and graph helpers


def solve_linear(A, B, strict: bool = True) -> np.ndarray:
    """Solve ``A X = B``: dense LU up to ``DENSE_LIMIT`` unknowns, sparse LU above.

    With ``strict`` an ill-conditioning warning from the dense solver is raised
    as :class:`NumericalError`.
    """
    n = A.shape[0]
    B = np.asarray(B, dtype=float)
    if n == 0:
        return np.zeros_like(B)
    if n <= DENSE_LIMIT:
        A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
        with warnings.catch_warnings():
            if strict:
                warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            else:
                warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
            try:
                X = scipy.linalg.solve(A, B)
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning) as exc:
                raise NumericalError(f"linear solve failed: {exc}") from exc
    else:
        try:
            lu = spla.splu(sp.csc_matrix(A))
        except RuntimeError as exc:
            raise NumericalError(f"sparse LU failed: {exc}") from exc
        X = lu.solve(B)
    if not np.all(np.isfinite(X)):
        raise NumericalError("linear solve produced non-finite values")
    return X


def _as_csr(P) -> sp.csr_matrix:
    return P if sp.isspmatrix_csr(P) else sp.csr_matrix(P)


def recurrent_classes(P) -> list[list[int]]:
    """Closed strongly connected components of the positive-probability graph."""
    P = _as_csr(P)
    if np.any(P.data == 0):
        P = P.copy()
        P.eliminate_zeros()
    n = P.shape[0]
    ncomp, labels = connected_components(P, directed=True, connection="strong")
    coo = P.tocoo()
    open_comp = np.zeros(ncomp, dtype=bool)
    leaving = labels[coo.row] != labels[coo.col]
    open_comp[labels[coo.row[leaving]]] = True
    classes = []
    for c in range(ncomp):
        if not open_comp[c]:
            classes.append([int(s) for s in np.flatnonzero(labels == c)])
    classes.sort(key=lambda m: m[0])
    assert sum(len(c) for c in classes) <= n
    return classes


def stationary_vector(P) -> np.ndarray:
    """Stationary distribution of a unichain transition matrix (zeros on transient states)."""
    P = _as_csr(P)
    classes = recurrent_classes(P)
    if len(classes) > 1:
        raise MultiChain(classes)
    rec = np.array(classes[0])
    Q = P[rec][:, rec]
    m = len(rec)
    A = (sp.identity(m, format="csr") - Q).T.tolil()
    A[m - 1, :] = np.ones(m)
    b = np.zeros(m)
    b[m - 1] = 1.0
    pi_rec = solve_linear(A.tocsr(), b, strict=False)
    pi_rec = np.clip(pi_rec, 0.0, None)
    pi_rec /= pi_rec.sum()
    pi = np.zeros(P.shape[0])
    pi[rec] = pi_rec
    return pi


def _reach(indptr, indices, sources, allowed) -> np.ndarray:
    """Boolean mask of nodes reachable from ``sources`` moving only through ``allowed``."""
    seen = np.zeros(len(indptr) - 1, dtype=bool)
    queue = deque()
    for s in sources:
        if not seen[s]:
            seen[s] = True
            queue.append(s)
    while queue:
        u = queue.popleft()
        if not allowed[u]:
            continue
        for v in indices[indptr[u]:indptr[u + 1]]:
            if not seen[v]:
                seen[v] = True
                queue.append(v)
    return seen


def hitting_solve(P, target, rhs, start=None) -> np.ndarray:
    """Expected accumulated per-step rewards until the chain hits ``target``.

    ``rhs`` has shape (n,) or (n, m): the reward collected at each state before
    moving.  Solves ``X = rhs + P X`` on the non-target states reachable from
    ``start`` (default: all non-target states) with ``X = 0`` on the target;
    other entries are NaN.  Raises :class:`NotAbsorbed` unless every state in
    that closure can reach the target, which for a finite chain is equivalent
    to absorption with probability one from every queried state.
    """
    P = _as_csr(P)
    if np.any(P.data == 0):
        # explicit zeros would count as edges in the reachability checks
        P = P.copy()
        P.eliminate_zeros()
    n = P.shape[0]
    target = np.asarray(target, dtype=bool)
    rhs = np.asarray(rhs, dtype=float)
    squeeze = rhs.ndim == 1
    if squeeze:
        rhs = rhs[:, None]
    free = ~target
    if start is None:
        closure = free.copy()
    else:
        closure = _reach(P.indptr, P.indices, list(start), free) & free
    PT = P.T.tocsr()
    can_hit = _reach(PT.indptr, PT.indices, np.flatnonzero(target), np.ones(n, dtype=bool))
    bad = closure & ~can_hit
    if bad.any():
        raise NotAbsorbed(f"target unreachable from states {np.flatnonzero(bad)[:10].tolist()}")
    X = np.full(rhs.shape, np.nan)
    X[target] = 0.0
    idx = np.flatnonzero(closure)
    if len(idx):
        Q = P[idx][:, idx]
        A = sp.identity(len(idx), format="csr") - Q
        X[idx] = solve_linear(A, rhs[idx]).reshape(len(idx), -1)
    return X[:, 0] if squeeze else X


# --------------------------------------------------------------------------
# public finite-chain operations


def stationary_distribution(mdp: FiniteMdp, policy: StationaryPolicy) -> np.ndarray:
    """Stationary distribution of the chain induced by ``policy``.

    Raises :class:`MultiChain` when the chain has two or more closed classes.
    """
    return stationary_vector(mdp.policy_matrix(policy))


def average_cost_of_policy(mdp: FiniteMdp, policy: StationaryPolicy) -> float:
    """Long-run average cost ``sum_s pi(s) c(s, policy(s))`` of a unichain policy."""
    pi = stationary_distribution(mdp, policy)
    return float(pi @ mdp.policy_costs(policy))


def expected_hitting(mdp: FiniteMdp, policy: StationaryPolicy, target: Iterable[int],
                     cost=None, states: Iterable[int] | None = None) -> np.ndarray:
    """Expected cost accumulated before hitting ``target`` under ``policy``.

    ``cost`` is a per-state vector (default all ones, giving hitting times).
    Only states reachable from ``states`` (default all) are solved; the rest
    are NaN.
    """
    n = mdp.n_states
    mask = np.zeros(n, dtype=bool)
    mask[list(target)] = True
    c = np.ones(n) if cost is None else np.asarray(cost, dtype=float)
    if c.shape != (n,):
        raise ModelError(f"cost vector has shape {c.shape}, expected ({n},)")
    return hitting_solve(mdp.policy_matrix(policy), mask, c, start=states)
