"""Average-cost solvers and policy evaluation for finite unichain MDPs."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import (FiniteMdp, StationaryPolicy, hitting_solve, recurrent_classes, solve_linear)
from .errors import (Infeasible, ModelError, MultiChain, NoConvergence, NotAbsorbed,
                     NotRecurrent, NumericalError)

TIE_TOL = 1e-11


@dataclass(frozen=True, eq=False)
class SolveResult:
    gain: float
    bias: np.ndarray
    policy: StationaryPolicy
    iterations: int
    residual: float

    def to_dict(self) -> dict:
        return {"gain": self.gain, "bias": self.bias.tolist(), "policy": list(self.policy),
                "iterations": self.iterations, "residual": self.residual}


def _qvalues(mdp: FiniteMdp, h: np.ndarray) -> np.ndarray:
    return mdp.pair_cost + mdp.pair_matrix @ h


def _segment_min(mdp: FiniteMdp, Q: np.ndarray) -> np.ndarray:
    return np.minimum.reduceat(Q, mdp.offsets[:-1])


def _greedy(mdp: FiniteMdp, Q: np.ndarray, current: StationaryPolicy | None = None) -> StationaryPolicy:
    """Minimising action per state; ties go to ``current`` if given, else the lowest index."""
    off = mdp.offsets
    best = _segment_min(mdp, Q)
    slack = TIE_TOL * np.maximum(1.0, np.abs(best))
    near = Q <= np.repeat(best + slack, np.diff(off))
    if current is not None:
        cur = off[:-1] + np.asarray(current.choice)
        keep = near[cur]
    idx = np.flatnonzero(near)
    first = idx[np.searchsorted(idx, off[:-1])] - off[:-1]
    if current is not None:
        first = np.where(keep, np.asarray(current.choice), first)
    return StationaryPolicy(first.tolist())


def optimality_residual(mdp: FiniteMdp, gain: float, bias: np.ndarray) -> float:
    """``max_s |min_a [c(s,a) + sum_s' P(s'|s,a) h(s')] - (g + h(s))|``."""
    return float(np.max(np.abs(_segment_min(mdp, _qvalues(mdp, bias)) - gain - bias)))


def relative_value_iteration(mdp: FiniteMdp, tol: float = 1e-9, max_iter: int = 100_000,
                             damping: float = 0.5, ref: int = 0) -> SolveResult:
    """Relative value iteration on the aperiodic transform ``damping*P + (1-damping)*I``.

    The transform leaves gains unchanged and scales the bias by ``1/damping``;
    the returned bias is for the original kernel with ``h[ref] = 0``.  Stops
    when the span of ``T h - h`` drops below ``tol``, which bounds the
    optimality residual by ``tol/2``.
    """
    if not 0.0 < damping <= 1.0:
        raise ModelError("damping must lie in (0, 1]")
    P, c, off = mdp.pair_matrix, mdp.pair_cost, mdp.offsets[:-1]
    h = np.zeros(mdp.n_states)
    span = np.inf
    for it in range(1, max_iter + 1):
        Th = np.minimum.reduceat(c + damping * (P @ h), off) + (1.0 - damping) * h
        diff = Th - h
        span = float(diff.max() - diff.min())
        if span < tol:
            break
        h = Th - Th[ref]
    else:
        raise NoConvergence(max_iter, span)
    gain = 0.5 * float(diff.max() + diff.min())
    bias = damping * h
    policy = _greedy(mdp, _qvalues(mdp, bias))
    return SolveResult(gain, bias, policy, it, optimality_residual(mdp, gain, bias))


def evaluate_policy(mdp: FiniteMdp, policy: StationaryPolicy, ref: int = 0) -> tuple[float, np.ndarray]:
    """Gain and bias from the Poisson equation ``g + h = c + P h`` with ``h[ref] = 0``."""
    P = mdp.policy_matrix(policy)
    classes = recurrent_classes(P)
    if len(classes) > 1:
        raise MultiChain(classes)
    n = mdp.n_states
    A = (sp.identity(n, format="csr") - P).tolil()
    A[:, ref] = np.ones((n, 1))
    x = solve_linear(A.tocsr(), mdp.policy_costs(policy), strict=False)
    gain = float(x[ref])
    h = x.copy()
    h[ref] = 0.0
    return gain, h


def policy_iteration(mdp: FiniteMdp, initial: StationaryPolicy | None = None,
                     max_iter: int = 10_000, ref: int = 0) -> SolveResult:
    """Howard policy iteration for unichain MDPs.

    ``iterations`` counts improvement passes, so an optimal ``initial``
    returns after one pass.
    """
    policy = initial if initial is not None else StationaryPolicy([0] * mdp.n_states)
    mdp.check_policy(policy)
    for it in range(1, max_iter + 1):
        gain, h = evaluate_policy(mdp, policy, ref)
        new = _greedy(mdp, _qvalues(mdp, h), current=policy)
        if new == policy:
            return SolveResult(gain, h, policy, it, optimality_residual(mdp, gain, h))
        policy = new
    raise NoConvergence(max_iter, float("nan"))


def evaluate_cycle_ratio(mdp: FiniteMdp, policy: StationaryPolicy, z: int) -> float:
    """Average cost as expected cycle cost over expected cycle length at ``z``."""
    return cycle_statistics(mdp, policy, z)[0]


def cycle_statistics(mdp: FiniteMdp, policy: StationaryPolicy, z: int) -> tuple[float, float, float]:
    """``(ratio, expected cycle cost, expected cycle length)`` for regenerations at ``z``."""
    P = mdp.policy_matrix(policy)
    c = mdp.policy_costs(policy)
    target = np.zeros(mdp.n_states, dtype=bool)
    target[z] = True
    row = P.getrow(z)
    try:
        X = hitting_solve(P, target, np.column_stack([c, np.ones_like(c)]), start=row.indices)
    except NotAbsorbed as exc:
        raise NotRecurrent(f"state {z} is not recurrent under the policy: {exc}") from exc
    cost = c[z] + row.data @ X[row.indices, 0]
    length = 1.0 + row.data @ X[row.indices, 1]
    return float(cost / length), float(cost), float(length)


# ----------------------------------------------------------------------------
# constrained problem over occupation measures


@dataclass(frozen=True, eq=False)
class OccupationSolution:
    occupation: tuple[tuple[float, ...], ...]
    gain: float
    aux_values: tuple[float, ...]
    bounds: tuple[float, ...] = ()

    def randomized_policy(self) -> list[tuple[float, ...]]:
        """Action probabilities per state; uniform-free default of action 0 where unvisited."""
        out = []
        for row in self.occupation:
            total = sum(row)
            if total > 0:
                out.append(tuple(x / total for x in row))
            else:
                out.append(tuple(1.0 if k == 0 else 0.0 for k in range(len(row))))
        return out

    def to_dict(self) -> dict:
        return {"gain": self.gain, "aux_values": list(self.aux_values), "bounds": list(self.bounds),
                "occupation": [list(r) for r in self.occupation],
                "policy": [list(r) for r in self.randomized_policy()]}


def _occupation_constraints(mdp: FiniteMdp):
    n = mdp.n_states
    npairs = len(mdp.pair_cost)
    pair_state = np.repeat(np.arange(n), np.diff(mdp.offsets))
    S = sp.csr_matrix((np.ones(npairs), (pair_state, np.arange(npairs))), shape=(n, npairs))
    balance = S - mdp.pair_matrix.T
    A_eq = sp.vstack([balance, sp.csr_matrix(np.ones((1, npairs)))]).tocsr()
    b_eq = np.zeros(n + 1)
    b_eq[n] = 1.0
    return A_eq, b_eq


def _split(mdp: FiniteMdp, x: np.ndarray):
    off = mdp.offsets
    return tuple(tuple(float(v) for v in x[off[s]:off[s + 1]]) for s in range(mdp.n_states))


def solve_constrained(mdp: FiniteMdp, bounds: Sequence[float]) -> OccupationSolution:
    """Minimise average cost subject to ``average d^k <= bounds[k]``.

    Linear program over stationary state-action frequencies.  Raises
    :class:`Infeasible` with a certificate when no frequency vector satisfies
    the bounds.
    """
    V = np.asarray(bounds, dtype=float)
    K = mdp.n_aux
    if V.shape != (K,):
        raise ModelError(f"{len(V)} bounds given for {K} aux cost layers")
    A_eq, b_eq = _occupation_constraints(mdp)
    D = mdp.pair_aux
    res = linprog(mdp.pair_cost, A_ub=D.T if K else None, b_ub=V if K else None,
                  A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status == 2:
        raise Infeasible(_infeasibility_certificate(mdp, V, A_eq, b_eq))
    if res.status != 0:
        raise NumericalError(f"LP solver failed: {res.message}")
    x = np.clip(res.x, 0.0, None)
    x /= x.sum()
    return OccupationSolution(_split(mdp, x), float(mdp.pair_cost @ x),
                              tuple(float(v) for v in D.T @ x), tuple(V.tolist()))


def _infeasibility_certificate(mdp, V, A_eq, b_eq) -> dict:
    # min t  s.t.  D^T x - t <= V, balance, sum x = 1, x >= 0: optimum t* > 0 certifies
    # that every occupation measure violates some bound by at least t*.
    D = mdp.pair_aux
    K = len(V)
    npairs = D.shape[0]
    c = np.zeros(npairs + 1)
    c[-1] = 1.0
    A_ub = sp.hstack([sp.csr_matrix(D.T), -np.ones((K, 1))]).tocsr()
    A_eq1 = sp.hstack([A_eq, sp.csr_matrix((A_eq.shape[0], 1))]).tocsr()
    res = linprog(c, A_ub=A_ub, b_ub=V, A_eq=A_eq1, b_eq=b_eq,
                  bounds=[(0, None)] * npairs + [(None, None)], method="highs")
    if res.status != 0:
        raise NumericalError(f"certificate LP failed: {res.message}")
    minima = []
    for k in range(K):
        r = linprog(D[:, k], A_eq=A_eq, b_eq=b_eq, bounds=(0, None), method="highs")
        minima.append(float(r.fun))
    return {
        "min_violation": float(res.x[-1]),
        "witness": [list(r) for r in _split(mdp, np.clip(res.x[:-1], 0, None))],
        "multipliers": (-res.ineqlin.marginals).tolist(),
        "min_aux_values": minima,
        "bounds": V.tolist(),
    }
