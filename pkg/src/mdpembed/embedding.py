"""Finite embedded MDP M0 built around an interior set Z.

M0 has states ``s_0..s_{n-1}`` (indices ``0..n-1``, one per element of Z in Z
order) and ``omega_0..omega_{n-1}`` (indices ``n..2n-1``).  Interior rows copy
the source kernel restricted to Z and send the exit mass of ``z_i`` to
``omega_i``.  An action at ``omega_i`` is a vector ``(lam*q_1..lam*q_n, c, d^1..d^K)``
derived from an excursion summary: the chain stays at ``omega_i`` w.p.
``1 - lam`` and otherwise re-enters at ``s_j`` w.p. ``q_j``, paying ``c`` per step.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from .core import CountableModel, Distribution, FiniteMdp, StationaryPolicy
from .errors import MissingSummary, ModelError, ProvenanceMismatch
from .excursion import ExcursionSummary, exit_channels

DEDUP_TOL = 1e-12


@dataclass(frozen=True)
class OmegaAction:
    lam: float
    q: tuple[float, ...]
    cost: float
    aux: tuple[float, ...] = ()
    provenance: tuple[tuple[int, int, int], ...] = ()
    e_tau_given_exit: float | None = None
    excursion_cost: float | None = None
    inert: bool = False

    @property
    def transition_vector(self) -> np.ndarray:
        return self.lam * np.asarray(self.q)

    @classmethod
    def from_summary(cls, s: ExcursionSummary) -> "OmegaAction":
        return cls(s.lam, tuple(s.q), s.omega_cost, tuple(s.aux_omega_costs),
                   ((s.boundary_state, s.interior_action, s.exterior_policy_id),),
                   s.e_tau_given_exit, s.excursion_cost)

    def same_dynamics(self, other: "OmegaAction", tol: float = DEDUP_TOL) -> bool:
        """Equal re-entry vectors and aux costs (the grouping used by action elimination)."""
        return (np.max(np.abs(self.transition_vector - other.transition_vector), initial=0.0) <= tol
                and np.max(np.abs(np.subtract(self.aux, other.aux)), initial=0.0) <= tol)

    def same_as(self, other: "OmegaAction", tol: float = DEDUP_TOL) -> bool:
        return self.same_dynamics(other, tol) and abs(self.cost - other.cost) <= tol

    def row(self, i: int, n: int) -> Distribution:
        pairs = [(j, self.lam * qj) for j, qj in enumerate(self.q)]
        pairs.append((n + i, 1.0 - self.lam))
        return Distribution.from_pairs(pairs)


def _inert(i: int, n: int, n_aux: int) -> OmegaAction:
    q = tuple(1.0 if j == i else 0.0 for j in range(n))
    return OmegaAction(1.0, q, 0.0, (0.0,) * n_aux, inert=True)


@dataclass(frozen=True, eq=False)
class EmbeddedMdp:
    """M0 together with the embedding map and per-omega action provenance."""

    base: FiniteMdp
    embedding_map: tuple[int, ...]
    omega_actions: tuple[tuple[OmegaAction, ...], ...]

    @property
    def n(self) -> int:
        return len(self.embedding_map)

    @property
    def omega_unreachable(self) -> bool:
        """True when no interior action can leave Z (every omega action is inert)."""
        return all(a.inert for acts in self.omega_actions for a in acts)

    def interior_exits(self, i: int, a: int) -> float:
        return self.base.kernel[i][a].prob(self.n + i)


def _dedupe(actions: Iterable[OmegaAction]) -> list[OmegaAction]:
    out: list[OmegaAction] = []
    for act in actions:
        for k, kept in enumerate(out):
            if kept.same_as(act):
                out[k] = replace(kept, provenance=kept.provenance + act.provenance)
                break
        else:
            out.append(act)
    return out


def _assemble(interior_kernel, interior_cost, interior_aux, interior_labels, zmap,
              omega_actions) -> EmbeddedMdp:
    n = len(zmap)
    kernel = list(interior_kernel)
    cost = list(interior_cost)
    aux = list(interior_aux)
    labels = list(interior_labels)
    for i, acts in enumerate(omega_actions):
        if not acts:
            raise ModelError(f"omega_{i} has no actions")
        kernel.append(tuple(a.row(i, n) for a in acts))
        cost.append(tuple(a.cost for a in acts))
        aux.append(tuple(a.aux for a in acts))
        labels.append(tuple(f"alpha{k}" for k in range(len(acts))))
    base = FiniteMdp(
        tuple(kernel), tuple(cost), tuple(aux),
        state_labels=tuple([f"s{z}" for z in zmap] + [f"w{z}" for z in zmap]),
        action_labels=tuple(labels),
    )
    return EmbeddedMdp(base, tuple(zmap), tuple(tuple(a) for a in omega_actions))


def with_omega_actions(emdp: EmbeddedMdp, omega_actions: Sequence[Sequence[OmegaAction]]) -> EmbeddedMdp:
    """Copy of ``emdp`` with the omega action lists replaced."""
    n, b = emdp.n, emdp.base
    return _assemble(b.kernel[:n], b.cost[:n], b.aux_costs[:n], b.action_labels[:n],
                     emdp.embedding_map, omega_actions)


def build_embedding(model: CountableModel, summaries: Sequence[ExcursionSummary]) -> EmbeddedMdp:
    """Construct M0 from the source model and excursion summaries.

    ``summaries`` must cover every positive-exit (z, a) pair for every exterior
    policy.  An omega state whose boundary state cannot exit gets one inert
    action (it is unreachable).
    """
    model.validate()
    zmap = model.interior
    n, K = len(zmap), model.n_aux
    have = {(s.boundary_state, s.interior_action, s.exterior_policy_id) for s in summaries}
    for z, a in exit_channels(model):
        for ext in range(len(model.exterior_policies)):
            if (z, a, ext) not in have:
                raise MissingSummary(f"no excursion summary for state {z}, action {a}, exterior policy {ext}")
    for s in summaries:
        if len(s.q) != n:
            raise ModelError(f"summary for state {s.boundary_state} has q of length {len(s.q)}, |Z| = {n}")
        if len(s.aux_omega_costs) != K:
            raise MissingSummary(
                f"summary for ({s.boundary_state}, {s.interior_action}) carries "
                f"{len(s.aux_omega_costs)} aux costs, model has {K}")

    kernel, cost, aux, labels = [], [], [], []
    for i, z in enumerate(zmap):
        krow, crow, arow = [], [], []
        for a in range(model.n_actions(z)):
            pairs = []
            out = 0.0
            for x, p in model.transition(z, a).items():
                j = model.interior_index.get(x)
                if j is None:
                    out += p
                else:
                    pairs.append((j, p))
            pairs.append((n + i, out))
            krow.append(Distribution.from_pairs(pairs))
            crow.append(float(model.cost(z, a)))
            arow.append(model.aux(z, a))
        kernel.append(tuple(krow))
        cost.append(tuple(crow))
        aux.append(tuple(arow))
        labels.append(tuple(model.actions(z)))

    by_state: list[list[OmegaAction]] = [[] for _ in range(n)]
    for s in sorted(summaries, key=lambda s: (model.interior_index[s.boundary_state],
                                               s.interior_action, s.exterior_policy_id)):
        by_state[model.interior_index[s.boundary_state]].append(OmegaAction.from_summary(s))
    omega = [_dedupe(acts) if acts else [_inert(i, n, K)] for i, acts in enumerate(by_state)]
    return _assemble(kernel, cost, aux, labels, zmap, omega)


def extend_constrained(model: CountableModel, summaries: Sequence[ExcursionSummary]) -> EmbeddedMdp:
    """M0 with K aux cost layers; omega actions carry ``d^k = lam * aux excursion cost``."""
    for s in summaries:
        if len(s.aux_excursion_costs) != model.n_aux:
            raise MissingSummary(
                f"summary for ({s.boundary_state}, {s.interior_action}) lacks aux excursion costs")
    return build_embedding(model, summaries)


def eliminate_dominated(emdp: EmbeddedMdp) -> EmbeddedMdp:
    """Drop omega actions that share re-entry vector and aux costs with a cheaper one."""
    kept_all = []
    for acts in emdp.omega_actions:
        kept: list[OmegaAction] = []
        for act in acts:
            for k, other in enumerate(kept):
                if other.same_dynamics(act):
                    if act.cost < other.cost:
                        kept[k] = act
                    elif abs(act.cost - other.cost) <= DEDUP_TOL:
                        kept[k] = replace(other, provenance=other.provenance + act.provenance)
                    break
            else:
                kept.append(act)
        kept_all.append(kept)
    return with_omega_actions(emdp, kept_all)


def perturb_omega(emdp: EmbeddedMdp, cost_eps: float = 0.0, lam_eps: float = 0.0) -> EmbeddedMdp:
    """Shift every non-inert omega cost by ``cost_eps`` and its ``lam`` by ``-lam_eps``.

    Models inexact excursion inputs; ``lam`` stays in (0, 1].
    """
    out = []
    for acts in emdp.omega_actions:
        new = []
        for a in acts:
            if a.inert:
                new.append(a)
                continue
            lam = min(1.0, max(a.lam - lam_eps, 1e-12))
            new.append(replace(a, lam=lam, cost=a.cost + cost_eps))
        out.append(new)
    return with_omega_actions(emdp, out)


def suggest_Z(model: CountableModel, gamma: float, scan_limit: int = 1000) -> list[int]:
    """States among the first ``scan_limit`` whose cheapest action costs less than ``gamma``.

    Warns when the set is empty or the last tenth of the scan still contains
    qualifying states (costs have not yet visibly exceeded ``gamma``).
    """
    found, scanned = [], []
    for k, x in enumerate(model.enumerate_states()):
        if k >= scan_limit:
            break
        scanned.append(x)
        acts = model.n_actions(x)
        if acts and min(model.cost(x, a) for a in range(acts)) < gamma:
            found.append(x)
    tail = set(scanned[len(scanned) - max(1, len(scanned) // 10):])
    if not found:
        warnings.warn(f"no state has cost below {gamma} among the first {len(scanned)}", stacklevel=2)
    elif tail & set(found):
        warnings.warn(
            f"states near the end of the scan still cost less than {gamma}; "
            "raise scan_limit or gamma may not bound the far-state costs", stacklevel=2)
    return found


# ----------------------------------------------------------------------------
# policies across the embedding


def embedded_counterpart(emdp: EmbeddedMdp, interior: StationaryPolicy, ext: int = 0) -> StationaryPolicy:
    """Policy of M0 that imitates the source policy (``interior`` on Z, exterior ``ext``)."""
    n = emdp.n
    if len(interior) != n:
        raise ModelError(f"interior policy covers {len(interior)} states, |Z| = {n}")
    choice = list(interior)
    for i, z in enumerate(emdp.embedding_map):
        pick = 0
        if emdp.interior_exits(i, interior[i]) > 0:
            key = (z, interior[i], ext)
            for k, act in enumerate(emdp.omega_actions[i]):
                if key in act.provenance:
                    pick = k
                    break
            else:
                raise MissingSummary(f"no omega action at w{z} derived from {key}")
        choice.append(pick)
    return StationaryPolicy(choice)


def lift_policy(emdp: EmbeddedMdp, policy0: StationaryPolicy) -> tuple[StationaryPolicy, int]:
    """Source policy ``(interior choices, exterior policy id)`` matching an M0 policy.

    Raises :class:`ProvenanceMismatch` when the omega actions chosen at the
    reachable omega states do not all derive from the interior choice and one
    common exterior policy.
    """
    n = emdp.n
    interior = StationaryPolicy(policy0.choice[:n])
    candidates = None
    for i, z in enumerate(emdp.embedding_map):
        if emdp.interior_exits(i, interior[i]) <= 0:
            continue
        act = emdp.omega_actions[i][policy0[n + i]]
        exts = {e for (zz, a, e) in act.provenance if zz == z and a == interior[i]}
        candidates = exts if candidates is None else candidates & exts
    if candidates is None:
        return interior, 0
    if not candidates:
        raise ProvenanceMismatch("chosen omega actions do not share an exterior policy "
                                 "consistent with the interior choices")
    return interior, min(candidates)
