"""Regenerative simulation of countable models.

Long-run average cost is estimated by the ratio of total cycle cost to total
cycle length over independent regeneration cycles at an interior state, with
the usual renewal-reward CLT confidence interval.

Random numbers: PCG64 streams from ``numpy.random.SeedSequence(seed,
spawn_key=(block,))``; cycles are generated in blocks of ``BLOCK`` so any
block can be produced independently without changing results.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from math import sqrt

import numpy as np
from scipy import stats

from ._walk import ChainTable, substream, walk
from .core import CountableModel, StationaryPolicy
from .embedding import EmbeddedMdp, embedded_counterpart
from .errors import CycleTooLong, ModelError
from .excursion import monte_carlo_excursion
from .solver import evaluate_cycle_ratio

BLOCK = 1 << 15


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    half_width: float
    cycles: int
    steps: int
    seed: int
    mean_cycle_cost: float = float("nan")
    mean_cycle_length: float = float("nan")

    def covers(self, value: float) -> bool:
        return abs(value - self.mean) <= self.half_width

    def to_dict(self) -> dict:
        return asdict(self)


def source_action(model: CountableModel, interior: StationaryPolicy, ext: int):
    if len(interior) != len(model.interior):
        raise ModelError(f"interior policy covers {len(interior)} states, |Z| = {len(model.interior)}")

    def act(x):
        i = model.interior_index.get(x)
        return interior[i] if i is not None else model.exterior_action(ext, x)

    return act


def simulate_cycles(model: CountableModel, interior: StationaryPolicy, ext: int, z: int,
                    n_cycles: int, seed: int, max_cycle_steps: int = 10**7,
                    block: int = BLOCK) -> tuple[np.ndarray, np.ndarray]:
    """Per-cycle costs and lengths of ``n_cycles`` regenerations at ``z``."""
    if not model.in_interior(z):
        raise ModelError(f"regeneration state {z} is not in Z")
    table = ChainTable(model, source_action(model, interior, ext), lambda x: x == z)
    start = table.local(z)
    costs, lengths = [], []
    for b, lo in enumerate(range(0, n_cycles, block)):
        m = min(block, n_cycles - lo)
        steps, cost, _, _ = walk(table, np.full(m, start), substream(seed, b),
                                 max_cycle_steps, CycleTooLong)
        costs.append(cost)
        lengths.append(steps)
    return np.concatenate(costs), np.concatenate(lengths)


def simulate_average_cost(model: CountableModel, interior: StationaryPolicy, ext: int = 0,
                          z: int | None = None, n_cycles: int = 100_000, seed: int = 0,
                          max_cycle_steps: int = 10**7, confidence: float = 0.95) -> SimEstimate:
    """Ratio-of-means estimate of the long-run average cost under a source policy.

    ``interior`` gives the action index at each state of Z (in Z order) and
    ``ext`` selects the exterior policy.  Regenerations are at ``z`` (default:
    the first state of Z).  Raises :class:`CycleTooLong` when a cycle exceeds
    ``max_cycle_steps``.
    """
    if n_cycles < 1:
        raise ModelError("n_cycles must be >= 1")
    z = model.interior[0] if z is None else z
    C, N = simulate_cycles(model, interior, ext, z, n_cycles, seed, max_cycle_steps)
    N = N.astype(float)
    total_c, total_n = float(np.sum(C)), float(np.sum(N))
    ratio = total_c / total_n
    if n_cycles > 1:
        resid = C - ratio * N
        s = float(np.std(resid, ddof=1))
        hw = float(stats.norm.ppf(0.5 + confidence / 2)) * s / (total_n / n_cycles * sqrt(n_cycles))
    else:
        hw = float("inf")
    return SimEstimate(ratio, hw, n_cycles, int(total_n), int(seed),
                       total_c / n_cycles, total_n / n_cycles)


@dataclass
class ChannelCheck:
    """Simulated excursions from one exit channel against the embedded omega action."""

    boundary_state: int
    action: int
    n_excursions: int
    q_expected: list
    q_observed: list
    chi2: float
    df: int
    p_value: float
    cost_expected: float
    cost_observed: float
    cost_stderr: float
    z_score: float
    passed: bool


@dataclass
class EmbeddingComparison:
    channels: list = field(default_factory=list)
    simulated: SimEstimate | None = None
    cycle_ratio: float = float("nan")
    average_passed: bool = False

    @property
    def passed(self) -> bool:
        return self.average_passed and all(c.passed for c in self.channels)

    def to_dict(self) -> dict:
        return {"passed": self.passed, "average_passed": self.average_passed,
                "cycle_ratio": self.cycle_ratio, "simulated": self.simulated.to_dict(),
                "channels": [asdict(c) for c in self.channels]}


def _chi2(observed, expected, n):
    cells = expected > 0
    if np.any(observed[~cells] > 0):
        return float("inf"), int(cells.sum()) - 1, 0.0
    e = expected[cells] * n
    stat = float(np.sum((observed[cells] - e) ** 2 / e))
    df = int(cells.sum()) - 1
    if df == 0:
        return stat, 0, 1.0 if stat < 1e-9 * n else 0.0
    return stat, df, float(stats.chi2.sf(stat, df))


def compare_embedded(model: CountableModel, emdp: EmbeddedMdp, interior: StationaryPolicy,
                     ext: int = 0, z: int | None = None, n_cycles: int = 100_000, seed: int = 0,
                     n_excursions: int | None = None, alpha: float = 1e-3,
                     z_max: float = 4.0) -> EmbeddingComparison:
    """Check the embedding against simulation of the source model.

    For each exit channel used by the policy: the simulated entrance
    distribution against the omega action's ``q`` (chi-square at level
    ``alpha``) and the simulated excursion cost against ``c0 / lam`` (within
    ``z_max`` standard errors).  Then the simulated average cost against the
    cycle ratio of the embedded counterpart at ``z`` (inside the 95% CI).
    """
    if tuple(emdp.embedding_map) != tuple(model.interior):
        raise ModelError("embedding map does not match the model's interior")
    policy0 = embedded_counterpart(emdp, interior, ext)
    n_exc = n_excursions or n_cycles
    report = EmbeddingComparison()
    for i, zi in enumerate(model.interior):
        a = interior[i]
        if emdp.interior_exits(i, a) <= 0:
            continue
        act = emdp.omega_actions[i][policy0[emdp.n + i]]
        est = monte_carlo_excursion(model, zi, a, ext, n_exc, seed, key=(1 << 20, i, a, ext))
        q_exp = np.asarray(act.q)
        q_obs = np.asarray(est.summary.q) * n_exc
        stat, df, p = _chi2(q_obs, q_exp, n_exc)
        cost_exp = act.cost / act.lam
        se = float(est.stderr["excursion_cost"])
        diff = est.summary.excursion_cost - cost_exp
        zs = diff / se if se > 0 else (0.0 if abs(diff) <= 1e-12 * max(1.0, abs(cost_exp)) else float("inf"))
        report.channels.append(ChannelCheck(
            zi, a, n_exc, q_exp.tolist(), (q_obs / n_exc).tolist(), stat, df, p,
            cost_exp, est.summary.excursion_cost, se, zs, bool(p >= alpha and abs(zs) <= z_max)))
    z = model.interior[0] if z is None else z
    report.simulated = simulate_average_cost(model, interior, ext, z, n_cycles, seed)
    report.cycle_ratio = evaluate_cycle_ratio(emdp.base, policy0, model.interior_index[z])
    report.average_passed = report.simulated.covers(report.cycle_ratio)
    return report
