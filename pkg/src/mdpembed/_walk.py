"""Vectorised simulation of many independent walkers on a countable chain.

The chain is a :class:`CountableModel` under one fixed stationary policy.  Rows
of the transition table are expanded lazily as walkers reach new states, so
unbounded state spaces are fine as long as the walks stay finite.

Sampling is inverse-CDF against a padded cumulative table; given the same
generator state, results are bit-identical.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .core import CountableModel

_PAD = 2.0


class ChainTable:
    def __init__(self, model: CountableModel, action_of: Callable[[int], int],
                 stop: Callable[[int], bool]):
        self.model = model
        self.action_of = action_of
        self.stop_pred = stop
        self.K = model.n_aux
        self.states: list[int] = []
        self.index: dict[int, int] = {}
        self._alloc(64, 4)

    def _alloc(self, cap, width):
        self.cum = np.full((cap, width), _PAD)
        self.succ = np.zeros((cap, width), dtype=np.int64)
        self.cost = np.zeros(cap)
        self.aux = np.zeros((cap, self.K))
        self.stop = np.zeros(cap, dtype=bool)
        self.expanded = np.zeros(cap, dtype=bool)

    def _grow(self, cap=None, width=None):
        old = (self.cum, self.succ, self.cost, self.aux, self.stop, self.expanded)
        n0, w0 = old[0].shape
        self._alloc(cap or n0, width or w0)
        self.cum[:n0, :w0] = old[0]
        self.succ[:n0, :w0] = old[1]
        self.cost[:n0] = old[2]
        self.aux[:n0] = old[3]
        self.stop[:n0] = old[4]
        self.expanded[:n0] = old[5]

    def local(self, x: int) -> int:
        i = self.index.get(x)
        if i is None:
            i = len(self.states)
            if i >= self.cost.shape[0]:
                self._grow(cap=2 * self.cost.shape[0])
            self.states.append(x)
            self.index[x] = i
            self.stop[i] = bool(self.stop_pred(x))
        return i

    def _expand(self, i):
        x = self.states[i]
        a = self.action_of(x)
        d = self.model.transition(x, a)
        if len(d) > self.cum.shape[1]:
            self._grow(width=max(len(d), 2 * self.cum.shape[1]))
        succ = [self.local(y) for y in d.states]
        c = np.cumsum(d.probs)
        c[-1] = 1.0
        self.cum[i, :len(d)] = c
        self.cum[i, len(d):] = _PAD
        self.succ[i, :len(d)] = succ
        self.cost[i] = float(self.model.cost(x, a))
        if self.K:
            self.aux[i] = self.model.aux(x, a)
        self.expanded[i] = True

    def ensure(self, locs: np.ndarray):
        missing = ~self.expanded[locs]
        if missing.any():
            for i in np.unique(locs[missing]):
                self._expand(int(i))


def walk(table: ChainTable, starts: np.ndarray, rng: np.random.Generator,
         max_steps: int, error: type[Exception]):
    """Run walkers from local states ``starts`` until each lands on a stop state.

    Every walker takes at least one step.  Returns per-walker step counts,
    accumulated cost, accumulated aux costs and the local stop state reached.
    The cost of a state is collected when the walker leaves it.
    """
    n = len(starts)
    state = np.asarray(starts, dtype=np.int64).copy()
    steps = np.zeros(n, dtype=np.int64)
    cost = np.zeros(n)
    aux = np.zeros((n, table.K))
    idx = np.arange(n)
    it = 0
    while len(idx):
        if it >= max_steps:
            raise error(f"{len(idx)} walk(s) exceeded {max_steps} steps")
        s = state[idx]
        table.ensure(s)
        cost[idx] += table.cost[s]
        if table.K:
            aux[idx] += table.aux[s]
        steps[idx] += 1
        u = rng.random(len(idx))
        k = np.sum(table.cum[s] <= u[:, None], axis=1)
        nxt = table.succ[s, k]
        state[idx] = nxt
        idx = idx[~table.stop[nxt]]
        it += 1
    return steps, cost, aux, state


def substream(seed: int, *key: int) -> np.random.Generator:
    """PCG64 generator for the substream ``key`` of ``seed``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))))
