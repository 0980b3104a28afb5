"""How often the embedded optimum undercuts the best source policy.

Random explicit tables (every move reaches state 0 w.p. >= 0.1, so each is
unichain) with two exterior policies.  For each instance the embedded optimal
gain is compared with brute force over all source policies, and the optimum
is lifted; a ProvenanceMismatch means it pairs an action at s_i with an omega
action derived from a different action.
"""

import argparse
import itertools

import numpy as np

from mdpembed import (ProvenanceMismatch, StationaryPolicy, average_cost_of_policy, build_embedding,
                      explicit_table, lift_policy, policy_iteration, summarize_exits)


def random_table(rng, n_states, n_interior, max_actions=2):
    table = {}
    for s in range(n_states):
        acts = []
        for _ in range(int(rng.integers(1, max_actions + 1))):
            k = int(rng.integers(1, 3))
            targets = rng.choice(n_states, size=k, replace=False)
            w = rng.dirichlet(np.ones(k)) * 0.9
            nxt = {0: 0.1}
            for t, p in zip(targets.tolist(), w.tolist()):
                nxt[t] = nxt.get(t, 0.0) + p
            acts.append({"cost": float(rng.integers(0, 10)), "next": [[j, p] for j, p in nxt.items()]})
        table[s] = acts
    last = {s: len(a) - 1 for s, a in table.items()}
    return explicit_table(table, interior=range(n_interior), exterior_policies=[0, last])


def best_source_gain(model):
    mdp, order = model.to_finite_mdp()
    n = len(model.interior)
    best = float("inf")
    for choice in itertools.product(*(range(model.n_actions(z)) for z in model.interior)):
        for ext in range(len(model.exterior_policies)):
            full = list(choice) + [model.exterior_action(ext, x) for x in order[n:]]
            best = min(best, average_cost_of_policy(mdp, StationaryPolicy(full)))
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=300)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    undercut = mismatched = 0
    worst = 0.0
    for _ in range(args.instances):
        n_states = int(rng.integers(3, 8))
        model = random_table(rng, n_states, int(rng.integers(1, n_states)))
        emdp = build_embedding(model, summarize_exits(model))
        res = policy_iteration(emdp.base)
        best = best_source_gain(model)
        try:
            lift_policy(emdp, res.policy)
        except ProvenanceMismatch:
            mismatched += 1
        if res.gain < best - 1e-9:
            undercut += 1
            worst = max(worst, best - res.gain)
    print(f"{args.instances} instances: {undercut} undercut the best source gain "
          f"(largest gap {worst:.4f}), {mismatched} optima fail to lift")


if __name__ == "__main__":
    main()
