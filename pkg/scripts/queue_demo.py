"""End-to-end run on the controlled queue: excursions, embedding, solve, lift, simulate."""

import argparse

from mdpembed import (build_embedding, compare_embedded, controlled_queue, lift_policy,
                      policy_iteration, relative_value_iteration, summarize_exits)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--arrival", type=float, default=0.3)
    ap.add_argument("--levels", type=int, default=4)
    ap.add_argument("--cycles", type=int, default=100_000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    model = controlled_queue(arrival=args.arrival, levels=args.levels)
    summaries = summarize_exits(model)
    for s in summaries:
        print(f"exit z={s.boundary_state} a={s.interior_action}: mass {s.exit_mass:.4f} "
              f"E[tau|exit] {s.e_tau_given_exit:.6f} lambda {s.lam:.6f} omega cost {s.omega_cost:.6f}")

    emdp = build_embedding(model, summaries)
    print(f"embedded model: {emdp.base.n_states} states, "
          f"{sum(len(a) for a in emdp.omega_actions)} omega actions")
    pi = policy_iteration(emdp.base)
    rvi = relative_value_iteration(emdp.base)
    print(f"gain PI {pi.gain:.12f}  RVI {rvi.gain:.12f}")

    interior, ext = lift_policy(emdp, pi.policy)
    labels = [model.actions(z)[a] for z, a in zip(model.interior, interior)]
    print(f"lifted interior actions {list(interior)} ({labels}), exterior policy {ext}")

    cmp = compare_embedded(model, emdp, interior, ext, n_cycles=args.cycles, seed=args.seed)
    sim = cmp.simulated
    print(f"simulated {sim.mean:.6f} +/- {sim.half_width:.6f} over {sim.cycles} cycles; "
          f"cycle ratio {cmp.cycle_ratio:.6f}; {'PASS' if cmp.passed else 'FAIL'}")


if __name__ == "__main__":
    main()
