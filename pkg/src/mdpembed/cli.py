"""Command-line interface.

Subcommands: ``demo``, ``embed``, ``solve``, ``eval``, ``simulate``,
``verify``, ``suggest-z``.  Results are NDJSON records appended to
``--results`` (or printed to stdout when it is absent).

Exit codes: 0 ok, 2 invalid input, 3 numerical failure (including
infeasible constraints), 4 verification failed.
"""

from __future__ import annotations

import argparse
import os
import sys
import warnings

import numpy as np

from . import spec as io
from .core import (FiniteMdp, StationaryPolicy, average_cost_of_policy, recurrent_classes,
                   stationary_distribution)
from .embedding import EmbeddedMdp, build_embedding, eliminate_dominated, lift_policy, suggest_Z
from .errors import Infeasible, ModelError, NumericalError, SpecError
from .excursion import Truncation, summarize_exits
from .sim import compare_embedded, simulate_average_cost
from .solver import (cycle_statistics, policy_iteration, relative_value_iteration,
                     solve_constrained)

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4
SEED_ENV = "MDPEMBED_SEED"
BACKENDS = ("closed-form", "solve", "mc")


class VerificationFailed(Exception):
    pass


# ----------------------------------------------------------------------------
# pipelines shared by the subcommands


def embed_spec(spec: io.ModelSpec, backend: str = "solve", trunc: Truncation = Truncation(),
               n_excursions: int = 100_000, seed: int = 0,
               eliminate: bool = False) -> EmbeddedMdp:
    model = spec.build()
    if backend == "closed-form":
        summaries = spec.closed_form_summaries()
    elif backend in ("solve", "mc"):
        summaries = summarize_exits(model, backend, trunc, n_excursions, seed)
    else:
        raise ModelError(f"unknown backend {backend!r}; expected one of {BACKENDS}")
    emdp = build_embedding(model, summaries)
    return eliminate_dominated(emdp) if eliminate else emdp


def _trunc(args) -> Truncation:
    return Truncation(start=args.trunc_start, tol=args.tol, max_states=args.max_states)


def _load_input(path, args):
    """Spec or finite model file -> ``(mdp, emdp or None, spec or None, extras)``."""
    raw = io.read_json(path)
    fmt = raw.get("format") if isinstance(raw, dict) else None
    if fmt == io.FINITE_FORMAT:
        mdp, emdp, extras = io.finite_from_dict(raw)
        return mdp, emdp, None, extras
    spec = io.ModelSpec.from_dict(raw)
    emdp = embed_spec(spec, args.backend, _trunc(args), args.excursions or args.cycles,
                      args.seed, args.eliminate_dominated)
    return emdp.base, emdp, spec, {"name": spec.name, "constraints": spec.constraints}


def _parse_policy(text, n, what="policy") -> StationaryPolicy:
    try:
        vals = [int(t) for t in text.split(",")]
    except ValueError:
        raise SpecError(f"--{what}", f"expected comma-separated action indices, got {text!r}") from None
    if len(vals) != n:
        raise SpecError(f"--{what}", f"{len(vals)} entries for {n} states")
    return StationaryPolicy(vals)


def _bounds(args, n_aux, default):
    bounds = list(default) if default is not None else [float("inf")] * n_aux
    for item in args.constraint or ():
        try:
            k, v = item.split("=")
            k, v = int(k), float(v)
        except ValueError:
            raise SpecError("--constraint", f"expected k=V, got {item!r}") from None
        if not 1 <= k <= n_aux:
            raise SpecError("--constraint", f"index {k} outside 1..{n_aux}")
        bounds[k - 1] = v
    return bounds


def _emit(args, record):
    if args.results:
        io.append_record(args.results, record)
    else:
        print(io.dumps(record))


def _fmt(v) -> str:
    return f"{v:.12g}"


def _best_regeneration_state(emdp: EmbeddedMdp, policy0: StationaryPolicy) -> int:
    pi = stationary_distribution(emdp.base, policy0)
    return emdp.embedding_map[int(np.argmax(pi[:emdp.n]))]


# ----------------------------------------------------------------------------
# subcommands


def cmd_demo(args):
    if args.list or not args.name:
        print("\n".join(sorted(io.DEMOS)))
        return EXIT_OK
    spec = io.demo_spec(args.name)
    if args.out:
        io.save_spec(spec, args.out)
        print(f"wrote {args.out}")
    else:
        print(io.dumps(spec.to_dict(), indent=2))
    return EXIT_OK


def cmd_embed(args):
    spec = io.load_spec(args.spec)
    emdp = embed_spec(spec, args.backend, _trunc(args), args.excursions or args.cycles,
                      args.seed, args.eliminate_dominated)
    doc = io.finite_to_dict(emdp.base, emdp, name=spec.name, constraints=spec.constraints,
                            backend=args.backend)
    if args.out:
        io.write_json(doc, args.out)
    else:
        print(io.dumps(doc, indent=2))
        return EXIT_OK
    flag = " (omega-unreachable)" if emdp.omega_unreachable else ""
    print(f"wrote {args.out}: {emdp.base.n_states} states{flag}")
    for i, acts in enumerate(emdp.omega_actions):
        for k, a in enumerate(acts):
            if not a.inert:
                print(f"  w{emdp.embedding_map[i]} alpha{k}: lambda={_fmt(a.lam)} cost={_fmt(a.cost)}")
    return EXIT_OK


def cmd_solve(args):
    mdp, emdp, _, extras = _load_input(args.input, args)
    record = {"command": "solve", "input": str(args.input), "name": extras["name"]}
    bounds = _bounds(args, mdp.n_aux, extras.get("constraints"))
    if mdp.n_aux and any(np.isfinite(bounds)):
        keep = [k for k, v in enumerate(bounds) if np.isfinite(v)]
        record["method"] = "lp"
        record["bounds"] = bounds
        try:
            sol = solve_constrained(_select_aux(mdp, keep), [bounds[k] for k in keep])
        except Infeasible as exc:
            cert = exc.certificate
            record.update(status="infeasible", certificate=cert)
            _emit(args, record)
            print(f"infeasible: smallest achievable violation {_fmt(cert['min_violation'])}; "
                  f"minimum aux values {[_fmt(v) for v in cert['min_aux_values']]}", file=sys.stderr)
            return EXIT_NUMERICAL
        record.update(status="ok", **sol.to_dict())
        _emit(args, record)
        if args.results:
            print(f"gain {_fmt(sol.gain)} (constrained)")
        return EXIT_OK
    if args.method == "rvi":
        res = relative_value_iteration(mdp, tol=args.tol)
    else:
        res = policy_iteration(mdp)
    record.update(status="ok", method=args.method, **res.to_dict())
    if mdp.action_labels:
        record["policy_labels"] = [mdp.action_labels[s][a] for s, a in enumerate(res.policy)]
    if emdp is not None:
        interior, ext = lift_policy(emdp, res.policy)
        record["lifted"] = {"interior": list(interior), "exterior_policy": ext,
                            "states": list(emdp.embedding_map)}
    _emit(args, record)
    if args.csv:
        io.write_csv(args.csv, ["state", "label", "action", "action_label", "bias"],
                     [[s, mdp.state_labels[s] if mdp.state_labels else s, a,
                       mdp.action_labels[s][a] if mdp.action_labels else a, h]
                      for s, (a, h) in enumerate(zip(res.policy, res.bias))])
    if args.results:
        print(f"gain {_fmt(res.gain)} residual {res.residual:.3g}")
    return EXIT_OK


def _select_aux(mdp, keep):
    aux = tuple(tuple(tuple(v[k] for k in keep) for v in row) for row in mdp.aux_costs)
    return FiniteMdp(mdp.kernel, mdp.cost, aux, mdp.state_labels, mdp.action_labels)


def cmd_eval(args):
    mdp, _, _, extras = _load_input(args.input, args)
    if args.policy:
        policy = _parse_policy(args.policy, mdp.n_states)
    else:
        policy = policy_iteration(mdp).policy
    mdp.check_policy(policy)
    g = average_cost_of_policy(mdp, policy)
    classes = recurrent_classes(mdp.policy_matrix(policy))
    rows = []
    for s in sorted(s for c in classes for s in c):
        ratio, cost, length = cycle_statistics(mdp, policy, s)
        rows.append({"state": s, "label": mdp.state_labels[s] if mdp.state_labels else s,
                     "cycle_ratio": ratio, "cycle_cost": cost, "cycle_length": length})
    record = {"command": "eval", "input": str(args.input), "name": extras["name"],
              "policy": list(policy), "stationary": g, "cycle_ratios": rows}
    _emit(args, record)
    if args.csv:
        io.write_csv(args.csv, ["state", "label", "cycle_ratio", "stationary"],
                     [[r["state"], r["label"], r["cycle_ratio"], g] for r in rows])
    if args.results:
        print(f"stationary {_fmt(g)}")
        for r in rows:
            print(f"cycle-ratio[{r['label']}] {_fmt(r['cycle_ratio'])}")
    return EXIT_OK


def _source_policy(args, spec, model):
    """Interior policy, exterior id and embedded model (the latter only when solved)."""
    if args.policy:
        return _parse_policy(args.policy, len(model.interior)), args.exterior, None, None
    emdp = embed_spec(spec, args.backend, _trunc(args), args.excursions or args.cycles,
                      args.seed, args.eliminate_dominated)
    res = policy_iteration(emdp.base)
    interior, ext = lift_policy(emdp, res.policy)
    return interior, ext, emdp, res


def cmd_simulate(args):
    spec = io.load_spec(args.spec)
    model = spec.build()
    interior, ext, emdp, res = _source_policy(args, spec, model)
    z = args.z
    if z is None:
        z = _best_regeneration_state(emdp, res.policy) if emdp is not None else model.interior[0]
    est = simulate_average_cost(model, interior, ext, z, args.cycles, args.seed)
    record = {"command": "simulate", "input": str(args.spec), "name": spec.name,
              "interior_policy": list(interior), "exterior_policy": ext, "z": z, **est.to_dict()}
    _emit(args, record)
    if args.results:
        print(f"average cost {_fmt(est.mean)} +- {_fmt(est.half_width)} over {est.cycles} cycles")
    return EXIT_OK


def cmd_verify(args):
    spec = io.load_spec(args.spec)
    model = spec.build()
    emdp = embed_spec(spec, args.backend, _trunc(args), args.excursions or args.cycles,
                      args.seed, args.eliminate_dominated)
    res = policy_iteration(emdp.base)
    interior, ext = lift_policy(emdp, res.policy)
    z = args.z if args.z is not None else _best_regeneration_state(emdp, res.policy)
    if emdp.omega_unreachable:
        report = compare_embedded(model, emdp, interior, ext, z, args.cycles, args.seed, n_excursions=1)
    else:
        report = compare_embedded(model, emdp, interior, ext, z, args.cycles, args.seed,
                                  n_excursions=args.excursions or args.cycles)
    covers = report.simulated.covers(res.gain)
    passed = bool(report.passed and covers)
    record = {"command": "verify", "input": str(args.spec), "name": spec.name,
              "backend": args.backend, "seed": args.seed, "z": z,
              "gain": res.gain, "policy": list(res.policy),
              "interior_policy": list(interior), "exterior_policy": ext,
              "gain_in_ci": covers, "verdict": "PASS" if passed else "FAIL", **report.to_dict()}
    _emit(args, record)
    sim = report.simulated
    print(f"{'PASS' if passed else 'FAIL'}: g_solve={_fmt(res.gain)} g_sim={_fmt(sim.mean)} "
          f"+- {_fmt(sim.half_width)} |diff|={abs(res.gain - sim.mean):.3g}",
          file=sys.stderr if not args.results else sys.stdout)
    if not passed:
        raise VerificationFailed()
    return EXIT_OK


def cmd_suggest_z(args):
    model = io.load_spec(args.spec).build()
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        z = suggest_Z(model, args.gamma, args.scan_limit)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    _emit(args, {"command": "suggest-z", "input": str(args.spec), "gamma": args.gamma, "interior": z})
    return EXIT_OK


# ----------------------------------------------------------------------------
# argument parsing


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV, "0")
    try:
        return int(raw)
    except ValueError:
        raise SpecError(SEED_ENV, f"not an integer: {raw!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mdpembed", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help=f"random seed (default ${SEED_ENV} or 0)")
    common.add_argument("--results", help="append NDJSON records here instead of printing")
    common.add_argument("--backend", choices=BACKENDS, default="solve",
                        help="excursion backend when embedding a spec")
    common.add_argument("--tol", type=float, default=1e-9,
                        help="truncation and value-iteration tolerance")
    common.add_argument("--trunc-start", type=int, default=None,
                        help="initial truncation size (default |Z| + 32)")
    common.add_argument("--max-states", type=int, default=1 << 16)
    common.add_argument("--cycles", type=int, default=100_000, help="regeneration cycles to simulate")
    common.add_argument("--excursions", type=int, default=None,
                        help="Monte Carlo excursions per channel (default --cycles)")
    common.add_argument("--eliminate-dominated", action="store_true",
                        help="drop dominated omega actions after embedding")

    d = sub.add_parser("demo", help="write a shipped demo spec")
    d.add_argument("name", nargs="?")
    d.add_argument("-o", "--out")
    d.add_argument("--list", action="store_true")
    d.set_defaults(func=cmd_demo)

    e = sub.add_parser("embed", parents=[common], help="build the embedded finite model")
    e.add_argument("spec")
    e.add_argument("-o", "--out")
    e.set_defaults(func=cmd_embed)

    s = sub.add_parser("solve", parents=[common], help="optimal gain of a finite or embedded model")
    s.add_argument("input")
    s.add_argument("--method", choices=("pi", "rvi"), default="pi")
    s.add_argument("--constraint", action="append", metavar="k=V",
                   help="bound the long-run average of aux cost k (1-based) by V")
    s.add_argument("--csv")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser("eval", parents=[common], help="stationary and cycle-ratio evaluation")
    v.add_argument("input")
    v.add_argument("--policy", help="comma-separated action indices (default: optimal)")
    v.add_argument("--csv")
    v.set_defaults(func=cmd_eval)

    for name, func, hlp in (("simulate", cmd_simulate, "regenerative simulation of the source model"),
                            ("verify", cmd_verify, "solve embedding, lift, simulate source, compare")):
        c = sub.add_parser(name, parents=[common], help=hlp)
        c.add_argument("spec")
        c.add_argument("--z", type=int, default=None, help="regeneration state (default: most visited)")
        if name == "simulate":
            c.add_argument("--policy", help="interior action indices in Z order (default: optimal)")
            c.add_argument("--exterior", type=int, default=0)
        c.set_defaults(func=func)

    g = sub.add_parser("suggest-z", parents=[common], help="states cheaper than a target gain")
    g.add_argument("spec")
    g.add_argument("--gamma", type=float, required=True)
    g.add_argument("--scan-limit", type=int, default=1000)
    g.set_defaults(func=cmd_suggest_z)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if hasattr(args, "seed") and args.seed is None:
            args.seed = _default_seed()
        return args.func(args)
    except VerificationFailed:
        return EXIT_VERIFY
    except ModelError as exc:
        print(f"error: {_where(args)}{exc}", file=sys.stderr)
        return EXIT_INVALID
    except NumericalError as exc:
        print(f"numerical error: {_where(args)}{exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def _where(args) -> str:
    src = getattr(args, "spec", None) or getattr(args, "input", None)
    return f"{src}: " if src else ""


if __name__ == "__main__":
    sys.exit(main())
