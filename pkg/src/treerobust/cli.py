"""Command-line interface.

Exit codes: 0 success (or the verdict holds), 1 the verdict fails, 2 input
error, 3 numeric failure.
"""

import argparse
import json
import logging
import math
import sys

import numpy as np

from . import arbitrage, consistency, emm, generators, hypotheses, optimizer
from .errors import InputError, NumericError, VerdictError
from .market import Strategy
from .marketfile import family_to_dict, load_market, save_market
from .utility import PiecewiseLinear, parse_utility

EXIT_OK, EXIT_VERDICT, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3


def _num(x):
    """JSON-safe number: infinities become strings."""
    x = float(x)
    return x if math.isfinite(x) else ("inf" if x > 0 else "-inf")


class Output:
    """Collects report lines and fields; prints text or one JSON object."""

    def __init__(self, as_json):
        self.as_json = as_json
        self.fields = {}

    def line(self, text):
        if not self.as_json:
            print(text)

    def put(self, **kw):
        self.fields.update(kw)

    def finish(self):
        if self.as_json:
            print(json.dumps(self.fields, indent=1, default=_num))


def _brief(items, limit=8):
    items = list(items)
    text = ", ".join(map(str, items[:limit]))
    return text + (f", ... ({len(items)} in total)" if len(items) > limit else "")


def _strategy_text(phi, limit=20):
    x = phi.to_vector()
    if x.size <= limit:
        return str(phi)
    return f"root position {phi.positions[0][0].tolist()}; {x.size} coordinates (see --json)"


def _family(args):
    if not args.market:
        raise InputError("this command needs --market PATH")
    return load_market(args.market)


def _models(family, name):
    return [family[name]] if name else list(family)


def cmd_check_na(args, out):
    family = _family(args)
    verdicts = {}
    for m in _models(family, args.model):
        ok, bad = arbitrage.na_check(m, family.tree)
        verdicts[m.name] = {"na": ok, "violations": [family.tree.node_path(t - 1, i) for t, i in bad]}
        out.line(f"{m.name}: {'NA holds' if ok else 'arbitrage at ' + _brief(verdicts[m.name]['violations'])}")
    out.put(models=verdicts)
    return EXIT_OK if all(v["na"] for v in verdicts.values()) else EXIT_VERDICT


def cmd_robust_na(args, out):
    family = _family(args)
    res = arbitrage.robust_na(family)
    out.line(f"robust NA: {'holds' if res.holds else 'fails'} (optimum {res.optimum:.12g})")
    stars = arbitrage.assumption_na(family)
    out.line(f"reference models: {', '.join(stars) if stars else 'none'}")
    fields = {"holds": res.holds, "optimum": res.optimum, "reference_models": stars}
    if res.witness is not None:
        fields["witness"] = res.witness.to_vector().tolist()
        out.line(f"witness: {_strategy_text(res.witness)}")
    out.put(**fields)
    return EXIT_OK if res.holds else EXIT_VERDICT


def cmd_certificates(args, out):
    family = _family(args)
    tree = family.tree
    rng = np.random.default_rng(args.seed)
    report = {}
    all_ok = True
    for m in _models(family, args.model):
        cert = arbitrage.certificates(m, tree)
        rows = []
        out.line(f"{m.name}: {'NA' if cert.na else 'arbitrage'}")
        for t, i, beta, kappa, dim in cert.items():
            path = tree.node_path(t - 1, i)
            rows.append({"t": t, "node": path, "beta": beta, "kappa": kappa, "dim": dim})
            out.line(f"  t={t} {path}: beta={beta:.12g} kappa={kappa:.12g} dim={dim}")
        entry = {"na": cert.na, "nodes": rows}
        if cert.na and args.verify:
            fails = arbitrage.verify_certificate(m, tree, cert, args.verify, rng)
            entry["sampled_failures"] = fails
            out.line(f"  sampled check: {fails} failures over {args.verify} directions per node")
            all_ok &= fails == 0
        all_ok &= cert.na
        report[m.name] = entry
    out.put(models=report)
    return EXIT_OK if all_ok else EXIT_VERDICT


def cmd_emm(args, out):
    family = _family(args)
    report = {}
    code = EXIT_OK
    for m in _models(family, args.model):
        try:
            res = emm.find_emm(m, family.tree)
        except VerdictError as exc:
            out.line(f"{m.name}: no equivalent martingale measure ({exc})")
            report[m.name] = None
            code = EXIT_VERDICT
            continue
        ok, drift = emm.verify_martingale(m, family.tree, res.measure, args.tol)
        out.line(f"{m.name}: density bound {res.density_bound:.12g}, max drift {drift:.3e}")
        out.line("  q = " + " ".join(f"{w:.12g}" for w in res.measure.weights))
        report[m.name] = {"measure": res.measure.weights.tolist(), "density_bound": res.density_bound,
                          "max_drift": drift, "martingale": ok}
    out.put(models=report)
    return code


def cmd_bounds(args, out):
    family = _family(args)
    tree = family.tree
    report = {}
    for m in _models(family, args.model):
        G = arbitrage.g_bounds(m, tree, args.w0)
        out.line(f"{m.name}:")
        rows = []
        for t, g in enumerate(G, start=1):
            for i, v in enumerate(g):
                rows.append({"t": t, "node": tree.node_path(t - 1, i), "G": v})
                out.line(f"  t={t} {tree.node_path(t - 1, i)}: G={v:.12g}")
        report[m.name] = rows
    out.put(models=report)
    return EXIT_OK


def _solve(args, family, U):
    if args.method == "lp":
        if not isinstance(U, PiecewiseLinear):
            raise InputError("--method lp needs a piecewise-linear utility (pl:...); use --method supergradient")
        return optimizer.solve_lp(family, U, args.w0, args.mode)
    return optimizer.solve_supergradient(family, U, args.w0, args.mode, iters=args.iters)


def cmd_optimize(args, out):
    family = _family(args)
    U = parse_utility(args.utility)
    sol = _solve(args, family, U)
    out.line(f"value: {sol.value:.12g}")
    out.line(f"worst models: {', '.join(sol.worst_models)}")
    out.line(f"method: {sol.method}")
    if sol.gap_bound is not None:
        out.line(f"gap bound: {sol.gap_bound:.3e}")
    if sol.touches_box:
        out.line("warning: optimum touches the position box; a finite optimum may not exist")
    out.line(f"strategy: {_strategy_text(sol.strategy)}")
    out.put(value=sol.value, worst_models=sol.worst_models, method=sol.method, gap_bound=sol.gap_bound,
            touches_box=sol.touches_box, strategy=sol.strategy.to_vector().tolist())
    return EXIT_OK


def _strategy(family, text):
    try:
        values = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InputError(f"--strategy must be JSON: {exc.msg}") from exc
    if isinstance(values, (int, float)):
        return Strategy.constant(family.tree, [float(values)] * family.d)
    x = np.asarray(values, dtype=float).ravel()
    if x.size == family.d:
        return Strategy.constant(family.tree, x)
    if x.size != family.strategy_size:
        raise InputError(f"strategy needs {family.d} or {family.strategy_size} numbers, got {x.size}")
    return Strategy.from_vector(family.tree, family.d, x)


def cmd_evaluate(args, out):
    family = _family(args)
    U = parse_utility(args.utility)
    phi = _strategy(family, args.strategy)
    values = optimizer.robust_values(phi, family, U, args.w0)
    for name, v in zip(family.names, values):
        out.line(f"{name}: {v:.15g}")
    value = float(values.min())
    out.line(f"robust value: {value:.15g}")
    out.put(value=value, per_model=dict(zip(family.names, map(float, values))))
    return EXIT_OK


EXAMPLES = {
    "coin": lambda a: generators.gen_coin(),
    "bachelier": lambda a: generators.gen_bachelier(a.T, a.p, a.s0, [(a.sigma, a.mu)]),
    "remark": lambda a: generators.gen_remark_example(a.M, a.n),
    "two-drift": lambda a: generators.gen_two_drift()[0],
}


def cmd_example(args, out):
    family = EXAMPLES[args.name](args)
    if args.out:
        save_market(family, args.out)
        out.line(f"wrote {args.name} market ({len(family)} models, {family.tree.n_leaves} leaves) to {args.out}")
        out.put(path=args.out, models=family.names, leaves=family.tree.n_leaves)
    elif args.json:
        out.put(**family_to_dict(family))
    else:
        print(json.dumps(family_to_dict(family), indent=1))
    return EXIT_OK


def cmd_time_consistency(args, out):
    if args.market:
        laws = consistency.family_laws(load_market(args.market))
    else:
        laws = generators.gen_two_drift()[1]
    verdict = consistency.time_consistency_check(laws)
    out.line(f"time-consistent: {'yes' if verdict.consistent else 'no'}")
    out.line(verdict.description)
    fields = {"consistent": verdict.consistent, "witness": verdict.witness}
    if verdict.witness_law is not None:
        law = verdict.witness_law
        fields["witness_law"] = [[*p, m] for p, m in zip(law.points.tolist(), law.masses.tolist())]
        for p, m in zip(law.points, law.masses):
            out.line(f"  (S1, S2) = ({p[0]:.12g}, {p[1]:.12g}) with mass {m:.12g}")
    out.put(**fields)
    return EXIT_OK if verdict.consistent else EXIT_VERDICT


def cmd_hypotheses(args, out):
    family = _family(args)
    U = parse_utility(args.utility)
    rep = hypotheses.hypothesis_report(family, U, args.w0, args.mode)
    for text in rep.lines():
        out.line(text)
    if rep.growth:
        out.line(f"growth constants: C={rep.growth[0]:.6g}, alpha={rep.growth[1]}")
    if rep.moments:
        out.line("moment witnesses: " + ", ".join(f"{k}={v:.6g}" for k, v in rep.moments.items()))
    out.put(holds=rep.holds, conditions=rep.conditions, reference_models=rep.star_models,
            growth=rep.growth, moments=rep.moments)
    return EXIT_OK


def _global_flags(parser, suppress):
    default = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--market", metavar="PATH", default=default(None), help="JSON market file")
    parser.add_argument("--tol", type=float, default=default(1e-9), help="verdict tolerance")
    parser.add_argument("--seed", type=int, default=default(0), help="seed for sampled checks")
    parser.add_argument("--json", action="store_true", default=default(False), help="machine-readable output")
    parser.add_argument("-v", "--verbose", action="store_true", default=default(False))


def build_parser():
    parser = argparse.ArgumentParser(prog="treerobust", description=__doc__.splitlines()[0])
    _global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, parents=[common], help=help_)
        p.set_defaults(func=func)
        return p

    for name, func, help_ in [("check-na", cmd_check_na, "no-arbitrage check per model"),
                              ("emm", cmd_emm, "equivalent martingale measure per model")]:
        add(name, func, help_).add_argument("--model")
    add("robust-na", cmd_robust_na, "robust no-arbitrage across the family")
    p = add("certificates", cmd_certificates, "per-node (beta, kappa) certificates")
    p.add_argument("--model")
    p.add_argument("--verify", type=int, default=0, metavar="N", help="sample N directions per node")
    p = add("bounds", cmd_bounds, "position bounds of admissible strategies")
    p.add_argument("--model")
    p.add_argument("--w0", type=float, default=1.0)

    def utility_flags(p):
        p.add_argument("--utility", required=True, help='e.g. "capped_sqrt:cap=2" or "pl:0:0,1:1"')
        p.add_argument("--w0", type=float, default=1.0)
        p.add_argument("--mode", default="intermediate", choices=[m.value for m in optimizer.AdmissibilityMode])

    p = add("optimize", cmd_optimize, "robust utility maximisation")
    utility_flags(p)
    p.add_argument("--method", default="lp", choices=["lp", "supergradient"])
    p.add_argument("--iters", type=int, default=2000)
    p = add("evaluate", cmd_evaluate, "robust expected utility of a given strategy")
    p.add_argument("--utility", required=True)
    p.add_argument("--w0", type=float, default=1.0)
    p.add_argument("--strategy", required=True, help="JSON number or list (constant or full vector)")
    p = add("example", cmd_example, "write a built-in market")
    p.add_argument("name", choices=sorted(EXAMPLES))
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--M", type=float, default=100.0)
    p.add_argument("--n", type=int, default=201)
    p.add_argument("--T", type=int, default=2)
    p.add_argument("--p", type=float, default=0.5)
    p.add_argument("--s0", type=float, default=0.0)
    p.add_argument("--sigma", type=float, default=1.0)
    p.add_argument("--mu", type=float, default=0.0)
    add("time-consistency", cmd_time_consistency,
        "rectangularity of the two-period laws (built-in two-drift example without --market)")
    utility_flags(add("hypotheses", cmd_hypotheses, "which existence theorems' hypotheses hold"))
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Output(args.json)
    try:
        code = args.func(args, out)
    except VerdictError as exc:
        print(f"verdict: {exc}", file=sys.stderr)
        return EXIT_VERDICT
    except (InputError, OSError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    out.finish()
    return code


if __name__ == "__main__":
    sys.exit(main())
