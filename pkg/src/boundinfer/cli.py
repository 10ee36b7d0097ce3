"""Command-line entry point.

Exit codes: 0 success, 1 domain failure, 2 usage or parse failure.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import engines
from .errors import BoundInferError, NetworkParseError, NetworkValidationError, OracleCapExceeded
from .exact import ORACLE_CAP, variable_elimination
from .generators import problem_class
from .meta import CATALOG_ENV, load_catalog, peak, profile_strategy, save_profile, select_strategy
from .network import Evidence, Query, load_network, parse_network
from .scenarios import BUILTIN, builtin_scenario, load_scenario, run_scenario
from .value import load_context, validate_tradeoff

STRATEGIES = ("exact", "sample", "bounds", "modulate", "default")


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise UsageError(f"expected comma-separated integers, got {text!r}") from None


def _read(path) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror}") from None


def _default_table(args) -> engines.DefaultPolicyTable:
    if args.table:
        try:
            return engines.DefaultPolicyTable.parse(_read(args.table))
        except (ValueError, KeyError, TypeError) as exc:
            raise UsageError(f"malformed default policy table: {exc}") from None
    return engines.DefaultPolicyTable(
        {args.context: engines.DefaultEntry("default", args.default_precision, args.availability)}
    )


def cmd_validate(args) -> int:
    text = _read(args.network)
    try:
        parse_network(text)
    except NetworkValidationError as exc:
        print(exc.report)
        return 1
    print("OK: no violations")
    return 0


def cmd_infer(args) -> int:
    net = parse_network(_read(args.network))
    ev = Evidence.parse(args.evidence)
    q = Query.parse(args.query)
    start = time.perf_counter()
    if args.strategy == "exact":
        p = variable_elimination(net, ev, q).probability
        est = engines.Estimate(p, p, p, 1, True)
    else:
        if args.strategy == "sample":
            engine = engines.make_logic_sampler(net, ev, q, args.seed)
        elif args.strategy == "bounds":
            engine = engines.make_bound_propagator(net, ev, q)
        elif args.strategy == "modulate":
            engine = engines.make_completeness_modulator(net, ev, q, _floats(args.ladder))
        else:
            engine = engines.make_default_policy(_default_table(args), args.context)
        est = engine.step(args.budget).estimate()
    elapsed = time.perf_counter() - start
    print(f"strategy={args.strategy}")
    print(f"query=P({q.target}={q.target_state} | {','.join(f'{k}={v}' for k, v in ev.items()) or '-'})")
    print(f"mean={est.mean:.12g}")
    print(f"interval=[{est.low:.12g}, {est.high:.12g}]")
    print(f"width={est.width:.12g}")
    print(f"precision={est.precision:.12g}")
    print(f"steps={est.support}")
    print(f"well_founded={str(est.well_founded).lower()}")
    print(f"elapsed_s={elapsed:.6f}  # wall-clock")
    return 0


def cmd_scenario(args) -> int:
    if args.scenario in BUILTIN:
        cfg = builtin_scenario(args.scenario)
    else:
        if not Path(args.scenario).is_file():
            raise UsageError(f"{args.scenario!r} is neither a builtin scenario ({', '.join(BUILTIN)}) nor a file")
        cfg = load_scenario(args.scenario)
    if args.grid_n is not None:
        if args.grid_n < 2:
            raise UsageError("--grid-n must be at least 2")
        cfg = type(cfg)(**{**cfg.__dict__, "grid_n": args.grid_n})
    csv_text, decision, posterior = run_scenario(cfg)
    output = args.output or cfg.output
    if output:
        Path(output).write_text(csv_text, encoding="utf-8")
    else:
        sys.stdout.write(csv_text)
    print(f"POSTERIOR P({cfg.query.target}={cfg.query.target_state})={posterior:.10g}")
    print(decision.summary())
    if args.overhead:
        print(f"metalevel_overhead_s={decision.metalevel_overhead:.6f}", file=sys.stderr)
    return 0


def cmd_select(args) -> int:
    catalog = load_catalog(args.catalog)
    ctx = load_context(args.context_file)
    decision = select_strategy(catalog, ctx, args.horizon, args.grid_n)
    for sid in sorted(decision.curves):
        t, v = peak(decision.curves[sid])
        print(f"{sid} t_peak={t:.6g} v_c_peak={v:.6g}")
    print(decision.summary())
    return 0


def cmd_profile(args) -> int:
    if args.nodes > ORACLE_CAP:
        raise OracleCapExceeded(f"{args.nodes} binary nodes exceeds the oracle cap of {ORACLE_CAP}")
    if args.nodes < 2:
        raise UsageError("--nodes must be at least 2")
    checkpoints = _ints(args.checkpoints)
    modulate = args.strategy == "modulate"
    sampler = problem_class(args.nodes, args.max_evidence, importance=modulate)
    if args.strategy == "sample":
        factory = lambda net, ev, q, seed: engines.make_logic_sampler(net, ev, q, seed)  # noqa: E731
    elif args.strategy == "bounds":
        factory = lambda net, ev, q, seed: engines.make_bound_propagator(net, ev, q)  # noqa: E731
    elif modulate:
        ladder = _floats(args.ladder)
        factory = lambda net, ev, q, seed: engines.make_completeness_modulator(net, ev, q, ladder)  # noqa: E731
    else:
        table = _default_table(args)
        factory = lambda net, ev, q, seed: engines.make_default_policy(table, args.context)  # noqa: E731
    profile = profile_strategy(
        factory,
        sampler,
        checkpoints,
        args.trials,
        args.seed,
        strategy_id=args.strategy_id or args.strategy,
        problem_class=f"random-binary-{args.nodes}",
        quantile=args.quantile,
        steps_per_second=args.steps_per_second,
        workers=args.workers,
    )
    if len(profile.points) > 1 and not validate_tradeoff(profile.points).valid:
        raise BoundInferError("profile failed the precision/delay tradeoff check")
    path = save_profile(profile, args.out)
    print(f"wrote {path}")
    for t, p in profile.points:
        print(f"t={t:.6g} precision={p:.6g}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="boundinfer", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", help="check a network file")
    p.add_argument("network")
    p.set_defaults(func=cmd_validate)

    def add_default_flags(p):
        p.add_argument("--table", help="default-policy table file (JSON list)")
        p.add_argument("--context", default="default", help="context key in the default-policy table")
        p.add_argument("--default-precision", type=float, default=0.15)
        p.add_argument("--availability", type=int, default=1)

    p = sub.add_parser("infer", help="run exact or anytime inference")
    p.add_argument("network")
    p.add_argument("--evidence", default="", help="VAR=STATE[,VAR=STATE...]")
    p.add_argument("--query", required=True, help="VAR=STATE")
    p.add_argument("--strategy", choices=STRATEGIES, default="exact")
    p.add_argument("--budget", type=int, default=1000, help="steps for anytime strategies")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--ladder", default="0.5,0", help="importance thresholds for modulate")
    add_default_flags(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("scenario", help="emit comprehensive-value curves and the selection")
    p.add_argument("scenario", help=f"builtin name ({', '.join(BUILTIN)}) or scenario file")
    p.add_argument("-o", "--output", help="CSV destination (default stdout)")
    p.add_argument("--grid-n", type=int)
    p.add_argument("--overhead", action="store_true", help="report metalevel wall-clock on stderr")
    p.set_defaults(func=cmd_scenario)

    p = sub.add_parser("select", help="select a strategy from a profile catalog")
    p.add_argument("--catalog", help=f"profile directory (default ${CATALOG_ENV})")
    p.add_argument("--context-file", required=True, help="value context JSON")
    p.add_argument("--horizon", type=float, required=True)
    p.add_argument("--grid-n", type=int, default=512)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("profile", help="build an empirical precision profile")
    p.add_argument("--strategy", choices=STRATEGIES[1:], required=True)
    p.add_argument("--strategy-id", help="id written into the profile (default: strategy name)")
    p.add_argument("--nodes", type=int, default=6, help="binary nodes per random problem")
    p.add_argument("--max-evidence", type=int, default=2)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--checkpoints", default="1,10,100")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--quantile", type=float, default=0.95)
    p.add_argument("--steps-per-second", type=float, help="fixed step rate; measured when omitted")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--ladder", default="0.5,0")
    p.add_argument("--out", required=True, help="catalog directory to write into")
    add_default_flags(p)
    p.set_defaults(func=cmd_profile)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, NetworkParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except NetworkValidationError as exc:
        print(f"error: invalid network\n{exc.report}", file=sys.stderr)
        return 1
    except BoundInferError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
