"""Command-line entry point. Exit codes: 0 success, 2 bad input, 3 numerical failure."""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import concentration, envs, harness
from .agents import AgentConfig, theorem_bound_evaluators
from .errors import ConfigError, NumericalError
from .kl_geometry import confidence_constants
from .mdp_core import mdp_profile

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_seeds(text: str) -> list[int]:
    """``"a..b"`` (inclusive) or a comma-separated list."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            seeds = list(range(int(lo), int(hi) + 1))
        else:
            seeds = [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"--seeds: cannot parse {text!r}") from None
    if not seeds:
        raise ConfigError(f"--seeds: empty range {text!r}")
    return seeds


def _read_json(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def _emit(payload, out) -> None:
    if out:
        harness.write_json(out, payload)
    else:
        print(json.dumps(payload, indent=2))


def cmd_analyze(args) -> None:
    rows, reports = [], []
    for path in args.env:
        _, report = harness.analyze_mdp(_read_json(path), T=args.T, delta=args.delta,
                                        mixing_cap=args.mixing_cap)
        report["env"] = str(path)
        reports.append(report)
        rows.append(report["row"])
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        harness.write_json(out / "analyze.json", reports if len(reports) > 1 else reports[0])
        harness.write_rows_csv(out / "analyze.csv", rows)
    else:
        harness.write_rows_csv(sys.stdout, rows)


def cmd_run(args) -> None:
    env_cfg = _read_json(args.env)
    agent_cfg = AgentConfig.from_dict(_read_json(args.agent))
    seeds = parse_seeds(args.seeds)
    result = harness.batch_run(env_cfg, agent_cfg, args.T, seeds, args.initial_state)
    out = Path(args.out)
    (out / "traces").mkdir(parents=True, exist_ok=True)
    for seed, trace in result.traces.items():
        trace.write_csv(out / "traces" / f"{seed}.csv")
    result.write_csv(out / "aggregate.csv")
    harness.write_json(out / "config_echo.json", {
        "env": env_cfg, "agent": agent_cfg.to_dict(), "T": args.T, "seeds": sorted(result.traces),
        "initial_state": args.initial_state,
        "gain_opt": next(iter(result.traces.values())).gain_opt,
        "episodes": {str(s): t.n_episodes for s, t in result.traces.items()},
    })


def cmd_bounds(args) -> None:
    mdp = envs.env_from_dict(_read_json(args.env))
    S, A = mdp.n_states, mdp.n_actions
    profile = mdp_profile(mdp, mixing_cap=0)
    c = confidence_constants(S, A, args.T, args.delta)
    payload = {
        "S": S, "A": A, "T": args.T, "delta": args.delta,
        "constants": {"B": c.B, "G": c.G, "C_p": c.C_p, "C_mu": c.C_mu, "four_S_B": 4 * S * c.B},
        **theorem_bound_evaluators(profile, S, A, args.T, args.delta),
    }
    _emit(payload, args.out)


def cmd_conc_test(args) -> None:
    cfg = concentration.ScanConfig(samples=args.samples, seed=args.seed, shards=args.shards,
                                   min_dim=args.min_dim, max_dim=args.max_dim)
    report = concentration.inequality_scan(cfg)
    _emit({"seed": args.seed, "samples": args.samples, "slack": concentration.SLACK,
           "inequalities": report.to_dict(), "total_violations": report.total_violations}, args.out)


def cmd_lower_bound(args) -> None:
    cfg = envs.TwoStateHardConfig(delta=args.delta, eps=args.eps, n_actions=args.A)
    mdp, closed = envs.make_two_state_hard(cfg)
    profile = mdp_profile(mdp)
    bounds = theorem_bound_evaluators(profile, 2, args.A, args.T, args.delta_conf)
    _emit({
        "delta": args.delta, "eps": args.eps, "A": args.A, "T": args.T,
        "closed_form": vars(closed),
        "numeric": {"gain_opt": profile.gain_opt, "span_bias": profile.span_bias,
                    "v_max": profile.v_max, "diameter": profile.diameter,
                    "gaps": profile.gaps.tolist()},
        "lb": bounds["lb"],
    }, args.out)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="klucrl", description="KL-UCRL laboratory for average-reward MDPs.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="profile MDPs and emit Table-shaped CSV rows")
    a.add_argument("--env", nargs="+", required=True, help="environment JSON file(s)")
    a.add_argument("--mixing-cap", type=int, default=4096,
                   help="enumerate policies for the mixing time only if A**S <= cap (0 disables)")
    a.add_argument("-T", type=float, default=1e5)
    a.add_argument("--delta", type=float, default=0.05)
    a.add_argument("--out", help="directory for analyze.json and analyze.csv (default: CSV to stdout)")
    a.set_defaults(func=cmd_analyze)

    r = sub.add_parser("run", help="simulate an agent over a range of seeds")
    r.add_argument("--env", required=True)
    r.add_argument("--agent", required=True)
    r.add_argument("-T", type=int, required=True)
    r.add_argument("--seeds", default="0..0", help="inclusive range a..b or comma list")
    r.add_argument("--initial-state", type=int, default=0)
    r.add_argument("--out", required=True)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="confidence constants and regret-bound values")
    b.add_argument("--env", required=True)
    b.add_argument("-T", type=float, required=True)
    b.add_argument("--delta", type=float, default=0.05)
    b.add_argument("--out")
    b.set_defaults(func=cmd_bounds)

    c = sub.add_parser("conc-test", help="scan the concentration inequalities for violations")
    c.add_argument("--samples", type=int, default=100_000)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--shards", type=int, default=1)
    c.add_argument("--min-dim", type=int, default=2)
    c.add_argument("--max-dim", type=int, default=8)
    c.add_argument("--out")
    c.set_defaults(func=cmd_conc_test)

    lb = sub.add_parser("lower-bound", help="two-state hard instance and its lower bound")
    lb.add_argument("--delta", type=float, required=True, help="leave probability, in (0, 1/3)")
    lb.add_argument("--eps", type=float, required=True, help="advantage of the best action")
    lb.add_argument("-A", type=int, default=2)
    lb.add_argument("-T", type=float, default=1e6)
    lb.add_argument("--delta-conf", type=float, default=0.05, help="confidence level for B")
    lb.add_argument("--out")
    lb.set_defaults(func=cmd_lower_bound)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_CONFIG
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"klucrl {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"klucrl {args.command}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, FloatingPointError, ArithmeticError, AssertionError) as exc:
        print(f"klucrl {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
