"""``eds`` command-line entry point.

Exit status: 0 on success, 1 on a domain or configuration error, 2 on a
usage error (argparse's own convention).
"""
from __future__ import annotations

import argparse
import asyncio
import csv
import io
import logging
import math
import signal
import sys
from pathlib import Path
from typing import Any, Iterable, Optional, Sequence

from . import economics as econ
from .config import PRESET_NAMES, EdsConfig, load_config, load_keys, preset
from .errors import EdsError

log = logging.getLogger("eds")

ALL_PRESETS = (*PRESET_NAMES, "disabled")


def format_table(headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> str:
    def cell(v: Any) -> str:
        if isinstance(v, float):
            if math.isnan(v) or math.isinf(v):
                return str(v)
            return f"{v:,.6g}" if abs(v) < 1e6 else f"{v:,.0f}"
        return "-" if v is None else str(v)

    body = [[cell(v) for v in r] for r in rows]
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(headers)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(headers, widths)).rstrip(),
             "  ".join("-" * w for w in widths)]
    for r in body:
        lines.append("  ".join(v.rjust(w) if i else v.ljust(w) for i, (v, w) in enumerate(zip(r, widths))).rstrip())
    return "\n".join(lines)


def write_csv(path: Optional[Path], headers: Sequence[str], rows: Iterable[Sequence[Any]]) -> None:
    if path is None:
        return
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(headers)
    w.writerows(rows)
    path.write_text(buf.getvalue())


def _resolve_config(args: argparse.Namespace) -> EdsConfig:
    if getattr(args, "config", None):
        cfg = load_config(args.config)
        if args.preset_given:
            log.warning("--config given; ignoring --preset")
        return cfg
    return preset(args.preset)


def _params(args: argparse.Namespace) -> econ.CostParams:
    return econ.CostParams(
        attempts=args.attempts,
        hash_cost=args.hash_cost,
        time_value=args.time_value,
        bandwidth_cost=args.bandwidth_cost,
        data_size=args.data_size,
    )


def _theta(args: argparse.Namespace) -> econ.Theta:
    base = econ.Theta.from_config(_resolve_config(args))
    return econ.Theta(
        base.d if args.d is None else args.d,
        base.rho if args.rho is None else args.rho,
        base.delay if args.delay is None else args.delay,
        base.gamma if args.gamma is None else args.gamma,
    )


# --- economics ----------------------------------------------------------------

def cmd_optimize(args: argparse.Namespace) -> int:
    d = econ.optimal_difficulty(args.benefit, args.attempts, args.hash_cost)
    print(f"d*={d}")
    print(f"attacker puzzle cost at d*: ${args.attempts * 2.0 ** (d - 1) * args.hash_cost:,.4f} "
          f"(benefit ${args.benefit:,.4f})")
    write_csv(args.out, ["benefit", "attempts", "hash_cost", "d_star"],
              [[args.benefit, args.attempts, args.hash_cost, d]])
    return 0


def cmd_cost(args: argparse.Namespace) -> int:
    theta, params = _theta(args), _params(args)
    b = econ.total_attacker_cost(theta, params)
    print(f"theta: d={theta.d} rho={theta.rho} delay={theta.delay}s gamma={theta.gamma}; N={params.attempts:g}")
    rows = [
        ("compute_cost", b.compute_cost),
        ("time_cost", b.time_cost),
        ("bandwidth_cost", b.bandwidth_cost),
        ("total C_A", b.total),
        ("C1 puzzle", b.c1_puzzle),
        ("C2 decoy", b.c2_decoy),
        ("C3 delay", b.c3_delay),
        ("C4 tax", b.c4_tax),
        ("defender C_D", b.defender),
        ("asymmetry", b.asymmetry),
        ("superlinearity", b.superlinearity),
    ]
    print(format_table(["component", "value"], rows))
    note = econ.quoted_figure_check(theta, params)
    if note:
        print(note)
    write_csv(args.out, ["component", "value"], [(k, repr(v)) for k, v in rows])
    return 0


def cmd_deter(args: argparse.Namespace) -> int:
    rows = []
    for p in econ.PROFILES:
        d = econ.deterrence_threshold(p, args.attempts, args.benefit, args.hash_cost)
        rows.append((p.name, p.budget, max(p.rates()), d, p.reported_threshold))
    headers = ["profile", "budget", "best_rate", "threshold", "reported"]
    print(format_table(headers, rows))
    print("threshold '-' means no d in [1, 32] deters the profile")
    write_csv(args.out, headers, rows)
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    theta, params = _theta(args), _params(args)
    res = econ.sensitivity_sweep(theta, params, args.fraction)
    rows = [(f"{hc:g}", f"{tv:g}", a) for (hc, tv), a in res.grid.items()]
    headers = ["hash_cost_x", "time_value_x", "asymmetry"]
    print(format_table(headers, rows))
    print(f"min asymmetry: {res.min_asymmetry:,.1f}:1")
    write_csv(args.out, headers, rows)
    return 0


def cmd_mitigate(args: argparse.Namespace) -> int:
    m = econ.combined_mitigation(args.p_detect, args.asr)
    print(f"mitigation={m:.6f}")
    write_csv(args.out, ["p_detect", "asr", "mitigation"], [[args.p_detect, args.asr, m]])
    return 0


# --- harness ------------------------------------------------------------------

RESULT_COLUMNS = ("scenario", "strategy", "preset", "seed", "budget", "wall_time", "baseline_time", "slowdown",
                  "asr", "completion", "hashes", "requests", "interactions", "bytes_received",
                  "attacker_dollars", "defender_dollars")


def cmd_attack(args: argparse.Namespace) -> int:
    from .harness import stats
    from .harness.scenarios import SCENARIOS, Strategy, run_scenario

    cfg = _resolve_config(args)
    strategy = Strategy.parse(args.strategy)
    seeds = [args.seed + i for i in range(args.trials)]
    results = [run_scenario(SCENARIOS[args.scenario], strategy, cfg, args.budget, s) for s in seeds]
    rows = [[getattr(r, c) for c in RESULT_COLUMNS] for r in results]
    write_csv(args.out, RESULT_COLUMNS, [[repr(v) if isinstance(v, float) else v for v in r] for r in rows])

    print(f"scenario={args.scenario} strategy={strategy.label} preset={cfg.preset} trials={args.trials} "
          f"seeds={seeds[0]}..{seeds[-1]}")
    metrics = [("attack time (s)", "baseline_time", "wall_time"), ("slowdown", None, "slowdown"),
               ("attack success rate", None, "asr"), ("attacker $", None, "attacker_dollars"),
               ("defender $", None, "defender_dollars"), ("hashes", None, "hashes")]
    table = []
    for label, base_attr, attr in metrics:
        vals = [float(getattr(r, attr)) for r in results]
        if len(vals) >= 2:
            s = stats.summarize(vals)
            ci = f"[{s.ci_low:,.4g}, {s.ci_high:,.4g}]"
            mean = s.mean
        else:
            mean, ci = vals[0], "-"
        base = None
        if base_attr:
            base = sum(getattr(r, base_attr) for r in results) / len(results)
        table.append((label, base, mean, ci))
    print(format_table(["metric", "no defense", "defended", "95% CI"], table))
    if len(results) >= 2:
        w = stats.welch([r.wall_time for r in results], [r.baseline_time for r in results])
        print(f"Welch t-test, defended vs no-defense attack time: t={w.t:.4g} df={w.df:.4g} p={w.p:.3g}")
    return 0


def cmd_compose(args: argparse.Namespace) -> int:
    from .harness.scenarios import SCENARIOS, run_composition_study

    cfg = _resolve_config(args)
    st = run_composition_study(SCENARIOS[args.scenario], cfg, args.seed, args.strategy)
    rows = [(f"{m} only", s) for m, s in st.slowdowns.items()]
    rows += [("sum of excess + 1", st.excess_sum), ("sum of ratios", st.ratio_sum),
             ("combined", st.combined), ("factor (excess convention)", st.factor),
             ("factor (ratio-sum convention)", st.factor_ratio_sum), ("analytic factor", st.analytic)]
    print(f"composition study: scenario={args.scenario} preset={cfg.preset} seed={args.seed}")
    print(format_table(["row", "slowdown"], rows))
    print("factor = combined / (1 + sum of (slowdown - 1) over single mechanisms)")
    write_csv(args.out, ["row", "value"], [(k, repr(v)) for k, v in rows])
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from .harness.bench import compare_difficulties, run_throughput_bench

    r = run_throughput_bench(args.difficulty, args.clients, args.duration)
    rows = [(r.clients, r.difficulty, r.duration, r.verified, r.rps, r.p50_ms, r.p99_ms)]
    headers = ["clients", "d", "seconds", "verified", "req_per_s", "p50_ms", "p99_ms"]
    print(format_table(headers, rows))
    if args.compare is not None:
        lo, hi = compare_difficulties(args.difficulty, args.compare)
        print(f"in-process verification: d={args.difficulty} {lo:,.0f}/s, d={args.compare} {hi:,.0f}/s, "
              f"ratio {hi / lo:.3f}")
    write_csv(args.out, headers, rows)
    return 0


# --- gateway ------------------------------------------------------------------

def _listen(text: str) -> tuple[str, int]:
    host, sep, port = text.rpartition(":")
    if not sep:
        raise argparse.ArgumentTypeError("expected HOST:PORT")
    try:
        return host or "127.0.0.1", int(port)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad port in {text!r}") from None


def cmd_serve(args: argparse.Namespace) -> int:
    from dataclasses import replace

    from .gateway import Gateway
    from .server import serve

    cfg = _resolve_config(args)
    overrides: dict[str, Any] = {}
    if args.capacity is not None:
        overrides["capacity"] = args.capacity
    if args.data_prefix:
        overrides["data_prefixes"] = tuple(args.data_prefix)
    if args.bypass_token:
        overrides["bypass_tokens"] = frozenset(args.bypass_token)
    cfg = replace(cfg, **overrides)
    server_key, watermark_key = load_keys(args.key_file)
    gateway = Gateway(cfg.with_keys(server_key, watermark_key))
    host, port = args.listen

    async def main() -> None:
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except (NotImplementedError, RuntimeError):
                pass
        await serve(gateway, host, port, stop, args.telemetry)

    asyncio.run(main())
    return 0


# --- parser -------------------------------------------------------------------

class _PresetAction(argparse.Action):
    def __call__(self, parser, namespace, values, option_string=None):
        setattr(namespace, self.dest, values)
        namespace.preset_given = True


def _add_config(p: argparse.ArgumentParser) -> None:
    p.add_argument("--preset", choices=ALL_PRESETS, default="moderate", action=_PresetAction,
                   help="named defender configuration (default: moderate)")
    p.add_argument("--config", type=Path, help="JSON config file; overrides --preset")


def _add_out(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, help="also write comma-separated results here")


def _add_params(p: argparse.ArgumentParser, attempts: float = 10_000) -> None:
    d = econ.CostParams()
    p.add_argument("--attempts", type=float, default=attempts, help=f"attempt count N (default: {attempts:g})")
    p.add_argument("--hash-cost", type=float, default=d.hash_cost, help=f"$ per hash (default: {d.hash_cost:g})")
    p.add_argument("--time-value", type=float, default=d.time_value,
                   help=f"attacker $ per hour (default: {d.time_value:g})")
    p.add_argument("--bandwidth-cost", type=float, default=d.bandwidth_cost,
                   help=f"$ per GB (default: {d.bandwidth_cost:g})")
    p.add_argument("--data-size", type=float, default=d.data_size, help=f"GB per context (default: {d.data_size:g})")


def _add_theta(p: argparse.ArgumentParser) -> None:
    _add_config(p)
    p.add_argument("--d", type=int, help="difficulty override")
    p.add_argument("--rho", type=float, help="decoy ratio override")
    p.add_argument("--delay", type=float, help="per-request delay override, seconds")
    p.add_argument("--gamma", type=float, help="bandwidth tax factor override")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="eds", description="Cost-imposing gateway, attack harness and economics.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("serve", help="run the TCP gateway")
    _add_config(p)
    p.add_argument("--listen", type=_listen, default=("127.0.0.1", 7400), metavar="HOST:PORT",
                   help="listen address (default: 127.0.0.1:7400)")
    p.add_argument("--key-file", type=Path, help="hex key file (default: $EDS_KEY_FILE)")
    p.add_argument("--capacity", type=int, help="client table capacity")
    p.add_argument("--data-prefix", action="append", metavar="PREFIX", help="data path prefix (repeatable)")
    p.add_argument("--bypass-token", action="append", metavar="TOKEN", help="fast-path token (repeatable)")
    p.add_argument("--telemetry", type=Path, help="write telemetry JSON here on shutdown")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("attack", help="simulate an attack scenario on virtual time")
    p.add_argument("--scenario", choices=("s1", "s2", "s3", "s4"), default="s1", help="scenario (default: s1)")
    p.add_argument("--strategy", default="naive",
                   help="naive, parallel[:K], rate_optimized, ip_rotating, decoy_filtering[:ACC:FPR], "
                        "combined[:K] (default: naive)")
    _add_config(p)
    p.add_argument("--trials", type=int, default=10, help="number of seeds (default: 10)")
    p.add_argument("--seed", type=int, default=0, help="first seed (default: 0)")
    p.add_argument("--budget", type=float, help="attacker budget in $ (default: per scenario)")
    _add_out(p)
    p.set_defaults(func=cmd_attack)

    p = sub.add_parser("compose", help="single-mechanism vs combined slowdown study")
    p.add_argument("--scenario", choices=("s1", "s2", "s3", "s4"), default="s1", help="scenario (default: s1)")
    p.add_argument("--strategy", default="naive", help="attacker strategy (default: naive)")
    _add_config(p)
    p.add_argument("--seed", type=int, default=0, help="seed (default: 0)")
    _add_out(p)
    p.set_defaults(func=cmd_compose)

    p = sub.add_parser("bench", help="real-clock throughput benchmark over TCP")
    p.add_argument("--clients", type=int, default=1000, help="concurrent clients (default: 1000)")
    p.add_argument("--duration", type=float, default=5.0, help="seconds (default: 5)")
    p.add_argument("--difficulty", type=int, default=8, help="puzzle difficulty (default: 8)")
    p.add_argument("--compare", type=int, metavar="D", help="also compare in-process verification against D")
    _add_out(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("optimize", help="optimal puzzle difficulty for a given attack benefit")
    p.add_argument("--benefit", type=float, required=True, help="attacker benefit in $")
    p.add_argument("--attempts", type=float, default=10_000, help="attempt count N (default: 10000)")
    p.add_argument("--hash-cost", type=float, default=econ.CostParams.hash_cost, help="$ per hash")
    _add_out(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("cost", help="attacker and defender cost breakdown")
    _add_theta(p)
    _add_params(p)
    _add_out(p)
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("deter", help="deterrence difficulty per attacker profile")
    p.add_argument("--attempts", type=float, default=10_000, help="attempt count N (default: 10000)")
    p.add_argument("--benefit", type=float, default=math.inf, help="attack benefit in $ (default: unbounded)")
    p.add_argument("--hash-cost", type=float, default=econ.CostParams.hash_cost, help="$ per hash")
    _add_out(p)
    p.set_defaults(func=cmd_deter)

    p = sub.add_parser("sweep", help="cost-asymmetry sensitivity to hash cost and time value")
    _add_theta(p)
    _add_params(p)
    p.add_argument("--fraction", type=float, default=0.5, help="relative perturbation (default: 0.5)")
    _add_out(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("mitigate", help="combine a detector with cost imposition")
    p.add_argument("--p-detect", type=float, required=True, help="detector catch probability")
    p.add_argument("--asr", type=float, required=True, help="attack success rate under cost imposition")
    _add_out(p)
    p.set_defaults(func=cmd_mitigate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not hasattr(args, "preset_given"):
        args.preset_given = False
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except EdsError as exc:
        print(f"eds: error: {exc}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
