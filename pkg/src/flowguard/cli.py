"""Command-line front end.

Exit status: 0 on success with no violations, 2 when replay found
violations, 1 for usage and runtime errors.
"""

from __future__ import annotations

import argparse
import json
import statistics
import sys
import time
from pathlib import Path

from .attacks import ATTACK_KINDS, AttackSpec, evaluate_under_attack
from .defenses import DefenseSpec, evaluate_defense
from .errors import FlowGuardError
from .monitor import ReplaySummary, replay
from .objects import World
from .policy import PolicyConfig
from .scenarios import SCENARIO_KINDS, corpus, generate_scenario, write_corpus
from .trace import parse_trace

EXIT_OK, EXIT_ERROR, EXIT_VIOLATIONS = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: error: {message}\n{self.format_usage()}")


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"{text} is not a u64")
    return value


def _grid(text: str) -> list[float]:
    try:
        values = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not values:
        raise argparse.ArgumentTypeError("grid is empty")
    return values


def _attack(text: str) -> AttackSpec:
    """``kind[:value]``, e.g. ``fgsm:0.05``, ``pgd:0.5`` or ``delay:32``."""
    kind, _, value = text.partition(":")
    if kind not in ATTACK_KINDS:
        raise argparse.ArgumentTypeError(f"unknown attack {kind!r}")
    spec = AttackSpec(kind)
    if value:
        try:
            spec = spec.at(float(value))
        except ValueError:
            raise argparse.ArgumentTypeError(f"bad attack value {value!r}") from None
    return spec


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="flowguard", description="DIFC trace monitor and adversarial-signal lab")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("replay", help="replay a trace through the monitor")
    r.add_argument("trace", type=Path)
    r.add_argument("--policy", type=Path)
    r.add_argument("--report", type=Path, help="write the JSON report here")
    r.add_argument("--floating", action="store_true", help="let labels float on reads")

    g = sub.add_parser("gen", help="generate one scenario trace")
    g.add_argument("--av", required=True, choices=SCENARIO_KINDS)
    g.add_argument("--seed", required=True, type=_u64)
    g.add_argument("--out", type=Path)
    g.add_argument("--truth", type=Path, help="write ground-truth seqs as JSON")

    c = sub.add_parser("corpus", help="generate a scenario corpus")
    c.add_argument("--n", required=True, type=int)
    c.add_argument("--seed", required=True, type=_u64)
    c.add_argument("--dir", required=True, type=Path)

    a = sub.add_parser("attack", help="accuracy of the toy model under attack")
    a.add_argument("--kind", required=True, choices=ATTACK_KINDS)
    a.add_argument("--grid", required=True, type=_grid)
    a.add_argument("--seed", type=_u64, default=7)
    a.add_argument("--samples", type=int, default=400)
    a.add_argument("--out", type=Path)

    d = sub.add_parser("defend", help="accuracy with and without a squeezing filter")
    d.add_argument("--filter", required=True, choices=("mavg", "median", "savgol", "noise"))
    d.add_argument("--attack", required=True, type=_attack)
    d.add_argument("--window", type=int, default=5)
    d.add_argument("--order", type=int, default=2)
    d.add_argument("--sigma", type=float, default=0.1)
    d.add_argument("--seed", type=_u64, default=7)
    d.add_argument("--samples", type=int, default=400)
    d.add_argument("--out", type=Path)

    b = sub.add_parser("bench", help="time a core operation")
    b.add_argument("--op", required=True, choices=("a_enable", "a_add", "flow_check"))
    b.add_argument("--iters", type=int, default=1000)
    return p


def format_table(summary: ReplaySummary) -> str:
    c = summary.counters
    lines = [f"events={c['events']} allowed={c['allowed']} denied={c['denied']}"]
    if summary.reports:
        lines.append(f"{'seq':>6}  {'rule':<26} {'subject':>7} {'object':>7}  {'av':<4} note")
        for r in summary.reports:
            obj = "-" if r.object is None else str(r.object)
            av = r.av_class.value if r.av_class else "-"
            lines.append(f"{r.seq:>6}  {r.rule.value:<26} {r.subject:>7} {obj:>7}  {av:<4} {r.note}")
    return "\n".join(lines)


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        out.write_text(text, encoding="utf-8")


def _cmd_replay(args) -> int:
    policy = PolicyConfig.load(args.policy) if args.policy else None
    events = parse_trace(args.trace.read_bytes())
    summary = replay(World(), events, policy, floating=args.floating)
    print(format_table(summary))
    if args.report:
        args.report.write_text(summary.to_json(), encoding="utf-8")
    return EXIT_VIOLATIONS if summary.reports else EXIT_OK


def _cmd_gen(args) -> int:
    sc = generate_scenario(args.av, args.seed)
    if args.out is None:
        sys.stdout.buffer.write(sc.to_bytes())
    else:
        args.out.write_bytes(sc.to_bytes())
    if args.truth:
        args.truth.write_text(json.dumps(list(sc.ground_truth)) + "\n", encoding="utf-8")
    return EXIT_OK


def _cmd_corpus(args) -> int:
    manifest = write_corpus(corpus(args.n, args.seed), args.dir)
    print(manifest)
    return EXIT_OK


def _toy(seed: int, samples: int):
    from .nn import train_toy
    return train_toy(seed, samples)


def _cmd_attack(args) -> int:
    net, data = _toy(args.seed, args.samples)
    table = evaluate_under_attack(net, data.x_test, data.y_test, AttackSpec(args.kind),
                                  args.grid, seed=args.seed)
    _emit(table.to_csv(), args.out)
    return EXIT_OK


def _cmd_defend(args) -> int:
    net, data = _toy(args.seed, args.samples)
    kind = args.filter
    defense = DefenseSpec(kind, window=args.window, order=args.order, sigma=args.sigma)
    res = evaluate_defense(net, data.x_test, data.y_test, args.attack, defense, seed=args.seed)
    _emit(f"param,accuracy\nattacked,{res.attacked:.6f}\ndefended,{res.defended:.6f}\n", args.out)
    return EXIT_OK


def _cmd_bench(args) -> int:
    from .api import SLABEL, a_add, a_cleanup, a_enable
    from .labels import Direction, Label, check_flow_allowed
    from .objects import ObjectKind

    if args.iters < 1:
        raise UsageError("--iters must be positive")
    samples = []
    if args.op == "a_enable":
        world = World()
        for _ in range(args.iters):
            t0 = time.perf_counter_ns()
            session = a_enable(world)
            samples.append(time.perf_counter_ns() - t0)
            a_cleanup(session)
    elif args.op == "a_add":
        world = World()
        session = a_enable(world)
        owner = session.process
        for i in range(args.iters):
            world.create_object(ObjectKind.FILE, f"/bench/{i}", owner)
        for i in range(args.iters):
            t0 = time.perf_counter_ns()
            a_add(session, f"/bench/{i}", [SLABEL], ["bench"])
            samples.append(time.perf_counter_ns() - t0)
    else:
        subject = Label(frozenset({1, 2}), frozenset({3}))
        obj = Label(frozenset({1, 2, 4}), frozenset())
        for _ in range(args.iters):
            t0 = time.perf_counter_ns()
            check_flow_allowed(subject, obj, Direction.WRITE)
            samples.append(time.perf_counter_ns() - t0)
    us = [s / 1000 for s in samples]
    print(f"op={args.op} iters={args.iters} mean_us={statistics.fmean(us):.3f} "
          f"median_us={statistics.median(us):.3f} min_us={min(us):.3f}")
    return EXIT_OK


COMMANDS = {
    "replay": _cmd_replay,
    "gen": _cmd_gen,
    "corpus": _cmd_corpus,
    "attack": _cmd_attack,
    "defend": _cmd_defend,
    "bench": _cmd_bench,
}


def run(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return COMMANDS[args.command](args)
    except SystemExit as exc:  # --help
        return exc.code if isinstance(exc.code, int) else EXIT_ERROR
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except (FlowGuardError, OSError, ValueError) as exc:
        print(f"flowguard: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


def main() -> None:
    sys.exit(run())
