"""Headline acceptance criteria, one test each.

Every test prints a single ``PASS``/``FAIL`` line; the same lines are
repeated in the pytest terminal summary.
"""

import json
import random
import time

import numpy as np
import pytest

from flowguard.attacks import AttackParams, AttackSpec, delay_attack, evaluate_under_attack, fgsm, pgd
from flowguard.defenses import median_filter, moving_average, savgol_filter
from flowguard.errors import CapacityExceeded, DomainsExhausted, TraceParseError
from flowguard.labels import Label, LabelRegistry, TagKind, can_flow_integrity, can_flow_secrecy
from flowguard.monitor import replay
from flowguard.nn import train_toy
from flowguard.objects import World
from flowguard.scenarios import corpus
from flowguard.trace import Op, TraceEvent, parse_trace, serialize_trace

from conftest import ACCEPTANCE_LINES
from oracles import gradient_relative_error, subset_by_bits


def report(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def toy():
    return train_toy(7)


def test_flow_rule_oracle_equivalence():
    start = time.perf_counter()
    labels = [Label({i for i in range(8) if m >> i & 1}, {i for i in range(8) if m >> i & 1})
              for m in range(256)]
    mismatches = 0
    for a in range(256):
        for b in range(256):
            mismatches += can_flow_secrecy(labels[a], labels[b]) != subset_by_bits(a, b)
            mismatches += can_flow_integrity(labels[a], labels[b]) != subset_by_bits(b, a)
    elapsed = time.perf_counter() - start
    report("flow-rule oracle", mismatches == 0 and elapsed < 5,
           f"{mismatches} mismatches over 2 x 65536 pairs in {elapsed:.2f}s (limit 5s)")


def test_detection_soundness():
    start = time.perf_counter()
    scenarios = corpus(20, 2024)
    fn = fp = 0
    for sc in scenarios:
        got = set(replay(World(), sc.events).violation_seqs)
        truth = set(sc.ground_truth)
        fn += len(truth - got)
        fp += len(got - truth)
    elapsed = time.perf_counter() - start
    benign = sum(sc.av == "benign" for sc in scenarios)
    ok = len(scenarios) == 140 and benign == 20 and fn == 0 and fp == 0 and elapsed < 30
    report("detection soundness", ok,
           f"{len(scenarios)} scenarios, FN={fn} FP={fp} in {elapsed:.2f}s (limit 30s)")


def test_registry_capacity():
    reg = LabelRegistry()
    created = 0
    for i in range(1024):
        reg.create_tag(TagKind.SECRECY if i % 2 else TagKind.INTEGRITY)
        created += 1
    try:
        reg.create_tag(TagKind.SECRECY)
        overflow = "succeeded"
    except CapacityExceeded:
        overflow = "CapacityExceeded"
    report("registry capacity", created == 1024 and overflow == "CapacityExceeded",
           f"{created} tags created, 1025th {overflow}")


def test_domain_bound():
    world = World()
    proc = world.create_process("p")
    tid = world.spawn_thread(proc.oid).tid
    tag = world.registry.create_tag(TagKind.SECRECY)
    mapped = 0
    for i in range(16):
        world.map_region(tid, 0x10000 * (i + 1), 0x100, label=Label({tag.id}))
        mapped += 1
    try:
        world.map_region(tid, 0x200000, 0x100, label=Label({tag.id}))
        outcome = "succeeded"
    except DomainsExhausted:
        outcome = "DomainsExhausted"
    report("domain bound", mapped == 16 and outcome == "DomainsExhausted",
           f"{mapped} labeled regions mapped, 17th {outcome}")


def test_gradient_fidelity():
    start = time.perf_counter()
    worst = gradient_relative_error(100, seed=2024)
    elapsed = time.perf_counter() - start
    report("gradient fidelity", worst < 1e-4 and elapsed < 10,
           f"max relative error {worst:.2e} (limit 1e-4) in {elapsed:.2f}s (limit 10s)")


def test_attack_efficacy():
    start = time.perf_counter()
    net, data = train_toy(7)
    x, y = data.x_test, data.y_test
    clean = net.accuracy(x, y)
    acc_fgsm = net.accuracy(fgsm(net, x, y, 0.5), y)
    acc_pgd = net.accuracy(AttackSpec("pgd", epsilon=0.5, n=40).apply(net, x, y, 7), y)
    acc_delay = net.accuracy(delay_attack(x, x.shape[-1] // 2), y)
    elapsed = time.perf_counter() - start
    ok = (clean >= 0.90 and acc_fgsm <= 0.30 and acc_pgd <= 0.05
          and clean - acc_delay >= 0.20 and elapsed < 60)
    report("attack efficacy", ok,
           f"clean {clean:.3f}, fgsm {acc_fgsm:.3f}, pgd {acc_pgd:.3f}, "
           f"delay {acc_delay:.3f} in {elapsed:.2f}s")


def test_attack_laws(toy):
    net, data = toy
    x, y = data.x_test, data.y_test
    identity = np.array_equal(fgsm(net, x, y, 0.0), x)
    rng = np.random.default_rng(99)
    in_ball, overshoot = True, 0.0
    for trial in range(50):
        eps = float(rng.uniform(0.01, 1.0))
        params = AttackParams(eps, eps * float(rng.uniform(0, 0.99)),
                              float(rng.uniform(0.001, 1.0)), int(rng.integers(1, 6)))
        xs = x[:8]
        adv = pgd(net, xs, y[:8], params, trial)
        # the ball as floats: the box [x - eps, x + eps]; |adv - x| may round 1 ulp past eps
        in_ball &= bool(np.all((adv >= xs - eps) & (adv <= xs + eps)))
        overshoot = max(overshoot, float(np.max(np.abs(adv - xs)) - eps))
        in_ball &= overshoot <= 4 * np.finfo(float).eps
    same = all(np.array_equal(pgd(net, x, y, AttackParams(e, 0.0, e, 1), 3),
                              np.clip(fgsm(net, x, y, e), x - e, x + e))
               for e in (0.05, 0.2, 0.5))
    report("attack laws", identity and in_ball and same,
           f"fgsm eps=0 identity {identity}, pgd in ball {in_ball} "
           f"(worst rounding overshoot {max(overshoot, 0.0):.1e}), "
           f"pgd one step == clipped fgsm {same}")


def test_filter_exactness():
    t = np.linspace(-2, 2, 40)
    rng = np.random.default_rng(5)
    worst = 0.0
    for window in (3, 5, 7, 9, 11):
        for order in range(window):
            for degree in range(order + 1):
                x = np.polyval(rng.normal(size=degree + 1), t)
                worst = max(worst, float(np.max(np.abs(savgol_filter(x, window, order) - x))))
    const = np.full((3, 33), -1.7)
    noisy = rng.normal(size=(3, 33))
    constant_ok = all(np.array_equal(f(const, w), const)
                      for f in (moving_average, median_filter) for w in (1, 3, 9, 33))
    window_one_ok = all(np.array_equal(f(noisy, 1), noisy) for f in (moving_average, median_filter))
    report("filter exactness", worst < 1e-9 and constant_ok and window_one_ok,
           f"savgol polynomial error {worst:.1e} (limit 1e-9), "
           f"constant identity {constant_ok}, window=1 identity {window_one_ok}")


def test_trace_round_trip():
    rng = random.Random(7)
    ops = list(Op)
    events, seq = [], 0
    for _ in range(10_000):
        seq += rng.randrange(1, 4)
        args = {rng.choice("abcdef"): rng.choice([rng.randrange(2**64), "ü", [1, "x"], 0.5, None])
                for _ in range(rng.randrange(3))}
        events.append(TraceEvent(seq, rng.randrange(2**64), rng.choice(ops),
                                 rng.choice(["/f", "tcp:1", ""]), args))
    data = serialize_trace(events)
    identity = parse_trace(data) == events and serialize_trace(parse_trace(data)) == data

    lines = data.splitlines(keepends=True)
    bad_line = 4321
    offsets_ok = True
    broken = [
        json.dumps({**json.loads(lines[bad_line]), "op": "warp"}).encode() + b"\n",
        json.dumps({k: v for k, v in json.loads(lines[bad_line]).items() if k != "args"}).encode() + b"\n",
        b'{"seq": oops}\n',
    ]
    for replacement in broken:
        blob = b"".join(lines[:bad_line]) + replacement + b"".join(lines[bad_line + 1:])
        line_start = sum(len(l) for l in lines[:bad_line])
        try:
            parse_trace(blob)
            offsets_ok = False
        except TraceParseError as err:
            expected = line_start + replacement.index(b"oops") if b"oops" in replacement else line_start
            offsets_ok &= err.offset == expected and err.line == bad_line + 1
    report("trace round-trip", identity and offsets_ok,
           f"10000-event identity {identity}, malformed-line offsets correct {offsets_ok}")


def test_determinism():
    scenarios = corpus(3, 11)
    first = [replay(World(), sc.events).to_json() for sc in scenarios]
    second = [replay(World(), sc.events).to_json() for sc in corpus(3, 11)]
    reports_same = first == second

    def grid_csv():
        net, data = train_toy(7)
        return "".join(evaluate_under_attack(net, data.x_test, data.y_test, AttackSpec(kind),
                                             grid, seed=7).to_csv()
                       for kind, grid in (("fgsm", [0, 0.1, 0.3]), ("pgd", [0.1, 0.5]),
                                          ("delay", [0, 16, 32])))
    csv_same = grid_csv() == grid_csv()
    report("determinism", reports_same and csv_same,
           f"{len(first)} replay reports byte-identical {reports_same}, attack CSVs byte-identical {csv_same}")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
