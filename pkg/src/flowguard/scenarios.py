"""Deterministic attack and benign scenario generation.

Every scenario shares one simulated BCI host:

* tid 1, the acquisition daemon. It owns the headset port, the record file
  and the model file, and carries the ``eeg`` secrecy and ``dev`` integrity
  tags.
* tid 2, an inference worker cloned from tid 1. It drops ``dev``, adds
  ``model`` and maps the model weights into memory.
* tid 3, an unrelated, unlabeled application.
* tid 66, the attacker's process (attack scenarios only).

Padding events come from a fixed vocabulary that is allowed under the
setup's labels. Attack events are the only ones the monitor must deny, and
the generator records their seqs as ground truth without consulting the
monitor.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path

from .trace import Op, TraceEvent, serialize_trace

SCENARIO_KINDS = ("AV1", "AV2", "AV3", "AV4", "AV5", "AV6", "benign")

DAEMON, WORKER, BYSTANDER, ATTACKER = 1, 2, 3, 66

PORT = "/dev/ttyUSB0"
RECORD = "/data/eegIDRecord.csv"
MODEL = "/models/eegnet.pt"
RESULTS = "unix:/run/bci.sock"
PIPE = "pipe:samples"
RELAY = "tcp:13854"
NOTES = "/home/user/notes.txt"
SYNC = "tcp:cloud-sync"
LOOT = "/sdcard/.cache/loot.bin"
EXFIL = "tcp:exfil"

MODEL_BASE, MODEL_LEN = 0x4000_0000, 0x4000
SCRATCH_BASE, SCRATCH_LEN = 0x4001_0000, 0x2000
HEAP_BASE, HEAP_LEN = 0x5000_0000, 0x1000
STASH_BASE, STASH_LEN = 0x6000_0000, 0x4000


@dataclass(frozen=True)
class Scenario:
    av: str
    seed: int
    world_setup: tuple[TraceEvent, ...]
    trace: tuple[TraceEvent, ...]
    ground_truth: tuple[int, ...]

    @property
    def events(self) -> list[TraceEvent]:
        return list(self.world_setup) + list(self.trace)

    def to_bytes(self) -> bytes:
        return serialize_trace(self.events)

    def manifest_entry(self, filename: str) -> dict:
        return {"file": filename, "av": self.av, "seed": self.seed,
                "events": len(self.world_setup) + len(self.trace),
                "ground_truth": list(self.ground_truth)}


class _Builder:
    def __init__(self):
        self.events: list[TraceEvent] = []

    def add(self, tid, op, target="", **args):
        self.events.append(TraceEvent(len(self.events) + 1, tid, Op(op), target, args))


def _base_setup(b: _Builder, with_attacker: bool) -> None:
    b.add(DAEMON, "exec", image="/usr/bin/bci-daemon")
    b.add(DAEMON, "open", PORT, create=True, kind="port", mode="rw",
          secrecy=["eeg"], integrity=["dev"], direction="inout", device="openbci-cyton")
    b.add(DAEMON, "open", RECORD, create=True, mode="w", secrecy=["eeg"])
    b.add(DAEMON, "open", MODEL, create=True, mode="w", secrecy=["model"])
    b.add(DAEMON, "sock_create", RESULTS, secrecy=["eeg", "model"])
    b.add(DAEMON, "open", PIPE, create=True, kind="pipe", mode="w", secrecy=["eeg"])
    b.add(DAEMON, "ioctl", "self", cmd="raise_label", tag="eeg")
    b.add(DAEMON, "ioctl", "self", cmd="raise_label", tag="dev")
    b.add(DAEMON, "sock_create", RELAY)
    b.add(DAEMON, "sock_listen", RELAY)
    b.add(DAEMON, "clone", child=WORKER)
    b.add(WORKER, "ioctl", "self", cmd="lower_label", tag="dev")
    b.add(WORKER, "ioctl", "self", cmd="raise_label", tag="model")
    b.add(WORKER, "mmap", "model:weights", base=MODEL_BASE, length=MODEL_LEN,
          perms="r", secrecy=["model"], file=MODEL)
    b.add(WORKER, "mmap", "scratch", base=SCRATCH_BASE, length=SCRATCH_LEN,
          perms="rw", secrecy=["eeg", "model"])
    b.add(BYSTANDER, "exec", image="/usr/bin/notes")
    b.add(BYSTANDER, "open", NOTES, create=True, mode="rw")
    b.add(BYSTANDER, "sock_create", SYNC)
    b.add(BYSTANDER, "sock_connect", SYNC, endpoint="203.0.113.5:443")
    b.add(BYSTANDER, "mmap", "heap", base=HEAP_BASE, length=HEAP_LEN, perms="rw")
    if with_attacker:
        b.add(ATTACKER, "exec", image="/data/app/com.free.wallpaper")
        b.add(ATTACKER, "open", LOOT, create=True, mode="rw")
        b.add(ATTACKER, "sock_create", EXFIL)
        b.add(ATTACKER, "sock_connect", EXFIL, endpoint="198.51.100.66:8080")


def _mem(rng: random.Random, base: int, size: int) -> dict:
    length = rng.choice((1, 4, 16, 64, 256))
    return {"address": base + rng.randrange(0, size - length + 1), "length": length}


def _benign_event(rng: random.Random, with_attacker: bool) -> tuple:
    choices = [
        (DAEMON, "port_read", PORT, {}),
        (DAEMON, "port_write", PORT, {}),
        (DAEMON, "write", RECORD, {}),
        (DAEMON, "pipe_write", PIPE, {}),
        (DAEMON, "sock_send", RESULTS, {}),
        (WORKER, "pipe_read", PIPE, {}),
        (WORKER, "read", RECORD, {}),
        (WORKER, "read", MODEL, {}),
        (WORKER, "read", "model:weights", "model"),
        (WORKER, "read", "scratch", "scratch"),
        (WORKER, "write", "scratch", "scratch"),
        (WORKER, "sock_send", RESULTS, {}),
        (BYSTANDER, "read", NOTES, {}),
        (BYSTANDER, "write", NOTES, {}),
        (BYSTANDER, "sock_send", SYNC, {}),
        (BYSTANDER, "sock_recv", SYNC, {}),
        (BYSTANDER, "write", "heap", "heap"),
        (BYSTANDER, "read", "heap", "heap"),
    ]
    if with_attacker:
        choices += [
            (ATTACKER, "write", LOOT, {}),
            (ATTACKER, "read", LOOT, {}),
            (ATTACKER, "sock_send", EXFIL, {}),
            (ATTACKER, "sock_recv", RELAY, {}),
        ]
    tid, op, target, args = rng.choice(choices)
    if args == "model":
        args = _mem(rng, MODEL_BASE, MODEL_LEN)
    elif args == "scratch":
        args = _mem(rng, SCRATCH_BASE, SCRATCH_LEN)
    elif args == "heap":
        args = _mem(rng, HEAP_BASE, HEAP_LEN)
    return tid, op, target, args


def _attack_events(av: str, rng: random.Random, count: int) -> list[tuple]:
    """Signature events for ``av``; every one must be denied."""
    A = ATTACKER
    if av == "AV1":
        # the daemon relays headset data to an unlabeled socket, and the
        # attacker sniffs the headset port directly
        pool = [(DAEMON, "sock_send", RELAY, {}), (A, "port_read", PORT, {})]
        return [rng.choice(pool) for _ in range(count)]
    if av == "AV2":
        out = [(A, "open", RECORD, {"mode": "r"})]
        out += [(A, "read", RECORD, {}) for _ in range(count - 1)]
        return out
    if av == "AV3":
        out = [(A, "exec", "", {"image": "/usr/bin/openbci-gui", "raise": ["eeg"]})]
        pool = [(A, "read", RECORD, {}), (A, "ioctl", "self", {"cmd": "raise_label", "tag": "eeg"}),
                (A, "open", RECORD, {"mode": "r"})]
        return out + [rng.choice(pool) for _ in range(count - 1)]
    if av == "AV4":
        out = [(A, "open", MODEL, {"mode": "r"})]
        out += [(A, "read", MODEL, {}) for _ in range(count - 1)]
        return out
    if av == "AV5":
        out = [(A, "mmap", "stolen", {"base": STASH_BASE, "length": MODEL_LEN,
                                      "perms": "r", "file": MODEL})]
        out += [(A, "read", "model:weights", _mem(rng, MODEL_BASE, MODEL_LEN))
                for _ in range(count - 1)]
        return out
    if av == "AV6":
        pool = [(A, "port_write", PORT, {}), (A, "ioctl", PORT, {"cmd": "TIOCSTI"})]
        return [rng.choice(pool) for _ in range(count)]
    raise ValueError(f"unknown attack vector {av!r}")


def generate_scenario(av: str, seed: int, *, padding: int = 40,
                      attacks: tuple[int, int] = (3, 6)) -> Scenario:
    """Build the scenario for ``av`` (one of :data:`SCENARIO_KINDS`).

    ``padding`` benign events are drawn at random; attack scenarios get
    between ``attacks[0]`` and ``attacks[1]`` signature events spliced in at
    random positions, keeping their relative order.
    """
    if av not in SCENARIO_KINDS:
        raise ValueError(f"unknown scenario kind {av!r}")
    rng = random.Random(f"{av}:{seed}")
    hostile = av != "benign"
    b = _Builder()
    _base_setup(b, hostile)
    setup = tuple(b.events)

    body = [(False, _benign_event(rng, hostile)) for _ in range(padding)]
    if hostile:
        count = rng.randint(*attacks)
        slots = sorted(rng.sample(range(padding + count), count))
        for slot, ev in zip(slots, _attack_events(av, rng, count)):
            body.insert(slot, (True, ev))
    truth = []
    for bad, (tid, op, target, args) in body:
        b.add(tid, op, target, **args)
        if bad:
            truth.append(b.events[-1].seq)
    return Scenario(av, seed, setup, tuple(b.events[len(setup):]), tuple(truth))


def derive_seed(seed: int, counter: int) -> int:
    return (seed * 0x9E3779B97F4A7C15 + counter) % 2**64


def corpus(n_per_av: int, seed: int, **hints) -> list[Scenario]:
    if n_per_av < 1:
        raise ValueError("n_per_av must be at least 1")
    out = []
    counter = 0
    for av in SCENARIO_KINDS:
        for _ in range(n_per_av):
            out.append(generate_scenario(av, derive_seed(seed, counter), **hints))
            counter += 1
    return out


def write_corpus(scenarios: list[Scenario], directory) -> Path:
    """Write one trace per scenario plus ``manifest.json``."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, sc in enumerate(scenarios):
        name = f"{i:04d}_{sc.av}.trace.jsonl"
        (directory / name).write_bytes(sc.to_bytes())
        entries.append(sc.manifest_entry(name))
    manifest = directory / "manifest.json"
    manifest.write_text(json.dumps({"scenarios": entries}, indent=2) + "\n", encoding="utf-8")
    return manifest
