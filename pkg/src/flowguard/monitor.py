"""The tracing monitor: a deterministic state machine over trace events.

Every event is checked against the flow rules before it touches the world.
Allowed events update the world; denied events leave it as it was and
produce a :class:`ViolationReport`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from enum import Enum
from typing import Iterable

from .errors import (
    CapabilityDenied,
    CapacityExceeded,
    DuplicateName,
    MalformedEvent,
    ReplayAborted,
    TagKindCollision,
    UnknownObject,
    UnknownTag,
)
from .labels import (
    EMPTY,
    CapabilityList,
    Direction,
    Label,
    Privilege,
    Rule,
    TagKind,
    check_flow_allowed,
    grant_capability,
    lower_label,
    raise_label,
)
from .objects import MemoryRegion, ObjectDescriptor, ObjectKind, World
from .policy import DEFAULT_POLICY, PolicyConfig, glob_match
from .trace import Op, TraceEvent


class AV(str, Enum):
    AV1 = "AV1"  # sniffing / relay of device data
    AV2 = "AV2"  # inadequate access control on stored data
    AV3 = "AV3"  # privilege escalation
    AV4 = "AV4"  # white-box precursor: model file access
    AV5 = "AV5"  # white-box precursor: model memory access
    AV6 = "AV6"  # peripheral injection


@dataclass(frozen=True)
class ViolationReport:
    seq: int
    rule: Rule
    subject: int
    object: int | None
    av_class: AV | None = None
    note: str = ""

    def to_dict(self) -> dict:
        return {
            "seq": self.seq,
            "rule": self.rule.value,
            "subject": self.subject,
            "object": self.object,
            "av_class": self.av_class.value if self.av_class else None,
            "note": self.note,
        }


@dataclass(frozen=True)
class Decision:
    seq: int
    allowed: bool
    report: ViolationReport | None = None

    def __bool__(self) -> bool:
        return self.allowed


@dataclass(frozen=True)
class ReplaySummary:
    decisions: tuple[Decision, ...]
    reports: tuple[ViolationReport, ...]
    counters: dict

    @property
    def violation_seqs(self) -> list[int]:
        return [r.seq for r in self.reports]

    def to_dict(self) -> dict:
        return {"summary": self.counters,
                "violations": [r.to_dict() for r in self.reports]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


def summarize(decisions: Iterable[Decision]) -> ReplaySummary:
    decisions = tuple(decisions)
    reports = tuple(d.report for d in decisions if d.report is not None)
    by_rule = {r.value: 0 for r in Rule}
    by_av = {a.value: 0 for a in AV}
    by_av["unclassified"] = 0
    for r in reports:
        by_rule[r.rule.value] += 1
        by_av[r.av_class.value if r.av_class else "unclassified"] += 1
    counters = {
        "events": len(decisions),
        "allowed": sum(1 for d in decisions if d.allowed),
        "denied": len(reports),
        "by_rule": by_rule,
        "by_av": by_av,
    }
    return ReplaySummary(decisions, reports, counters)


class _Deny(Exception):
    def __init__(self, rule: Rule, obj: int | None, note: str):
        self.rule, self.obj, self.note = rule, obj, note


_ACCESS = {
    Op.READ: Direction.READ,
    Op.WRITE: Direction.WRITE,
    Op.SOCK_SEND: Direction.WRITE,
    Op.SOCK_RECV: Direction.READ,
    Op.PIPE_READ: Direction.READ,
    Op.PIPE_WRITE: Direction.WRITE,
    Op.PORT_READ: Direction.READ,
    Op.PORT_WRITE: Direction.WRITE,
}

_KIND_FOR_OP = {
    Op.SOCK_SEND: ObjectKind.SOCKET,
    Op.SOCK_RECV: ObjectKind.SOCKET,
    Op.SOCK_LISTEN: ObjectKind.SOCKET,
    Op.SOCK_CONNECT: ObjectKind.SOCKET,
    Op.PIPE_READ: ObjectKind.PIPE,
    Op.PIPE_WRITE: ObjectKind.PIPE,
    Op.PORT_READ: ObjectKind.PORT,
    Op.PORT_WRITE: ObjectKind.PORT,
}

_SELF_TARGETS = ("self", "label")


def _is_device(desc: ObjectDescriptor, policy: PolicyConfig) -> bool:
    return desc.kind is ObjectKind.PORT or any(
        glob_match(p, desc.name) for p in policy.device_patterns)


def _leaks_device_data(report, desc, world: World, op: Op | None, policy: PolicyConfig) -> bool:
    """Whether the tags that failed to flow also label some device object,
    i.e. the channel carries raw headset data."""
    ctx = world.threads.get(report.subject)
    if ctx is None:
        return True
    theirs = (desc.label or EMPTY).secrecy
    if _ACCESS.get(op) is Direction.READ:
        leaked = theirs - ctx.label.secrecy
    else:
        leaked = ctx.label.secrecy - theirs
    device_tags = set()
    for other in world.objects.values():
        if other.label is not None and _is_device(other, policy):
            device_tags |= other.label.secrecy
    return bool(leaked & device_tags)


def classify_av(report: ViolationReport, world: World, op: Op | None = None,
                policy: PolicyConfig = DEFAULT_POLICY) -> AV | None:
    """Map a violation to the attack vector it signals, or ``None``."""
    if report.rule is Rule.UNAUTHORIZED_PORT_INJECTION:
        return AV.AV6
    if report.rule is Rule.CAPABILITY_DENIED:
        return AV.AV3
    if report.object is None:
        return None
    region = world.regions.get(report.object)
    if region is not None:
        return AV.AV5 if policy.is_model(region.name) else None
    desc = world.objects.get(report.object)
    if desc is None:
        return None
    if desc.kind is ObjectKind.FILE and policy.is_model(desc.name):
        return AV.AV4
    device = _is_device(desc, policy)
    if device:
        return AV.AV6 if report.rule is Rule.INTEGRITY_VIOLATION else AV.AV1
    if desc.kind in (ObjectKind.SOCKET, ObjectKind.PIPE):
        if report.rule is Rule.SECRECY_LEAK and not _leaks_device_data(report, desc, world, op, policy):
            return AV.AV2
        return AV.AV1
    if desc.kind is ObjectKind.FILE and report.rule is Rule.SECRECY_LEAK:
        return AV.AV2
    return None


class Monitor:
    """Applies trace events to a world.

    ``floating=True`` lets a read raise the reader's secrecy label (and drop
    integrity it can no longer vouch for) when the thread holds the
    capabilities to do so, instead of requiring an explicit raise first.
    """

    def __init__(self, world: World, policy: PolicyConfig | None = None, *,
                 floating: bool = False):
        self.world = world
        self.policy = policy or DEFAULT_POLICY
        self.floating = floating
        self.last_seq: int | None = None
        for name, kind in sorted(self.policy.tag_kinds().items()):
            world.registry.ensure(name, kind)
        for desc in sorted(world.objects.values(), key=lambda d: d.oid):
            extra = self._policy_label(desc.kind, desc.name)
            if not extra.empty:
                world.set_label(desc.oid, (desc.label or EMPTY).union(extra))

    # --- public ------------------------------------------------------------

    def on_event(self, event: TraceEvent) -> Decision:
        if not isinstance(event, TraceEvent):
            raise MalformedEvent(f"not a trace event: {event!r}")
        if self.last_seq is not None and event.seq <= self.last_seq:
            raise MalformedEvent(f"seq {event.seq} does not follow {self.last_seq}")
        handler = getattr(self, f"_op_{event.op.value}")
        try:
            handler(event)
        except _Deny as deny:
            self.last_seq = event.seq
            report = ViolationReport(event.seq, deny.rule, event.tid, deny.obj, None, deny.note)
            report = replace(report, av_class=classify_av(report, self.world, event.op, self.policy))
            return Decision(event.seq, False, report)
        except MalformedEvent:
            raise
        except (UnknownObject, UnknownTag, TagKindCollision, CapacityExceeded,
                DuplicateName, ValueError) as exc:
            raise MalformedEvent(f"seq {event.seq} ({event.op.value}): {exc}") from None
        self.last_seq = event.seq
        return Decision(event.seq, True)

    def replay(self, events: Iterable[TraceEvent]) -> ReplaySummary:
        decisions = []
        for pos, event in enumerate(events):
            try:
                decisions.append(self.on_event(event))
            except MalformedEvent as exc:
                raise ReplayAborted(exc, summarize(decisions), pos) from exc
        return summarize(decisions)

    # --- helpers -----------------------------------------------------------

    def _thread(self, event):
        ctx = self.world.threads.get(event.tid)
        if ctx is None:
            raise MalformedEvent(f"seq {event.seq}: unknown tid {event.tid}")
        return ctx

    def _arg(self, event, key, types, default=None, required=False):
        if key not in event.args:
            if required:
                raise MalformedEvent(f"seq {event.seq} ({event.op.value}): missing arg {key!r}")
            return default
        value = event.args[key]
        if isinstance(value, bool) and bool not in (types if isinstance(types, tuple) else (types,)):
            raise MalformedEvent(f"seq {event.seq}: arg {key!r} has wrong type")
        if not isinstance(value, types):
            raise MalformedEvent(f"seq {event.seq}: arg {key!r} has wrong type")
        return value

    def _names_arg(self, event, key) -> list[str]:
        names = self._arg(event, key, list, [])
        if not all(isinstance(n, str) and n for n in names):
            raise MalformedEvent(f"seq {event.seq}: arg {key!r} must list tag names")
        return names

    def _target(self, event, kind: ObjectKind | None = None) -> ObjectDescriptor:
        target = event.target
        if target.startswith("#") and target[1:].isdigit():
            desc = self.world.objects.get(int(target[1:]))
            if desc is None:
                raise MalformedEvent(f"seq {event.seq}: no object {target}")
        else:
            try:
                desc = self.world.find(target)
            except UnknownObject as exc:
                raise MalformedEvent(f"seq {event.seq}: {exc}") from None
        if kind is not None and desc.kind is not kind:
            raise MalformedEvent(
                f"seq {event.seq}: {event.op.value} needs a {kind.value}, "
                f"{target!r} is a {desc.kind.value}")
        if desc.kind is ObjectKind.PROCESS:
            raise MalformedEvent(f"seq {event.seq}: cannot access process object {target!r}")
        return desc

    def _describe(self, label: Label | None) -> str:
        return self.world.registry.describe(label or EMPTY)

    def _policy_label(self, kind: ObjectKind, name: str) -> Label:
        reg = self.world.registry
        sec, integ = set(), set()
        for entry in self.policy.entries:
            if entry.kind is not None and entry.kind is not kind:
                continue
            if glob_match(entry.pattern, name):
                sec.update(reg.by_name(n).id for n in entry.secrecy)
                integ.update(reg.by_name(n).id for n in entry.integrity)
        return Label(sec, integ)

    def _plan_label(self, event, ctx):
        """Resolve requested tags without mutating anything.

        Returns ``(label_names, fresh)``: the (kind, name) pairs and the ones
        that must be created. Raises ``_Deny`` when the thread tries to
        endorse with an integrity tag it neither holds nor may add.
        """
        reg = self.world.registry
        wanted = [(TagKind.SECRECY, n) for n in self._names_arg(event, "secrecy")]
        wanted += [(TagKind.INTEGRITY, n) for n in self._names_arg(event, "integrity")]
        kinds = {}
        for kind, name in wanted:
            if kinds.setdefault(name, kind) is not kind:
                raise TagKindCollision(f"tag {name!r} requested with both kinds")
        fresh = []
        for kind, name in wanted:
            if reg.has_name(name):
                tag = reg.by_name(name)
                if tag.kind is not kind:
                    raise TagKindCollision(f"tag {name!r} is a {tag.kind.value} tag")
                if (kind is TagKind.INTEGRITY and tag.id not in ctx.label.integrity
                        and not ctx.caps.allows(tag, Privilege.ADD)):
                    raise _Deny(Rule.INTEGRITY_VIOLATION, None,
                                f"thread {ctx.tid} cannot endorse with integrity tag {name!r}")
            elif (kind, name) not in fresh:
                fresh.append((kind, name))
        if len(reg) + len(fresh) > reg.capacity:
            raise CapacityExceeded(f"creating {len(fresh)} tags would exceed capacity")
        return wanted, fresh

    def _commit_label(self, ctx, wanted, fresh) -> tuple[Label, object]:
        reg = self.world.registry
        created = [reg.create_tag(kind, name) for kind, name in fresh]
        if created:
            ctx = self.world.update_thread(
                replace(ctx, caps=ctx.caps.union(CapabilityList.owner_of(*created))))
        label = EMPTY
        for _, name in wanted:
            label = label.with_tag(reg.by_name(name))
        return label, ctx

    def _flow(self, ctx, desc, direction: Direction, what: str | None = None):
        decision = check_flow_allowed(ctx.label, desc.label, direction)
        if decision.allowed:
            return
        rule = decision.rule
        if (desc.kind is ObjectKind.PORT and direction is Direction.WRITE
                and rule is Rule.INTEGRITY_VIOLATION):
            rule = Rule.UNAUTHORIZED_PORT_INJECTION
        arrow = "<-" if direction is Direction.READ else "->"
        name = what or f"{desc.kind.value} {desc.name!r}"
        raise _Deny(rule, getattr(desc, "oid", getattr(desc, "rid", None)),
                    f"thread {ctx.tid} {self._describe(ctx.label)} {arrow} "
                    f"{name} {self._describe(desc.label)}")

    def _floated(self, ctx, label: Label | None):
        """The thread as it would be after floating up to read ``label``.

        Secrecy tags are gained and integrity tags dropped only where the
        thread holds the matching ADD / REMOVE capability; otherwise the
        context is returned as is and the flow check decides.
        """
        if not self.floating or label is None:
            return ctx
        gain = label.secrecy - ctx.label.secrecy
        drop = ctx.label.integrity - label.integrity
        if not gain and not drop:
            return ctx
        if not (all(ctx.caps.allows(t, Privilege.ADD) for t in gain)
                and all(ctx.caps.allows(t, Privilege.REMOVE) for t in drop)):
            return ctx
        return replace(ctx, label=Label(ctx.label.secrecy | gain, ctx.label.integrity - drop))

    def _read(self, ctx, desc, what: str | None = None):
        floated = self._floated(ctx, desc.label)
        self._flow(floated, desc, Direction.READ, what)
        if floated is not ctx:
            self.world.update_thread(floated)

    # --- process / thread ops ----------------------------------------------

    def _op_exec(self, event):
        image = self._arg(event, "image", str, required=True)
        role_name = self._arg(event, "role", str)
        to_raise = self._names_arg(event, "raise")
        reg = self.world.registry
        ctx = self.world.threads.get(event.tid)
        caps = CapabilityList()
        if role_name is not None:
            role = self.policy.roles.get(role_name)
            if role is None:
                raise _Deny(Rule.CAPABILITY_DENIED, None,
                            f"exec {image!r}: role {role_name!r} is not configured")
            if not role.admits(image):
                raise _Deny(Rule.CAPABILITY_DENIED, None,
                            f"exec {image!r}: image may not assume role {role_name!r}")
            caps = CapabilityList(frozenset(
                (reg.by_name(t).id, p) for t, p in role.grants if reg.has_name(t)))
        label = ctx.label if ctx is not None else EMPTY
        for name in to_raise:
            if not reg.has_name(name) or not caps.allows(reg.by_name(name), Privilege.ADD):
                raise _Deny(Rule.CAPABILITY_DENIED, None,
                            f"exec {image!r} requests tag {name!r} without an ADD grant")
            label = label.with_tag(reg.by_name(name))
        if ctx is None:
            proc = self.world.create_process(f"{image}[{event.tid}]")
            self.world.spawn_thread(proc.oid, label, caps, tid=event.tid, image=image)
        else:
            self.world.update_thread(replace(ctx, label=label, caps=caps, image=image))

    def _op_clone(self, event):
        ctx = self._thread(event)
        child = self._arg(event, "child", int, required=True)
        if child in self.world.threads or child < 0:
            raise MalformedEvent(f"seq {event.seq}: child tid {child} already exists")
        self.world.spawn_thread(ctx.process, ctx.label, ctx.caps, tid=child, image=ctx.image)

    def _op_ioctl(self, event):
        ctx = self._thread(event)
        cmd = self._arg(event, "cmd", str, required=True)
        if event.target in _SELF_TARGETS:
            reg = self.world.registry
            name = self._arg(event, "tag", str, required=True)
            if not reg.has_name(name):
                raise _Deny(Rule.CAPABILITY_DENIED, None, f"{cmd}: no tag named {name!r}")
            tag = reg.by_name(name)
            try:
                if cmd == "raise_label":
                    self.world.update_thread(raise_label(ctx, tag))
                elif cmd == "lower_label":
                    self.world.update_thread(lower_label(ctx, tag))
                elif cmd == "grant":
                    to = self._arg(event, "to", int, required=True)
                    priv = self._arg(event, "privilege", str, required=True)
                    if to not in self.world.threads or priv not in ("ADD", "REMOVE"):
                        raise MalformedEvent(f"seq {event.seq}: bad grant target/privilege")
                    self.world.update_thread(
                        grant_capability(ctx, self.world.threads[to], tag, priv))
                else:
                    raise MalformedEvent(f"seq {event.seq}: unknown label command {cmd!r}")
            except CapabilityDenied as exc:
                raise _Deny(Rule.CAPABILITY_DENIED, None, f"thread {ctx.tid}: {exc}") from None
            return
        desc = self._target(event)
        self._flow(ctx, desc, Direction.WRITE)

    # --- files, pipes, ports, sockets --------------------------------------

    def _create(self, event, ctx, kind: ObjectKind) -> ObjectDescriptor:
        """Create ``event.target`` owned by the thread's process.

        The label is attached in the same step, so the object is never
        observable unlabeled. Only the endorsement rule applies here; data
        movement is checked when it happens.
        """
        if (kind, ctx.process, event.target) in self.world._names:
            raise MalformedEvent(f"seq {event.seq}: {kind.value} {event.target!r} exists")
        if not event.target:
            raise MalformedEvent(f"seq {event.seq}: empty object name")
        extra = {}
        if kind is ObjectKind.PORT:
            extra["direction"] = self._arg(event, "direction", str, "inout")
            extra["device"] = self._arg(event, "device", str, "")
        wanted, fresh = self._plan_label(event, ctx)
        label, ctx = self._commit_label(ctx, wanted, fresh)
        label = label.union(self._policy_label(kind, event.target))
        return self.world.create_object(kind, event.target, ctx.process,
                                        None if label.empty else label, **extra)

    def _op_open(self, event):
        ctx = self._thread(event)
        mode = self._arg(event, "mode", str, "r")
        if not mode or set(mode) - {"r", "w"}:
            raise MalformedEvent(f"seq {event.seq}: bad open mode {mode!r}")
        desc = None
        if self._arg(event, "create", bool, False):
            try:
                kind = ObjectKind(self._arg(event, "kind", str, "file"))
            except ValueError:
                raise MalformedEvent(f"seq {event.seq}: bad object kind") from None
            if kind not in (ObjectKind.FILE, ObjectKind.PIPE, ObjectKind.PORT):
                raise MalformedEvent(f"seq {event.seq}: open cannot create a {kind.value}")
            existing = self.world._names.get((kind, ctx.process, event.target))
            if existing is None:
                desc = self._create(event, ctx, kind)
                ctx = self.world.threads[ctx.tid]
        if desc is None:
            desc = self._target(event)
            floated = self._floated(ctx, desc.label) if "r" in mode else ctx
            if "r" in mode:
                self._flow(floated, desc, Direction.READ)
            if "w" in mode:
                self._flow(floated, desc, Direction.WRITE)
            if floated is not ctx:
                ctx = self.world.update_thread(floated)
        self.world.handles[(ctx.tid, desc.oid)] = mode

    def _op_close(self, event):
        ctx = self._thread(event)
        desc = self._target(event)
        self.world.handles.pop((ctx.tid, desc.oid), None)

    def _access(self, event):
        ctx = self._thread(event)
        direction = _ACCESS[event.op]
        if event.op in (Op.READ, Op.WRITE) and "address" in event.args:
            return self._memory_access(event, ctx, direction)
        desc = self._target(event, _KIND_FOR_OP.get(event.op))
        if direction is Direction.READ:
            self._read(ctx, desc)
        else:
            self._flow(ctx, desc, direction)

    _op_read = _op_write = _access
    _op_sock_send = _op_sock_recv = _access
    _op_pipe_read = _op_pipe_write = _access
    _op_port_read = _op_port_write = _access

    def _op_sock_create(self, event):
        ctx = self._thread(event)
        self._create(event, ctx, ObjectKind.SOCKET)

    def _op_sock_listen(self, event):
        self._thread(event)
        desc = self._target(event, ObjectKind.SOCKET)
        self.world.listening.add(desc.oid)

    def _op_sock_connect(self, event):
        self._thread(event)
        desc = self._target(event, ObjectKind.SOCKET)
        endpoint = self._arg(event, "endpoint", str, required=True)
        self.world.endpoints[desc.oid] = endpoint

    # --- memory --------------------------------------------------------------

    def _memory_access(self, event, ctx, direction: Direction):
        address = self._arg(event, "address", int, required=True)
        length = self._arg(event, "length", int, 1)
        if address < 0 or length < 1:
            raise MalformedEvent(f"seq {event.seq}: bad address/length")
        region = self.world.region_lookup(ctx.tid, address)
        if region is None:
            region = self.world.find_region(address)
            if region is not None and region.process != ctx.process:
                raise _Deny(Rule.UNMAPPED_ACCESS, region.rid,
                            f"thread {ctx.tid}: {address:#x} lies in region {region.name!r} "
                            f"of another process")
        if region is None:
            raise _Deny(Rule.UNMAPPED_ACCESS, None,
                        f"thread {ctx.tid}: {address:#x} is not mapped")
        if not region.contains(address, length):
            raise _Deny(Rule.UNMAPPED_ACCESS, region.rid,
                        f"thread {ctx.tid}: [{address:#x}, {address + length:#x}) runs "
                        f"past region {region.name!r}")
        need = "r" if direction is Direction.READ else "w"
        if need not in region.perms:
            raise _Deny(Rule.UNMAPPED_ACCESS, region.rid,
                        f"thread {ctx.tid}: region {region.name!r} lacks {need!r} permission")
        if direction is Direction.READ:
            self._read(ctx, region, f"region {region.name!r}")
        else:
            self._flow(ctx, region, direction, f"region {region.name!r}")

    def _op_mmap(self, event):
        ctx = self._thread(event)
        base = self._arg(event, "base", int, required=True)
        length = self._arg(event, "length", int, required=True)
        perms = self._arg(event, "perms", str, "rw")
        if base < 0 or length < 1 or set(perms) - {"r", "w", "x"}:
            raise MalformedEvent(f"seq {event.seq}: bad mmap arguments")
        wanted, fresh = self._plan_label(event, ctx)
        backing = self._arg(event, "file", str)
        if backing is not None:
            try:
                fdesc = self.world.find(backing)
            except UnknownObject as exc:
                raise MalformedEvent(f"seq {event.seq}: {exc}") from None
            reg = self.world.registry
            flabel = fdesc.label or EMPTY
            file_sec = {reg.get(t).name for t in flabel.secrecy}
            file_int = {reg.get(t).name for t in flabel.integrity}
            want_sec = {n for k, n in wanted if k is TagKind.SECRECY}
            want_int = {n for k, n in wanted if k is TagKind.INTEGRITY}
            # file contents flow into the region
            if not file_sec <= want_sec:
                raise _Deny(Rule.SECRECY_LEAK, fdesc.oid,
                            f"mapping {backing!r} {self._describe(flabel)} into a region "
                            f"missing secrecy tags {sorted(file_sec - want_sec)}")
            if not want_int <= file_int:
                raise _Deny(Rule.INTEGRITY_VIOLATION, fdesc.oid,
                            f"region claims integrity {sorted(want_int - file_int)} "
                            f"that {backing!r} lacks")
        clash = self.world._maps[ctx.tid].overlapping(base, length)
        if clash is not None:
            raise _Deny(Rule.UNMAPPED_ACCESS, clash.rid,
                        f"mmap [{base:#x}, {base + length:#x}) overlaps region {clash.name!r}")
        if len(self.world.domains_in_use(ctx.process)) >= self.world.domain_count:
            raise _Deny(Rule.UNMAPPED_ACCESS, None,
                        f"mmap: process {ctx.process} has no free memory domain")
        label, ctx = self._commit_label(ctx, wanted, fresh)
        self.world.map_region(ctx.tid, base, length, perms, label, event.target)

    def _op_munmap(self, event):
        ctx = self._thread(event)
        region = self._own_region(event, ctx)
        self.world.unmap_region(ctx.tid, region.rid)

    def _op_mprotect(self, event):
        ctx = self._thread(event)
        perms = self._arg(event, "perms", str, required=True)
        if set(perms) - {"r", "w", "x"}:
            raise MalformedEvent(f"seq {event.seq}: bad perms {perms!r}")
        region = self._own_region(event, ctx)
        self.world.protect_region(ctx.tid, region.rid, perms)

    def _own_region(self, event, ctx) -> MemoryRegion:
        if "rid" in event.args:
            rid = self._arg(event, "rid", int)
            region = self.world.regions.get(rid)
            if region is None:
                raise _Deny(Rule.UNMAPPED_ACCESS, None, f"no region {rid}")
        else:
            address = self._arg(event, "address", int, required=True)
            region = self.world.find_region(address)
            if region is None:
                raise _Deny(Rule.UNMAPPED_ACCESS, None, f"{address:#x} is not mapped")
        if region.owner != ctx.tid:
            raise _Deny(Rule.UNMAPPED_ACCESS, region.rid,
                        f"thread {ctx.tid} does not own region {region.name!r}")
        return region


def on_event(world: World, event: TraceEvent, policy: PolicyConfig | None = None) -> Decision:
    """One-shot check of a single event against ``world``."""
    return Monitor(world, policy).on_event(event)


def replay(world: World, trace: Iterable[TraceEvent],
           policy: PolicyConfig | None = None, *, floating: bool = False) -> ReplaySummary:
    return Monitor(world, policy, floating=floating).replay(trace)
