"""Simulated system objects: processes, threads, files, sockets, pipes,
device ports and per-thread memory regions.

Addresses are plain integers. Nothing here touches real memory.
"""

from __future__ import annotations

import bisect
import copy
from dataclasses import dataclass, field, replace
from enum import Enum

from .errors import (
    DomainsExhausted,
    DuplicateName,
    NotOwner,
    OverlapError,
    UnknownObject,
    UnknownRegion,
    UnknownTid,
)
from .labels import DEFAULT_CAPACITY, EMPTY, CapabilityList, Label, LabelRegistry

DEFAULT_DOMAINS = 16
HEAP_START = 0x1000_0000


class ObjectKind(str, Enum):
    THREAD = "thread"
    PROCESS = "process"
    FILE = "file"
    SOCKET = "socket"
    PIPE = "pipe"
    MEMORY_REGION = "memory_region"
    PORT = "port"


class PortDirection(str, Enum):
    IN = "in"
    OUT = "out"
    INOUT = "inout"


@dataclass(frozen=True)
class ObjectDescriptor:
    oid: int
    kind: ObjectKind
    name: str
    owner: int
    label: Label | None = None


@dataclass(frozen=True)
class PortDescriptor(ObjectDescriptor):
    direction: PortDirection = PortDirection.INOUT
    device: str = ""


@dataclass(frozen=True)
class ThreadContext:
    tid: int
    process: int
    label: Label = EMPTY
    caps: CapabilityList = field(default_factory=CapabilityList)
    regions: tuple[int, ...] = ()
    image: str | None = None


@dataclass(frozen=True)
class MemoryRegion:
    rid: int
    owner: int
    process: int
    base: int
    length: int
    perms: frozenset[str]
    label: Label
    domain: int
    name: str = ""

    @property
    def end(self) -> int:
        return self.base + self.length

    def contains(self, address: int, length: int = 1) -> bool:
        return self.base <= address and address + max(length, 1) <= self.end


class RegionMap:
    """Disjoint intervals kept sorted by base for bisect lookups."""

    def __init__(self):
        self._bases: list[int] = []
        self._regions: list[MemoryRegion] = []

    def __len__(self) -> int:
        return len(self._regions)

    def __iter__(self):
        return iter(self._regions)

    def find(self, address: int) -> MemoryRegion | None:
        i = bisect.bisect_right(self._bases, address) - 1
        if i >= 0 and address < self._regions[i].end:
            return self._regions[i]
        return None

    def overlapping(self, base: int, length: int) -> MemoryRegion | None:
        i = bisect.bisect_left(self._bases, base + length)
        # only the region starting just before base + length can reach into it
        if i > 0 and self._regions[i - 1].end > base:
            return self._regions[i - 1]
        return None

    def insert(self, region: MemoryRegion) -> None:
        i = bisect.bisect_left(self._bases, region.base)
        self._bases.insert(i, region.base)
        self._regions.insert(i, region)

    def remove(self, region: MemoryRegion) -> None:
        i = bisect.bisect_left(self._bases, region.base)
        del self._bases[i]
        del self._regions[i]

    def replace(self, region: MemoryRegion) -> None:
        i = bisect.bisect_left(self._bases, region.base)
        self._regions[i] = region

    def rids(self) -> tuple[int, ...]:
        return tuple(r.rid for r in self._regions)


class World:
    """All simulated state the monitor reasons about.

    Mutations are expected from a single owner; read-only lookups may run
    concurrently.
    """

    def __init__(self, registry: LabelRegistry | None = None,
                 domain_count: int = DEFAULT_DOMAINS,
                 capacity: int = DEFAULT_CAPACITY):
        self.registry = registry if registry is not None else LabelRegistry(capacity)
        self.domain_count = domain_count
        self.objects: dict[int, ObjectDescriptor] = {}
        self.threads: dict[int, ThreadContext] = {}
        self.regions: dict[int, MemoryRegion] = {}
        self.handles: dict[tuple[int, int], str] = {}
        self.endpoints: dict[int, str] = {}
        self.listening: set[int] = set()
        self.tracing: set[int] = set()
        self.finished: set[int] = set()
        self._names: dict[tuple[ObjectKind, int, str], int] = {}
        self._maps: dict[int, RegionMap] = {}
        self._domains: dict[int, dict[int, int]] = {}
        self._next_oid = 1
        self._next_tid = 1
        # bump pointer for regions placed by the api layer
        self.heap_top = HEAP_START

    def copy(self) -> World:
        return copy.deepcopy(self)

    def _new_oid(self) -> int:
        oid = self._next_oid
        self._next_oid += 1
        return oid

    # objects

    def create_process(self, name: str, label: Label | None = None) -> ObjectDescriptor:
        oid = self._new_oid()
        return self._register(ObjectDescriptor(oid, ObjectKind.PROCESS, name, oid, label))

    def create_object(self, kind: ObjectKind | str, name: str, owner: int,
                      label: Label | None = None, *,
                      direction: PortDirection | str = PortDirection.INOUT,
                      device: str = "") -> ObjectDescriptor:
        kind = ObjectKind(kind)
        if kind in (ObjectKind.THREAD, ObjectKind.MEMORY_REGION):
            raise ValueError(f"{kind.value} objects are created via threads/regions")
        if kind is ObjectKind.PROCESS:
            return self.create_process(name, label)
        if owner not in self.objects or self.objects[owner].kind is not ObjectKind.PROCESS:
            raise UnknownObject(f"owner {owner} is not a process")
        oid = self._new_oid()
        if kind is ObjectKind.PORT:
            desc = PortDescriptor(oid, kind, name, owner, label,
                                  PortDirection(direction), device or name)
        else:
            desc = ObjectDescriptor(oid, kind, name, owner, label)
        return self._register(desc)

    def _register(self, desc: ObjectDescriptor) -> ObjectDescriptor:
        if not desc.name:
            raise ValueError("object name must be nonempty")
        if desc.label is not None:
            self.registry.validate(desc.label)
        key = (desc.kind, desc.owner, desc.name)
        if key in self._names:
            raise DuplicateName(f"{desc.kind.value} {desc.name!r} already exists for owner {desc.owner}")
        self._names[key] = desc.oid
        self.objects[desc.oid] = desc
        return desc

    def get(self, oid: int) -> ObjectDescriptor:
        try:
            return self.objects[oid]
        except KeyError:
            raise UnknownObject(f"no object {oid}") from None

    def find(self, name: str, kind: ObjectKind | None = None) -> ObjectDescriptor:
        """Resolve a name to the single object carrying it."""
        hits = [d for d in self.objects.values()
                if d.name == name and (kind is None or d.kind is kind)]
        if not hits:
            raise UnknownObject(f"no object named {name!r}")
        if len(hits) > 1:
            raise UnknownObject(f"name {name!r} is ambiguous ({len(hits)} objects)")
        return hits[0]

    def set_label(self, oid: int, label: Label | None) -> ObjectDescriptor:
        desc = self.get(oid)
        if label is not None:
            self.registry.validate(label)
        desc = replace(desc, label=label)
        self.objects[oid] = desc
        return desc

    def remove_object(self, oid: int) -> None:
        desc = self.objects.pop(oid)
        del self._names[(desc.kind, desc.owner, desc.name)]
        self.endpoints.pop(oid, None)
        self.listening.discard(oid)
        for key in [k for k in self.handles if k[1] == oid]:
            del self.handles[key]

    # threads

    def spawn_thread(self, process: int, label: Label = EMPTY,
                     caps: CapabilityList | None = None, *,
                     tid: int | None = None, image: str | None = None) -> ThreadContext:
        if process not in self.objects or self.objects[process].kind is not ObjectKind.PROCESS:
            raise UnknownObject(f"process {process} does not exist")
        if tid is None:
            while self._next_tid in self.threads:
                self._next_tid += 1
            tid = self._next_tid
            self._next_tid += 1
        elif tid in self.threads:
            raise ValueError(f"tid {tid} already in use")
        self.registry.validate(label)
        ctx = ThreadContext(tid, process, label, caps or CapabilityList(), (), image)
        self.threads[tid] = ctx
        self._maps[tid] = RegionMap()
        return ctx

    def thread(self, tid: int) -> ThreadContext:
        try:
            return self.threads[tid]
        except KeyError:
            raise UnknownTid(f"no thread {tid}") from None

    def update_thread(self, ctx: ThreadContext) -> ThreadContext:
        if ctx.tid not in self.threads:
            raise UnknownTid(f"no thread {ctx.tid}")
        self.registry.validate(ctx.label)
        ctx = replace(ctx, regions=self._maps[ctx.tid].rids())
        self.threads[ctx.tid] = ctx
        return ctx

    def remove_thread(self, tid: int) -> None:
        self.thread(tid)
        for rid in list(self._maps[tid].rids()):
            self.unmap_region(tid, rid)
        del self.threads[tid]
        del self._maps[tid]
        self.tracing.discard(tid)
        self.finished.discard(tid)
        for key in [k for k in self.handles if k[0] == tid]:
            del self.handles[key]

    # memory regions

    def map_region(self, tid: int, base: int, length: int, perms="rw",
                   label: Label = EMPTY, name: str = "") -> MemoryRegion:
        ctx = self.thread(tid)
        if length <= 0:
            raise ValueError("region length must be positive")
        if base < 0:
            raise ValueError("region base must be non-negative")
        perms = frozenset(perms)
        if not perms <= {"r", "w", "x"}:
            raise ValueError(f"bad permissions {''.join(sorted(perms))!r}")
        self.registry.validate(label)
        clash = self._maps[tid].overlapping(base, length)
        if clash is not None:
            raise OverlapError(
                f"[{base:#x}, {base + length:#x}) overlaps region {clash.rid} "
                f"[{clash.base:#x}, {clash.end:#x})"
            )
        used = self._domains.setdefault(ctx.process, {})
        domain = next((d for d in range(self.domain_count) if d not in used), None)
        if domain is None:
            raise DomainsExhausted(
                f"process {ctx.process} already uses all {self.domain_count} memory domains"
            )
        region = MemoryRegion(self._new_oid(), tid, ctx.process, base, length,
                              perms, label, domain, name)
        used[domain] = region.rid
        self.regions[region.rid] = region
        self._maps[tid].insert(region)
        self.threads[tid] = replace(ctx, regions=self._maps[tid].rids())
        return region

    def unmap_region(self, tid: int, rid: int) -> None:
        ctx = self.thread(tid)
        region = self.regions.get(rid)
        if region is None:
            raise UnknownRegion(f"no region {rid}")
        if region.owner != tid:
            raise NotOwner(f"region {rid} belongs to thread {region.owner}, not {tid}")
        self._maps[tid].remove(region)
        del self._domains[region.process][region.domain]
        del self.regions[rid]
        self.threads[tid] = replace(ctx, regions=self._maps[tid].rids())

    def protect_region(self, tid: int, rid: int, perms) -> MemoryRegion:
        region = self.regions.get(rid)
        if region is None:
            raise UnknownRegion(f"no region {rid}")
        if region.owner != tid:
            raise NotOwner(f"region {rid} belongs to thread {region.owner}, not {tid}")
        region = replace(region, perms=frozenset(perms))
        self.regions[rid] = region
        self._maps[tid].replace(region)
        return region

    def region_lookup(self, tid: int, address: int) -> MemoryRegion | None:
        self.thread(tid)
        return self._maps[tid].find(address)

    def regions_of(self, tid: int) -> list[MemoryRegion]:
        self.thread(tid)
        return list(self._maps[tid])

    def find_region(self, address: int) -> MemoryRegion | None:
        """Region of any thread covering ``address``, lowest tid first."""
        for tid in sorted(self._maps):
            hit = self._maps[tid].find(address)
            if hit is not None:
                return hit
        return None

    def domains_in_use(self, process: int) -> dict[int, int]:
        return dict(self._domains.get(process, {}))

    # whole-world views

    def snapshot(self) -> dict:
        """Observable state as plain sorted data, for equality checks.

        Id counters are left out: they only ever grow.
        """
        def lab(label):
            if label is None:
                return None
            return (tuple(sorted(label.secrecy)), tuple(sorted(label.integrity)))

        return {
            "tags": self.registry.snapshot(),
            "objects": tuple(
                (d.oid, d.kind.value, d.name, d.owner, lab(d.label),
                 getattr(d, "direction", None) and d.direction.value)
                for d in sorted(self.objects.values(), key=lambda d: d.oid)
            ),
            "threads": tuple(
                (t.tid, t.process, lab(t.label),
                 tuple(sorted((g[0], g[1].value) for g in t.caps.grants)),
                 t.regions, t.image)
                for t in sorted(self.threads.values(), key=lambda t: t.tid)
            ),
            "regions": tuple(
                (r.rid, r.owner, r.base, r.length, "".join(sorted(r.perms)),
                 lab(r.label), r.domain, r.name)
                for r in sorted(self.regions.values(), key=lambda r: r.rid)
            ),
            "handles": tuple(sorted(self.handles.items())),
            "endpoints": tuple(sorted(self.endpoints.items())),
            "listening": tuple(sorted(self.listening)),
            "tracing": tuple(sorted(self.tracing)),
            "finished": tuple(sorted(self.finished)),
        }

    def audit(self) -> list[str]:
        """Check structural invariants; returns a list of problems."""
        problems = []

        def check_label(what, label):
            if label is None:
                return
            try:
                self.registry.validate(label)
            except Exception as exc:  # noqa: BLE001 - collected, not raised
                problems.append(f"{what}: {exc}")

        for d in self.objects.values():
            check_label(f"object {d.oid}", d.label)
        for t in self.threads.values():
            check_label(f"thread {t.tid}", t.label)
            regions = list(self._maps[t.tid])
            for a, b in zip(regions, regions[1:]):
                if a.end > b.base:
                    problems.append(f"thread {t.tid}: regions {a.rid} and {b.rid} overlap")
            if t.regions != tuple(r.rid for r in regions):
                problems.append(f"thread {t.tid}: region list out of sync")
        for r in self.regions.values():
            check_label(f"region {r.rid}", r.label)
            if not 0 <= r.domain < self.domain_count:
                problems.append(f"region {r.rid}: domain {r.domain} out of range")
        for pid, used in self._domains.items():
            for dom, rid in used.items():
                if self.regions.get(rid) is None or self.regions[rid].domain != dom:
                    problems.append(f"process {pid}: stale domain {dom}")
        return problems
