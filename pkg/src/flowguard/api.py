"""Developer-facing tracing API.

Mirrors the shape of a small C library: switch a thread into tracing mode
with :func:`a_enable`, label objects with :func:`a_add` / :func:`a_create`,
map tainted memory with :func:`a_mmap`, and undo everything the session
did with :func:`a_cleanup`.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable

from .errors import (
    AlreadyEnabled,
    CapabilityDenied,
    CapacityExceeded,
    DoubleFree,
    DuplicateName,
    NotEnabled,
    OutOfRegion,
    TagKindCollision,
    UnknownRole,
    UnknownTid,
)
from .labels import EMPTY, CapabilityList, Label, Privilege, lower_label, raise_label
from .objects import MemoryRegion, ObjectKind, World
from .policy import FLAG_KIND, Flag, PolicyConfig, split_tags

SLABEL = Flag.SLABEL
ILABEL = Flag.ILABEL

SIZE_CLASSES = (16, 64, 256, 1024, 4096)
PAGE = 0x1000


class SizeClassAllocator:
    """Fixed size-class allocator carving blocks out of one region."""

    def __init__(self, base: int, length: int, classes=SIZE_CLASSES):
        self.base = base
        self.end = base + length
        self.classes = tuple(sorted(classes))
        self._top = base
        self._free: dict[int, list[int]] = {c: [] for c in self.classes}
        self.live: dict[int, int] = {}

    def size_class(self, size: int) -> int:
        for c in self.classes:
            if size <= c:
                return c
        raise OutOfRegion(f"{size} bytes exceeds the largest size class {self.classes[-1]}")

    def malloc(self, size: int) -> int:
        if size <= 0:
            raise ValueError("size must be positive")
        cls = self.size_class(size)
        if self._free[cls]:
            addr = self._free[cls].pop()
        else:
            addr = -(-self._top // 16) * 16
            if addr + cls > self.end:
                raise OutOfRegion(f"region [{self.base:#x}, {self.end:#x}) has no room for {cls} bytes")
            self._top = addr + cls
        self.live[addr] = cls
        return addr

    def free(self, address: int) -> None:
        cls = self.live.pop(address, None)
        if cls is None:
            raise DoubleFree(f"{address:#x} is not a live allocation")
        self._free[cls].append(address)

    def owns(self, address: int) -> bool:
        return self.base <= address < self.end


@dataclass
class Session:
    world: World
    tid: int
    process: int
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    enabled: bool = True
    owns_thread: bool = False
    owns_process: bool = False
    created_tags: list[int] = field(default_factory=list)
    created_objects: list[int] = field(default_factory=list)
    added: dict[int, Label] = field(default_factory=dict)
    prior: dict[int, Label | None] = field(default_factory=dict)
    regions: list[int] = field(default_factory=list)
    heaps: dict[int, SizeClassAllocator] = field(default_factory=dict)
    children: dict[int, object] = field(default_factory=dict)

    @property
    def thread(self):
        return self.world.thread(self.tid)

    def raise_label(self, tag_name: str):
        _check(self)
        tag = self.world.registry.by_name(tag_name)
        return self.world.update_thread(raise_label(self.thread, tag))

    def lower_label(self, tag_name: str):
        _check(self)
        tag = self.world.registry.by_name(tag_name)
        return self.world.update_thread(lower_label(self.thread, tag))


def _check(session: Session) -> None:
    if not session.enabled:
        raise NotEnabled("session is not in tracing mode")


def a_enable(world: World, *, tid: int | None = None,
             policy: PolicyConfig | None = None, name: str = "traced") -> Session:
    """Put a thread into tracing mode.

    With ``tid=None`` a fresh process and thread are allocated and later
    released by :func:`a_cleanup`.
    """
    if tid is not None:
        if tid in world.tracing:
            raise AlreadyEnabled(f"thread {tid} is already tracing")
        ctx = world.thread(tid)
        session = Session(world, tid, ctx.process, policy or PolicyConfig())
    else:
        proc = world.create_process(name)
        ctx = world.spawn_thread(proc.oid)
        session = Session(world, ctx.tid, proc.oid, policy or PolicyConfig(),
                          owns_thread=True, owns_process=True)
    world.tracing.add(session.tid)
    return session


def _resolve(session: Session, flags, tags) -> Label:
    """Turn flag/tag names into a label, creating unseen tags.

    Checked in full before anything is created: existing tags need an ADD
    grant, fresh ones are owned by the session's thread.
    """
    reg = session.world.registry
    secrecy, integrity = split_tags(flags, tags)
    wanted = [(FLAG_KIND[SLABEL], n) for n in secrecy] + \
             [(FLAG_KIND[ILABEL], n) for n in integrity]
    caps = session.thread.caps
    fresh = []
    for kind, name in wanted:
        if reg.has_name(name):
            tag = reg.by_name(name)
            if tag.kind is not kind:
                raise TagKindCollision(f"tag {name!r} is a {tag.kind.value} tag")
            if not caps.allows(tag, Privilege.ADD):
                raise CapabilityDenied(f"session lacks ADD for tag {name!r}")
        elif (kind, name) not in fresh:
            fresh.append((kind, name))
    if len({n for _, n in fresh}) != len(fresh):
        raise TagKindCollision("a tag name is requested with both kinds")
    if len(reg) + len(fresh) > reg.capacity:
        raise CapacityExceeded("not enough registry capacity for new tags")
    created = [reg.create_tag(kind, name) for kind, name in fresh]
    if created:
        session.created_tags.extend(t.id for t in created)
        ctx = session.thread
        session.world.update_thread(
            replace(ctx, caps=ctx.caps.union(CapabilityList.owner_of(*created))))
    label = EMPTY
    for _, name in wanted:
        label = label.with_tag(reg.by_name(name))
    return label


def _label_object(session: Session, oid: int, label: Label) -> None:
    world = session.world
    desc = world.get(oid)
    current = desc.label or EMPTY
    if oid not in session.prior:
        session.prior[oid] = desc.label
    session.added[oid] = session.added.get(oid, EMPTY).union(label.difference(current))
    world.set_label(oid, current.union(label))


def a_add(session: Session, name: str, flags, tags) -> int:
    _check(session)
    desc = session.world.find(name)
    label = _resolve(session, flags, tags)
    _label_object(session, desc.oid, label)
    return desc.oid


def a_remove(session: Session, oid: int) -> None:
    """Strip the tags this session added to ``oid``."""
    _check(session)
    world = session.world
    desc = world.get(oid)
    added = session.added.get(oid, EMPTY)
    caps = session.thread.caps
    for tid in sorted(added.tags()):
        if not caps.allows(tid, Privilege.REMOVE):
            raise CapabilityDenied(f"session lacks REMOVE for tag {tid}")
    new = (desc.label or EMPTY).difference(added)
    if new.empty and session.prior.get(oid) is None:
        new = None
    world.set_label(oid, new)
    session.added.pop(oid, None)
    session.prior.pop(oid, None)


def a_create(session: Session, kind: ObjectKind | str, name: str, flags, tags, **extra) -> int:
    """Create an object that carries its label from birth."""
    _check(session)
    kind = ObjectKind(kind)
    key = (kind, session.process, name)
    if key in session.world._names:
        raise DuplicateName(f"{kind.value} {name!r} already exists")
    label = _resolve(session, flags, tags)
    desc = session.world.create_object(kind, name, session.process,
                                       None if label.empty else label, **extra)
    session.created_objects.append(desc.oid)
    return desc.oid


def a_mmap(session: Session, length: int, perms="rw", tags=(),
           flags=(SLABEL,), name: str = "") -> MemoryRegion:
    _check(session)
    label = _resolve(session, flags, tags) if tags else EMPTY
    world = session.world
    base = world.heap_top
    region = world.map_region(session.tid, base, length, perms, label, name)
    world.heap_top = base + -(-length // PAGE) * PAGE
    session.regions.append(region.rid)
    return region


def a_munmap(session: Session, rid: int) -> None:
    _check(session)
    session.world.unmap_region(session.tid, rid)
    session.heaps.pop(rid, None)
    if rid in session.regions:
        session.regions.remove(rid)


def a_malloc(session: Session, size: int, region: int | None = None) -> int:
    """Allocate from a tainted region (the most recent one by default)."""
    _check(session)
    if region is None:
        live = [r for r in session.regions if r in session.world.regions]
        if not live:
            raise OutOfRegion("session has no mapped region to allocate from")
        region = live[-1]
    heap = session.heaps.get(region)
    if heap is None:
        r = session.world.regions.get(region)
        if r is None or r.owner != session.tid:
            raise OutOfRegion(f"region {region} is not mapped by this session")
        heap = session.heaps[region] = SizeClassAllocator(r.base, r.length)
    return heap.malloc(size)


def a_free(session: Session, address: int) -> None:
    _check(session)
    for heap in session.heaps.values():
        if heap.owns(address):
            heap.free(address)
            return
    raise DoubleFree(f"{address:#x} was not allocated by this session")


def a_clone(session: Session, entry: Callable[[Session], object] | None = None) -> int:
    """Spawn a child thread that inherits the caller's label and capabilities.

    ``entry`` runs to completion immediately with a session for the child;
    its return value is handed back by :func:`a_wait`.
    """
    _check(session)
    parent = session.thread
    world = session.world
    child = world.spawn_thread(parent.process, parent.label, parent.caps, image=parent.image)
    result = None
    if entry is not None:
        world.tracing.add(child.tid)
        child_session = Session(world, child.tid, parent.process, session.policy)
        result = entry(child_session)
        world.tracing.discard(child.tid)
    world.finished.add(child.tid)
    session.children[child.tid] = result
    return child.tid


def a_wait(session: Session, tid: int):
    _check(session)
    if tid not in session.children:
        raise UnknownTid(f"thread {tid} is not a child of this session")
    result = session.children.pop(tid)
    session.world.remove_thread(tid)
    return result


def a_execv(session: Session, image: str, role: str) -> None:
    """Switch to ``image``: capabilities come from ``role``, labels stay."""
    _check(session)
    spec = session.policy.roles.get(role)
    if spec is None:
        raise UnknownRole(f"role {role!r} is not configured")
    if not spec.admits(image):
        raise CapabilityDenied(f"image {image!r} may not assume role {role!r}")
    reg = session.world.registry
    caps = CapabilityList(frozenset(
        (reg.by_name(t).id, p) for t, p in spec.grants if reg.has_name(t)))
    ctx = session.thread
    session.world.update_thread(replace(ctx, caps=caps, image=image))


def load_policy(session: Session, config) -> int:
    """Apply a policy's taint entries to existing objects.

    ``config`` is a :class:`PolicyConfig`, a path, or JSON text. Everything
    is parsed and capability-checked before the world changes. Returns the
    number of distinct objects labeled.
    """
    _check(session)
    if isinstance(config, PolicyConfig):
        policy = config
    elif isinstance(config, str) and config.lstrip().startswith("{"):
        policy = PolicyConfig.from_json(config)
    else:
        policy = PolicyConfig.load(Path(config))

    world = session.world
    plan: list[tuple[int, dict]] = []
    for desc in sorted(world.objects.values(), key=lambda d: d.oid):
        for entry in policy.entries:
            if entry.matches(desc):
                tags = {}
                if entry.secrecy:
                    tags[SLABEL.value] = list(entry.secrecy)
                if entry.integrity:
                    tags[ILABEL.value] = list(entry.integrity)
                plan.append((desc.oid, tags))
    reg = world.registry
    caps = session.thread.caps
    for _, tags in plan:
        for names in tags.values():
            for n in names:
                if reg.has_name(n) and not caps.allows(reg.by_name(n), Privilege.ADD):
                    raise CapabilityDenied(f"session lacks ADD for tag {n!r}")
    for oid, tags in plan:
        _label_object(session, oid, _resolve(session, list(tags), tags))
    session.policy = policy
    return len({oid for oid, _ in plan})


def a_cleanup(session: Session) -> None:
    """Undo the session: children, memory, objects, labels and tags."""
    _check(session)
    world = session.world
    for tid in list(session.children):
        a_wait(session, tid)
    for rid in list(session.regions):
        if rid in world.regions:
            world.unmap_region(world.regions[rid].owner, rid)
    session.regions.clear()
    session.heaps.clear()
    for oid in reversed(session.created_objects):
        if oid in world.objects:
            world.remove_object(oid)
    for oid in list(session.added):
        if oid not in world.objects:
            continue
        if _can_remove(session, oid):
            a_remove(session, oid)
        else:
            # exec may have dropped the REMOVE grants; cleanup restores anyway
            _force_restore(session, oid)
    dead = set(session.created_tags)
    if dead:
        _strip_tags(world, dead)
        for tid in session.created_tags:
            world.registry.remove(tid)
    world.tracing.discard(session.tid)
    if session.owns_thread:
        world.remove_thread(session.tid)
    if session.owns_process:
        world.remove_object(session.process)
    session.enabled = False


def _can_remove(session: Session, oid: int) -> bool:
    caps = session.thread.caps
    return all(caps.allows(t, Privilege.REMOVE) for t in session.added[oid].tags())


def _force_restore(session: Session, oid: int) -> None:
    desc = session.world.get(oid)
    new = (desc.label or EMPTY).difference(session.added.pop(oid))
    if new.empty and session.prior.pop(oid, None) is None:
        new = None
    session.world.set_label(oid, new)


def _strip_tags(world: World, dead: set[int]) -> None:
    gone = Label(dead, dead)
    for desc in list(world.objects.values()):
        if desc.label is not None and desc.label.tags() & dead:
            new = desc.label.difference(gone)
            world.set_label(desc.oid, None if new.empty else new)
    for ctx in list(world.threads.values()):
        caps = CapabilityList(frozenset(g for g in ctx.caps.grants if g[0] not in dead))
        world.threads[ctx.tid] = replace(ctx, label=ctx.label.difference(gone), caps=caps)
    for rid, region in list(world.regions.items()):
        if region.label.tags() & dead:
            world.regions[rid] = replace(region, label=region.label.difference(gone))
            world._maps[region.owner].replace(world.regions[rid])
