import random

import pytest

from flowguard.errors import (
    DomainsExhausted,
    DuplicateName,
    NotOwner,
    OverlapError,
    UnknownObject,
    UnknownRegion,
)
from flowguard.labels import Label, TagKind
from flowguard.objects import ObjectKind, PortDirection, World


@pytest.fixture
def world():
    return World()


@pytest.fixture
def proc(world):
    return world.create_process("bci")


def test_create_labeled_objects(world, proc):
    delta = world.registry.create_tag(TagKind.SECRECY, "delta")
    iota = world.registry.create_tag(TagKind.INTEGRITY, "iota")
    rec = world.create_object(ObjectKind.FILE, "/data/eegIDRecord.csv", proc.oid, Label({delta.id}))
    assert world.get(rec.oid).label.secrecy == {delta.id}
    port = world.create_object("port", "/dev/ttyUSB0", proc.oid, Label(integrity={iota.id}),
                               direction="in")
    assert port.direction is PortDirection.IN
    assert port.label.integrity == {iota.id}


def test_duplicate_name(world, proc):
    world.create_object(ObjectKind.FILE, "/tmp/a", proc.oid)
    with pytest.raises(DuplicateName):
        world.create_object(ObjectKind.FILE, "/tmp/a", proc.oid)
    other = world.create_process("other")
    world.create_object(ObjectKind.FILE, "/tmp/a", other.oid)
    world.create_object(ObjectKind.PIPE, "/tmp/a", proc.oid)


def test_unregistered_label_rejected(world, proc):
    with pytest.raises(Exception):
        world.create_object(ObjectKind.FILE, "/x", proc.oid, Label({77}))
    assert world.audit() == []


def test_find_missing_and_ambiguous(world, proc):
    with pytest.raises(UnknownObject):
        world.find("/nope")
    world.create_object(ObjectKind.FILE, "/dup", proc.oid)
    world.create_object(ObjectKind.SOCKET, "/dup", proc.oid)
    with pytest.raises(UnknownObject):
        world.find("/dup")
    assert world.find("/dup", ObjectKind.SOCKET).kind is ObjectKind.SOCKET


def test_overlap(world, proc):
    t = world.spawn_thread(proc.oid)
    world.map_region(t.tid, 0x1000, 0x1000)
    with pytest.raises(OverlapError):
        world.map_region(t.tid, 0x1800, 0x100)
    world.map_region(t.tid, 0x2000, 0x10)  # touching is fine


def test_seventeenth_region_exhausts_domains(world, proc):
    t = world.spawn_thread(proc.oid)
    tag = world.registry.create_tag(TagKind.SECRECY)
    regions = [world.map_region(t.tid, 0x10000 * (i + 1), 0x100, label=Label({tag.id}))
               for i in range(16)]
    assert sorted(r.domain for r in regions) == list(range(16))
    with pytest.raises(DomainsExhausted):
        world.map_region(t.tid, 0x100_0000, 0x100, label=Label({tag.id}))


def test_domains_are_per_process(world, proc):
    t1 = world.spawn_thread(proc.oid)
    t2 = world.spawn_thread(proc.oid)
    for i in range(8):
        world.map_region(t1.tid, 0x10000 * (i + 1), 0x10)
        world.map_region(t2.tid, 0x10000 * (i + 1), 0x10)
    with pytest.raises(DomainsExhausted):
        world.map_region(t1.tid, 0x900000, 0x10)
    other = world.create_process("other")
    t3 = world.spawn_thread(other.oid)
    assert world.map_region(t3.tid, 0x10000, 0x10).domain == 0


def test_unmap_frees_lowest_domain(world, proc):
    t = world.spawn_thread(proc.oid)
    a = world.map_region(t.tid, 0x1000, 0x100)
    b = world.map_region(t.tid, 0x2000, 0x100)
    assert (a.domain, b.domain) == (0, 1)
    world.unmap_region(t.tid, a.rid)
    assert world.region_lookup(t.tid, 0x1000) is None
    again = world.map_region(t.tid, 0x1000, 0x100)
    assert again.domain == 0


def test_unmap_errors(world, proc):
    t1 = world.spawn_thread(proc.oid)
    t2 = world.spawn_thread(proc.oid)
    r = world.map_region(t1.tid, 0x1000, 0x100)
    with pytest.raises(NotOwner):
        world.unmap_region(t2.tid, r.rid)
    with pytest.raises(UnknownRegion):
        world.unmap_region(t1.tid, 12345)


def test_lookup_boundaries(world, proc):
    t = world.spawn_thread(proc.oid)
    r = world.map_region(t.tid, 0x4000, 0x200)
    assert world.region_lookup(t.tid, 0x4000) == r
    assert world.region_lookup(t.tid, 0x41FF) == r
    assert world.region_lookup(t.tid, 0x4200) is None
    assert world.region_lookup(t.tid, 0x3FFF) is None


def test_lookup_matches_linear_scan():
    rng = random.Random(5)
    world = World(domain_count=1000)
    proc = world.create_process("p")
    t = world.spawn_thread(proc.oid)
    placed = []
    while len(placed) < 100:
        base, length = rng.randrange(0, 1 << 20), rng.randrange(1, 4096)
        try:
            placed.append(world.map_region(t.tid, base, length))
        except OverlapError:
            pass
        assert world.audit() == []
    for _ in range(5000):
        addr = rng.randrange(0, (1 << 20) + 4096)
        hits = [r for r in placed if r.base <= addr < r.base + r.length]
        assert len(hits) <= 1
        assert world.region_lookup(t.tid, addr) == (hits[0] if hits else None)


def test_random_map_unmap_keeps_invariants():
    rng = random.Random(11)
    world = World()
    procs = [world.create_process(f"p{i}") for i in range(2)]
    tids = [world.spawn_thread(p.oid).tid for p in procs for _ in range(2)]
    for _ in range(600):
        tid = rng.choice(tids)
        mine = world.regions_of(tid)
        if mine and rng.random() < 0.4:
            world.unmap_region(tid, rng.choice(mine).rid)
        else:
            try:
                world.map_region(tid, rng.randrange(0, 64) * 0x100, rng.randrange(1, 0x300))
            except (OverlapError, DomainsExhausted):
                pass
        assert world.audit() == []
        for p in procs:
            used = world.domains_in_use(p.oid)
            assert all(0 <= d < 16 for d in used)
            assert len(set(used.values())) == len(used)
