"""Tags, labels, capabilities and the flow rules.

A label is a pair of tag sets. Secrecy tags mark what a principal has
seen; integrity tags mark what it vouches for. Data may move from ``src``
to ``dst`` when ``src`` is no more secret than ``dst`` and ``dst`` claims
no integrity that ``src`` lacks.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable

from .errors import CapabilityDenied, CapacityExceeded, TagKindCollision, UnknownTag

DEFAULT_CAPACITY = 1024


class TagKind(str, Enum):
    SECRECY = "secrecy"
    INTEGRITY = "integrity"


class Privilege(str, Enum):
    ADD = "ADD"
    REMOVE = "REMOVE"


class Direction(str, Enum):
    READ = "READ"
    WRITE = "WRITE"


class Rule(str, Enum):
    SECRECY_LEAK = "SecrecyLeak"
    INTEGRITY_VIOLATION = "IntegrityViolation"
    CAPABILITY_DENIED = "CapabilityDenied"
    UNMAPPED_ACCESS = "UnmappedAccess"
    UNAUTHORIZED_PORT_INJECTION = "UnauthorizedPortInjection"


@dataclass(frozen=True)
class Tag:
    id: int
    kind: TagKind
    name: str | None = None


@dataclass(frozen=True)
class Label:
    secrecy: frozenset[int] = frozenset()
    integrity: frozenset[int] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "secrecy", frozenset(self.secrecy))
        object.__setattr__(self, "integrity", frozenset(self.integrity))

    @property
    def empty(self) -> bool:
        return not self.secrecy and not self.integrity

    def tags(self) -> frozenset[int]:
        return self.secrecy | self.integrity

    def with_tag(self, tag: Tag) -> Label:
        if tag.kind is TagKind.SECRECY:
            return replace(self, secrecy=self.secrecy | {tag.id})
        return replace(self, integrity=self.integrity | {tag.id})

    def without_tag(self, tag: Tag) -> Label:
        if tag.kind is TagKind.SECRECY:
            return replace(self, secrecy=self.secrecy - {tag.id})
        return replace(self, integrity=self.integrity - {tag.id})

    def union(self, other: Label) -> Label:
        return Label(self.secrecy | other.secrecy, self.integrity | other.integrity)

    def difference(self, other: Label) -> Label:
        return Label(self.secrecy - other.secrecy, self.integrity - other.integrity)


EMPTY = Label()


@dataclass(frozen=True)
class CapabilityList:
    grants: frozenset[tuple[int, Privilege]] = frozenset()

    def __post_init__(self):
        object.__setattr__(
            self, "grants", frozenset((int(t), Privilege(p)) for t, p in self.grants)
        )

    @classmethod
    def owner_of(cls, *tags: Tag | int) -> CapabilityList:
        """Both privileges for each tag, as handed to a tag's creator."""
        ids = [t.id if isinstance(t, Tag) else t for t in tags]
        return cls(frozenset((i, p) for i in ids for p in Privilege))

    def allows(self, tag: Tag | int, privilege: Privilege) -> bool:
        tid = tag.id if isinstance(tag, Tag) else tag
        return (tid, Privilege(privilege)) in self.grants

    def with_grant(self, tag: Tag | int, privilege: Privilege) -> CapabilityList:
        tid = tag.id if isinstance(tag, Tag) else tag
        return CapabilityList(self.grants | {(tid, Privilege(privilege))})

    def union(self, other: CapabilityList) -> CapabilityList:
        return CapabilityList(self.grants | other.grants)

    def restricted_to(self, tag_ids: Iterable[int]) -> CapabilityList:
        keep = set(tag_ids)
        return CapabilityList(frozenset(g for g in self.grants if g[0] in keep))


@dataclass(frozen=True)
class Principal:
    """Minimal subject: a label plus the capabilities to change it."""

    label: Label = EMPTY
    caps: CapabilityList = field(default_factory=CapabilityList)


class LabelRegistry:
    """Hash-table registry of live tags with a fixed capacity.

    Ids come from a monotone counter and are never handed out twice, so a
    removed tag's id stays dead for the registry's lifetime.
    """

    def __init__(self, capacity: int = DEFAULT_CAPACITY):
        if capacity < 0:
            raise ValueError("capacity must be non-negative")
        self.capacity = capacity
        self._tags: dict[int, Tag] = {}
        self._by_name: dict[str, int] = {}
        self.next_id = 1
        self._lock = threading.RLock()

    def __len__(self) -> int:
        return len(self._tags)

    def __deepcopy__(self, memo):
        clone = LabelRegistry(self.capacity)
        clone._tags = dict(self._tags)
        clone._by_name = dict(self._by_name)
        clone.next_id = self.next_id
        return clone

    def __contains__(self, tag: Tag | int) -> bool:
        tid = tag.id if isinstance(tag, Tag) else tag
        return tid in self._tags

    def __iter__(self):
        return iter(sorted(self._tags.values(), key=lambda t: t.id))

    def create_tag(self, kind: TagKind | str, name: str | None = None) -> Tag:
        kind = TagKind(kind)
        with self._lock:
            if len(self._tags) >= self.capacity:
                raise CapacityExceeded(
                    f"registry holds {len(self._tags)} of {self.capacity} tags"
                )
            if name is not None and name in self._by_name:
                raise TagKindCollision(f"tag name {name!r} already registered")
            tag = Tag(self.next_id, kind, name)
            self.next_id += 1
            self._tags[tag.id] = tag
            if name is not None:
                self._by_name[name] = tag.id
            return tag

    def get(self, tag_id: int) -> Tag:
        try:
            return self._tags[tag_id]
        except KeyError:
            raise UnknownTag(f"tag {tag_id} is not registered") from None

    def by_name(self, name: str) -> Tag:
        try:
            return self._tags[self._by_name[name]]
        except KeyError:
            raise UnknownTag(f"no tag named {name!r}") from None

    def has_name(self, name: str) -> bool:
        return name in self._by_name

    def ensure(self, name: str, kind: TagKind | str) -> tuple[Tag, bool]:
        """Look up ``name``, creating it with ``kind`` on first use.

        Returns the tag and whether it was created by this call.
        """
        kind = TagKind(kind)
        with self._lock:
            tid = self._by_name.get(name)
            if tid is None:
                return self.create_tag(kind, name), True
            tag = self._tags[tid]
        if tag.kind is not kind:
            raise TagKindCollision(
                f"tag {name!r} is a {tag.kind.value} tag, not {kind.value}"
            )
        return tag, False

    def remove(self, tag_id: int) -> Tag:
        with self._lock:
            try:
                tag = self._tags.pop(tag_id)
            except KeyError:
                raise UnknownTag(f"tag {tag_id} is not registered") from None
            if tag.name is not None:
                self._by_name.pop(tag.name, None)
            return tag

    def validate(self, label: Label) -> None:
        for tid in label.secrecy:
            if self.get(tid).kind is not TagKind.SECRECY:
                raise UnknownTag(f"tag {tid} in secrecy set is an integrity tag")
        for tid in label.integrity:
            if self.get(tid).kind is not TagKind.INTEGRITY:
                raise UnknownTag(f"tag {tid} in integrity set is a secrecy tag")

    def describe(self, label: Label) -> str:
        def names(ids):
            out = []
            for i in sorted(ids):
                tag = self._tags.get(i)
                out.append(tag.name if tag is not None and tag.name else f"#{i}")
            return "{" + ",".join(out) + "}"

        return f"S={names(label.secrecy)} I={names(label.integrity)}"

    def snapshot(self) -> tuple:
        return tuple((t.id, t.kind.value, t.name) for t in self)


def can_flow_secrecy(src: Label, dst: Label) -> bool:
    return src.secrecy <= dst.secrecy


def can_flow_integrity(src: Label, dst: Label) -> bool:
    return dst.integrity <= src.integrity


@dataclass(frozen=True)
class FlowDecision:
    allowed: bool
    rule: Rule | None = None

    def __bool__(self) -> bool:
        return self.allowed


ALLOW = FlowDecision(True)


def _label_of(x) -> Label:
    if x is None:
        return EMPTY
    if isinstance(x, Label):
        return x
    return x.label


def check_flow_allowed(subject, obj, direction: Direction | str,
                       registry: LabelRegistry | None = None) -> FlowDecision:
    """Decide whether ``subject`` may read from or write to ``obj``.

    ``subject`` and ``obj`` may be labels or anything carrying a ``label``
    attribute; ``None`` stands for the empty label. Secrecy is checked
    before integrity, so a flow failing both reports a secrecy leak.
    """
    s, o = _label_of(subject), _label_of(obj)
    if registry is not None:
        registry.validate(s)
        registry.validate(o)
    src, dst = (o, s) if Direction(direction) is Direction.READ else (s, o)
    if not can_flow_secrecy(src, dst):
        return FlowDecision(False, Rule.SECRECY_LEAK)
    if not can_flow_integrity(src, dst):
        return FlowDecision(False, Rule.INTEGRITY_VIOLATION)
    return ALLOW


def raise_label(subject, tag: Tag):
    """Return ``subject`` with ``tag`` added to its label.

    ``subject`` is any dataclass with ``label`` and ``caps`` fields.
    """
    if not subject.caps.allows(tag, Privilege.ADD):
        raise CapabilityDenied(f"no ADD capability for tag {tag.name or tag.id}")
    return replace(subject, label=subject.label.with_tag(tag))


def lower_label(subject, tag: Tag):
    if not subject.caps.allows(tag, Privilege.REMOVE):
        raise CapabilityDenied(f"no REMOVE capability for tag {tag.name or tag.id}")
    return replace(subject, label=subject.label.without_tag(tag))


def grant_capability(owner, recipient, tag: Tag | int, privilege: Privilege | str):
    """Delegate ``(tag, privilege)`` from ``owner`` to ``recipient``.

    The owner keeps its grant. Granting twice leaves the recipient as is.
    """
    privilege = Privilege(privilege)
    if not owner.caps.allows(tag, privilege):
        tid = tag.id if isinstance(tag, Tag) else tag
        raise CapabilityDenied(f"owner lacks ({tid}, {privilege.value})")
    return replace(recipient, caps=recipient.caps.with_grant(tag, privilege))
