"""Policy configuration files.

A policy is a UTF-8 JSON document::

    {
      "taint": [{"pattern": "tty*", "kind": "port", "flags": ["ILABEL"],
                 "tags": ["dev"]}],
      "roles": {"bci": {"grants": [["eeg", "ADD"], ["eeg", "REMOVE"]]}}
    }

``tags`` is a list when one flag is given, or an object keyed by flag
(``{"SLABEL": [...], "ILABEL": [...]}``) to fill both label sets. Roles may
restrict which images can assume them with an ``images`` glob list. An
optional ``classify`` object overrides the name patterns used to sort
violations into attack vectors.

Patterns are shell-style globs (``*``, ``?``) matched against the full
object name or its last path component.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from fnmatch import fnmatchcase
from pathlib import Path, PurePosixPath

from .errors import PolicyParseError
from .labels import Privilege, TagKind
from .objects import ObjectKind


class Flag(str, Enum):
    SLABEL = "SLABEL"
    ILABEL = "ILABEL"


FLAG_KIND = {Flag.SLABEL: TagKind.SECRECY, Flag.ILABEL: TagKind.INTEGRITY}

DEFAULT_MODEL_PATTERNS = ("*model*", "*.pt", "*.onnx", "*weights*")
DEFAULT_DEVICE_PATTERNS = ("/dev/tty*", "tty*", "ble:*", "/dev/rfcomm*")


def glob_match(pattern: str, name: str) -> bool:
    return fnmatchcase(name, pattern) or fnmatchcase(PurePosixPath(name).name, pattern)


@dataclass(frozen=True)
class TaintEntry:
    pattern: str
    kind: ObjectKind | None
    flags: frozenset[Flag]
    secrecy: tuple[str, ...] = ()
    integrity: tuple[str, ...] = ()

    def matches(self, desc) -> bool:
        if self.kind is not None and desc.kind is not self.kind:
            return False
        return glob_match(self.pattern, desc.name)


@dataclass(frozen=True)
class Role:
    name: str
    grants: tuple[tuple[str, Privilege], ...] = ()
    images: tuple[str, ...] = ()

    def admits(self, image: str) -> bool:
        return not self.images or any(glob_match(p, image) for p in self.images)


@dataclass(frozen=True)
class PolicyConfig:
    entries: tuple[TaintEntry, ...] = ()
    roles: dict[str, Role] = field(default_factory=dict)
    model_patterns: tuple[str, ...] = DEFAULT_MODEL_PATTERNS
    device_patterns: tuple[str, ...] = DEFAULT_DEVICE_PATTERNS

    @classmethod
    def from_json(cls, text: str) -> PolicyConfig:
        return _parse(text)

    @classmethod
    def load(cls, path) -> PolicyConfig:
        return _parse(Path(path).read_text(encoding="utf-8"))

    def tag_kinds(self) -> dict[str, TagKind]:
        out = {}
        for e in self.entries:
            out.update({n: TagKind.SECRECY for n in e.secrecy})
            out.update({n: TagKind.INTEGRITY for n in e.integrity})
        return out

    def is_model(self, name: str) -> bool:
        return any(glob_match(p, name) for p in self.model_patterns)


DEFAULT_POLICY = PolicyConfig()


def split_tags(flags, tags) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Sort tag names into (secrecy, integrity) according to ``flags``.

    Raises ``ValueError`` for empty or unknown flags, or a flat tag list
    given with both flags.
    """
    try:
        flags = frozenset(Flag(f) for f in flags)
    except ValueError as exc:
        raise ValueError(f"unknown flag: {exc}") from None
    if not flags:
        raise ValueError("flags must name SLABEL and/or ILABEL")
    if isinstance(tags, dict):
        out = {Flag.SLABEL: (), Flag.ILABEL: ()}
        for key, names in tags.items():
            try:
                flag = Flag(key)
            except ValueError:
                raise ValueError(f"unknown flag {key!r} in tags") from None
            if flag not in flags:
                raise ValueError(f"tags given for {flag.value} but flag not set")
            out[flag] = _names(names)
        return out[Flag.SLABEL], out[Flag.ILABEL]
    names = _names(tags)
    if len(flags) > 1:
        raise ValueError("with both flags, tags must be an object keyed by flag")
    (flag,) = flags
    return (names, ()) if flag is Flag.SLABEL else ((), names)


def _names(seq) -> tuple[str, ...]:
    if isinstance(seq, str) or not isinstance(seq, (list, tuple)):
        raise ValueError("tags must be a list of strings")
    if not seq:
        raise ValueError("tag list is empty")
    for n in seq:
        if not isinstance(n, str) or not n:
            raise ValueError(f"bad tag name {n!r}")
    return tuple(dict.fromkeys(seq))


# --- parsing with source positions ---------------------------------------

_decoder = json.JSONDecoder()


def _skip_ws(text: str, i: int) -> int:
    while i < len(text) and text[i] in " \t\r\n":
        i += 1
    return i


def _positions(text: str, i: int, path: tuple, out: dict, depth: int) -> int:
    """Record the start offset of every value down to ``depth`` levels.

    Assumes ``text`` already parsed as JSON.
    """
    i = _skip_ws(text, i)
    out[path] = i
    if depth == 0 or text[i] not in "[{":
        return _decoder.raw_decode(text, i)[1]
    close = "}" if text[i] == "{" else "]"
    i = _skip_ws(text, i + 1)
    if text[i] == close:
        return i + 1
    index = 0
    while True:
        if close == "}":
            key, i = _decoder.raw_decode(text, i)
            i = _skip_ws(text, i) + 1  # ':'
            i = _positions(text, i, path + (key,), out, depth - 1)
        else:
            i = _positions(text, i, path + (index,), out, depth - 1)
            index += 1
        i = _skip_ws(text, i)
        if text[i] == close:
            return i + 1
        i = _skip_ws(text, i + 1)  # ','


def _line_col(text: str, offset: int) -> tuple[int, int]:
    line = text.count("\n", 0, offset) + 1
    col = offset - (text.rfind("\n", 0, offset) + 1) + 1
    return line, col


def _parse(text: str) -> PolicyConfig:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise PolicyParseError(exc.msg, exc.lineno, exc.colno) from None
    pos: dict = {}
    _positions(text, 0, (), pos, 3)

    def fail(reason, *path):
        while path not in pos:
            path = path[:-1]
        raise PolicyParseError(reason, *_line_col(text, pos[path]))

    if not isinstance(doc, dict):
        fail("policy must be a JSON object")
    unknown = sorted(set(doc) - {"taint", "roles", "classify"})
    if unknown:
        fail(f"unknown top-level key {unknown[0]!r}", unknown[0])

    entries = []
    taint = doc.get("taint", [])
    if not isinstance(taint, list):
        fail("'taint' must be a list", "taint")
    for n, raw in enumerate(taint):
        where = ("taint", n)
        if not isinstance(raw, dict):
            fail("taint entry must be an object", *where)
        extra = sorted(set(raw) - {"pattern", "kind", "flags", "tags"})
        if extra:
            fail(f"unknown key {extra[0]!r} in taint entry", *where, extra[0])
        pattern = raw.get("pattern")
        if not isinstance(pattern, str) or not pattern:
            fail("'pattern' must be a nonempty string", *where, "pattern")
        kind = raw.get("kind", "any")
        if not isinstance(kind, str):
            fail("'kind' must be a string", *where, "kind")
        if kind in ("any", "*"):
            okind = None
        else:
            try:
                okind = ObjectKind(kind)
            except ValueError:
                fail(f"unknown object kind {kind!r}", *where, "kind")
        flags = raw.get("flags")
        if not isinstance(flags, list) or not flags:
            fail("'flags' must be a nonempty list", *where, "flags")
        if "tags" not in raw:
            fail("missing 'tags'", *where)
        try:
            secrecy, integrity = split_tags(flags, raw["tags"])
        except ValueError as exc:
            fail(str(exc), *where, "tags")
        entries.append(TaintEntry(pattern, okind, frozenset(Flag(f) for f in flags),
                                  secrecy, integrity))

    kinds: dict[str, TagKind] = {}
    for n, e in enumerate(entries):
        for name, kind in [(s, TagKind.SECRECY) for s in e.secrecy] + \
                          [(s, TagKind.INTEGRITY) for s in e.integrity]:
            if kinds.setdefault(name, kind) is not kind:
                fail(f"tag {name!r} used as both secrecy and integrity", "taint", n)

    roles = {}
    raw_roles = doc.get("roles", {})
    if not isinstance(raw_roles, dict):
        fail("'roles' must be an object", "roles")
    for name, spec in raw_roles.items():
        where = ("roles", name)
        if not isinstance(spec, dict):
            fail("role must be an object", *where)
        extra = sorted(set(spec) - {"grants", "images"})
        if extra:
            fail(f"unknown key {extra[0]!r} in role", *where, extra[0])
        grants = []
        raw_grants = spec.get("grants", [])
        if not isinstance(raw_grants, list):
            fail("'grants' must be a list", *where, "grants")
        for g in raw_grants:
            if (not isinstance(g, list) or len(g) != 2 or not isinstance(g[0], str)
                    or g[1] not in ("ADD", "REMOVE")):
                fail('grant must be [tag, "ADD"|"REMOVE"]', *where, "grants")
            grants.append((g[0], Privilege(g[1])))
        images = spec.get("images", [])
        if not isinstance(images, list) or not all(isinstance(p, str) and p for p in images):
            fail("'images' must be a list of patterns", *where, "images")
        roles[name] = Role(name, tuple(dict.fromkeys(grants)), tuple(images))

    extra_kw = {}
    classify = doc.get("classify", {})
    if not isinstance(classify, dict):
        fail("'classify' must be an object", "classify")
    for key in classify:
        if key not in ("model_patterns", "device_patterns"):
            fail(f"unknown key {key!r} in classify", "classify", key)
        val = classify[key]
        if not isinstance(val, list) or not all(isinstance(p, str) and p for p in val):
            fail(f"{key!r} must be a list of patterns", "classify", key)
        extra_kw[key] = tuple(val)
    return PolicyConfig(tuple(entries), roles, **extra_kw)
