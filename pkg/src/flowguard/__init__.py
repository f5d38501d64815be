"""Decentralized information-flow control over a simulated BCI host, a trace
replay monitor, and a small adversarial-signal lab."""

from .labels import (
    EMPTY,
    CapabilityList,
    Direction,
    Label,
    LabelRegistry,
    Principal,
    Privilege,
    Rule,
    Tag,
    TagKind,
    can_flow_integrity,
    can_flow_secrecy,
    check_flow_allowed,
)
from .monitor import AV, Monitor, ReplaySummary, ViolationReport, replay
from .objects import ObjectKind, World
from .policy import PolicyConfig
from .scenarios import corpus, generate_scenario
from .trace import Op, TraceEvent, parse_trace, serialize_trace

__version__ = "0.1.0"

__all__ = [
    "AV", "EMPTY", "CapabilityList", "Direction", "Label", "LabelRegistry", "Monitor",
    "ObjectKind", "Op", "PolicyConfig", "Principal", "Privilege", "ReplaySummary", "Rule",
    "Tag", "TagKind", "TraceEvent", "ViolationReport", "World", "can_flow_integrity",
    "can_flow_secrecy", "check_flow_allowed", "corpus", "generate_scenario", "parse_trace",
    "replay", "serialize_trace",
]
