"""Intents submitted by applications and the queries they compile into."""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Any, ClassVar, Union

from naca.authcode import canonical_encode
from naca.policy.model import Action, AttributeConstraint

ArgValue = Union[str, int]


class IntentKind(Enum):
    CONNECTIVITY = "connectivity"
    TOPOLOGY_READ = "topology_read"
    NODE_LTPS = "node_ltps"
    FLOW_INSTALL = "flow_install"
    STATS_READ = "stats_read"
    CONFIG_READ = "config_read"
    CONFIG_MOD = "config_mod"
    SUBSCRIBE = "subscribe"
    WITHDRAW = "withdraw"


class QueryOp(Enum):
    TOPO_READ = "topo_read"
    NODE_LTPS = "node_ltps"
    FLOW_INSTALL = "flow_install"
    FLOW_DELETE = "flow_delete"
    STATS_READ = "stats_read"
    CONFIG_READ = "config_read"
    CONFIG_MOD = "config_mod"
    SUBSCRIBE = "subscribe"


# The resource and action each query invokes. This table is what the
# reference monitor checks against a mask, so it lives next to the query type.
OP_ACCESS: dict[QueryOp, tuple[str, Action]] = {
    QueryOp.TOPO_READ: ("dataplane-topology", Action.READ),
    QueryOp.NODE_LTPS: ("dataplane-topology", Action.READ),
    QueryOp.FLOW_INSTALL: ("flow", Action.CONFIG_MOD),
    QueryOp.FLOW_DELETE: ("flow", Action.CONFIG_MOD),
    QueryOp.STATS_READ: ("stats", Action.STAT),
    QueryOp.CONFIG_READ: ("device-config", Action.CONFIG_READ),
    QueryOp.CONFIG_MOD: ("device-config", Action.CONFIG_MOD),
    QueryOp.SUBSCRIBE: ("notifications", Action.SUBSCR),
}

RESOURCE_CATALOGUE = frozenset(resource for resource, _ in OP_ACCESS.values())

# Resources an intent needs by default; applications may name them explicitly.
INTENT_RESOURCES: dict[IntentKind, frozenset[str]] = {
    IntentKind.CONNECTIVITY: frozenset({"flow"}),
    IntentKind.TOPOLOGY_READ: frozenset({"dataplane-topology"}),
    IntentKind.NODE_LTPS: frozenset({"dataplane-topology"}),
    IntentKind.FLOW_INSTALL: frozenset({"flow"}),
    IntentKind.STATS_READ: frozenset({"stats"}),
    IntentKind.CONFIG_READ: frozenset({"device-config"}),
    IntentKind.CONFIG_MOD: frozenset({"device-config"}),
    IntentKind.SUBSCRIBE: frozenset({"notifications"}),
    IntentKind.WITHDRAW: frozenset({"flow"}),
}

_REQUIRED_PARAMS: dict[IntentKind, frozenset[str]] = {
    IntentKind.CONNECTIVITY: frozenset({"src_host", "dst_host", "protocol"}),
    IntentKind.TOPOLOGY_READ: frozenset(),
    IntentKind.NODE_LTPS: frozenset({"node"}),
    IntentKind.FLOW_INSTALL: frozenset({"node", "src_ip", "dst_ip", "protocol"}),
    IntentKind.STATS_READ: frozenset({"node"}),
    IntentKind.CONFIG_READ: frozenset({"node"}),
    IntentKind.CONFIG_MOD: frozenset({"node", "key", "value"}),
    IntentKind.SUBSCRIBE: frozenset(),
    IntentKind.WITHDRAW: frozenset({"request_id"}),
}


def _pairs(params: dict[str, Any]) -> tuple[tuple[str, ArgValue], ...]:
    out = []
    for key in sorted(params):
        value = params[key]
        if isinstance(value, bool) or not isinstance(value, (str, int)):
            raise ValueError(f"parameter {key!r} must be a string or integer, got {type(value).__name__}")
        out.append((key, value))
    return tuple(out)


class IntentError(ValueError):
    pass


@dataclass(frozen=True)
class Intent:
    kind: IntentKind
    params: tuple[tuple[str, ArgValue], ...] = ()
    priority: int = 0
    constraints: tuple[AttributeConstraint, ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.kind, str):
            try:
                object.__setattr__(self, "kind", IntentKind(self.kind))
            except ValueError:
                raise IntentError(f"unknown intent kind {self.kind!r}") from None
        if isinstance(self.params, dict):
            object.__setattr__(self, "params", _pairs(self.params))
        object.__setattr__(self, "constraints", tuple(self.constraints))
        missing = _REQUIRED_PARAMS[self.kind] - {k for k, _ in self.params}
        if missing:
            raise IntentError(f"{self.kind.value} intent lacks {sorted(missing)}")

    @classmethod
    def make(cls, kind: IntentKind | str, priority: int = 0, **params: ArgValue) -> "Intent":
        return cls(IntentKind(kind) if isinstance(kind, str) else kind, _pairs(params), priority)

    def param(self, name: str, default: Any = None) -> Any:
        for key, value in self.params:
            if key == name:
                return value
        return default

    @property
    def resources(self) -> frozenset[str]:
        return INTENT_RESOURCES[self.kind]

    def canonical_fields(self) -> tuple:
        return (self.kind, self.params, self.priority, self.constraints)

    def to_bytes(self) -> bytes:
        return canonical_encode(self)

    def to_json(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind.value, **dict(self.params)}
        if self.priority:
            out["priority"] = self.priority
        return out

    @classmethod
    def from_json(cls, raw: dict[str, Any]) -> "Intent":
        params = dict(raw)
        kind = params.pop("kind", None)
        if kind is None:
            raise IntentError("intent needs a 'kind'")
        priority = params.pop("priority", 0)
        return cls(kind, _pairs(params), int(priority))


@dataclass(frozen=True)
class Query:
    """One discrete NIB operation, always attributed to an app and request."""

    # Instances are immutable, so the wire encoding is computed once.
    canonical_memo: ClassVar[bool] = True

    app_id: str
    request_id: str
    op: QueryOp
    target: str
    args: tuple[tuple[str, ArgValue], ...] = ()

    def __post_init__(self) -> None:
        if isinstance(self.op, str):
            object.__setattr__(self, "op", QueryOp(self.op))
        if isinstance(self.args, dict):
            object.__setattr__(self, "args", _pairs(self.args))

    def arg(self, name: str, default: Any = None) -> Any:
        for key, value in self.args:
            if key == name:
                return value
        return default

    def with_args(self, **updates: ArgValue) -> "Query":
        merged = dict(self.args)
        merged.update(updates)
        return replace(self, args=_pairs(merged))

    @property
    def resource(self) -> str:
        return OP_ACCESS[self.op][0]

    @property
    def action(self) -> Action:
        return OP_ACCESS[self.op][1]

    def canonical_fields(self) -> tuple:
        return (self.app_id, self.request_id, self.op, self.target, self.args)

    def to_json(self) -> dict[str, Any]:
        return {
            "app_id": self.app_id,
            "request_id": self.request_id,
            "op": self.op.value,
            "target": self.target,
            "args": dict(self.args),
        }
