"""Append-only audit trail shared by the pipeline components.

Events are plain dicts serialised as JSON lines with sorted keys, so two runs
that emit the same events produce byte-identical files. Timestamps come from
a virtual clock owned by whoever drives the scenario, never from wall time.
"""

from __future__ import annotations

import json
from typing import Any, Callable, Iterator


class AuditLog:
    def __init__(self) -> None:
        self._events: list[dict[str, Any]] = []
        self._subscribers: list[Callable[[dict[str, Any]], None]] = []
        self.clock = 0

    def record(self, component: str, event: str, **fields: Any) -> dict[str, Any]:
        entry = {"seq": len(self._events), "t": self.clock, "component": component, "event": event}
        entry.update(fields)
        self._events.append(entry)
        for callback in list(self._subscribers):
            callback(entry)
        return entry

    def subscribe(self, callback: Callable[[dict[str, Any]], None]) -> None:
        self._subscribers.append(callback)

    def select(self, component: str | None = None, event: str | None = None) -> list[dict[str, Any]]:
        return [
            e
            for e in self._events
            if (component is None or e["component"] == component) and (event is None or e["event"] == event)
        ]

    def __iter__(self) -> Iterator[dict[str, Any]]:
        return iter(self._events)

    def __len__(self) -> int:
        return len(self._events)

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, sort_keys=True, separators=(",", ":"), default=_jsonable) + "\n" for e in self._events)


def _jsonable(value: Any) -> Any:
    if isinstance(value, bytes):
        return value.hex()
    if isinstance(value, (set, frozenset)):
        return sorted(_jsonable(v) for v in value)
    if hasattr(value, "value"):
        return value.value
    raise TypeError(f"cannot serialise {type(value).__name__} into the audit trail")
