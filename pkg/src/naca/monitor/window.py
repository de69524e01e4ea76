"""Sliding-window automaton over tagger counters.

The tagger's counter is global, so the monitor knows the exact order in
which requests entered the pipeline. Batches may arrive out of that order
only in one tolerated pattern: a single application's later requests
overtaking its own earlier one, by at most ``limit`` positions. Anything else
(a gap that includes another application's request, or a gap wider than the
limit) invalidates the held batches together with the one that just arrived.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Generic, TypeVar

P = TypeVar("P")

DEFAULT_WINDOW = 2


class WindowOutcome(Enum):
    IN_ORDER = "in_order"
    HELD = "held"
    INVALIDATE = "invalidate_batch_set"
    STALE = "stale"
    # A counter the window skipped when it invalidated a gap.
    INVALIDATED = "invalidated"


@dataclass
class WindowResult(Generic[P]):
    outcome: WindowOutcome
    # Held payloads released in counter order after an in-order arrival.
    released: list[tuple[int, P]] = field(default_factory=list)
    # Held payloads discarded by an invalidation, in counter order.
    victims: list[tuple[int, P]] = field(default_factory=list)


class SlidingWindow(Generic[P]):
    """``owner_of(counter)`` returns the app that holds a counter, or ``None``
    when the monitor has no tag record for it (treated as a foreign app)."""

    def __init__(self, owner_of: Callable[[int], str | None], limit: int = DEFAULT_WINDOW) -> None:
        if limit < 0:
            raise ValueError("window limit must be non-negative")
        self.limit = limit
        self.expected = 1
        self.held: dict[int, P] = {}
        self._skipped: set[int] = set()
        self._owner_of = owner_of

    def check(self, counter: int, app_id: str, payload: P) -> WindowResult[P]:
        if counter < self.expected or counter in self.held:
            if counter in self._skipped:
                self._skipped.discard(counter)
                return WindowResult(WindowOutcome.INVALIDATED)
            return WindowResult(WindowOutcome.STALE)
        if counter == self.expected:
            self.expected += 1
            released = []
            while self.expected in self.held:
                released.append((self.expected, self.held.pop(self.expected)))
                self.expected += 1
            return WindowResult(WindowOutcome.IN_ORDER, released=released)
        missing = [m for m in range(self.expected, counter) if m not in self.held]
        same_app = all(self._owner_of(m) == app_id for m in missing)
        if same_app and counter - self.expected <= self.limit and len(self.held) + 1 <= self.limit:
            self.held[counter] = payload
            return WindowResult(WindowOutcome.HELD)
        victims = sorted(self.held.items())
        self._skipped.update(missing)
        self.held.clear()
        self.expected = counter + 1
        return WindowResult(WindowOutcome.INVALIDATE, victims=victims)

    def flush(self) -> list[tuple[int, P]]:
        """Invalidate everything still waiting for a gap that will never close."""
        victims = sorted(self.held.items())
        if victims:
            last = victims[-1][0]
            self._skipped.update(m for m in range(self.expected, last) if m not in self.held)
            self.expected = last + 1
        self.held.clear()
        return victims
