"""Intent lifecycle: the extended state machine with the reference-monitor stage.

The table below is the single source of truth; ``step_state`` only looks
things up in it. Retry edges are counted per intent and capped.
"""

from __future__ import annotations

from enum import Enum


class IntentState(Enum):
    NEW = "New"
    REQUEST_TAGGER = "RequestTagger"
    INSTALL_REQUEST = "InstallRequest"
    COMPILING = "Compiling"
    INSTALLING = "Installing"
    REF_MONITOR = "RefMonitor"
    INSTALLED = "Installed"
    RECOMPILING = "Recompiling"
    FAILED = "Failed"
    WITHDRAWING = "Withdrawing"
    WITHDRAWN = "Withdrawn"


class IntentEvent(Enum):
    APPLICATION_REQUEST = 1
    TAGGED_QUERY_REQUEST = 2
    SUBMIT_FOR_COMPILATION = 3
    COMPILE_SUCCEEDED = 4
    INSTALL_SUCCEEDED = 5
    VERIFY_ACCESS_COMPLIANCE = 6
    WITHDRAWAL_INSTALLED_REQUEST = 7
    REMOVE_TOPO_OR_FLOW_EVENT = 8
    ADD_UPDATE_TOPO_EVENT = 9
    COMPILE_FAILED = 10
    RETRY_COMPILE = 11
    INSTALL_FAILED = 12
    RETRY_INSTALL = 13
    COMPILE_FAILED_OR_SAME_RESULT = 14
    WITHDRAWAL_OF_FAILED_REQUESTS = 15
    REFERENCE_MONITOR_REJECTED = 16
    RETRY_INSTALL_INTENT = 17
    # Completion of a withdrawal; the diagram draws Withdrawing -> Withdrawn
    # without numbering the edge.
    WITHDRAW_DONE = 18


S = IntentState
E = IntentEvent

TRANSITIONS: dict[tuple[IntentState, IntentEvent], IntentState] = {
    (S.NEW, E.APPLICATION_REQUEST): S.REQUEST_TAGGER,
    (S.REQUEST_TAGGER, E.TAGGED_QUERY_REQUEST): S.INSTALL_REQUEST,
    (S.INSTALL_REQUEST, E.SUBMIT_FOR_COMPILATION): S.COMPILING,
    (S.COMPILING, E.COMPILE_SUCCEEDED): S.INSTALLING,
    (S.RECOMPILING, E.COMPILE_SUCCEEDED): S.INSTALLING,
    (S.INSTALLING, E.INSTALL_SUCCEEDED): S.REF_MONITOR,
    (S.REF_MONITOR, E.VERIFY_ACCESS_COMPLIANCE): S.INSTALLED,
    (S.INSTALLED, E.WITHDRAWAL_INSTALLED_REQUEST): S.WITHDRAWING,
    (S.INSTALLED, E.REMOVE_TOPO_OR_FLOW_EVENT): S.RECOMPILING,
    (S.FAILED, E.ADD_UPDATE_TOPO_EVENT): S.RECOMPILING,
    (S.COMPILING, E.COMPILE_FAILED): S.FAILED,
    (S.FAILED, E.RETRY_COMPILE): S.COMPILING,
    (S.INSTALLING, E.INSTALL_FAILED): S.FAILED,
    (S.FAILED, E.RETRY_INSTALL): S.INSTALLING,
    (S.RECOMPILING, E.COMPILE_FAILED_OR_SAME_RESULT): S.FAILED,
    (S.FAILED, E.WITHDRAWAL_OF_FAILED_REQUESTS): S.WITHDRAWN,
    (S.REF_MONITOR, E.REFERENCE_MONITOR_REJECTED): S.FAILED,
    (S.FAILED, E.RETRY_INSTALL_INTENT): S.INSTALL_REQUEST,
    (S.WITHDRAWING, E.WITHDRAW_DONE): S.WITHDRAWN,
}

RETRY_EVENTS = frozenset({E.RETRY_COMPILE, E.RETRY_INSTALL, E.RETRY_INSTALL_INTENT})
MAX_RETRIES = 3


class IllegalTransition(RuntimeError):
    def __init__(self, state: IntentState, event: IntentEvent, why: str = "no such edge") -> None:
        self.state = state
        self.event = event
        super().__init__(f"{event.name} ({event.value}) not allowed in {state.value}: {why}")


def step_state(state: IntentState, event: IntentEvent) -> IntentState:
    try:
        return TRANSITIONS[(state, event)]
    except KeyError:
        raise IllegalTransition(state, event) from None


class IntentLifecycle:
    """Tracks one intent's state and enforces the retry bound."""

    def __init__(self, max_retries: int = MAX_RETRIES) -> None:
        self.state = IntentState.NEW
        self.retries = 0
        self.max_retries = max_retries
        self.history: list[tuple[IntentEvent, IntentState]] = []

    def can_retry(self) -> bool:
        return self.retries < self.max_retries

    def fire(self, event: IntentEvent) -> IntentState:
        if event in RETRY_EVENTS:
            if not self.can_retry():
                raise IllegalTransition(self.state, event, f"retry limit {self.max_retries} reached")
        nxt = step_state(self.state, event)
        if event in RETRY_EVENTS:
            self.retries += 1
        self.state = nxt
        self.history.append((event, nxt))
        return nxt
