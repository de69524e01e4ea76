"""Intent types, the intent state machine, compilation and the mock controller.

Only the dependency-free modules are imported here; ``compiler`` and
``mock`` depend on the NIB and tagger and are imported from their own paths.
"""

from naca.controller.intents import (
    INTENT_RESOURCES,
    OP_ACCESS,
    RESOURCE_CATALOGUE,
    Intent,
    IntentError,
    IntentKind,
    Query,
    QueryOp,
)
from naca.controller.states import (
    MAX_RETRIES,
    TRANSITIONS,
    IllegalTransition,
    IntentEvent,
    IntentLifecycle,
    IntentState,
    step_state,
)

__all__ = [
    "INTENT_RESOURCES",
    "MAX_RETRIES",
    "OP_ACCESS",
    "RESOURCE_CATALOGUE",
    "TRANSITIONS",
    "IllegalTransition",
    "Intent",
    "IntentError",
    "IntentEvent",
    "IntentKind",
    "IntentLifecycle",
    "IntentState",
    "Query",
    "QueryOp",
    "step_state",
]
