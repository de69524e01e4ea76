"""Reference monitor and its sliding-window automaton."""

from naca.monitor.monitor import Decision, ReferenceMonitor, Verdict, check_query, modification_type
from naca.monitor.window import DEFAULT_WINDOW, SlidingWindow, WindowOutcome, WindowResult

__all__ = [
    "DEFAULT_WINDOW",
    "Decision",
    "ReferenceMonitor",
    "SlidingWindow",
    "Verdict",
    "WindowOutcome",
    "WindowResult",
    "check_query",
    "modification_type",
]
