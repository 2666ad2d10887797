"""Work accounting and cooperative cancellation for racing planners.

The race between plan-from-scratch and retrieve-and-repair has to be
reproducible, so planning effort is metered in *work units* - one unit
per state-validity evaluation - instead of wall-clock time. A virtual
check rate converts a seconds budget into a unit cap; the same campaign
with the same seed then produces identical results on any machine.

A PlannerBudget is also the cancellation channel: the race winner stops
the loser by setting the loser's cancel event, which surfaces as
PlanningInterrupted at the next charge() call.
"""

from __future__ import annotations

import threading

# One second of virtual planning time equals this many validity checks.
# The value only sets the scale of "--budget" seconds; relative planner
# comparisons are unaffected by it.
VIRTUAL_CHECK_RATE = 50_000


class BudgetExhausted(Exception):
    """Raised by charge() when the unit cap is reached."""


class PlanningInterrupted(Exception):
    """Raised by charge() after cancel() - the other racer already won."""


class PlannerBudget:
    """Counts work units against a cap and watches a cancel event.

    unit_cap None means unlimited. charge() is cheap enough to call once
    per validity check; it raises rather than returning a flag so that
    deeply nested planning loops unwind without threading status codes
    through every layer.
    """

    def __init__(self, unit_cap: int | None = None,
                 cancel_event: threading.Event | None = None):
        if unit_cap is not None and unit_cap < 0:
            raise ValueError("unit_cap must be >= 0 or None")
        self.unit_cap = unit_cap
        self.cancel_event = cancel_event if cancel_event is not None else threading.Event()
        self.used = 0

    @classmethod
    def from_seconds(cls, seconds: float,
                     rate: int = VIRTUAL_CHECK_RATE) -> "PlannerBudget":
        if seconds <= 0:
            raise ValueError("budget must be positive")
        return cls(unit_cap=int(seconds * rate))

    def charge(self, units: int = 1) -> None:
        """Record work; raise if canceled or over the cap."""
        if self.cancel_event.is_set():
            raise PlanningInterrupted
        self.used += units
        if self.unit_cap is not None and self.used > self.unit_cap:
            raise BudgetExhausted

    def cancel(self) -> None:
        self.cancel_event.set()

    @property
    def canceled(self) -> bool:
        return self.cancel_event.is_set()

    @property
    def remaining(self) -> int | None:
        if self.unit_cap is None:
            return None
        return max(self.unit_cap - self.used, 0)

    def virtual_seconds(self, rate: int = VIRTUAL_CHECK_RATE) -> float:
        """Virtual elapsed time implied by the units spent so far."""
        return self.used / rate
