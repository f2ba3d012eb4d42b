"""Allocation accounting for per-step temporary buffers.

Counts element totals of the temporaries our numeric kernels create, grouped
by phase (forward / jets / update).  Counters are cumulative within a phase
(monotone) and reset between steps; this is an upper bound on the live set
and is what the memory-independence checks measure.  Accounting is explicit
(call sites register their arrays) rather than derived from process RSS,
which is allocator- and platform-dependent.

Arrays whose size is proportional to the input dimension d (collocation
batches, sampler scratch, index-shuffle buffers) are tagged ``d_scaled`` so
the d-proportional part can be subtracted when checking that everything else
stays flat as d grows.
"""

from __future__ import annotations

from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass, field

PHASES = ("forward", "jets", "update", "other")


@dataclass
class PhaseStats:
    """Live-set accounting: ``total``/``d_scaled`` are peaks of the current
    live temporaries and only ever grow within a phase; call sites that free
    buffers promptly (the streaming update) release them explicitly, all
    others let the counters act as cumulative upper bounds."""

    total: int = 0  # peak of live elements
    d_scaled: int = 0  # peak of the d-proportional part
    largest: int = 0  # largest single buffer
    live: int = 0
    live_d: int = 0

    def add(self, n: int, d_scaled: bool) -> None:
        self.live += n
        if d_scaled:
            self.live_d += n
            self.d_scaled = max(self.d_scaled, self.live_d)
        self.total = max(self.total, self.live)
        if n > self.largest:
            self.largest = n

    def drop(self, n: int, d_scaled: bool) -> None:
        self.live = max(0, self.live - n)
        if d_scaled:
            self.live_d = max(0, self.live_d - n)


@dataclass
class AllocationLedger:
    """Per-phase temporary element counts for one optimizer step."""

    phases: dict[str, PhaseStats] = field(
        default_factory=lambda: {p: PhaseStats() for p in PHASES}
    )
    _stack: list[str] = field(default_factory=list)

    @property
    def current_phase(self) -> str:
        return self._stack[-1] if self._stack else "other"

    def record(self, n: int, d_scaled: bool = False) -> None:
        self.phases[self.current_phase].add(int(n), d_scaled)

    def release(self, n: int, d_scaled: bool = False) -> None:
        self.phases[self.current_phase].drop(int(n), d_scaled)

    @contextmanager
    def phase(self, name: str):
        if name not in self.phases:
            self.phases[name] = PhaseStats()
        self._stack.append(name)
        try:
            yield self
        finally:
            self._stack.pop()

    def reset(self) -> None:
        for stats in self.phases.values():
            stats.total = 0
            stats.d_scaled = 0
            stats.largest = 0
            stats.live = 0
            stats.live_d = 0

    @property
    def step_total(self) -> int:
        return sum(s.total for s in self.phases.values())

    @property
    def step_d_scaled(self) -> int:
        return sum(s.d_scaled for s in self.phases.values())

    @property
    def step_residual(self) -> int:
        """Temporary elements not proportional to the input dimension."""
        return self.step_total - self.step_d_scaled

    @property
    def largest_single(self) -> int:
        return max(s.largest for s in self.phases.values())


_active: ContextVar[AllocationLedger | None] = ContextVar("sdze_ledger", default=None)


@contextmanager
def ledger_active(ledger: AllocationLedger):
    """Route ``record`` calls in this context to ``ledger``."""
    token = _active.set(ledger)
    try:
        yield ledger
    finally:
        _active.reset(token)


def record(n: int, d_scaled: bool = False) -> None:
    """Register a temporary of ``n`` elements with the active ledger, if any."""
    led = _active.get()
    if led is not None:
        led.record(n, d_scaled)


def release(n: int, d_scaled: bool = False) -> None:
    """Mark ``n`` elements of previously recorded scratch as freed."""
    led = _active.get()
    if led is not None:
        led.release(n, d_scaled)


@contextmanager
def phase(name: str):
    """Enter phase ``name`` on the active ledger; no-op when none is active."""
    led = _active.get()
    if led is None:
        yield None
    else:
        with led.phase(name):
            yield led
