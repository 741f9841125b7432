from __future__ import annotations

import pytest

from hetnetsim.scheduler import CausalityError, Kernel, millis, seconds, to_millis, to_seconds


def test_time_helpers_are_integer_microseconds():
    assert seconds(1.5) == 1_500_000
    assert millis(20) == 20_000
    assert to_seconds(2_500_000) == 2.5
    assert to_millis(1_500) == 1.5


def test_events_fire_in_time_then_insertion_order():
    kernel = Kernel()
    fired = []
    kernel.call_at(30, fired.append, "c")
    kernel.call_at(10, fired.append, "a")
    kernel.call_at(30, fired.append, "d")
    kernel.call_at(20, fired.append, "b")
    stats = kernel.run_until(100)
    assert fired == ["a", "b", "c", "d"]
    assert stats.events_processed == 4
    assert kernel.events_processed == 4


def test_clock_reaches_horizon_when_later_events_remain():
    kernel = Kernel()
    kernel.call_at(40, lambda: None)
    kernel.call_at(500, lambda: None)
    stats = kernel.run_until(100)
    assert stats.clock == 100
    assert kernel.now() == 100
    assert kernel.pending() == 1
    with pytest.raises(CausalityError):
        kernel.call_at(60, lambda: None)


def test_clock_stays_at_last_event_when_queue_drains():
    kernel = Kernel()
    kernel.call_at(40, lambda: None)
    stats = kernel.run_until(100)
    assert stats.clock == 40
    assert kernel.pending() == 0


def test_event_at_horizon_is_processed():
    kernel = Kernel()
    fired = []
    kernel.call_at(100, fired.append, 1)
    kernel.run_until(100)
    assert fired == [1]


def test_handlers_can_schedule_further_events():
    kernel = Kernel()
    times = []

    def tick():
        times.append(kernel.now())
        if len(times) < 5:
            kernel.call_later(20_000, tick)

    kernel.call_at(0, tick)
    kernel.run_until(seconds(1))
    assert times == [0, 20_000, 40_000, 60_000, 80_000]


def test_scheduling_in_the_past_raises():
    kernel = Kernel()
    kernel.call_at(50, lambda: None)
    kernel.run_until(50)
    with pytest.raises(CausalityError):
        kernel.call_at(49, lambda: None)


def test_cancelled_event_is_skipped():
    kernel = Kernel()
    fired = []
    event = kernel.call_at(10, fired.append, "x")
    kernel.call_at(20, fired.append, "y")
    event.cancel()
    stats = kernel.run_until(100)
    assert fired == ["y"]
    assert stats.events_processed == 1


def test_trace_digest_is_reproducible():
    def build():
        kernel = Kernel(trace=True)
        for t in (5, 1, 3):
            kernel.call_at(t, lambda: None)
        kernel.run_until(10)
        return kernel.trace_digest()

    assert build() == build()


def test_trace_digest_requires_tracing():
    with pytest.raises(RuntimeError):
        Kernel().trace_digest()
