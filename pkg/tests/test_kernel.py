import pytest

from tiwifi.kernel import MS, SECOND, US, EventKind, RngStream, SchedulingError, Simulator, uniform_int


def test_event_at_now_fires_before_later_events():
    sim = Simulator()
    order = []
    sim.at(5, EventKind.SAMPLE, order.append, "later")
    sim.at(0, EventKind.SAMPLE, order.append, "now")
    sim.run_until(SECOND)
    assert order == ["now", "later"]


def test_equal_times_dispatch_in_insertion_order():
    sim = Simulator()
    order = []
    a = sim.at(1000, EventKind.TX_END, order.append, "a")
    b = sim.at(1000, EventKind.TX_END, order.append, "b")
    assert b.sequence == a.sequence + 1
    sim.run_until(SECOND)
    assert order == ["a", "b"]


def test_cancelled_event_never_fires():
    sim = Simulator()
    fired = []
    h = sim.at(10, EventKind.SIFS, fired.append, 1)
    sim.cancel(h)
    summary = sim.run_until(SECOND)
    assert fired == [] and summary.events_fired == 0


def test_scheduling_in_the_past_is_fatal():
    sim = Simulator()
    sim.at(100, EventKind.SAMPLE, lambda: sim.at(50, EventKind.SAMPLE, None))
    with pytest.raises(SchedulingError):
        sim.run_until(SECOND)


def test_empty_queue_fires_nothing():
    assert Simulator().run_until(SECOND).events_fired == 0


def test_run_until_stops_before_future_event():
    sim = Simulator()
    sim.at(5 * US, EventKind.SAMPLE, None)
    summary = sim.run_until(1 * US)
    assert summary.events_fired == 0
    assert summary.final_clock == 1 * US


def test_run_until_rejects_non_positive_end():
    with pytest.raises(ValueError):
        Simulator().run_until(0)


@pytest.mark.parametrize("n", [1, 3, 7])
def test_periodic_events_fire_closed_form_count(n):
    sim = Simulator()
    count = [0]

    def tick(phase):
        count[0] += 1
        sim.after(MS, EventKind.SAMPLE, tick, phase)

    for i in range(1, n + 1):
        sim.at(i * US, EventKind.SAMPLE, tick, i)
    sim.run_until(SECOND)
    assert count[0] == 1000 * n


def test_clock_is_monotone():
    sim = Simulator()
    seen = []
    for t in (30, 10, 20, 10, 0):
        sim.at(t, EventKind.SAMPLE, lambda: seen.append(sim.now))
    sim.run_until(100)
    assert seen == sorted(seen)


def test_uniform_int_degenerate_and_invalid():
    s = RngStream(1, 0)
    assert uniform_int(s, 0, 0) == 0
    with pytest.raises(ValueError):
        uniform_int(s, 3, 2)


def test_uniform_int_frequencies():
    s = RngStream(42, 7)
    counts = [0] * 4
    draws = 1_000_000
    for _ in range(draws):
        counts[uniform_int(s, 0, 3)] += 1
    for c in counts:
        assert abs(c / draws - 0.25) <= 0.01


def test_streams_are_reproducible_and_independent():
    s1, s2 = RngStream(9, 1), RngStream(9, 1)
    assert [s1.uniform_int(0, 1000) for _ in range(50)] == [s2.uniform_int(0, 1000) for _ in range(50)]
    assert RngStream(9, 1).uniform_int(0, 10**6) != RngStream(9, 2).uniform_int(0, 10**6)
