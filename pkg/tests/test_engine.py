import pytest
from hypothesis import given, settings, strategies as st

from itasim.engine import Engine, SchedulingInPast, fmt_seconds, to_us


def recorder(engine, log):
    def handler(event):
        log.append((engine.now, event.kind, event.seq))
    return handler


def test_schedule_queues_without_running():
    eng = Engine()
    log = []
    eng.register("n1", recorder(eng, log))
    eid = eng.schedule(to_us(5.0), "n1", "tick")
    assert isinstance(eid, int)
    assert log == [] and eng.pending() == 1
    eng.run(to_us(10))
    assert log == [(5_000_000, "tick", eid)]


def test_equal_times_run_in_insertion_order():
    eng = Engine()
    log = []
    eng.register("n1", recorder(eng, log))
    eng.schedule(to_us(3), "n1", "A")
    eng.schedule(to_us(3), "n1", "B")
    eng.schedule(0, "n1", "first")
    eng.run(to_us(5))
    assert [k for _, k, _ in log] == ["first", "A", "B"]


def test_scheduling_in_the_past_is_rejected():
    eng = Engine()
    eng.register("n1", lambda e: None)
    eng.run(to_us(2))
    with pytest.raises(SchedulingInPast):
        eng.schedule(to_us(1), "n1", "tick")
    eng.schedule(to_us(2), "n1", "tick")  # equal to now is fine


def test_empty_run_advances_clock():
    eng = Engine()
    assert eng.now == 0
    assert eng.run(to_us(1000)) == 0
    assert eng.now == to_us(1000)
    with pytest.raises(SchedulingInPast):
        eng.run(to_us(999))


def test_now_inside_handler_is_fire_time():
    eng = Engine()
    seen = []
    eng.register("n", lambda e: seen.append((eng.now, e.fire_at)))
    eng.schedule(to_us("0.25"), "n", "x")
    eng.run(to_us(1))
    assert seen == [(250_000, 250_000)]


def test_events_after_until_stay_queued():
    eng = Engine()
    log = []
    eng.register("n", recorder(eng, log))
    eng.schedule(to_us(1), "n", "a")
    eng.schedule(to_us(2), "n", "b")
    assert eng.run(to_us("1.5")) == 1
    assert eng.now == 1_500_000
    assert eng.run() == 1  # drain
    assert eng.now == 2_000_000


def test_self_rescheduling_sensor_emits_2000_in_1000_seconds():
    eng = Engine()
    interval, end = to_us(0.5), to_us(1000)

    def emit(event):
        if eng.now + interval <= end:
            eng.schedule(eng.now + interval, "sensor", "emit")

    eng.register("sensor", emit)
    eng.schedule(interval, "sensor", "emit")
    assert eng.run(end) == 2000
    assert eng.now == end


def test_unregistered_target_raises():
    eng = Engine()
    eng.schedule(0, "ghost", "x")
    with pytest.raises(KeyError):
        eng.run(1)


@settings(max_examples=200, derandomize=True)
@given(st.lists(st.integers(0, 50), min_size=1, max_size=60), st.integers(0, 60))
def test_execution_order_and_count(times, until):
    eng = Engine(trace=True)
    eng.register("n", lambda e: None)
    for t in times:
        eng.schedule(t, "n", "x")
    n = eng.run(until)
    assert n == sum(1 for t in times if t <= until)
    trace = eng.trace_log()
    keys = [(t, seq) for t, seq, *_ in trace]
    assert keys == sorted(keys)
    assert len({seq for _, seq in keys}) == len(keys)


def test_rng_streams_are_seeded():
    a, b = Engine(seed=7), Engine(seed=7)
    assert [a.stream("s").random() for _ in range(3)] == [b.stream("s").random() for _ in range(3)]
    assert a.stream("s").random() != a.stream("t").random()
    assert Engine(seed=1).rng.random() != Engine(seed=2).rng.random()


@pytest.mark.parametrize("value, us", [
    (0.01, 10_000), ("0.5", 500_000), (1000, 1_000_000_000), ("0.000001", 1), (0, 0),
])
def test_to_us(value, us):
    assert to_us(value) == us


@pytest.mark.parametrize("bad", [-1, "1e-7", "nan", "inf", "abc", True])
def test_to_us_rejects(bad):
    with pytest.raises(ValueError):
        to_us(bad)


@pytest.mark.parametrize("us, text", [(0, "0"), (500_000, "0.5"), (1_000_392, "1.000392"), (10**9, "1000")])
def test_fmt_seconds(us, text):
    assert fmt_seconds(us) == text
    assert to_us(text) == us
