import io
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaia.modes import Backend
from gaia.telemetry import (
    InsufficientSamples,
    Sample,
    TelemetryConfig,
    TelemetryStore,
    UnknownFunction,
    nearest_rank,
)

from oracles import nearest_rank as nearest_rank_oracle

CPU, GPU = Backend.CPU, Backend.GPU


def store(**cfg) -> TelemetryStore:
    s = TelemetryStore(TelemetryConfig(**cfg))
    s.register("f")
    return s


def feed(s, rows, backend=CPU):
    for t, latency, *cold in rows:
        s.record(Sample("f", t, latency, backend, bool(cold and cold[0])))


def test_mean_and_rate_over_window():
    s = store(window_ms=5000, aggregate="mean")
    feed(s, [(0, 100), (500, 200), (1000, 300)])
    w = s.window_stats("f", 1000)
    assert w.latency_stat == 200
    assert w.request_rate == pytest.approx(0.6)
    assert w.sample_count == 3


def test_empty_window_has_absent_latency():
    s = store()
    w = s.window_stats("f", 1000)
    assert w.latency_stat is None and w.request_rate == 0 and w.sample_count == 0


def test_p95_matches_sort_and_index():
    s = store(aggregate="p95", window_ms=100_000)
    values = [float((i * 37) % 101) for i in range(20)]
    feed(s, [(i * 10, v) for i, v in enumerate(values)])
    assert s.window_stats("f", 1000).latency_stat == sorted(values)[18]


def test_cold_only_window():
    s = store()
    feed(s, [(0, 2000, True), (10, 2100, True)])
    w = s.window_stats("f", 100)
    assert w.request_rate > 0 and w.latency_stat is None


def test_cold_samples_included_when_exclusion_off():
    s = store(exclude_cold_from_latency=False, aggregate="mean")
    feed(s, [(0, 2000, True), (10, 100)])
    assert s.window_stats("f", 100).latency_stat == 1050


def test_mixed_cold_and_warm_mean():
    s = store(aggregate="mean")
    feed(s, [(0, 2000, True)] + [(10 * k, 100) for k in range(1, 5)])
    w = s.window_stats("f", 100)
    assert w.latency_stat == 100 and w.sample_count == 5


def test_window_is_half_open():
    s = store(window_ms=1000)
    feed(s, [(0, 1), (1000, 2)])
    assert s.window_stats("f", 1000).sample_count == 1
    assert s.window_stats("f", 999.999).sample_count == 1


def test_backend_filter():
    s = store(aggregate="mean")
    feed(s, [(0, 100)], CPU)
    feed(s, [(10, 10)], GPU)
    assert s.window_stats("f", 20, backend=GPU).latency_stat == 10
    assert s.window_stats("f", 20, backend=GPU).sample_count == 2


def test_save_copies_aggregate():
    s = store(aggregate="mean")
    feed(s, [(k, v) for k, v in enumerate([1300, 1400, 1500, 1350, 1450])])
    saved = s.save_backend_latency("f", CPU, 10)
    assert saved.saved_cpu_latency == 1400 and saved.cpu_recorded_at == 10
    assert saved.saved_gpu_latency is None and saved.gpu_recorded_at is None


def test_save_needs_enough_warm_samples():
    s = store(min_samples_for_save=3)
    feed(s, [(0, 100), (1, 100), (2, 5000, True)])
    with pytest.raises(InsufficientSamples):
        s.save_backend_latency("f", CPU, 10)
    assert s.saved("f").saved_cpu_latency is None


def test_resave_overwrites():
    s = store(aggregate="mean", window_ms=100)
    feed(s, [(0, 100), (1, 100), (2, 100)])
    s.save_backend_latency("f", CPU, 10)
    feed(s, [(200, 300), (201, 300), (202, 300)])
    s.save_backend_latency("f", CPU, 210)
    assert s.saved("f").saved_cpu_latency == 300 and s.saved("f").cpu_recorded_at == 210


def test_unknown_function():
    s = TelemetryStore()
    with pytest.raises(UnknownFunction):
        s.record(Sample("ghost", 0, 1, CPU))
    with pytest.raises(UnknownFunction):
        s.window_stats("ghost", 0)


def test_rejects_time_going_backwards_and_negative_latency():
    s = store()
    feed(s, [(10, 1)])
    with pytest.raises(ValueError):
        feed(s, [(5, 1)])
    with pytest.raises(ValueError):
        Sample("f", 0, -1, CPU)


@pytest.mark.parametrize("kwargs", [{"window_ms": 0}, {"aggregate": "max"}, {"min_samples_for_save": 0}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        TelemetryConfig(**kwargs)


def test_export_csv_columns():
    s = store()
    feed(s, [(0, 12.5, True)])
    out = io.StringIO()
    s.export_csv(out)
    assert out.getvalue().splitlines() == [
        "function_id,timestamp,latency_ms,backend,cold_start",
        "f,0.000,12.500,cpu_backend,1",
    ]


_latencies = st.lists(st.floats(0, 10_000, allow_nan=False), min_size=1, max_size=200)


@given(_latencies, st.sampled_from([1, 5, 25, 50, 75, 95, 99, 100]))
def test_nearest_rank_against_oracles(values, pct):
    got = nearest_rank(values, pct)
    assert got == nearest_rank_oracle(values, pct)
    assert got == float(np.percentile(values, pct, method="inverted_cdf"))


_times = st.lists(st.integers(0, 100_000), max_size=200).map(sorted)


@given(_times, st.integers(1, 50_000), st.integers(0, 100_000))
def test_window_conservation(times, w, a):
    s = store(window_ms=w)
    feed(s, [(t, 1.0) for t in times])
    left = s.window_stats("f", a).sample_count
    right = s.window_stats("f", a + w).sample_count
    assert left + right == sum(1 for t in times if a - w < t <= a + w)


@given(_times, st.integers(1, 120_000), st.integers(0, 100_000))
def test_rate_definition(times, w, at):
    s = store(window_ms=w)
    feed(s, [(t, 1.0) for t in times])
    win = s.window_stats("f", at)
    assert win.request_rate == win.sample_count / (w / 1000)
    assert math.isclose(win.request_rate * (w / 1000), win.sample_count, rel_tol=1e-12, abs_tol=0)


@given(st.lists(st.tuples(st.integers(0, 1000), st.floats(0, 5000, allow_nan=False), st.booleans()), max_size=60))
def test_replay_is_bit_identical(rows):
    rows = sorted(rows, key=lambda r: r[0])

    def replay():
        s = store(aggregate="p50")
        for t, latency, cold in rows:
            s.record(Sample("f", t, latency, CPU, cold))
        return [s.window_stats("f", t) for t in range(0, 1100, 100)]

    assert replay() == replay()
