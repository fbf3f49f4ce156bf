import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gaia.modes import Backend
from gaia.workload import (
    BackendProfile,
    Request,
    RequestTrace,
    WorkloadModel,
    constant_rate,
    explicit,
    generate,
    jitter_draws,
    ramp,
)


def model(jitter=5.0, **gpu):
    return WorkloadModel(
        "m",
        BackendProfile((0, 0, 0, 2e-7), 500),
        BackendProfile((30, 0, 0, 1e-8), 4000, gpu_util_pct=80, **gpu),
        jitter_pct=jitter,
    )


def test_cubic_service_model():
    m = model()
    assert m.service_time(Backend.CPU, 1000) == pytest.approx(200.0)
    assert m.service_time(Backend.GPU, 1000) == pytest.approx(40.0)


@given(st.floats(-1, 1), st.integers(1, 3000))
def test_jitter_stays_within_band(j, n):
    m = model(jitter=5.0)
    base = m.service_time(Backend.CPU, n)
    t = m.service_time(Backend.CPU, n, jitter=j)
    assert base * 0.95 - 1e-9 <= t <= base * 1.05 + 1e-9


def test_spike_replaces_base_time():
    m = WorkloadModel("s", BackendProfile((145,), 500, spike_prob=0.01, spike_ms=403), BackendProfile((20,), 4000))
    assert m.service_time(Backend.CPU, 0, spike_draw=0.005) == 403
    assert m.service_time(Backend.CPU, 0, spike_draw=0.5) == 145


@pytest.mark.parametrize("kwargs", [
    {"service_ms": ()},
    {"service_ms": (1,), "cold_start_ms": -1},
    {"service_ms": (1,), "concurrency": 0},
    {"service_ms": (1,), "gpu_util_pct": 120},
    {"service_ms": (1,), "spike_prob": 2},
])
def test_profile_validation(kwargs):
    kwargs.setdefault("cold_start_ms", 0)
    with pytest.raises(ValueError):
        BackendProfile(**kwargs)


def test_gpu_cold_start_must_not_be_shorter():
    with pytest.raises(ValueError):
        WorkloadModel("x", BackendProfile((1,), 500), BackendProfile((1,), 100))


def test_cpu_backend_cannot_use_gpu():
    with pytest.raises(ValueError):
        WorkloadModel("x", BackendProfile((1,), 0, gpu_util_pct=10), BackendProfile((1,), 0))


def test_constant_rate_count_and_spacing():
    reqs = constant_rate("f", 2, 300)
    assert len(reqs) == 600
    assert reqs[1].arrival_ms - reqs[0].arrival_ms == 500
    assert constant_rate("f", 2.5, 80)[-1].arrival_ms == pytest.approx(79600)


def test_ramp_endpoints_and_rounding():
    reqs = ramp("f", 2, 300, 50, 2000, 10)
    params = [r.param for r in reqs]
    assert params[0] == 50 and params[-1] == 2000
    assert all(p % 10 == 0 for p in params)
    assert params == sorted(params)


def test_explicit_accepts_pairs_and_bare_times():
    reqs = explicit("f", [[100, 7], 0, [50]])
    assert [(r.arrival_ms, r.param) for r in reqs] == [(0, 0), (50, 0), (100, 7)]


def test_generate_rejects_unknown_kind():
    with pytest.raises(ValueError):
        generate("f", {"kind": "poisson"})


def test_trace_must_be_sorted():
    with pytest.raises(ValueError):
        RequestTrace([Request(10, "f"), Request(5, "f")])


def test_merge_orders_by_time_then_function():
    t = RequestTrace.merge([[Request(0, "b"), Request(10, "b")], [Request(0, "a")]])
    assert [(r.arrival_ms, r.function_id) for r in t] == [(0, "a"), (0, "b"), (10, "b")]
    assert t.function_ids() == ["a", "b"]


def test_jitter_draws_are_seeded():
    a, b = jitter_draws(50, 3), jitter_draws(50, 3)
    assert np.array_equal(a, b)
    assert (a[:, :2] >= -1).all() and (a[:, :2] < 1).all()
    assert (a[:, 2:] >= 0).all() and (a[:, 2:] < 1).all()
    assert not np.array_equal(a, jitter_draws(50, 4))
