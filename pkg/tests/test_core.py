import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oscnet.core import (
    CouplingConfig,
    HistoryBuffer,
    OscillatorParams,
    as_phase_vector,
    history_sample,
    hz_to_rad,
    rad_to_hz,
    wrap_phase,
)
from oscnet.errors import DomainError, OutOfWindowError

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


def test_wrap_examples():
    assert wrap_phase(0.0) == 0.0
    assert wrap_phase(3 * math.pi) == pytest.approx(-math.pi, abs=1e-12)
    assert wrap_phase(-math.pi / 4) == -math.pi / 4
    assert wrap_phase(math.pi) == -math.pi


def test_wrap_array_and_bad_input():
    out = wrap_phase(np.array([0.0, 2 * math.pi, -0.5]))
    assert out.shape == (3,)
    assert np.allclose(out, [0.0, 0.0, -0.5])
    with pytest.raises(DomainError):
        wrap_phase(float("nan"))
    with pytest.raises(DomainError):
        wrap_phase(np.array([0.0, np.inf]))


@given(finite)
def test_wrap_range_and_idempotent(x):
    w = wrap_phase(x)
    assert -math.pi <= w < math.pi
    assert wrap_phase(w) == w


@given(st.floats(min_value=-10, max_value=10), st.integers(min_value=-10**6, max_value=10**6))
def test_wrap_periodic(x, k):
    a = wrap_phase(x)
    b = wrap_phase(x + 2 * math.pi * k)
    # compare on the circle so -pi and pi-eps count as neighbours
    assert abs(wrap_phase(a - b)) < 1e-9


def test_unit_helpers():
    assert hz_to_rad(1.0) == pytest.approx(2 * math.pi)
    assert rad_to_hz(hz_to_rad(10e6)) == pytest.approx(10e6)
    with pytest.raises(DomainError):
        as_phase_vector([0.0, 1.0], n=3)
    with pytest.raises(DomainError):
        as_phase_vector([0.0, np.nan])


def test_params_and_coupling_validation():
    p = OscillatorParams(1.0)
    assert p.omega == 1.0 and p.enabled
    assert not p.with_enabled(False).enabled
    with pytest.raises(DomainError):
        CouplingConfig(-1.0)
    with pytest.raises(DomainError):
        CouplingConfig(1.0, delay=-1e-9)
    with pytest.raises(DomainError):
        CouplingConfig(1.0, phase_lag=2.0)
    CouplingConfig(1.0, phase_lag=math.pi / 2)


def filled(fn, h=0.1, n=50, width=None):
    buf = HistoryBuffer(h, n, width)
    for k in range(n):
        buf.push(k * h, fn(k * h))
    return buf


def test_history_nodes_and_midpoint():
    buf = filled(lambda t: t * t)
    assert history_sample(buf, 1.2) == pytest.approx(1.44, rel=1e-12)
    v0, v1 = 1.2**2, 1.3**2
    assert history_sample(buf, 1.25) == pytest.approx((v0 + v1) / 2, rel=1e-12)
    # zero delay returns the current value exactly
    assert history_sample(buf, buf.t_latest) == buf.latest()


def test_history_linear_exact():
    buf = filled(lambda t: 5 * t)
    for t in np.linspace(buf.t_oldest, buf.t_latest, 97):
        assert history_sample(buf, t) == pytest.approx(5 * t, rel=1e-12, abs=1e-12)


def test_history_vectors_and_window():
    buf = filled(lambda t: np.array([t, -t]), width=2)
    assert np.allclose(history_sample(buf, 0.35), [0.35, -0.35])
    with pytest.raises(OutOfWindowError):
        history_sample(buf, buf.t_latest + 0.01)
    with pytest.raises(OutOfWindowError):
        history_sample(buf, buf.t_oldest - 0.01)
    with pytest.raises(DomainError):
        buf.push(buf.t_latest + 0.05, [0.0, 0.0])


def test_history_wraps_ring():
    buf = HistoryBuffer(1.0, 4)
    for k in range(10):
        buf.push(float(k), float(k))
    assert len(buf) == 4
    assert buf.t_oldest == 6.0
    assert history_sample(buf, 6.5) == 6.5


def test_for_delay_capacity():
    buf = HistoryBuffer.for_delay(1e-9, 25e-9)
    for k in range(100):
        buf.push(k * 1e-9, float(k))
    assert history_sample(buf, buf.t_latest - 25e-9) == pytest.approx(74.0)


def test_history_second_order_error():
    # halving the step reduces max interpolation error on sin by ~4x
    def max_err(h):
        n = int(round(6.0 / h)) + 1
        buf = filled(math.sin, h, n)
        ts = np.linspace(0.0, 6.0 - h, 1001) + 0.37 * h
        return max(abs(history_sample(buf, t) - math.sin(t)) for t in ts)

    assert max_err(0.1) / max_err(0.05) >= 3.5


@given(st.floats(min_value=1e-3, max_value=1.0), st.floats(min_value=-5, max_value=5),
       st.floats(min_value=0.0, max_value=1.0))
def test_history_linear_property(h, slope, u):
    buf = filled(lambda t: slope * t + 1.0, h, 20)
    t = buf.t_oldest + u * buf.horizon
    assert history_sample(buf, t) == pytest.approx(slope * t + 1.0, rel=1e-9, abs=1e-9)
