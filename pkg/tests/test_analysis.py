import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oscnet.analysis import (
    chimera_index,
    cluster_order,
    edge_phase,
    local_order,
    lock_detect,
    mean_frequency,
    order_parameter,
    order_parameter_series,
    settling_time,
)
from oscnet.core import uniform_params
from oscnet.errors import DomainError
from oscnet.topology import build_clustered, from_edges, set_enabled
from oscnet.trace import SimTrace

phase_arrays = arrays(np.float64, st.integers(1, 12), elements=st.floats(-100, 100))


def test_order_parameter_examples():
    assert order_parameter([0.3, 0.3, 0.3])[0] == pytest.approx(1.0)
    assert order_parameter([0.0, math.pi])[0] == pytest.approx(0.0, abs=1e-12)
    assert order_parameter([0.0, math.pi / 2, math.pi, 3 * math.pi / 2])[0] == pytest.approx(0.0, abs=1e-12)
    r, psi = order_parameter([0.0, 0.0, math.pi], enabled=[True, True, False])
    assert r == pytest.approx(1.0) and psi == pytest.approx(0.0)
    with pytest.raises(DomainError):
        order_parameter([0.0, 1.0], enabled=[False, False])


def test_order_parameter_rows():
    ph = np.array([[0.0, 0.0], [0.0, math.pi]])
    r, _ = order_parameter(ph)
    assert np.allclose(r, [1.0, 0.0])


@given(phase_arrays, st.floats(-10, 10))
def test_order_parameter_bounds_and_shift(ph, c):
    r, psi = order_parameter(ph)
    assert 0.0 <= r <= 1.0
    r2, psi2 = order_parameter(ph + c)
    assert r2 == pytest.approx(r, abs=1e-9)
    if r > 1e-6:
        d = (psi2 - psi - c + math.pi) % (2 * math.pi) - math.pi
        assert abs(d) < 1e-6


@given(arrays(np.float64, (5, 8), elements=st.floats(-50, 50)))
def test_local_order_and_chimera_bounds(ph):
    topo = build_clustered(2, 4, "all_to_all", "ring")
    for window in ("cluster", "neighbors"):
        r = local_order(ph, topo, window)
        assert np.all((r >= 0) & (r <= 1))
    tr = SimTrace(np.arange(5.0), ph)
    assert chimera_index(tr, topo) >= 0.0


def test_local_order_chimera_pattern():
    topo = build_clustered(2, 7, "all_to_all", "none")
    ph = np.concatenate([np.full(7, 0.4), 2 * math.pi * np.arange(7) / 7])
    r = local_order(ph, topo, "cluster")
    assert np.allclose(r[:7], 1.0)
    assert np.allclose(r[7:], 0.0, atol=1e-12)
    rc = cluster_order(ph, topo)
    assert rc == pytest.approx([1.0, 0.0], abs=1e-12)
    tr = SimTrace(np.arange(4.0), np.tile(ph, (4, 1)))
    assert chimera_index(tr, topo) == pytest.approx(0.25)
    sync = SimTrace(np.arange(4.0), np.zeros((4, 14)))
    assert chimera_index(sync, topo) == 0.0


def test_local_order_gaps():
    topo = build_clustered(1, 3, "all_to_all", "none")
    params = set_enabled(topo, uniform_params(3, 1.0), 1, False)
    r = local_order([0.0, 1.0, 0.0], topo, "neighbors", params)
    assert math.isnan(r[1]) and r[0] == pytest.approx(1.0)
    iso = from_edges(2, [])
    assert np.allclose(local_order([0.0, 2.0], iso, "neighbors"), 1.0)


def affine_trace(omegas, n=50, t1=2.0):
    t = np.linspace(0.0, t1, n)
    return SimTrace(t, 0.3 + np.outer(t, omegas))


@given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=5), st.floats(0.0, 0.5), st.floats(0.6, 1.0))
def test_mean_frequency_exact_on_affine(omegas, a, b):
    tr = affine_trace(omegas, n=200)
    f = mean_frequency(tr, a * 2.0, b * 2.0)
    assert np.allclose(f, omegas, rtol=1e-9, atol=1e-9)


def test_mean_frequency_short_window():
    tr = affine_trace([1.0])
    with pytest.raises(DomainError):
        mean_frequency(tr, 0.0, 0.1)


def test_settling_examples():
    t = np.linspace(0, 10, 1001)
    assert settling_time(t, np.ones_like(t), 0.02, 1.0) == 0.0
    tau0 = 0.5
    y = 1 - np.exp(-t / tau0)
    ts = settling_time(t, y, 0.02, 1.0)
    assert abs(ts - math.log(50) * tau0) <= t[1] - t[0]
    assert settling_time(t, t, 0.02, 20.0) is None


@given(arrays(np.float64, st.integers(2, 60), elements=st.floats(-2, 2)),
       st.floats(0.001, 0.5), st.floats(0.001, 0.5))
def test_settling_monotone_in_band(y, b1, b2):
    t = np.arange(y.size, dtype=float)
    lo, hi = sorted((b1, b2))
    final = 1.0
    s_lo = settling_time(t, y, lo, final)
    s_hi = settling_time(t, y, hi, final)
    if s_lo is not None:
        assert s_hi is not None and s_hi <= s_lo


def test_lock_detect_examples():
    assert not lock_detect(affine_trace([1.0, 2.0])).locked
    res = lock_detect(affine_trace([5.0, 5.0]))
    assert res.locked and res.spread == 0.0
    params = uniform_params(2, [5.0, 9.0])
    params[1] = params[1].with_enabled(False)
    assert lock_detect(affine_trace([5.0, 9.0]), params=params).locked


def test_series():
    tr = affine_trace([1.0, 1.0])
    s = order_parameter_series(tr)
    assert np.allclose(s.r, 1.0) and s.times is tr.times


def test_edge_phase():
    e = np.arange(5) * 0.1 + 0.05
    ph = edge_phase(e, 3, np.array([0.0, 0.05, 0.1, 0.5]))
    assert ph == pytest.approx(2 * math.pi * np.array([2.5, 3.0, 3.5, 7.5]))
    with pytest.raises(DomainError):
        edge_phase([0.1], 0, [0.0])
