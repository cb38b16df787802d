import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from phonon_sim.tomography import (FitError, PhononDistribution, RabiModel, RabiTrace, Sideband,
                                   component_signals, displaced_thermal_distribution,
                                   fit_coherent_alpha, fit_distribution, project_simplex,
                                   rabi_signal, synthetic_trace)

MODEL = RabiModel(5.2 / 0.041, 0.041)
TIMES = np.linspace(0, 2 / MODEL.sideband_rabi, 81)


def _traces(p, **kw):
    dist = PhononDistribution(p)
    return (synthetic_trace(dist, MODEL, Sideband.RSB, TIMES, **kw),
            synthetic_trace(dist, MODEL, Sideband.BSB, TIMES, **kw))


def test_model_validation():
    with pytest.raises(ValueError):
        RabiModel(0, 0.04)
    with pytest.raises(ValueError):
        RabiModel(100, 0.5)
    with pytest.raises(ValueError):
        RabiModel(100, 0.04, decay=-1)


def test_distribution_validation():
    with pytest.raises(ValueError):
        PhononDistribution([0.5, 0.6])
    with pytest.raises(ValueError):
        PhononDistribution([1.2, -0.2])
    assert PhononDistribution([0.5, 0.5]).padded(3) == pytest.approx([0.5, 0.5, 0, 0])


def test_trace_validation():
    with pytest.raises(ValueError):
        RabiTrace([0, 0], [0, 0], Sideband.RSB)
    with pytest.raises(ValueError):
        RabiTrace([0, 1], [0], Sideband.RSB)
    with pytest.raises(ValueError):
        RabiTrace([0, 1], [0, 1], Sideband.RSB, mode=3)


def test_ground_state_signals():
    rsb = component_signals(MODEL, Sideband.RSB, TIMES, 3)
    bsb = component_signals(MODEL, Sideband.BSB, TIMES, 3)
    assert np.all(rsb[:, 0] == 0)
    want = 0.5 * (1 - np.cos(2 * np.pi * MODEL.sideband_rabi * TIMES))
    np.testing.assert_allclose(bsb[:, 0], want, atol=1e-15)
    np.testing.assert_allclose(rsb[:, 1], want, atol=1e-15)


def test_decay_damps_to_half():
    model = RabiModel(5.2 / 0.041, 0.041, decay=50.0)
    sig = rabi_signal(PhononDistribution([1.0]), model, Sideband.BSB, [5.0])
    assert sig[0] == pytest.approx(0.5, abs=1e-6)


@given(arrays(float, st.integers(1, 12), elements=st.floats(-5, 5)))
def test_project_simplex(v):
    x = project_simplex(v)
    assert x.min() >= 0
    assert x.sum() == pytest.approx(1)
    # projection is idempotent
    np.testing.assert_allclose(project_simplex(x), x, atol=1e-12)


@given(st.lists(st.floats(0.01, 1), min_size=8, max_size=8))
@settings(max_examples=20, deadline=None)
def test_noiseless_recovery(raw):
    p = np.array(raw) / sum(raw)
    fit = fit_distribution(*_traces(p), MODEL, nmax=7)
    assert np.max(np.abs(fit.distribution.probs - p)) < 1e-4


def test_fit_is_seed_deterministic():
    rng_a, rng_b = np.random.default_rng(5), np.random.default_rng(5)
    p = np.r_[0.5, 0.5, np.zeros(6)]
    a = fit_distribution(*_traces(p, shots=200, rng=rng_a), MODEL, 7, seed=3)
    b = fit_distribution(*_traces(p, shots=200, rng=rng_b), MODEL, 7, seed=3)
    np.testing.assert_array_equal(a.distribution.probs, b.distribution.probs)
    assert np.all(np.isfinite(a.stderr))
    assert a.chi2_red > 0


def test_fit_rejects_swapped_traces():
    rsb, bsb = _traces(np.eye(8)[0])
    with pytest.raises(ValueError):
        fit_distribution(bsb, rsb, MODEL)


def test_rank_deficient_design():
    dist = PhononDistribution(np.eye(8)[0])
    t = TIMES[:3]
    with pytest.raises(FitError):
        fit_distribution(synthetic_trace(dist, MODEL, Sideband.RSB, t),
                         synthetic_trace(dist, MODEL, Sideband.BSB, t), MODEL, nmax=7)


def test_max_rms_guard():
    rsb, bsb = _traces(np.eye(8)[0])
    bad = RabiTrace(bsb.times, 1 - bsb.p_up, Sideband.BSB)
    with pytest.raises(FitError):
        fit_distribution(rsb, bad, MODEL, max_rms=0.01)


def test_noisy_needs_rng():
    with pytest.raises(ValueError):
        synthetic_trace(PhononDistribution([1.0]), MODEL, Sideband.BSB, TIMES, shots=10)


def test_trace_csv_roundtrip():
    rsb, _ = _traces(np.eye(8)[1], shots=200, rng=np.random.default_rng(0))
    back = RabiTrace.from_csv(rsb.to_csv(), Sideband.RSB)
    np.testing.assert_array_equal(back.p_up, rsb.p_up)
    np.testing.assert_array_equal(back.sigma, rsb.sigma)
    with pytest.raises(ValueError):
        RabiTrace.from_csv("a,b\n1,2\n", Sideband.RSB)


def test_displaced_thermal_limits():
    n = np.arange(16)
    want = np.exp(-1.0) / np.array([math.factorial(k) for k in n], dtype=float)
    got = displaced_thermal_distribution(1.0, 0.0, 15)
    np.testing.assert_allclose(got[:-1], want[:-1], atol=1e-12)
    thermal = displaced_thermal_distribution(0.0, 0.3, 40)
    assert np.dot(np.arange(41), thermal) == pytest.approx(0.3, abs=1e-6)


@pytest.mark.parametrize("alpha,n_th", [(0.0, 0.025), (1.0, 0.0), (1.3, 0.1)])
def test_coherent_fit_roundtrip(alpha, n_th):
    dist = PhononDistribution(displaced_thermal_distribution(alpha, n_th, 15))
    trace = synthetic_trace(dist, MODEL, Sideband.BSB, TIMES)
    a, nt = fit_coherent_alpha(trace, MODEL)
    # the signal depends on alpha^2, so that is the well-conditioned quantity
    assert a ** 2 == pytest.approx(alpha ** 2, abs=1e-4)
    assert nt == pytest.approx(n_th, abs=1e-3)


def test_coherent_fit_needs_bsb():
    rsb, _ = _traces(np.eye(8)[0])
    with pytest.raises(ValueError):
        fit_coherent_alpha(rsb, MODEL)
