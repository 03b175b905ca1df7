import math

import numpy as np
import pytest

from trunet.dsp import StftConfig, stft
from trunet.errors import ShapeError
from trunet.features import (
    LOG_EPS,
    PcenParams,
    PcenState,
    build_features,
    features_offline,
    log_magnitude,
    pcen_step,
)

P = PcenParams.default(256)


def test_default_params():
    assert np.all(P.s == 0.025) and np.all(P.alpha == 0.98)
    assert np.all(P.delta == 2.0) and np.all(P.r == 0.5) and P.eps == 1e-6


@pytest.mark.parametrize("field,value", [("s", 0.0), ("s", 1.5), ("delta", 0.0), ("r", 0.0), ("r", 1.2)])
def test_invalid_params(field, value):
    kw = {k: getattr(P, k).copy() for k in ("s", "alpha", "delta", "r")}
    kw[field][:] = value
    with pytest.raises(ValueError):
        PcenParams(**kw).validate()


def test_pcen_fixed_point_oracle():
    # scalar evaluation of the converged smoother m = E = 1; to first order
    # this is sqrt(3) - sqrt(2), frozen here at 0.3178370
    expected = (1.0 / (1e-6 + 1.0) ** 0.98 + 2.0) ** 0.5 - 2.0 ** 0.5
    assert expected == pytest.approx(0.3178370, abs=1e-7)
    assert expected == pytest.approx(math.sqrt(3) - math.sqrt(2), abs=1e-6)
    state = PcenState.zeros(256)
    for _ in range(3):
        out, state = pcen_step(np.ones(256), state, P)
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_pcen_zero_energy_is_zero():
    out, _ = pcen_step(np.zeros(256), PcenState.zeros(256), P)
    assert np.all(out == 0.0)


def test_pcen_s_one_has_no_memory():
    p = PcenParams.default(4, s=1.0)
    _, st = pcen_step(np.array([5.0, 1.0, 0.0, 2.0]), PcenState.zeros(4), p)
    e = np.array([0.1, 3.0, 7.0, 0.0])
    _, st2 = pcen_step(e, st, p)
    np.testing.assert_array_equal(st2.m, e)


def test_pcen_first_frame_primes_smoother():
    e0 = np.linspace(0, 3, 256)
    _, st = pcen_step(e0, PcenState.zeros(256), P)
    np.testing.assert_array_equal(st.m, e0)
    e1 = np.full(256, 2.0)
    _, st1 = pcen_step(e1, st, P)
    np.testing.assert_allclose(st1.m, 0.975 * e0 + 0.025 * e1, rtol=1e-15)


def test_pcen_negative_energy():
    with pytest.raises(ValueError):
        pcen_step(-np.ones(256), PcenState.zeros(256), P)


def test_pcen_causal_prefix():
    X = stft(np.random.default_rng(0).standard_normal(8000))
    full, _ = features_offline(X, P)
    part, _ = features_offline(X[:20], P)
    np.testing.assert_array_equal(part, full[:20])


def test_log_magnitude():
    v = log_magnitude(np.array([1.0, 0.0, -3j]))
    assert v[0] == pytest.approx(1e-7, rel=1e-6)
    assert v[1] == pytest.approx(math.log(1e-7))
    assert v[1] == pytest.approx(-16.118, abs=1e-3)
    assert v[2] == pytest.approx(math.log(3 + LOG_EPS))
    mags = np.sort(np.random.default_rng(1).uniform(0, 10, 100))
    assert np.all(np.diff(log_magnitude(mags)) > 0)


def test_zero_frame_features():
    f, _ = build_features(np.zeros(256, complex), PcenState.zeros(256), P)
    assert f.shape == (256, 4)
    np.testing.assert_allclose(f[:, 0], math.log(LOG_EPS))
    assert np.all(f[:, 1] == 0.0) and np.all(f[:, 2] == 1.0) and np.all(f[:, 3] == 0.0)


def test_identical_tone_frames_same_phase_channels():
    k = 20
    t = np.arange(640)
    X = stft(np.cos(2 * np.pi * k * t / 512), StftConfig())
    assert X.shape[0] == 2
    st = PcenState.zeros(256)
    f0, st = build_features(X[0], st, P, 0)
    f1, st = build_features(X[1], st, P, 1)
    np.testing.assert_allclose(f0[k, 2:], f1[k, 2:], atol=1e-9)


def test_streaming_features_match_offline():
    X = stft(np.random.default_rng(2).standard_normal(6000))
    off, _ = features_offline(X, P)
    st = PcenState.zeros(256)
    for t in range(len(X)):
        f, st = build_features(X[t], st, P, t)
        np.testing.assert_array_equal(f, off[t])


def test_build_features_bin_mismatch():
    with pytest.raises(ShapeError):
        build_features(np.zeros(257, complex), PcenState.zeros(256), P)


def test_no_nan_on_extremes():
    frame = np.array([0.0, 1e-300, 1e300, 1e-12] * 64, dtype=complex)
    f, _ = build_features(frame, PcenState.zeros(256), P)
    assert np.all(np.isfinite(f))
