import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trunet.dsp import stft
from trunet.losses import energy_ratio_db
from trunet.testkit import make_scene, oracle_separation, reverb_tail, spectral_snr_db, synth_reverb


def _scene(seed, snr=5.0, drr=3.0):
    g = np.random.default_rng(seed)
    return make_scene(g.standard_normal(16000), g.standard_normal(16000), snr, drr, g)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-10, 30), st.floats(-10, 30))
def test_scene_identity_and_ratios(seed, snr, drr):
    s = _scene(seed, snr, drr)
    assert np.max(np.abs(s.y_d + s.y_r + s.y_n - s.x)) <= 4 * np.finfo(float).eps * np.max(np.abs(s.x))
    assert abs(energy_ratio_db(s.y_d, s.y_r) - drr) < 1e-9
    assert abs(energy_ratio_db(s.y_d + s.y_r, s.y_n) - snr) < 1e-9


def test_infinite_drr_has_no_reverb():
    g = np.random.default_rng(0)
    s = make_scene(g.standard_normal(1000), g.standard_normal(1000), 10.0, np.inf, g)
    assert not s.y_r.any()


def test_reverb_tail_shape():
    tail = reverb_tail(0.1, 50, np.random.default_rng(0))
    assert not tail[:50].any() and tail[0] == 0
    assert np.all(np.abs(tail) <= np.exp(-np.arange(len(tail)) / 1600.0) + 1e-15)
    with pytest.raises(ValueError):
        reverb_tail(0.0, 50, np.random.default_rng(0))
    with pytest.raises(ValueError):
        reverb_tail(0.1, 0, np.random.default_rng(0))


def test_synth_reverb_linear_and_delayed():
    g = np.random.default_rng(1)
    a, b = g.standard_normal(500), g.standard_normal(500)
    def rev(x):
        return synth_reverb(x, 0.05, 40, np.random.default_rng(7))
    np.testing.assert_allclose(rev(2 * a + b), 2 * rev(a) + rev(b), atol=1e-10)
    imp = np.zeros(10)
    imp[0] = 1.0
    assert np.max(np.abs(rev(imp)[:40])) < 1e-12


def test_make_scene_rejects_bad_inputs():
    g = np.random.default_rng(0)
    with pytest.raises(ValueError):
        make_scene(np.ones(10), np.ones(9), 0.0, 0.0, g)
    with pytest.raises(ValueError):
        make_scene(np.zeros(10), np.ones(10), 0.0, 0.0, g)


def test_oracle_separation_recovers_components():
    s = _scene(5)
    X, Yd, Yn = stft(s.x), stft(s.y_d), stft(s.y_n)
    sep = oracle_separation(X, Yd, Yn)
    assert spectral_snr_db(Yd, sep.direct) > 20
    assert spectral_snr_db(Yn, sep.noise) > 20
    assert spectral_snr_db(stft(s.y_r), sep.reverb) > 20
