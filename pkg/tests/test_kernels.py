import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trunet.errors import ShapeError
from trunet.kernels import (
    GruWeights,
    LayerSpec,
    batch_norm_inference,
    bigru_sequence,
    bn_fold,
    conv1d_freq,
    freq_windows,
    gru_cell_step,
    gru_sequence,
    logistic,
    same_padding,
    transposed_conv1d_freq,
)


def naive_conv(x, w, stride, mode):
    """Direct loop over output positions and taps (independent oracle)."""
    F, cin = x.shape
    k = w.shape[0]
    out = -(-F // stride)
    pad = max((out - 1) * stride + k - F, 0)
    lo = pad // 2
    cout = w.shape[-1]
    y = np.zeros((out, cout))
    for o in range(out):
        for j in range(k):
            f = o * stride + j - lo
            if 0 <= f < F:
                if mode == "depthwise":
                    y[o] += x[f] * w[j]
                else:
                    y[o] += x[f] @ w[j]
    return y


def naive_tconv(x, w, stride):
    F, _ = x.shape
    k, _, cout = w.shape
    full = np.zeros(((F - 1) * stride + k, cout))
    for i in range(F):
        for j in range(k):
            full[i * stride + j] += x[i] @ w[j]
    lo = (k - stride) // 2
    return full[lo : lo + stride * F]


def test_layer_spec_validation():
    with pytest.raises(ValueError):
        LayerSpec(0, 1, 4)
    with pytest.raises(ValueError):
        LayerSpec(3, 1, 4, "bogus")


def test_same_padding_values():
    assert same_padding(256, 5, 2) == (128, 1, 2)
    assert same_padding(128, 3, 1) == (128, 1, 1)
    assert same_padding(32, 3, 2) == (16, 0, 1)
    assert same_padding(10, 1, 1) == (10, 0, 0)


def test_encoder_block1_shape():
    rng = np.random.default_rng(0)
    y = conv1d_freq(rng.standard_normal((256, 4)), rng.standard_normal((5, 4, 64)), stride=2)
    assert y.shape == (128, 64)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.sampled_from([1, 3, 5]), st.integers(1, 3),
       st.integers(1, 5), st.integers(1, 5), st.integers(0, 10**6))
def test_standard_conv_matches_naive(F, k, s, cin, cout, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((F, cin))
    w = rng.standard_normal((k, cin, cout))
    np.testing.assert_allclose(conv1d_freq(x, w, stride=s), naive_conv(x, w, s, "standard"),
                               atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 40), st.sampled_from([3, 5]), st.integers(1, 3), st.integers(1, 6),
       st.integers(0, 10**6))
def test_depthwise_matches_naive(F, k, s, c, seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((F, c))
    w = rng.standard_normal((k, c))
    np.testing.assert_allclose(conv1d_freq(x, w, stride=s, mode="depthwise"),
                               naive_conv(x, w, s, "depthwise"), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 20), st.sampled_from([(3, 2), (5, 2), (3, 1), (1, 1), (4, 4)]),
       st.integers(1, 4), st.integers(1, 4), st.integers(0, 10**6))
def test_transposed_matches_naive(F, ks, cin, cout, seed):
    k, s = ks
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((F, cin))
    w = rng.standard_normal((k, cin, cout))
    y = transposed_conv1d_freq(x, w, stride=s)
    assert y.shape == (s * F, cout)
    np.testing.assert_allclose(y, naive_tconv(x, w, s), atol=1e-12)


def test_windows_helper_agrees():
    x = np.arange(10.0).reshape(10, 1)
    win = freq_windows(x, 3, 2)
    assert win.shape == (5, 1, 3)
    # pad total 1, all of it on the high side (low = floor(1/2) = 0)
    assert win[0, 0].tolist() == [0.0, 1.0, 2.0]
    assert win[-1, 0].tolist() == [8.0, 9.0, 0.0]


def test_pointwise_identity():
    x = np.random.default_rng(1).standard_normal((64, 8))
    y = conv1d_freq(x, np.eye(8)[None], np.zeros(8), mode="pointwise")
    np.testing.assert_array_equal(y, x)


def test_depthwise_delta_identity():
    x = np.random.default_rng(2).standard_normal((33, 6))
    w = np.zeros((3, 6))
    w[1] = 1.0
    np.testing.assert_array_equal(conv1d_freq(x, w, np.zeros(6), stride=1, mode="depthwise"), x)


def test_transposed_identity_and_zero():
    x = np.random.default_rng(3).standard_normal((16, 5))
    np.testing.assert_array_equal(transposed_conv1d_freq(x, np.eye(5)[None], stride=1), x)
    w = np.random.default_rng(4).standard_normal((3, 5, 7))
    assert np.all(transposed_conv1d_freq(np.zeros((16, 5)), w, stride=2) == 0)
    assert transposed_conv1d_freq(x, w, stride=2).shape == (32, 7)


@pytest.mark.parametrize("F,k,s", [(16, 3, 2), (32, 5, 2), (64, 3, 1), (64, 5, 2), (128, 3, 1), (128, 5, 2)])
def test_decoder_lengths(F, k, s):
    y = transposed_conv1d_freq(np.ones((F, 2)), np.ones((k, 2, 3)), stride=s)
    assert y.shape == (s * F, 3)


def test_leading_axes_are_batched():
    rng = np.random.default_rng(5)
    x = rng.standard_normal((4, 32, 3))
    w = rng.standard_normal((5, 3, 2))
    batched = conv1d_freq(x, w, stride=2)
    for t in range(4):
        np.testing.assert_allclose(batched[t], conv1d_freq(x[t], w, stride=2), atol=1e-14)


def test_shape_errors_name_layer():
    x = np.zeros((16, 4))
    with pytest.raises(ShapeError, match="enc.9"):
        conv1d_freq(x, np.zeros((3, 5, 2)), name="enc.9")
    with pytest.raises(ShapeError, match="dw"):
        conv1d_freq(x, np.zeros((3, 5)), mode="depthwise", name="dw")
    with pytest.raises(ShapeError):
        conv1d_freq(x, np.zeros((3, 4, 2)), mode="pointwise")
    with pytest.raises(ShapeError):
        conv1d_freq(x, np.zeros((3, 4, 2)), np.zeros(3))
    with pytest.raises(ShapeError, match="smaller than stride"):
        transposed_conv1d_freq(x, np.zeros((1, 4, 2)), stride=2)
    with pytest.raises(ValueError):
        conv1d_freq(x, np.zeros((3, 4, 2)), mode="dilated")


def test_batch_norm_examples():
    x = np.random.default_rng(6).standard_normal((10, 3))
    one, zero = np.ones(3), np.zeros(3)
    np.testing.assert_allclose(batch_norm_inference(x, one, zero, zero, one), x / np.sqrt(1 + 1e-5))
    mu, beta = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -4.0])
    np.testing.assert_allclose(batch_norm_inference(np.tile(mu, (4, 1)), np.array([2.0, 3, 4]), beta, mu, one),
                               np.tile(beta, (4, 1)))
    with pytest.raises(ValueError):
        batch_norm_inference(x, one, zero, zero, -one)


def test_bn_fold_matches_conv_then_bn():
    rng = np.random.default_rng(7)
    x = rng.standard_normal((40, 6))
    w, b = rng.standard_normal((5, 6, 4)), rng.standard_normal(4)
    g, be, mu, var = rng.uniform(0.5, 2, 4), rng.standard_normal(4), rng.standard_normal(4), rng.uniform(0.1, 3, 4)
    ref = batch_norm_inference(conv1d_freq(x, w, b, stride=2), g, be, mu, var)
    sc, sh = bn_fold(g, be, mu, var)
    np.testing.assert_allclose(conv1d_freq(x, w * sc, b * sc + sh, stride=2), ref, atol=1e-6)


def test_logistic_stable():
    v = logistic(np.array([-1000.0, 0.0, 1000.0, np.log(3)]))
    assert np.all(np.isfinite(v))
    assert v[0] == 0.0 and v[1] == 0.5 and v[2] == 1.0
    assert v[3] == pytest.approx(0.75, rel=1e-15)


def _gru(rng, cin, h, scale=1.0):
    return GruWeights(scale * rng.standard_normal((cin, 3 * h)), scale * rng.standard_normal((h, 3 * h)),
                      scale * rng.standard_normal(3 * h), scale * rng.standard_normal(3 * h))


def scalar_gru(x, h, w):
    """Gate equations written out per unit (oracle)."""
    H = len(h)
    out = np.empty(H)
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    for j in range(H):
        r = sig(x @ w.W[:, j] + h @ w.U[:, j] + w.b_ih[j] + w.b_hh[j])
        z = sig(x @ w.W[:, H + j] + h @ w.U[:, H + j] + w.b_ih[H + j] + w.b_hh[H + j])
        n = np.tanh(x @ w.W[:, 2 * H + j] + w.b_ih[2 * H + j] + r * (h @ w.U[:, 2 * H + j] + w.b_hh[2 * H + j]))
        out[j] = (1 - z) * n + z * h[j]
    return out


def test_gru_matches_scalar_oracle():
    rng = np.random.default_rng(8)
    w = _gru(rng, 5, 4, 0.7)
    x, h = rng.standard_normal(5), rng.standard_normal(4)
    np.testing.assert_allclose(gru_cell_step(x, h, w), scalar_gru(x, h, w), atol=1e-14)


def test_gru_zero_weights_halves_state():
    w = GruWeights(np.zeros((3, 6)), np.zeros((2, 6)), np.zeros(6), np.zeros(6))
    h = np.array([0.8, -3.0])
    np.testing.assert_array_equal(gru_cell_step(np.ones(3), h, w), 0.5 * h)
    np.testing.assert_array_equal(gru_cell_step(np.zeros(3), np.zeros(2), w), 0.0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.0, 5.0))
def test_gru_state_bounded(seed, hscale):
    rng = np.random.default_rng(seed)
    w = _gru(rng, 4, 6, 2.0)
    h = hscale * rng.uniform(-1, 1, 6)
    h2 = gru_cell_step(rng.standard_normal(4) * 10, h, w)
    assert np.max(np.abs(h2)) <= max(np.max(np.abs(h)), 1.0) + 1e-12


def test_gru_shape_validation():
    with pytest.raises(ShapeError):
        GruWeights(np.zeros((3, 6)), np.zeros((3, 6)), np.zeros(6), np.zeros(6))
    with pytest.raises(ShapeError):
        GruWeights(np.zeros((3, 6)), np.zeros((2, 6)), np.zeros(5), np.zeros(6))


def test_bigru_shapes_and_directions():
    rng = np.random.default_rng(9)
    fw, bw = _gru(rng, 128, 64, 0.1), _gru(rng, 128, 64, 0.1)
    seq = rng.standard_normal((16, 128))
    out = bigru_sequence(seq, fw, bw)
    assert out.shape == (16, 128)
    h = np.zeros(64)
    for i in range(16):
        h = gru_cell_step(seq[i], h, fw)
        np.testing.assert_allclose(out[i, :64], h, atol=1e-13)
    h = np.zeros(64)
    for i in reversed(range(16)):
        h = gru_cell_step(seq[i], h, bw)
        np.testing.assert_allclose(out[i, 64:], h, atol=1e-13)


def test_bigru_palindrome_mirror():
    rng = np.random.default_rng(10)
    w = _gru(rng, 3, 4, 0.8)
    half = rng.standard_normal((5, 3))
    seq = np.concatenate([half, half[::-1]])
    out = bigru_sequence(seq, w, w)
    np.testing.assert_allclose(out[:, :4], out[::-1, 4:], atol=1e-14)


def test_bigru_length_one():
    rng = np.random.default_rng(11)
    fw, bw = _gru(rng, 3, 2), _gru(rng, 3, 2)
    x = rng.standard_normal((1, 3))
    out = bigru_sequence(x, fw, bw)
    np.testing.assert_allclose(out[0], np.concatenate([gru_cell_step(x[0], np.zeros(2), fw),
                                                       gru_cell_step(x[0], np.zeros(2), bw)]))


def test_gru_sequence_batched_over_leading_axes():
    rng = np.random.default_rng(12)
    w = _gru(rng, 3, 2)
    seq = rng.standard_normal((4, 7, 3))
    out = gru_sequence(seq, w)
    for b in range(4):
        np.testing.assert_allclose(out[b], gru_sequence(seq[b], w), atol=1e-15)
