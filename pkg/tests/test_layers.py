import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import mmode_ef.tensor_nn as nn
from mmode_ef.errors import ShapeError
from mmode_ef.tensor_nn import Adam, Encoder, EncoderConfig, Tensor, warmup_factor


def conv_loops(x, w, b, stride, pad):
    """Direct nested-loop cross-correlation, NHWC."""
    n, h, wd, c = x.shape
    kh, kw, _, co = w.shape
    xp = np.pad(x, ((0, 0), (pad, pad), (pad, pad), (0, 0)))
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, ho, wo, co))
    for i in range(ho):
        for j in range(wo):
            patch = xp[:, i * stride:i * stride + kh, j * stride:j * stride + kw, :]
            out[:, i, j, :] = np.einsum("nhwc,hwco->no", patch, w)
    return out + (0 if b is None else b)


@given(st.integers(1, 3), st.integers(1, 2), st.integers(0, 2), st.integers(5, 9), st.integers(0, 99))
def test_conv2d_matches_loops(k, stride, pad, size, seed):
    rng = np.random.default_rng(seed)
    x, w, b = rng.normal(size=(2, size, size - 1, 2)), rng.normal(size=(k, k, 2, 3)), rng.normal(size=3)
    with nn.default_dtype(np.float64):
        got = nn.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, pad).data
    np.testing.assert_allclose(got, conv_loops(x, w, b, stride, pad), rtol=1e-10, atol=1e-10)


def test_patch_conv_matches_loops(rng):
    x, w = rng.normal(size=(3, 16, 8, 2)), rng.normal(size=(8, 8, 2, 4))
    with nn.default_dtype(np.float64):
        got = nn.conv2d(Tensor(x), Tensor(w), None, stride=8).data
    np.testing.assert_allclose(got, conv_loops(x, w, None, 8, 0), rtol=1e-10, atol=1e-10)


def test_maxpool_matches_loops(rng):
    x = rng.normal(size=(2, 7, 6, 3))
    with nn.default_dtype(np.float64):
        got = nn.maxpool2d(Tensor(x), 3, 2, padding=1).data
    xp = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)), constant_values=-np.inf)
    want = np.array([[[xp[:, i:i + 3, j:j + 3, :].max(axis=(1, 2))[n] for j in range(0, 7, 2)]
                      for i in range(0, 8, 2)] for n in range(2)])
    np.testing.assert_array_equal(got, want[:, :got.shape[1], :got.shape[2]])


def test_instance_norm_normalizes_each_sample_and_channel(rng):
    x = rng.normal(3.0, 2.0, size=(2, 5, 4, 3))
    with nn.default_dtype(np.float64):
        y = nn.instance_norm(Tensor(x), Tensor(np.ones(3)), Tensor(np.zeros(3))).data
    np.testing.assert_allclose(y.mean(axis=(1, 2)), 0.0, atol=1e-12)
    np.testing.assert_allclose(y.var(axis=(1, 2)), 1.0, rtol=1e-3)


def test_encoder_output_shape_and_channel_check(rng):
    enc = Encoder(EncoderConfig(in_channels=2, stage_widths=[4, 8], blocks_per_stage=[1, 1],
                                stem_width=4, out_dim=6), rng)
    assert enc(Tensor(rng.random((3, 32, 16, 2)))).shape == (3, 6)
    with pytest.raises(ShapeError):
        enc(Tensor(rng.random((3, 32, 16, 1))))


def test_default_encoder_parameter_count():
    enc = Encoder(EncoderConfig(), np.random.default_rng(0))
    assert 1e6 < enc.num_parameters() < 12e6


def test_desk_encoder_handles_short_clips(rng):
    enc = Encoder(nn.desk_encoder_config(), rng)
    assert enc(Tensor(rng.random((2, 112, 32, 1)))).shape == (2, 32)


def test_state_dict_round_trip_and_mismatch(rng):
    a = nn.Dense(3, 2, rng)
    b = nn.Dense(3, 2, np.random.default_rng(99))
    b.load_state_dict(a.state_dict())
    for (na, pa), (nb, pb) in zip(a.named_parameters(), b.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(pa.data, pb.data)
    with pytest.raises(ShapeError):
        b.load_state_dict({"weight": np.zeros((2, 2)), "bias": np.zeros(2)})
    with pytest.raises(KeyError):
        b.load_state_dict({"weight": np.zeros((3, 2))})


def test_warmup_factor_ramps_linearly():
    assert [warmup_factor(e, 4) for e in range(6)] == [0.25, 0.5, 0.75, 1.0, 1.0, 1.0]
    assert warmup_factor(0, 0) == 1.0


def test_adam_matches_hand_computation():
    with nn.default_dtype(np.float64):
        p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
        opt = Adam([p], lr=0.1)
        g1, g2 = np.array([0.5, -1.0]), np.array([0.1, 0.3])
        opt.step([g1])
        opt.step([g2])
    m = 0.9 * (0.1 * g1) + 0.1 * g2
    v = 0.999 * (0.001 * g1 ** 2) + 0.001 * g2 ** 2
    first = np.array([1.0, -2.0]) - 0.1 * np.sign(g1) * (1 / (1 + 1e-8 / np.abs(g1)))
    want = first - 0.1 * (m / (1 - 0.81)) / (np.sqrt(v / (1 - 0.999 ** 2)) + 1e-8)
    np.testing.assert_allclose(p.data, want, rtol=1e-12)


def test_adam_warmup_scales_first_step():
    with nn.default_dtype(np.float64):
        p = Tensor(np.zeros(1), requires_grad=True)
        opt = Adam([p], lr=1.0, warmup_epochs=10)
        opt.set_epoch(0)
        opt.step([np.ones(1)])
    # the first bias-corrected Adam step has magnitude ~lr
    assert np.isclose(p.data[0], -0.1, rtol=1e-6)


def test_adam_rejects_shape_mismatch():
    p = Tensor(np.zeros(2), requires_grad=True)
    with pytest.raises(ShapeError):
        Adam([p]).step([np.zeros(3)])
