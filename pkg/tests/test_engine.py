import numpy as np
import pytest

from panscope.engine import (
    ActivationTrace,
    ConvLayerSpec,
    ConvNetSpec,
    LinearHead,
    as_tensor,
    conv2d,
    conv_output_size,
    forward,
    pad_map,
)
from panscope.errors import InvalidPaddingError, ShapeError
from panscope.traceio import trace_bytes


def naive_conv2d(x, layer):
    """Independent quadruple-loop reference convolution."""
    b, c, h, w = x.shape
    pad = layer.padding_amount
    if pad:
        mode = "constant" if layer.padding_policy == "zero" else "reflect"
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)), mode=mode)
    else:
        xp = x
    ho = conv_output_size(h, layer.kernel_height, layer.stride, pad)
    wo = conv_output_size(w, layer.kernel_width, layer.stride, pad)
    out = np.zeros((b, layer.out_channels, ho, wo), dtype=np.float32)
    for n in range(b):
        for oc in range(layer.out_channels):
            for i in range(ho):
                for j in range(wo):
                    r, s = i * layer.stride, j * layer.stride
                    window = xp[n, :, r : r + layer.kernel_height, s : s + layer.kernel_width]
                    out[n, oc, i, j] = (
                        np.float32((window.astype(np.float64) * layer.weights[oc]).sum())
                        + layer.bias[oc]
                    )
    return out


def simple_layer(weights, bias=None, stride=1, pad=0, policy="zero", nonlin="none", name="l"):
    weights = np.asarray(weights, dtype=np.float32)
    oc, ic, kh, kw = weights.shape
    if bias is None:
        bias = np.zeros(oc, dtype=np.float32)
    return ConvLayerSpec(
        name=name,
        in_channels=ic,
        out_channels=oc,
        kernel_height=kh,
        kernel_width=kw,
        stride=stride,
        padding_amount=pad,
        padding_policy=policy,
        weights=weights,
        bias=np.asarray(bias, dtype=np.float32),
        post_nonlinearity=nonlin,
    )


class TestPadMap:
    def test_zero_fill(self):
        out = pad_map(np.array([[5.0]]), "zero", 1)
        assert out.tolist() == [[0, 0, 0], [0, 5, 0], [0, 0, 0]]

    def test_reflect_excludes_edge(self):
        # the one-row map pads along its row axis
        out = pad_map(np.array([1.0, 2.0, 3.0]), "reflect", 1)
        assert out.tolist() == [2, 1, 2, 3, 2]

    def test_reflect_2d(self):
        out = pad_map(np.array([[1.0, 2.0], [3.0, 4.0]]), "reflect", 1)
        expected = [[4, 3, 4, 3], [2, 1, 2, 1], [4, 3, 4, 3], [2, 1, 2, 1]]
        assert out.tolist() == expected

    def test_amount_zero_is_identity(self):
        m = np.arange(6.0).reshape(2, 3)
        for policy in ("zero", "reflect"):
            assert np.array_equal(pad_map(m, policy, 0), m)

    def test_reflect_too_wide_rejected(self):
        with pytest.raises(InvalidPaddingError):
            pad_map(np.ones((2, 5)), "reflect", 2)
        with pytest.raises(InvalidPaddingError):
            pad_map(np.ones((1, 1)), "reflect", 1)

    def test_negative_amount_rejected(self):
        with pytest.raises(InvalidPaddingError):
            pad_map(np.ones((2, 2)), "zero", -1)

    def test_unknown_policy_rejected(self):
        with pytest.raises(InvalidPaddingError):
            pad_map(np.ones((3, 3)), "replicate", 1)

    def test_reflect_introduces_no_new_values(self):
        rng = np.random.default_rng(3)
        for _ in range(20):
            m = rng.normal(size=(rng.integers(2, 6), rng.integers(2, 6)))
            out = pad_map(m, "reflect", 1)
            assert set(np.unique(out)) <= set(np.unique(m))


class TestConv2d:
    def test_identity_kernel(self):
        x = as_tensor(np.arange(9, dtype=np.float32).reshape(1, 1, 3, 3))
        layer = simple_layer(np.ones((1, 1, 1, 1)))
        assert np.array_equal(conv2d(x, layer), x)

    def test_window_sum_oracle(self):
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        layer = simple_layer(np.ones((1, 1, 3, 3)), pad=1)
        out = conv2d(x, layer)[0, 0]
        expected = np.array([[4, 6, 4], [6, 9, 6], [4, 6, 4]], dtype=np.float32)
        assert np.array_equal(out, expected)

    def test_channel_mismatch(self):
        x = np.ones((1, 2, 4, 4), dtype=np.float32)
        layer = simple_layer(np.ones((1, 1, 3, 3)))
        with pytest.raises(ShapeError):
            conv2d(x, layer)

    def test_kernel_larger_than_padded_input(self):
        x = np.ones((1, 1, 2, 2), dtype=np.float32)
        layer = simple_layer(np.ones((1, 1, 5, 5)), pad=1)
        with pytest.raises(ShapeError):
            conv2d(x, layer)

    @pytest.mark.parametrize("policy", ["zero", "reflect"])
    @pytest.mark.parametrize("stride", [1, 2])
    def test_matches_naive_oracle(self, policy, stride):
        rng = np.random.default_rng(hash((policy, stride)) % 2**32)
        for _ in range(10):
            b = int(rng.integers(1, 3))
            ic = int(rng.integers(1, 4))
            oc = int(rng.integers(1, 5))
            kh = int(rng.integers(1, 4))
            kw = int(rng.integers(1, 4))
            pad = int(rng.integers(0, 2))
            h = int(rng.integers(max(3, kh), 9))
            w = int(rng.integers(max(3, kw), 9))
            x = rng.uniform(-1, 1, size=(b, ic, h, w)).astype(np.float32)
            layer = simple_layer(
                rng.uniform(-1, 1, size=(oc, ic, kh, kw)),
                bias=rng.uniform(-1, 1, size=oc),
                stride=stride,
                pad=pad,
                policy=policy,
            )
            got = conv2d(x, layer)
            want = naive_conv2d(x, layer)
            assert got.shape == want.shape
            assert np.max(np.abs(got - want)) < 1e-5

    def test_output_shape_law(self):
        rng = np.random.default_rng(7)
        for _ in range(30):
            k = int(rng.integers(1, 5))
            stride = int(rng.integers(1, 4))
            pad = int(rng.integers(0, 3))
            h = int(rng.integers(k + 1, 16))
            w = int(rng.integers(k + 1, 16))
            x = rng.normal(size=(1, 1, h, w)).astype(np.float32)
            layer = simple_layer(np.ones((1, 1, k, k)), stride=stride, pad=pad)
            out = conv2d(x, layer)
            assert out.shape[2] == (h + 2 * pad - k) // stride + 1
            assert out.shape[3] == (w + 2 * pad - k) // stride + 1

    def test_per_channel_policy_selection(self):
        rng = np.random.default_rng(5)
        x = rng.normal(size=(2, 1, 6, 6)).astype(np.float32)
        weights = rng.normal(size=(2, 1, 3, 3)).astype(np.float32)
        base = simple_layer(weights, pad=1, policy="zero")
        mixed = ConvLayerSpec(
            name="l",
            in_channels=1,
            out_channels=2,
            kernel_height=3,
            kernel_width=3,
            stride=1,
            padding_amount=1,
            padding_policy="zero",
            weights=weights,
            bias=np.zeros(2, dtype=np.float32),
            channel_policies=("zero", "reflect"),
        )
        zero_out = conv2d(x, base)
        reflect_out = conv2d(x, simple_layer(weights, pad=1, policy="reflect"))
        got = conv2d(x, mixed)
        assert np.array_equal(got[:, 0], zero_out[:, 0])
        assert np.array_equal(got[:, 1], reflect_out[:, 1])


class TestForward:
    def test_single_identity_layer_trace(self):
        x = np.arange(16, dtype=np.float32).reshape(1, 1, 4, 4)
        model = ConvNetSpec(name="m", layers=(simple_layer(np.ones((1, 1, 1, 1))),))
        trace, logits = forward(model, x)
        assert logits is None
        assert np.array_equal(trace.activations("l"), x)

    def test_relu_clamps_between_layers(self):
        neg = simple_layer(np.full((1, 1, 1, 1), -1.0), name="a", nonlin="relu")
        ident = simple_layer(np.ones((1, 1, 1, 1)), name="b")
        model = ConvNetSpec(name="m", layers=(neg, ident))
        x = np.ones((1, 1, 3, 3), dtype=np.float32)
        trace, _ = forward(model, x)
        assert np.all(trace.activations("a") == -1.0)  # pre-nonlinearity kept
        assert np.all(trace.activations("b") == 0.0)  # downstream sees rectified zeros

    def test_deterministic_trace_bytes(self):
        rng = np.random.default_rng(42)
        layers = []
        ic = 2
        for i in range(3):
            oc = 4
            layers.append(
                simple_layer(
                    rng.normal(size=(oc, ic, 3, 3)),
                    bias=rng.normal(size=oc),
                    pad=1,
                    name=f"c{i}",
                    nonlin="relu",
                )
            )
            ic = oc
        model = ConvNetSpec(name="m", layers=tuple(layers))
        x = rng.normal(size=(2, 2, 8, 8)).astype(np.float32)
        t1, _ = forward(model, x)
        t2, _ = forward(model, x)
        assert trace_bytes(t1) == trace_bytes(t2)

    def test_head_logits_shape_and_gap(self):
        layer = simple_layer(np.ones((2, 1, 1, 1)), name="c0")
        head = LinearHead(weights=np.eye(2, dtype=np.float32), bias=np.zeros(2, np.float32))
        model = ConvNetSpec(name="m", layers=(layer,), head=head)
        x = np.full((3, 1, 4, 4), 2.0, dtype=np.float32)
        _, logits = forward(model, x)
        assert logits.shape == (3, 2)
        assert np.allclose(logits, 2.0)

    def test_incompatible_layers_rejected(self):
        a = simple_layer(np.ones((3, 1, 1, 1)), name="a")
        b = simple_layer(np.ones((1, 2, 1, 1)), name="b")
        with pytest.raises(ShapeError):
            ConvNetSpec(name="m", layers=(a, b))

    def test_trace_rejects_non_4d(self):
        with pytest.raises(ShapeError):
            ActivationTrace(model_name="m", layers=(("a", np.zeros((2, 3))),))
