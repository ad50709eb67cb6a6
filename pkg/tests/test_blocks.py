import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvsnet import tensor as T
from dvsnet.blocks import (DenseBlock, ResidualBlock, SEBlock, Transition, VGGStack, dense_block,
                           grouped_conv, residual_block, se_block, vgg_stack)
from dvsnet.conv import conv2d
from dvsnet.nn import BatchNorm2d, Conv2d, Dense, Dropout, Sequential, he_normal
from dvsnet.tensor import Tensor

from conftest import module_gradcheck


def _zero(module):
    for p in module.parameters():
        p.data[...] = 0


# -- layers ---------------------------------------------------------------------

def test_he_normal_scale():
    w = he_normal(np.random.default_rng(0), (4000, 50), fan_in=50)
    assert w.dtype == np.float32
    assert w.std() == pytest.approx(np.sqrt(2 / 50), rel=0.02)


def test_conv_layer_parameter_count():
    conv = Conv2d(1, 1, 3, rng=np.random.default_rng(0))
    assert sum(p.size for p in conv.parameters()) == 10


def test_batchnorm_constant_input_gives_shift():
    bn = BatchNorm2d(2)
    bn.beta.data[...] = [0.5, -1.0]
    x = np.ones((3, 2, 2, 2)) * np.array([4.0, -7.0])[None, :, None, None]
    out = bn(Tensor(x)).data
    np.testing.assert_allclose(out[:, 0], 0.5, atol=1e-6)
    np.testing.assert_allclose(out[:, 1], -1.0, atol=1e-6)


def test_batchnorm_eval_hand_computed():
    bn = BatchNorm2d(1).eval()
    bn.running_mean.data[...] = 1.0
    bn.running_var.data[...] = 4.0
    bn.gamma.data[...] = 2.0
    bn.beta.data[...] = 0.5
    x = np.array([3.0, -1.0]).reshape(2, 1, 1, 1)
    want = (x - 1.0) / np.sqrt(4.0 + 1e-5) * 2.0 + 0.5
    np.testing.assert_allclose(bn(Tensor(x, dtype=np.float64)).data, want, atol=1e-6)


def test_dropout_module_modes():
    d = Dropout(0.0)
    x = Tensor(np.ones((4, 4)))
    assert d(x) is x
    d = Dropout(0.5).eval()
    assert d(x) is x


def test_sequential_parameter_names_unique():
    seq = Sequential(Dense(3, 4), Dense(4, 2))
    names = [n for n, _ in seq.named_parameters()]
    assert len(names) == len(set(names)) == 4


# -- residual --------------------------------------------------------------------

def test_residual_zero_branch_is_identity(rng):
    block = ResidualBlock(3, 3, rng=rng)
    _zero(block.last_conv)
    x = rng.standard_normal((2, 3, 4, 4)).astype(np.float32)
    np.testing.assert_allclose(residual_block(Tensor(x), block).data, x)


def test_residual_constructed_branch_example():
    # x = [1, 2] on a 1x1 map; the last conv adds [0.5, -0.5]; identity shortcut gives [1.5, 1.5]
    block = ResidualBlock(2, 2)
    _zero(block.last_conv)
    block.last_conv.bias.data[...] = [0.5, -0.5]
    y = block(Tensor(np.array([1.0, 2.0]).reshape(1, 2, 1, 1))).data
    np.testing.assert_allclose(y.ravel(), [1.5, 1.5])


def test_projection_shortcut_example():
    # single input channel of value 3, zero branch, 1x1 projection of ones -> 3 on both outputs
    block = ResidualBlock(1, 2)
    assert block.projection is not None
    _zero(block.last_conv)
    block.projection.weight.data[...] = 1.0
    block.projection.bias.data[...] = 0.0
    y = block(Tensor(np.full((1, 1, 1, 1), 3.0))).data
    np.testing.assert_allclose(y.ravel(), [3.0, 3.0])


@pytest.mark.parametrize("cin, cout, stride, expect", [(4, 4, 1, False), (4, 8, 1, True), (4, 4, 2, True)])
def test_projection_iff_shape_changes(cin, cout, stride, expect):
    assert (ResidualBlock(cin, cout, stride).projection is not None) is expect


def test_identity_shortcut_with_shape_change_raises():
    with pytest.raises(ValueError, match="projection"):
        ResidualBlock(2, 4, shortcut="identity")


def test_preactivation_order():
    kinds = [type(m).__name__ for m in ResidualBlock(2, 2).branch.layers]
    assert kinds == ["BatchNorm2d", "ReLU", "Conv2d", "BatchNorm2d", "ReLU", "Conv2d"]


def test_residual_stride_output_shape(rng):
    block = ResidualBlock(2, 4, stride=2, rng=rng)
    assert block(Tensor(rng.standard_normal((1, 2, 6, 6)))).shape == (1, 4, 3, 3)
    assert block.output_shape((2, 6, 6)) == (4, 3, 3)


# -- dense -------------------------------------------------------------------------

def test_dense_block_channel_arithmetic(rng):
    block = DenseBlock(16, 5, 12, rng=rng)
    assert block.out_channels == 64
    assert dense_block(Tensor(rng.standard_normal((1, 16, 3, 3))), block).shape == (1, 64, 3, 3)


def test_dense_block_n1_is_identity(rng):
    x = Tensor(rng.standard_normal((1, 3, 2, 2)))
    assert DenseBlock(3, 1, 8)(x) is x


def test_dense_block_keeps_input_first(rng):
    x = rng.standard_normal((1, 3, 4, 4)).astype(np.float32)
    out = DenseBlock(3, 3, 2, rng=rng)(Tensor(x)).data
    np.testing.assert_array_equal(out[:, :3], x)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(1, 6))
def test_dense_block_width_property(cin, n, k):
    assert DenseBlock(cin, n, k).out_channels == cin + (n - 1) * k


def test_transition_modes(rng):
    x = Tensor(rng.standard_normal((1, 4, 6, 6)))
    assert Transition(4, 2, "conv", rng=rng)(x).shape == (1, 2, 3, 3)
    assert Transition(4, 2, "avg", rng=rng)(x).shape == (1, 2, 3, 3)
    with pytest.raises(ValueError):
        Transition(4, 2, "bogus")


# -- squeeze and excitation --------------------------------------------------------

def test_se_zero_weights_halves_input(rng):
    se = SEBlock(8, 4, rng=rng)
    _zero(se)
    x = rng.standard_normal((2, 8, 3, 3)).astype(np.float32)
    np.testing.assert_array_equal(se_block(Tensor(x), se).data, 0.5 * x)


def test_se_open_gate_passes_input(rng):
    se = SEBlock(4, 2, rng=rng)
    _zero(se)
    se.fc2.bias.data[...] = 50.0
    x = rng.standard_normal((1, 4, 2, 2)).astype(np.float32)
    np.testing.assert_allclose(se(Tensor(x)).data, x, atol=1e-6)


def test_se_squeeze_of_constant_channel():
    x = np.ones((1, 3, 4, 4)) * np.array([1.0, -2.0, 5.0])[None, :, None, None]
    np.testing.assert_allclose(T.global_avg_pool(Tensor(x)).data, [[1.0, -2.0, 5.0]])


@pytest.mark.parametrize("c, r, width", [(64, 16, 4), (8, 16, 1), (30, 4, 7)])
def test_se_squeeze_width(c, r, width):
    assert SEBlock(c, r).squeeze_width == width


def test_se_gate_in_open_interval(rng):
    se = SEBlock(6, 2, rng=rng)
    g = se.gate(Tensor(rng.standard_normal((3, 6, 2, 2)))).data
    assert np.all((g > 0) & (g < 1))


# -- grouped convolution -------------------------------------------------------------

def test_grouped_g1_equals_conv(rng):
    x, w = rng.standard_normal((1, 3, 5, 5)), rng.standard_normal((2, 3, 3, 3))
    a = grouped_conv(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), 1).data
    b = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64)).data
    np.testing.assert_array_equal(a, b)


def test_grouped_g2_equals_split_convs(rng):
    x, w = rng.standard_normal((2, 4, 5, 5)), rng.standard_normal((6, 2, 3, 3))
    got = grouped_conv(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), 2, padding=1).data
    halves = [conv2d(Tensor(x[:, 2 * g:2 * g + 2], dtype=np.float64), Tensor(w[3 * g:3 * g + 3], dtype=np.float64),
                     padding=1).data for g in range(2)]
    np.testing.assert_allclose(got, np.concatenate(halves, axis=1), atol=1e-12)


def test_depthwise_ones_is_identity(rng):
    x = rng.standard_normal((1, 5, 3, 3))
    out = grouped_conv(Tensor(x, dtype=np.float64), Tensor(np.ones((5, 1, 1, 1)), dtype=np.float64), 5).data
    np.testing.assert_allclose(out, x)


# -- VGG stacks ------------------------------------------------------------------------

def test_vgg_stack_pad0_chain():
    stack = VGGStack(3, 4, 3, padding=0)
    assert [s[1] for s in stack.shape_trace((3, 224, 224))] == [222, 220, 218]


def test_vgg_single_7x7_chain():
    assert VGGStack(3, 4, 1, padding=0, kernel=7).output_shape((3, 224, 224)) == (4, 218, 218)


def test_vgg_stack_to_1x1(rng):
    assert vgg_stack(Tensor(rng.standard_normal((1, 2, 3, 3))), 1, 4).shape == (1, 4, 1, 1)


def test_vgg_stack_too_small_raises(rng):
    with pytest.raises(ValueError, match="fall below 1"):
        vgg_stack(Tensor(rng.standard_normal((1, 2, 3, 3))), 2, 4)


# -- gradients through composite blocks -------------------------------------------------

@pytest.mark.parametrize("name, make, shape", [
    ("residual-basic", lambda r: ResidualBlock(2, 2, rng=r), (2, 2, 3, 3)),
    ("residual-projection", lambda r: ResidualBlock(2, 3, stride=2, rng=r), (2, 2, 4, 4)),
    ("residual-se", lambda r: ResidualBlock(4, 4, se_ratio=2, rng=r), (2, 4, 2, 2)),
    ("resnext", lambda r: ResidualBlock(4, 4, kind="grouped", cardinality=2, rng=r), (2, 4, 2, 2)),
    ("dense-block", lambda r: DenseBlock(2, 3, 2, rng=r), (2, 2, 3, 3)),
    ("dense-bottleneck", lambda r: DenseBlock(2, 2, 2, bottleneck=3, rng=r), (2, 2, 3, 3)),
    ("se", lambda r: SEBlock(4, 2, rng=r), (2, 4, 2, 2)),
    ("transition", lambda r: Transition(2, 2, "avg", rng=r), (2, 2, 4, 4)),
    ("vgg", lambda r: VGGStack(2, 2, 2, rng=r), (1, 2, 4, 4)),
    ("dense-layer", lambda r: Dense(6, 3, rng=r), (4, 6)),
])
def test_block_gradients(name, make, shape):
    rng = np.random.default_rng(3)
    module = make(rng)
    x = rng.standard_normal(shape)
    assert x.size <= 64
    assert module_gradcheck(module, x) < 1e-3, name
