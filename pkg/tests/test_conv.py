import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dvsnet.blocks import grouped_conv
from dvsnet.conv import ConvSpec, conv2d, conv_output_size, pool2d, receptive_field, resolve_padding
from dvsnet.tensor import Tensor

from conftest import gradcheck, naive_conv2d, naive_pool2d


@pytest.mark.parametrize("p, q, r, pad, expected", [
    (224, 3, 1, 0, 222),
    (224, 7, 1, 0, 218),
    (224, 3, 1, 1, 224),
    (224, 7, 2, 3, 112),
    (5, 5, 1, 0, 1),
    (7, 3, 2, 0, 3),
])
def test_conv_output_size_examples(p, q, r, pad, expected):
    assert conv_output_size(p, q, r, pad) == expected
    assert conv_output_size(ConvSpec(p, q, r, pad)) == expected


def test_vgg_chain_three_convs():
    sizes = [224]
    for _ in range(3):
        sizes.append(conv_output_size(sizes[-1], 3, 1, 0))
    assert sizes == [224, 222, 220, 218]


@pytest.mark.parametrize("spec", [ConvSpec(2, 3), ConvSpec(5, 0), ConvSpec(5, 3, 0), ConvSpec(5, 3, 1, -1)])
def test_conv_output_size_rejects_bad_specs(spec):
    with pytest.raises(ValueError):
        conv_output_size(spec)


def test_receptive_field_stacks():
    assert receptive_field([(3, 1)] * 3) == 7 == receptive_field([(7, 1)])
    assert receptive_field([(3, 1), (3, 1)]) == 5
    assert receptive_field([(3, 2), (3, 1)]) == 7
    with pytest.raises(ValueError):
        receptive_field([])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 8).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, 4))))
def test_receptive_field_of_stride1_stack(nk):
    n, half = nk
    k = 2 * half + 1
    assert receptive_field([(k, 1)] * n) == n * (k - 1) + 1


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.integers(1, 7), st.integers(1, 4), st.integers(0, 3))
def test_output_size_matches_window_count(p, q, r, pad):
    if p + 2 * pad < q:
        return
    windows = len(range(0, p + 2 * pad - q + 1, r))
    assert conv_output_size(p, q, r, pad) == windows


def test_resolve_padding():
    assert resolve_padding("same", 3) == 1
    assert resolve_padding("valid", 5) == 0
    assert resolve_padding(2, 3) == 2
    with pytest.raises(ValueError):
        resolve_padding("same", 4)


def test_identity_kernel_returns_input(rng):
    x = rng.standard_normal((1, 1, 5, 5))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    out = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), padding=1).data
    np.testing.assert_allclose(out, x)


def test_all_ones_kernel_on_ones():
    out = conv2d(Tensor(np.ones((1, 1, 4, 4))), Tensor(np.ones((1, 1, 3, 3)))).data
    np.testing.assert_array_equal(out, np.full((1, 1, 2, 2), 9.0))


def test_conv_channel_mismatch_raises():
    with pytest.raises(ValueError):
        conv2d(Tensor(np.ones((1, 2, 4, 4))), Tensor(np.ones((1, 3, 3, 3))))


def test_grouped_conv_channel_divisibility():
    with pytest.raises(ValueError):
        conv2d(Tensor(np.ones((1, 6, 4, 4))), Tensor(np.ones((4, 2, 3, 3))), groups=3)


def test_maxpool_example():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    out = pool2d(Tensor(x, dtype=np.float64), 2, 2, "max").data
    np.testing.assert_array_equal(out[0, 0], [[5, 7], [13, 15]])


def test_avgpool_example():
    x = np.arange(16, dtype=np.float64).reshape(1, 1, 4, 4)
    out = pool2d(Tensor(x, dtype=np.float64), 2, 2, "average").data
    np.testing.assert_array_equal(out[0, 0], [[2.5, 4.5], [10.5, 12.5]])


def test_pool_window_larger_than_input():
    with pytest.raises(ValueError):
        pool2d(Tensor(np.ones((1, 1, 2, 2))), 3)


# -- brute-force equivalence ----------------------------------------------------

def _random_case(seed, groups=1):
    rng = np.random.default_rng(seed)
    cg = int(rng.integers(1, 4))
    fg = int(rng.integers(1, 4))
    c, f = cg * groups, fg * groups
    k = int(rng.choice([1, 2, 3, 5]))
    stride = int(rng.integers(1, 4))
    pad = int(rng.integers(0, 3))
    h = int(rng.integers(max(1, k - 2 * pad), 9))
    w = int(rng.integers(max(1, k - 2 * pad), 9))
    n = int(rng.integers(1, 3))
    x = rng.standard_normal((n, c, h, w))
    wt = rng.standard_normal((f, cg, k, k))
    b = rng.standard_normal(f)
    return x, wt, b, stride, pad


@pytest.mark.parametrize("seed", range(60))
def test_conv2d_matches_loops(seed):
    x, w, b, stride, pad = _random_case(seed)
    got = conv2d(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), Tensor(b, dtype=np.float64),
                 stride=stride, padding=pad).data
    np.testing.assert_allclose(got, naive_conv2d(x, w, b, stride, pad), atol=1e-5)


@pytest.mark.parametrize("seed", range(60))
def test_grouped_conv_matches_loops(seed):
    groups = 1 + seed % 4
    x, w, b, stride, pad = _random_case(1000 + seed, groups)
    got = grouped_conv(Tensor(x, dtype=np.float64), Tensor(w, dtype=np.float64), groups,
                       Tensor(b, dtype=np.float64), stride=stride, padding=pad).data
    np.testing.assert_allclose(got, naive_conv2d(x, w, b, stride, pad, groups), atol=1e-5)


def test_conv2d_float32_matches_loops():
    x, w, b, stride, pad = _random_case(99)
    got = conv2d(Tensor(x.astype(np.float32)), Tensor(w.astype(np.float32)), Tensor(b.astype(np.float32)),
                 stride=stride, padding=pad).data
    assert got.dtype == np.float32
    np.testing.assert_allclose(got, naive_conv2d(x, w, b, stride, pad), atol=1e-4)


@pytest.mark.parametrize("seed", range(20))
@pytest.mark.parametrize("mode", ["max", "average"])
def test_pool_matches_loops(seed, mode):
    rng = np.random.default_rng(seed)
    window = int(rng.integers(1, 4))
    stride = int(rng.integers(1, 4))
    x = rng.standard_normal((2, 2, int(rng.integers(window, 9)), int(rng.integers(window, 9))))
    got = pool2d(Tensor(x, dtype=np.float64), window, stride, mode).data
    np.testing.assert_allclose(got, naive_pool2d(x, window, stride, mode), atol=1e-12)


# -- gradients -------------------------------------------------------------------

@pytest.mark.parametrize("seed", range(4))
def test_conv2d_gradient(seed):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((2, 2, 4, 4))
    w = rng.standard_normal((2, 2, 3, 3))
    b = rng.standard_normal(2)
    stride, pad = 1 + seed % 2, seed % 2
    assert gradcheck(lambda a, k, c: conv2d(a, k, c, stride=stride, padding=pad), [x, w, b]) < 1e-3


def test_grouped_conv_gradient(rng):
    x = rng.standard_normal((1, 4, 4, 4))
    w = rng.standard_normal((4, 2, 3, 3))
    assert gradcheck(lambda a, k: grouped_conv(a, k, groups=2, padding=1), [x, w]) < 1e-3


@pytest.mark.parametrize("mode", ["max", "average"])
def test_pool_gradient(mode, rng):
    x = rng.standard_normal((1, 2, 4, 4))
    assert gradcheck(lambda a: pool2d(a, 2, 2, mode), [x]) < 1e-3


def test_overlapping_maxpool_gradient(rng):
    x = rng.standard_normal((1, 1, 5, 5))
    assert gradcheck(lambda a: pool2d(a, 3, 1, "max"), [x]) < 1e-3
