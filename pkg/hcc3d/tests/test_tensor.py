import numpy as np
import pytest

import hcc3d.ctx
import hcc3d.errors
import hcc3d.rng
import hcc3d.tensor
from hcc3d.tensor import Tensor


def _numeric_grad(fn, arr, eps=1e-6):
    grad = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        plus, minus = arr.copy(), arr.copy()
        plus[idx] += eps
        minus[idx] -= eps
        grad[idx] = (fn(Tensor(plus)).item() - fn(Tensor(minus)).item()) / (2 * eps)

    return grad


@pytest.mark.parametrize(
    "op",
    [
        lambda t: t * t,
        lambda t: t / (t * t + 1.0),
        lambda t: 1.0 - t,
        lambda t: -t,
        lambda t: hcc3d.tensor.exp(t),
        lambda t: (t * t + 1.0) ** -0.5,
        lambda t: hcc3d.tensor.softmax(t, axis=-1),
        lambda t: hcc3d.tensor.softmax(t, axis=0),
        lambda t: hcc3d.tensor.log_softmax(t),
        lambda t: hcc3d.tensor.sigmoid(t),
        lambda t: hcc3d.tensor.gelu(t),
        lambda t: t @ t.T,
        lambda t: t.reshape(3, 2, 2) @ t.reshape(3, 2, 2).transpose(0, 2, 1),
        lambda t: t.reshape(2, 6),
        lambda t: t.transpose(1, 0),
        lambda t: hcc3d.tensor.concat([t, t * 2.0], axis=1),
        lambda t: hcc3d.tensor.concat([t, t], axis=0),
        lambda t: t.mean(axis=1, keepdims=True) - t,
        lambda t: t.sum(axis=0),
        lambda t: hcc3d.tensor.take_rows(t, [2, 0, 2]),
    ],
)
def test_grads_match_finite_differences(op):
    rng = hcc3d.rng.Rng(3)
    arr = rng.normal((3, 4))
    weights = rng.spawn(1).normal(op(Tensor(arr)).shape)

    def loss(t):
        return (op(t) * weights).sum()

    t = Tensor(arr, requires_grad=True)
    hcc3d.tensor.backward(loss(t))
    np.testing.assert_allclose(t.grad, _numeric_grad(loss, arr), rtol=1e-5, atol=1e-7)


def test_read_only():
    t = hcc3d.tensor.tensor([1.0, 2.0])
    with pytest.raises(ValueError):
        t.data[0] = 5.0

    arr = t.numpy()
    arr[0] = 5.0
    assert t.data[0] == 1.0


def test_broadcast_grads():
    a = Tensor(np.arange(6.0).reshape(2, 3), requires_grad=True)
    b = Tensor(np.array([1.0, 2.0, 3.0]), requires_grad=True)
    (a * b).sum().backward()

    np.testing.assert_array_equal(b.grad, [3.0, 5.0, 7.0])
    np.testing.assert_array_equal(a.grad, [[1.0, 2.0, 3.0], [1.0, 2.0, 3.0]])


def test_grads_accumulate_until_zeroed():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    (x * x).sum().backward()
    (x * x).sum().backward()
    np.testing.assert_array_equal(x.grad, [4.0, 8.0])

    x.zero_grad()
    assert x.grad is None


def test_grads_only_on_leaves():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    y = x * 3.0
    (y * y).sum().backward()
    assert y.grad is None
    np.testing.assert_array_equal(x.grad, [18.0, 36.0])


def test_backward_contract():
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    with pytest.raises(hcc3d.errors.ContractError, match="scalar root"):
        (x * 2.0).backward()

    with pytest.raises(hcc3d.errors.ContractError, match="not part of a gradient tape"):
        hcc3d.tensor.tensor([1.0]).sum().backward()


def test_dtype_and_shape_errors():
    a = hcc3d.tensor.zeros((2, 3), dtype="float32")
    b = hcc3d.tensor.zeros((2, 3), dtype="float64")
    with pytest.raises(hcc3d.errors.ArgumentError, match="dtype mismatch"):
        a + b

    with pytest.raises(hcc3d.errors.DimensionError):
        a + hcc3d.tensor.zeros((4,), dtype="float32")

    with pytest.raises(hcc3d.errors.DimensionError):
        a.reshape(4, 2)

    with pytest.raises(hcc3d.errors.ArgumentError, match="Unsupported dtype"):
        Tensor([1.0], dtype="int8")  # type: ignore


def test_non_finite_outputs():
    with pytest.raises(hcc3d.errors.NonFiniteError):
        hcc3d.tensor.tensor([1.0]) / hcc3d.tensor.tensor([0.0])


def test_assign():
    x = Tensor(np.zeros(3), requires_grad=True)
    x.assign(np.ones(3))
    np.testing.assert_array_equal(x.data, np.ones(3))
    assert not x.data.flags.writeable

    with pytest.raises(hcc3d.errors.DimensionError):
        x.assign(np.ones(4))

    with pytest.raises(hcc3d.errors.ContractError):
        (x * 2.0).assign(np.ones(3))


def test_item():
    assert hcc3d.tensor.tensor([[2.5]]).item() == 2.5
    with pytest.raises(hcc3d.errors.ContractError):
        hcc3d.tensor.tensor([1.0, 2.0]).item()


def test_softmax_is_stable():
    out = hcc3d.tensor.softmax(hcc3d.tensor.tensor([1000.0, 1000.0, -1000.0]))
    np.testing.assert_allclose(out.data, [0.5, 0.5, 0.0])

    log = hcc3d.tensor.log_softmax(hcc3d.tensor.tensor([1000.0, 0.0]))
    np.testing.assert_allclose(log.data, [0.0, -1000.0])

    with pytest.raises(hcc3d.errors.DimensionError, match="empty"):
        hcc3d.tensor.softmax(Tensor(np.zeros((2, 0))), axis=-1)


def test_sigmoid_extremes():
    out = hcc3d.tensor.sigmoid(hcc3d.tensor.tensor([-1000.0, 0.0, 1000.0]))
    np.testing.assert_array_equal(out.data, [0.0, 0.5, 1.0])


def test_gelu_variants():
    x = hcc3d.tensor.tensor(np.linspace(-4, 4, 17))
    approx = hcc3d.tensor.gelu(x)
    assert approx.data[8] == 0.0
    np.testing.assert_allclose(approx.data[-1], 4.0, atol=1e-3)

    pytest.importorskip("scipy")
    exact = hcc3d.tensor.gelu(x, "erf")
    np.testing.assert_allclose(exact.data, approx.data, atol=1e-3)

    with pytest.raises(hcc3d.errors.ArgumentError):
        hcc3d.tensor.gelu(x, "relu")  # type: ignore


@pytest.mark.parametrize(
    "scores, k, expected",
    [
        ([0.1, 0.9, 0.5, 0.9], 2, [1, 3]),
        ([0.1, 0.9, 0.5, 0.9], 3, [1, 2, 3]),
        ([1.0, 1.0, 1.0, 1.0], 2, [0, 1]),
        ([0.3, 0.2, 0.3, 0.2], 3, [0, 1, 2]),
        ([5.0], 1, [0]),
    ],
)
def test_topk(scores, k, expected):
    selected, values = hcc3d.tensor.topk(hcc3d.tensor.tensor(scores), k)
    assert selected == expected
    np.testing.assert_array_equal(values.data, np.asarray(scores)[expected])
    assert not values.requires_grad


@pytest.mark.parametrize("k", [0, 5])
def test_topk_k_out_of_range(k):
    with pytest.raises(hcc3d.errors.ArgumentError):
        hcc3d.tensor.topk(hcc3d.tensor.tensor([1.0, 2.0, 3.0, 4.0]), k)


def test_topk_nan():
    with pytest.raises(hcc3d.errors.InputError, match="NaN"):
        hcc3d.tensor.topk(hcc3d.tensor.tensor([1.0, float("nan")]), 1)


def test_topk_matches_sort_oracle():
    rng = hcc3d.rng.Rng(11)
    for trial in range(1000):
        trial_rng = rng.spawn(trial)
        m = int(trial_rng.integers(1, 514))
        k = int(trial_rng.integers(1, min(m, 96) + 1))
        if trial % 2:
            # Few distinct values force many ties.
            scores = trial_rng.integers(0, 4, size=m).astype(np.float64)
        else:
            scores = trial_rng.uniform((m,))

        expected = sorted(sorted(range(m), key=lambda i: (-scores[i], i))[:k])
        selected, _ = hcc3d.tensor.topk(Tensor(scores), k)
        assert selected == expected


def test_take_rows_scatters_repeats():
    x = Tensor(np.ones((3, 2)), requires_grad=True)
    hcc3d.tensor.take_rows(x, [0, 0, 2]).sum().backward()
    np.testing.assert_array_equal(x.grad, [[2.0, 2.0], [0.0, 0.0], [1.0, 1.0]])

    with pytest.raises(hcc3d.errors.ArgumentError):
        hcc3d.tensor.take_rows(x, [3])


def test_accumulate_f64():
    vals = np.full(100_001, 0.1, dtype=np.float32)
    with hcc3d.ctx.set_vars(accumulate_f64=True):
        wide = Tensor(vals).sum()

    assert wide.dtype == "float32"
    assert wide.item() == pytest.approx(10000.1, rel=1e-6)


def test_random_constructors():
    a = hcc3d.tensor.randn(hcc3d.rng.Rng(1), (4, 3), dtype="float64")
    b = hcc3d.tensor.randn(hcc3d.rng.Rng(1), (4, 3), dtype="float64")
    np.testing.assert_array_equal(a.data, b.data)

    u = hcc3d.tensor.rand(hcc3d.rng.Rng(1), (1000,), low=-2.0, high=-1.0)
    assert u.dtype == "float32"
    assert (u.data >= -2.0).all() and (u.data < -1.0).all()


def test_full_reductions_are_0d():
    x = Tensor([1.0, 2.0, 3.0], requires_grad=True)
    total = x.sum()
    assert total.shape == ()
    assert x.mean().shape == ()

    total.backward()
    np.testing.assert_array_equal(x.grad, [1.0, 1.0, 1.0])

    y = Tensor(np.ones((2, 3)), requires_grad=True)
    (y.sum(axis=1).sum() * 2.0).backward()
    np.testing.assert_array_equal(y.grad, np.full((2, 3), 2.0))
