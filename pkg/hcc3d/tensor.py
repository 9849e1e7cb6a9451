"""Dense tensors with a reverse-mode gradient tape.

A `Tensor` wraps a read-only, C-contiguous numpy array of float32 or float64.
Operations are `Function` subclasses: `Function.apply` runs the forward kernel
and, when any input requires a gradient, records the function on the output so
`backward` can replay the tape in reverse topological order.

Only leaves (tensors created by the user with `requires_grad=True`) keep a
`grad` buffer. Calling `backward` again adds to those buffers until
`zero_grad` is called.
"""

from __future__ import annotations

import math
from typing import TYPE_CHECKING, Any, Literal, Sequence, TypeAlias

import numpy as np

import hcc3d.ctx
import hcc3d.errors

if TYPE_CHECKING:
    import scipy.special as scipy_special

    import hcc3d.rng
else:
    import hcc3d.lazy

    scipy_special = hcc3d.lazy.module("scipy.special")

DType: TypeAlias = Literal["float32", "float64"]
GeluVariant: TypeAlias = Literal["tanh", "erf"]
Axis: TypeAlias = int | tuple[int, ...] | None

_DTYPES: dict[str, type[np.floating]] = {"float32": np.float32, "float64": np.float64}
# sqrt(2 / pi), the tanh-approximation GeLU constant.
_GELU_C = math.sqrt(2.0 / math.pi)
_GELU_CUBIC = 0.044715


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


class Tensor:
    """An immutable n-dimensional array that can take part in the gradient tape."""

    def __init__(
        self, data: Any, *, dtype: DType | None = None, requires_grad: bool = False
    ) -> None:
        if dtype is None:
            dtype = (
                str(data.dtype)  # type: ignore
                if isinstance(data, np.ndarray | Tensor) and str(data.dtype) in _DTYPES
                else "float64"
            )
        elif dtype not in _DTYPES:
            raise hcc3d.errors.ArgumentError(f'Unsupported dtype "{dtype}".')

        if isinstance(data, Tensor):
            data = data.data

        self._data = _freeze(np.array(data, dtype=_DTYPES[dtype], order="C"))
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self._ctx: Function | None = None

    @classmethod
    def _wrap(cls, arr: np.ndarray, *, requires_grad: bool, ctx: Function | None) -> Tensor:
        out = cls.__new__(cls)
        out._data = _freeze(np.require(arr, requirements="C"))
        out.requires_grad = requires_grad
        out.grad = None
        out._ctx = ctx
        return out

    def __repr__(self) -> str:
        grad = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{grad})"

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def shape(self) -> tuple[int, ...]:
        return self._data.shape

    @property
    def dtype(self) -> DType:
        return str(self._data.dtype)  # type: ignore

    @property
    def ndim(self) -> int:
        return self._data.ndim

    @property
    def size(self) -> int:
        return self._data.size

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    @property
    def T(self) -> Tensor:
        return transpose(self)

    def numpy(self) -> np.ndarray:
        """A writable copy of the values."""
        return self._data.copy()

    def item(self) -> float:
        if self.size != 1:
            raise hcc3d.errors.ContractError(f"item needs one element, got shape {self.shape}.")

        return float(self._data.reshape(-1)[0])

    def detach(self) -> Tensor:
        return Tensor._wrap(self._data, requires_grad=False, ctx=None)

    def zero_grad(self) -> None:
        self.grad = None

    def assign(self, value: np.ndarray | Tensor) -> None:
        """Replace the values of a leaf tensor.

        Reserved for optimizer steps and checkpoint loading. Tapes recorded
        before the assignment keep referencing the old values.
        """
        if not self.is_leaf:
            raise hcc3d.errors.ContractError("Only leaf tensors can be assigned.")

        arr = value.data if isinstance(value, Tensor) else np.asarray(value)
        if arr.shape != self.shape:
            raise hcc3d.errors.DimensionError(
                f"Cannot assign shape {arr.shape} to tensor of shape {self.shape}."
            )

        self._data = _freeze(np.array(arr, dtype=self._data.dtype, order="C"))

    def backward(self) -> None:
        backward(self)

    def sum(self, axis: Axis = None, keepdims: bool = False) -> Tensor:
        return sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Axis = None, keepdims: bool = False) -> Tensor:
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: int) -> Tensor:
        return reshape(self, shape)

    def transpose(self, *axes: int) -> Tensor:
        return transpose(self, axes or None)

    def __add__(self, other: Any) -> Tensor:
        return add(self, other)

    def __radd__(self, other: Any) -> Tensor:
        return add(other, self)

    def __sub__(self, other: Any) -> Tensor:
        return sub(self, other)

    def __rsub__(self, other: Any) -> Tensor:
        return sub(other, self)

    def __mul__(self, other: Any) -> Tensor:
        return mul(self, other)

    def __rmul__(self, other: Any) -> Tensor:
        return mul(other, self)

    def __truediv__(self, other: Any) -> Tensor:
        return div(self, other)

    def __rtruediv__(self, other: Any) -> Tensor:
        return div(other, self)

    def __neg__(self) -> Tensor:
        return Neg.apply(self)

    def __pow__(self, exponent: float) -> Tensor:
        return pow(self, exponent)

    def __matmul__(self, other: Tensor) -> Tensor:
        return matmul(self, other)


class Function:
    """One recorded operation.

    Subclasses implement `forward` over numpy arrays and `backward`, which maps
    the output gradient to one gradient per parent (None when a parent needs
    none).
    """

    def __init__(self, *parents: Tensor) -> None:
        self.parents = parents
        self.saved: tuple[Any, ...] = ()

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray | None, ...]:
        raise NotImplementedError

    @classmethod
    def apply(cls, *parents: Tensor, **kwargs: Any) -> Tensor:
        fn = cls(*parents)
        dtype = parents[0]._data.dtype
        out = np.asarray(fn.forward(*(p._data for p in parents), **kwargs))
        if out.dtype != dtype:
            out = out.astype(dtype)

        if not np.isfinite(out).all():
            raise hcc3d.errors.NonFiniteError(
                f"{cls.__name__} produced non-finite values from inputs of shape "
                f"{[p.shape for p in parents]}."
            )

        requires_grad = any(p.requires_grad for p in parents)
        return Tensor._wrap(out, requires_grad=requires_grad, ctx=fn if requires_grad else None)


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum a broadcast gradient back down to `shape`."""
    if grad.shape == shape:
        return grad

    grad = grad.sum(axis=tuple(range(grad.ndim - len(shape)))) if grad.ndim > len(shape) else grad
    keep = tuple(i for i, dim in enumerate(shape) if dim == 1 and grad.shape[i] != 1)
    return grad.sum(axis=keep, keepdims=True) if keep else grad


def _topo_order(root: Tensor) -> list[Tensor]:
    """Tape nodes reachable from root, parents before children."""
    order: list[Tensor] = []
    visited: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue

        if id(node) in visited:
            continue

        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))

    return order


def backward(root: Tensor) -> None:
    """Accumulate d(root)/d(leaf) into the grad of every leaf requiring one."""
    if root.size != 1:
        raise hcc3d.errors.ContractError(
            f"backward needs a scalar root, got a tensor of shape {root.shape}."
        )
    if not root.requires_grad:
        raise hcc3d.errors.ContractError("backward root is not part of a gradient tape.")

    grads: dict[int, np.ndarray] = {id(root): np.ones_like(root._data)}
    for node in reversed(_topo_order(root)):
        grad = grads.pop(id(node), None)
        if grad is None:
            continue

        if node._ctx is None:
            node.grad = grad.copy() if node.grad is None else node.grad + grad
            continue

        for parent, parent_grad in zip(node._ctx.parents, node._ctx.backward(grad)):
            if parent_grad is None or not parent.requires_grad:
                continue

            parent_grad = _unbroadcast(np.asarray(parent_grad), parent.shape)
            key = id(parent)
            grads[key] = parent_grad if key not in grads else grads[key] + parent_grad


###
# Construction helpers
###


def tensor(data: Any, *, dtype: DType | None = None, requires_grad: bool = False) -> Tensor:
    return Tensor(data, dtype=dtype, requires_grad=requires_grad)


def zeros(shape: Sequence[int], *, dtype: DType = "float32", requires_grad: bool = False) -> Tensor:
    return Tensor(np.zeros(tuple(shape)), dtype=dtype, requires_grad=requires_grad)


def ones(shape: Sequence[int], *, dtype: DType = "float32", requires_grad: bool = False) -> Tensor:
    return Tensor(np.ones(tuple(shape)), dtype=dtype, requires_grad=requires_grad)


def full(
    shape: Sequence[int], value: float, *, dtype: DType = "float32", requires_grad: bool = False
) -> Tensor:
    return Tensor(np.full(tuple(shape), value), dtype=dtype, requires_grad=requires_grad)


def rand(
    rng: hcc3d.rng.Rng,
    shape: Sequence[int],
    *,
    low: float = 0.0,
    high: float = 1.0,
    dtype: DType = "float32",
) -> Tensor:
    return Tensor(rng.uniform(shape, low=low, high=high, dtype=dtype), dtype=dtype)


def randn(
    rng: hcc3d.rng.Rng,
    shape: Sequence[int],
    *,
    mean: float = 0.0,
    std: float = 1.0,
    dtype: DType = "float32",
) -> Tensor:
    return Tensor(rng.normal(shape, mean=mean, std=std, dtype=dtype), dtype=dtype)


def _lift(val: Any, like: Tensor) -> Tensor:
    if isinstance(val, Tensor):
        if val.dtype != like.dtype:
            raise hcc3d.errors.ArgumentError(
                f"dtype mismatch: {like.dtype} and {val.dtype} tensors cannot be combined."
            )
        return val

    return Tensor._wrap(np.asarray(val, dtype=like._data.dtype), requires_grad=False, ctx=None)


def _pair(a: Any, b: Any, op: str) -> tuple[Tensor, Tensor]:
    like = a if isinstance(a, Tensor) else b
    a, b = _lift(a, like), _lift(b, like)
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise hcc3d.errors.DimensionError(
            f"{op}: shapes {a.shape} and {b.shape} are not compatible."
        ) from None

    return a, b


###
# Elementwise arithmetic
###


class Add(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a + b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return grad, grad


class Sub(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        return a - b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return grad, -grad


class Mul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved = (a, b)
        return a * b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.saved
        return grad * b, grad * a


class Div(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved = (a, b)
        return a / b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.saved
        return grad / b, -grad * a / (b * b)


class Neg(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        return -a

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        return (-grad,)


class Pow(Function):
    def forward(self, a: np.ndarray, *, exponent: float) -> np.ndarray:
        self.saved = (a, exponent)
        return a**exponent

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        a, exponent = self.saved
        return (grad * exponent * a ** (exponent - 1),)


class Exp(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        out = np.exp(a)
        self.saved = (out,)
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        (out,) = self.saved
        return (grad * out,)


def add(a: Any, b: Any) -> Tensor:
    return Add.apply(*_pair(a, b, "add"))


def sub(a: Any, b: Any) -> Tensor:
    return Sub.apply(*_pair(a, b, "sub"))


def mul(a: Any, b: Any) -> Tensor:
    return Mul.apply(*_pair(a, b, "mul"))


def div(a: Any, b: Any) -> Tensor:
    return Div.apply(*_pair(a, b, "div"))


def pow(a: Tensor, exponent: float) -> Tensor:
    return Pow.apply(a, exponent=float(exponent))


def exp(a: Tensor) -> Tensor:
    return Exp.apply(a)


###
# Linear algebra and shape manipulation
###


class MatMul(Function):
    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        self.saved = (a, b)
        return a @ b

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        a, b = self.saved
        return grad @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ grad


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of 2-D tensors, or a batched product of 3-D tensors."""
    if (
        a.ndim not in (2, 3)
        or a.ndim != b.ndim
        or a.shape[-1] != b.shape[-2]
        or a.shape[:-2] != b.shape[:-2]
    ):
        raise hcc3d.errors.DimensionError(
            f"matmul: shapes {a.shape} and {b.shape} are not compatible."
        )
    if a.dtype != b.dtype:
        raise hcc3d.errors.ArgumentError(f"matmul: dtypes {a.dtype} and {b.dtype} differ.")

    return MatMul.apply(a, b)


class Transpose(Function):
    def forward(self, a: np.ndarray, *, axes: tuple[int, ...]) -> np.ndarray:
        self.saved = (axes,)
        return np.transpose(a, axes)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        (axes,) = self.saved
        return (np.transpose(grad, np.argsort(axes)),)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    """Permute axes. Without axes, reverses them."""
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    if sorted(axes) != list(range(a.ndim)):
        raise hcc3d.errors.DimensionError(f"transpose: invalid axes {axes} for shape {a.shape}.")

    return Transpose.apply(a, axes=axes)


class Reshape(Function):
    def forward(self, a: np.ndarray, *, shape: tuple[int, ...]) -> np.ndarray:
        self.saved = (a.shape,)
        return a.reshape(shape)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        (shape,) = self.saved
        return (grad.reshape(shape),)


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], tuple | list):
        shape = tuple(shape[0])  # type: ignore
    shape = tuple(shape)
    try:
        np.empty(a.shape, dtype=np.int8).reshape(shape)
    except ValueError:
        raise hcc3d.errors.DimensionError(
            f"reshape: cannot reshape {a.shape} into {shape}."
        ) from None

    return Reshape.apply(a, shape=shape)


class Concat(Function):
    def forward(self, *arrays: np.ndarray, axis: int) -> np.ndarray:
        self.saved = (axis, np.cumsum([arr.shape[axis] for arr in arrays])[:-1])
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray, ...]:
        axis, splits = self.saved
        return tuple(np.split(grad, splits, axis=axis))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    if not tensors:
        raise hcc3d.errors.ArgumentError("concat needs at least one tensor.")

    first = tensors[0]
    axis = axis % first.ndim
    for other in tensors[1:]:
        if other.ndim != first.ndim or any(
            other.shape[i] != first.shape[i] for i in range(first.ndim) if i != axis
        ):
            raise hcc3d.errors.DimensionError(
                f"concat: shapes {first.shape} and {other.shape} differ off axis {axis}."
            )
        if other.dtype != first.dtype:
            raise hcc3d.errors.ArgumentError(
                f"concat: dtypes {first.dtype} and {other.dtype} differ."
            )

    return Concat.apply(*tensors, axis=axis)


class TakeRows(Function):
    def forward(self, a: np.ndarray, *, indices: np.ndarray) -> np.ndarray:
        self.saved = (a.shape, indices)
        return a[indices]

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        shape, indices = self.saved
        out = np.zeros(shape, dtype=grad.dtype)
        np.add.at(out, indices, grad)
        return (out,)


def take_rows(a: Tensor, indices: Sequence[int]) -> Tensor:
    """Gather rows along the first axis. Gradients scatter back to the gathered rows."""
    idx = np.asarray(indices, dtype=np.int64)
    if idx.ndim != 1 or (idx.size and (idx.min() < 0 or idx.max() >= a.shape[0])):
        raise hcc3d.errors.ArgumentError(
            f"take_rows: indices out of range for {a.shape[0]} rows."
        )

    return TakeRows.apply(a, indices=idx)


###
# Reductions
###


def _normalize_axis(axis: Axis, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))

    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    try:
        return tuple(sorted(ax % ndim if ndim else ax for ax in axes))
    except ZeroDivisionError:
        raise hcc3d.errors.DimensionError("Cannot reduce a 0-d tensor along an axis.") from None


class Sum(Function):
    def forward(self, a: np.ndarray, *, axis: tuple[int, ...], keepdims: bool) -> np.ndarray:
        self.saved = (a.shape, axis, keepdims)
        if a.dtype == np.float32 and hcc3d.ctx.get().accumulate_f64:
            return np.sum(a, axis=axis, keepdims=keepdims, dtype=np.float64).astype(np.float32)

        return np.sum(a, axis=axis, keepdims=keepdims)

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        shape, axis, keepdims = self.saved
        if not keepdims:
            grad = np.expand_dims(grad, axis)

        return (np.broadcast_to(grad, shape),)


def sum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    if any(ax >= a.ndim for ax in axes):
        raise hcc3d.errors.DimensionError(f"sum: axis {axis} invalid for shape {a.shape}.")

    return Sum.apply(a, axis=axes, keepdims=keepdims)


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
    axes = _normalize_axis(axis, a.ndim)
    count = math.prod(a.shape[ax] for ax in axes)
    if count == 0:
        raise hcc3d.errors.DimensionError(f"mean: empty reduction over shape {a.shape}.")

    return sum(a, axis=axes, keepdims=keepdims) * (1.0 / count)


###
# Nonlinearities
###


def _check_axis(a: Tensor, axis: int, op: str) -> int:
    if not -a.ndim <= axis < a.ndim:
        raise hcc3d.errors.DimensionError(f"{op}: axis {axis} invalid for shape {a.shape}.")
    if a.shape[axis] == 0:
        raise hcc3d.errors.DimensionError(f"{op}: axis {axis} of shape {a.shape} is empty.")

    return axis % a.ndim


class Softmax(Function):
    def forward(self, a: np.ndarray, *, axis: int) -> np.ndarray:
        shifted = np.exp(a - a.max(axis=axis, keepdims=True))
        out = shifted / shifted.sum(axis=axis, keepdims=True)
        self.saved = (out, axis)
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        out, axis = self.saved
        return (out * (grad - (grad * out).sum(axis=axis, keepdims=True)),)


class LogSoftmax(Function):
    def forward(self, a: np.ndarray, *, axis: int) -> np.ndarray:
        shifted = a - a.max(axis=axis, keepdims=True)
        out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
        self.saved = (out, axis)
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        out, axis = self.saved
        return (grad - np.exp(out) * grad.sum(axis=axis, keepdims=True),)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax with max-subtraction, so large inputs cannot overflow."""
    return Softmax.apply(a, axis=_check_axis(a, axis, "softmax"))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    return LogSoftmax.apply(a, axis=_check_axis(a, axis, "log_softmax"))


def _sigmoid(a: np.ndarray) -> np.ndarray:
    out = np.empty_like(a)
    pos = a >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-a[pos]))
    # exp of a negative argument only underflows, never overflows.
    ea = np.exp(a[~pos])
    out[~pos] = ea / (1.0 + ea)
    return out


class Sigmoid(Function):
    def forward(self, a: np.ndarray) -> np.ndarray:
        out = _sigmoid(a)
        self.saved = (out,)
        return out

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        (out,) = self.saved
        return (grad * out * (1.0 - out),)


def sigmoid(a: Tensor) -> Tensor:
    return Sigmoid.apply(a)


class Gelu(Function):
    def forward(self, a: np.ndarray, *, variant: GeluVariant) -> np.ndarray:
        if variant == "tanh":
            t = np.tanh(_GELU_C * (a + _GELU_CUBIC * a**3))
            self.saved = (a, variant, t)
            return 0.5 * a * (1.0 + t)
        else:
            cdf = 0.5 * (1.0 + scipy_special.erf(a / math.sqrt(2.0)))
            self.saved = (a, variant, cdf)
            return a * cdf

    def backward(self, grad: np.ndarray) -> tuple[np.ndarray]:
        a, variant, aux = self.saved
        if variant == "tanh":
            t = aux
            inner = _GELU_C * (1.0 + 3.0 * _GELU_CUBIC * a**2)
            return (grad * (0.5 * (1.0 + t) + 0.5 * a * (1.0 - t * t) * inner),)
        else:
            pdf = np.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
            return (grad * (aux + a * pdf),)


def gelu(a: Tensor, variant: GeluVariant = "tanh") -> Tensor:
    """GeLU.

    The default tanh form is `0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))`;
    `variant="erf"` computes the exact `x Phi(x)` and needs scipy.
    """
    if variant not in ("tanh", "erf"):
        raise hcc3d.errors.ArgumentError(f'Unknown GeLU variant "{variant}".')

    return Gelu.apply(a, variant=variant)


###
# Selection
###


def topk(scores: Tensor, k: int) -> tuple[list[int], Tensor]:
    """Indices of the k largest scores, in ascending index order.

    Ties go to the lower index. Selection is not differentiable; the returned
    values are detached.
    """
    if scores.ndim != 1:
        raise hcc3d.errors.DimensionError(f"topk expects a vector, got shape {scores.shape}.")

    m = scores.shape[0]
    if not 1 <= k <= m:
        raise hcc3d.errors.ArgumentError(f"topk: k={k} must be within [1, {m}].")
    if np.isnan(scores.data).any():
        raise hcc3d.errors.InputError("topk: scores contain NaN.")

    # A stable sort of the negated scores keeps equal scores in index order.
    order = np.argsort(-scores.data, kind="stable")[:k]
    indices = sorted(int(i) for i in order)
    return indices, Tensor(scores.data[indices], dtype=scores.dtype)
