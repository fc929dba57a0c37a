# Licensed under the Apache License, Version 2.0 (the "License");
# you may not use this file except in compliance with the License.
# You may obtain a copy of the License at
#
#     http://www.apache.org/licenses/LICENSE-2.0
#
# Unless required by applicable law or agreed to in writing, software
# distributed under the License is distributed on an "AS IS" BASIS,
# WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
# See the License for the specific language governing permissions and
# limitations under the License.

"""
Differentiable primitives over Tensor.

Elementwise operations follow numpy broadcasting; their backward rules sum
the incoming gradient back down to each input's shape.
"""

from __future__ import print_function, division, absolute_import

import numpy as np

from .errors import DimensionError, DegenerateInputError, NumericError
from .tensor import Function, Tensor, as_tensor, DTYPE

# large negative logit used for masked attention scores; exp() of it
# underflows to exactly zero after max-subtraction
MASKED_LOGIT = -1e30

_GELU_SCALE = np.sqrt(2.0 / np.pi)
_GELU_CUBIC = 0.044715


def unbroadcast(grad, shape):
    """Sum `grad` over the axes that broadcasting added or stretched"""
    if grad.shape == tuple(shape):
        return grad
    n_extra = grad.ndim - len(shape)
    if n_extra > 0:
        grad = grad.sum(axis=tuple(range(n_extra)))
    stretched = tuple(
        i for i, dim in enumerate(shape)
        if dim == 1 and grad.shape[i] != 1)
    if stretched:
        grad = grad.sum(axis=stretched, keepdims=True)
    return grad


def _normalize_axis(axis, ndim):
    if axis < -ndim or axis >= ndim:
        raise DimensionError(
            "Axis %d is out of range for a tensor with %d dimensions" % (
                axis, ndim))
    return axis % ndim


def _broadcast_shape(name, a_shape, b_shape):
    try:
        return np.broadcast_shapes(a_shape, b_shape)
    except ValueError:
        raise DimensionError(
            "Cannot broadcast shapes %s and %s in %s" % (
                a_shape, b_shape, name))


class Add(Function):
    def forward(self, a, b):
        _broadcast_shape("add", a.shape, b.shape)
        self.shapes = (a.shape, b.shape)
        return a + b

    def backward(self, grad_output):
        a_shape, b_shape = self.shapes
        return unbroadcast(grad_output, a_shape), unbroadcast(grad_output, b_shape)


class Sub(Function):
    def forward(self, a, b):
        _broadcast_shape("sub", a.shape, b.shape)
        self.shapes = (a.shape, b.shape)
        return a - b

    def backward(self, grad_output):
        a_shape, b_shape = self.shapes
        return unbroadcast(grad_output, a_shape), unbroadcast(-grad_output, b_shape)


class Mul(Function):
    def forward(self, a, b):
        _broadcast_shape("mul", a.shape, b.shape)
        self.a, self.b = a, b
        return a * b

    def backward(self, grad_output):
        return (
            unbroadcast(grad_output * self.b, self.a.shape),
            unbroadcast(grad_output * self.a, self.b.shape))


class Div(Function):
    def forward(self, a, b):
        _broadcast_shape("div", a.shape, b.shape)
        self.a, self.b = a, b
        return a / b

    def backward(self, grad_output):
        return (
            unbroadcast(grad_output / self.b, self.a.shape),
            unbroadcast(-grad_output * self.a / (self.b ** 2), self.b.shape))


class Neg(Function):
    def forward(self, x):
        return -x

    def backward(self, grad_output):
        return (-grad_output,)


class Power(Function):
    def __init__(self, exponent):
        self.exponent = float(exponent)

    def forward(self, x):
        self.x = x
        return x ** self.exponent

    def backward(self, grad_output):
        p = self.exponent
        return (grad_output * p * self.x ** (p - 1.0),)


class Exp(Function):
    def forward(self, x):
        self.y = np.exp(x)
        return self.y

    def backward(self, grad_output):
        return (grad_output * self.y,)


class Log(Function):
    def forward(self, x):
        self.x = x
        return np.log(x)

    def backward(self, grad_output):
        return (grad_output / self.x,)


class Sqrt(Function):
    def forward(self, x):
        self.y = np.sqrt(x)
        return self.y

    def backward(self, grad_output):
        return (grad_output * 0.5 / self.y,)


class Relu(Function):
    def forward(self, x):
        self.positive = x > 0
        return np.where(self.positive, x, 0.0)

    def backward(self, grad_output):
        return (np.where(self.positive, grad_output, 0.0),)


class Gelu(Function):
    """tanh approximation of the Gaussian error linear unit"""
    def forward(self, x):
        self.x = x
        inner = _GELU_SCALE * (x + _GELU_CUBIC * x ** 3)
        self.t = np.tanh(inner)
        return 0.5 * x * (1.0 + self.t)

    def backward(self, grad_output):
        x, t = self.x, self.t
        d_inner = _GELU_SCALE * (1.0 + 3.0 * _GELU_CUBIC * x ** 2)
        derivative = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t ** 2) * d_inner
        return (grad_output * derivative,)


class Softplus(Function):
    def forward(self, x):
        self.x = x
        return np.logaddexp(0.0, x)

    def backward(self, grad_output):
        sigmoid = np.exp(-np.logaddexp(0.0, -self.x))
        return (grad_output * sigmoid,)


class Floor(Function):
    """max(x, floor) for a constant floor; zero slope below the floor"""
    def __init__(self, floor):
        self.floor = float(floor)

    def forward(self, x):
        self.above = x > self.floor
        return np.where(self.above, x, self.floor)

    def backward(self, grad_output):
        return (np.where(self.above, grad_output, 0.0),)


class MatMul(Function):
    def forward(self, a, b):
        if a.ndim < 2 or b.ndim < 2:
            raise DimensionError(
                "matmul needs operands with at least 2 dimensions, got %s and %s" % (
                    a.shape, b.shape))
        if a.shape[-1] != b.shape[-2]:
            raise DimensionError(
                "matmul inner dimensions disagree: %s x %s" % (a.shape, b.shape))
        try:
            np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
        except ValueError:
            raise DimensionError(
                "matmul batch dimensions are not broadcastable: %s x %s" % (
                    a.shape, b.shape))
        self.a, self.b = a, b
        return np.matmul(a, b)

    def backward(self, grad_output):
        a, b = self.a, self.b
        grad_a = np.matmul(grad_output, np.swapaxes(b, -1, -2))
        grad_b = np.matmul(np.swapaxes(a, -1, -2), grad_output)
        return unbroadcast(grad_a, a.shape), unbroadcast(grad_b, b.shape)


class Sum(Function):
    def __init__(self, axis=None, keepdims=False):
        self.axis = axis
        self.keepdims = keepdims

    def forward(self, x):
        self.shape = x.shape
        if self.axis is not None:
            axes = self.axis if isinstance(self.axis, tuple) else (self.axis,)
            self.axes = tuple(_normalize_axis(a, x.ndim) for a in axes)
        return np.sum(x, axis=self.axis, keepdims=self.keepdims)

    def backward(self, grad_output):
        if self.axis is not None and not self.keepdims:
            grad_output = np.expand_dims(grad_output, self.axes)
        return (np.broadcast_to(grad_output, self.shape).copy(),)


class MaskedMean(Function):
    def __init__(self, axis=None, mask=None):
        self.axis = axis
        self.mask = mask

    def forward(self, x):
        if self.mask is None:
            weights = np.ones(x.shape, dtype=DTYPE)
        else:
            mask = np.asarray(self.mask, dtype=bool)
            try:
                mask = np.broadcast_to(mask, x.shape)
            except ValueError:
                raise DimensionError(
                    "Mask of shape %s does not fit tensor of shape %s" % (
                        np.shape(self.mask), x.shape))
            weights = mask.astype(DTYPE)
            x = np.where(mask, x, 0.0)
        if self.axis is not None:
            _normalize_axis(self.axis, x.ndim)
        counts = weights.sum(axis=self.axis, keepdims=True)
        if np.any(counts == 0):
            raise DegenerateInputError(
                "Masked mean over axis %s has a slice with no unmasked entries" % (
                    self.axis,))
        self.scale = weights / counts
        self.shape = x.shape
        total = np.sum(x * weights, axis=self.axis, keepdims=True)
        out = total / counts
        if self.axis is None:
            return out.reshape(())
        return np.squeeze(out, axis=self.axis)

    def backward(self, grad_output):
        if self.axis is None:
            grad_output = np.reshape(grad_output, (1,) * len(self.shape))
        else:
            grad_output = np.expand_dims(grad_output, self.axis)
        return (grad_output * self.scale,)


class Reshape(Function):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        self.input_shape = x.shape
        try:
            return np.reshape(x, self.shape)
        except ValueError:
            raise DimensionError(
                "Cannot reshape %s into %s" % (x.shape, self.shape))

    def backward(self, grad_output):
        return (np.reshape(grad_output, self.input_shape),)


class Transpose(Function):
    def __init__(self, axes=None):
        self.axes = axes

    def forward(self, x):
        axes = self.axes
        if axes is None:
            axes = tuple(reversed(range(x.ndim)))
        if sorted(_normalize_axis(a, x.ndim) for a in axes) != list(range(x.ndim)):
            raise DimensionError(
                "Invalid permutation %s for tensor of shape %s" % (axes, x.shape))
        self.axes = tuple(_normalize_axis(a, x.ndim) for a in axes)
        return np.transpose(x, self.axes)

    def backward(self, grad_output):
        return (np.transpose(grad_output, np.argsort(self.axes)),)


class BroadcastTo(Function):
    def __init__(self, shape):
        self.shape = tuple(shape)

    def forward(self, x):
        self.input_shape = x.shape
        try:
            return np.broadcast_to(x, self.shape).copy()
        except ValueError:
            raise DimensionError(
                "Cannot broadcast %s to %s" % (x.shape, self.shape))

    def backward(self, grad_output):
        return (unbroadcast(grad_output, self.input_shape),)


class GetItem(Function):
    def __init__(self, index):
        self.index = index

    def forward(self, x):
        self.shape = x.shape
        try:
            return np.array(x[self.index])
        except IndexError as e:
            raise DimensionError(
                "Invalid index for tensor of shape %s: %s" % (x.shape, e))

    def backward(self, grad_output):
        grad = np.zeros(self.shape, dtype=DTYPE)
        np.add.at(grad, self.index, grad_output)
        return (grad,)


class Concat(Function):
    def __init__(self, axis=0):
        self.axis = axis

    def forward(self, *arrays):
        if not arrays:
            raise DimensionError("concat needs at least one tensor")
        axis = _normalize_axis(self.axis, arrays[0].ndim)
        for array in arrays[1:]:
            if array.ndim != arrays[0].ndim or any(
                    array.shape[i] != arrays[0].shape[i]
                    for i in range(array.ndim) if i != axis):
                raise DimensionError(
                    "concat shapes disagree off axis %d: %s vs %s" % (
                        axis, arrays[0].shape, array.shape))
        self.axis = axis
        self.sizes = [array.shape[axis] for array in arrays]
        return np.concatenate(arrays, axis=axis)

    def backward(self, grad_output):
        splits = np.cumsum(self.sizes)[:-1]
        return tuple(np.split(grad_output, splits, axis=self.axis))


class MaskedFill(Function):
    """Replace entries where a constant boolean mask is true by `value`"""
    def __init__(self, mask, value):
        self.mask = np.asarray(mask, dtype=bool)
        self.value = float(value)

    def forward(self, x):
        _broadcast_shape("masked_fill", x.shape, self.mask.shape)
        self.shape = x.shape
        return np.where(self.mask, self.value, x)

    def backward(self, grad_output):
        return (unbroadcast(np.where(self.mask, 0.0, grad_output), self.shape),)


class Softmax(Function):
    def __init__(self, axis=-1):
        self.axis = axis

    def forward(self, x):
        if np.isnan(x).any():
            raise NumericError("softmax received NaN input")
        _normalize_axis(self.axis, x.ndim)
        shifted = x - np.max(x, axis=self.axis, keepdims=True)
        e = np.exp(shifted)
        self.y = e / np.sum(e, axis=self.axis, keepdims=True)
        return self.y

    def backward(self, grad_output):
        y = self.y
        inner = np.sum(grad_output * y, axis=self.axis, keepdims=True)
        return (y * (grad_output - inner),)


class LayerNorm(Function):
    def __init__(self, eps=1e-5):
        if not eps > 0:
            raise DimensionError("layer_norm eps must be positive, got %s" % eps)
        self.eps = eps

    def forward(self, x, gain, bias):
        if x.ndim == 0 or x.shape[-1] == 0:
            raise DimensionError(
                "layer_norm needs a non-empty feature axis, got shape %s" % (x.shape,))
        if gain.shape != (x.shape[-1],) or bias.shape != (x.shape[-1],):
            raise DimensionError(
                "layer_norm gain %s / bias %s do not match features of %s" % (
                    gain.shape, bias.shape, x.shape))
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        self.inv_std = 1.0 / np.sqrt(var + self.eps)
        self.x_hat = (x - mu) * self.inv_std
        self.gain = gain
        return self.x_hat * gain + bias

    def backward(self, grad_output):
        x_hat = self.x_hat
        n = x_hat.shape[-1]
        d_hat = grad_output * self.gain
        grad_x = self.inv_std / n * (
            n * d_hat
            - d_hat.sum(axis=-1, keepdims=True)
            - x_hat * (d_hat * x_hat).sum(axis=-1, keepdims=True))
        lead = tuple(range(grad_output.ndim - 1))
        grad_gain = (grad_output * x_hat).sum(axis=lead)
        grad_bias = grad_output.sum(axis=lead)
        return grad_x, grad_gain, grad_bias


class CumSum(Function):
    def __init__(self, axis=0):
        self.axis = axis

    def forward(self, x):
        self.axis = _normalize_axis(self.axis, x.ndim)
        return np.cumsum(x, axis=self.axis)

    def backward(self, grad_output):
        reversed_grad = np.flip(grad_output, axis=self.axis)
        return (np.flip(np.cumsum(reversed_grad, axis=self.axis), axis=self.axis),)


def add(a, b):
    return Add.apply(a, b)


def sub(a, b):
    return Sub.apply(a, b)


def mul(a, b):
    return Mul.apply(a, b)


def div(a, b):
    return Div.apply(a, b)


def neg(x):
    return Neg.apply(x)


def power(x, exponent):
    return Power.apply(x, exponent=exponent)


def exp(x):
    return Exp.apply(x)


def log(x):
    return Log.apply(x)


def sqrt(x):
    return Sqrt.apply(x)


def relu(x):
    return Relu.apply(x)


def gelu(x):
    return Gelu.apply(x)


def softplus(x):
    return Softplus.apply(x)


def floor_at(x, floor):
    return Floor.apply(x, floor=floor)


def matmul(a, b):
    """Batched matrix product, a[..., m, k] x b[..., k, n] -> [..., m, n]"""
    return MatMul.apply(a, b)


def sum(x, axis=None, keepdims=False):  # pylint: disable=redefined-builtin
    if isinstance(axis, list):
        axis = tuple(axis)
    return Sum.apply(x, axis=axis, keepdims=keepdims)


def mean(x, axis=None, mask=None):
    """
    Mean over `axis`, skipping entries where `mask` is False.

    Masked entries contribute to neither the numerator nor the count, so
    their values are never read. A slice with no unmasked entries raises
    DegenerateInputError.
    """
    if isinstance(mask, Tensor):
        mask = mask.data.astype(bool)
    return MaskedMean.apply(x, axis=axis, mask=mask)


def reshape(x, shape):
    return Reshape.apply(x, shape=shape)


def transpose(x, axes=None):
    return Transpose.apply(x, axes=axes)


def swapaxes(x, axis1, axis2):
    axes = list(range(as_tensor(x).ndim))
    axes[axis1], axes[axis2] = axes[axis2], axes[axis1]
    return transpose(x, tuple(axes))


def broadcast_to(x, shape):
    return BroadcastTo.apply(x, shape=shape)


def getitem(x, index):
    return GetItem.apply(x, index=index)


def gather_mask(x, mask):
    """Rows of `x` selected by a boolean mask over its leading axes"""
    return GetItem.apply(x, index=np.asarray(mask, dtype=bool))


def concat(tensors, axis=0):
    return Concat.apply(*tensors, axis=axis)


def stack(tensors, axis=0):
    expanded = []
    for t in tensors:
        t = as_tensor(t)
        ax = axis if axis >= 0 else t.ndim + 1 + axis
        shape = t.shape[:ax] + (1,) + t.shape[ax:]
        expanded.append(reshape(t, shape))
    return concat(expanded, axis=axis)


def masked_fill(x, mask, value):
    return MaskedFill.apply(x, mask=mask, value=value)


def softmax(x, axis=-1):
    """Numerically stable softmax (max-subtracted) along `axis`"""
    return Softmax.apply(x, axis=axis)


def layer_norm(x, gain, bias, eps=1e-5):
    """Normalize over the last axis, then scale by `gain` and shift by `bias`"""
    return LayerNorm.apply(x, gain, bias, eps=eps)


def cumsum(x, axis=0):
    return CumSum.apply(x, axis=axis)


def linear(x, weight, bias=None):
    out = matmul(x, weight)
    if bias is not None:
        out = add(out, bias)
    return out
