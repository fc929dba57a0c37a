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
Dense float64 tensors with define-by-run reverse-mode differentiation.

Operations only record themselves while a ComputationTape is active on
the current thread. Outside of a tape they compute values and nothing
else, which is what inference and finite-difference checks want.
"""

from __future__ import print_function, division, absolute_import

import logging
import os
import threading

import numpy as np

from .errors import NumericError, UsageError

logger = logging.getLogger(__name__)

DTYPE = np.float64

_thread_state = threading.local()

_debug_checks = os.environ.get("INTENTFORMER_DEBUG", "") not in ("", "0")


def set_debug_checks(enabled):
    """Turn per-operation NaN/Inf checks on or off (process wide)."""
    global _debug_checks
    _debug_checks = bool(enabled)


def debug_checks_enabled():
    return _debug_checks


def _tape_stack():
    stack = getattr(_thread_state, "stack", None)
    if stack is None:
        stack = _thread_state.stack = []
    return stack


def current_tape():
    """Innermost active tape on this thread, or None"""
    stack = _tape_stack()
    if stack:
        return stack[-1]
    return None


class Node(object):
    """One recorded operation: function object, its inputs and its output"""
    __slots__ = ("function", "inputs", "output", "tape")

    def __init__(self, function, inputs, output, tape):
        self.function = function
        self.inputs = inputs
        self.output = output
        self.tape = tape


class ComputationTape(object):
    """
    Ordered record of the operations executed while the tape is active.

    Recording order is execution order, so every node's inputs were
    produced by earlier nodes (or are leaves). A tape belongs to the
    thread that entered it.
    """
    def __init__(self):
        self.nodes = []

    def __enter__(self):
        _tape_stack().append(self)
        return self

    def __exit__(self, exc_type, exc_value, traceback):
        stack = _tape_stack()
        assert stack and stack[-1] is self, "Tape exited out of order"
        stack.pop()
        return False

    def __len__(self):
        return len(self.nodes)

    def record(self, node):
        self.nodes.append(node)

    def backward(self, loss):
        """
        Accumulate d(loss)/d(leaf) into the `grad` of every leaf tensor
        with requires_grad=True. Calling this twice adds the gradients twice.
        """
        if not isinstance(loss, Tensor):
            raise UsageError("backward() expects a Tensor, got %s" % type(loss))
        if loss.data.size != 1:
            raise UsageError(
                "backward() needs a scalar loss, got shape %s" % (loss.shape,))
        if not loss.requires_grad:
            raise UsageError("Loss does not depend on any tensor requiring grad")

        seed = np.ones_like(loss.data)
        if loss._node is None:
            loss._accumulate_grad(seed)
            return
        if len(self.nodes) == 0:
            raise UsageError("Cannot run backward over an empty tape")

        pending = {id(loss): seed}
        for node in reversed(self.nodes):
            grad_output = pending.pop(id(node.output), None)
            if grad_output is None:
                continue
            input_grads = node.function.backward(grad_output)
            for tensor, grad in zip(node.inputs, input_grads):
                if grad is None or not tensor.requires_grad:
                    continue
                if tensor._node is None:
                    tensor._accumulate_grad(grad)
                else:
                    key = id(tensor)
                    if key in pending:
                        pending[key] = pending[key] + grad
                    else:
                        pending[key] = grad


def backward(loss):
    """Run reverse mode from a scalar loss over the tape that produced it"""
    if not isinstance(loss, Tensor):
        raise UsageError("backward() expects a Tensor, got %s" % type(loss))
    if loss._node is None:
        ComputationTape().backward(loss)
    else:
        loss._node.tape.backward(loss)


def as_tensor(value):
    if isinstance(value, Tensor):
        return value
    return Tensor(value)


def _check_finite(name, data):
    if not np.all(np.isfinite(data)):
        raise NumericError(
            "Non-finite values produced by %s (shape %s)" % (name, data.shape))


class Function(object):
    """
    Base class of differentiable operations.

    Subclasses implement forward(*arrays) -> array and
    backward(grad_output) -> tuple with one gradient (or None) per input.
    """
    def forward(self, *arrays):
        raise NotImplementedError()

    def backward(self, grad_output):
        raise NotImplementedError()

    @classmethod
    def apply(cls, *inputs, **kwargs):
        function = cls(**kwargs)
        tensors = [as_tensor(x) for x in inputs]
        data = function.forward(*[t.data for t in tensors])
        data = np.asarray(data, dtype=DTYPE)
        if _debug_checks:
            _check_finite(cls.__name__, data)
        out = Tensor(data, copy=False)
        tape = current_tape()
        if tape is not None and any(t.requires_grad for t in tensors):
            out.requires_grad = True
            node = Node(function, tensors, out, tape)
            out._node = node
            tape.record(node)
        return out


class Tensor(object):
    """
    N-dimensional float64 array with an optional gradient buffer.

    Parameters
    ----------
    data : array-like
        Values, stored as a row-major float64 numpy array.

    requires_grad : bool, optional
        Whether backward() should accumulate a gradient for this tensor.
    """
    __array_priority__ = 1000

    def __init__(self, data, requires_grad=False, copy=True):
        if copy:
            data = np.array(data, dtype=DTYPE, order="C")
        else:
            data = np.ascontiguousarray(data, dtype=DTYPE)
        self.data = data
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._node = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def __len__(self):
        return len(self.data)

    def __repr__(self):
        return "Tensor(shape=%s, requires_grad=%s)" % (
            self.shape, self.requires_grad)

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0])

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def _accumulate_grad(self, grad):
        grad = np.asarray(grad, dtype=DTYPE)
        assert grad.shape == self.data.shape, \
            "Gradient shape %s does not match tensor shape %s" % (
                grad.shape, self.data.shape)
        if self.grad is None:
            self.grad = grad.copy()
        else:
            self.grad = self.grad + grad

    def backward(self):
        backward(self)

    # arithmetic is delegated to ops, imported lazily to avoid a cycle

    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __rtruediv__(self, other):
        from . import ops
        return ops.div(other, self)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __pow__(self, exponent):
        from . import ops
        return ops.power(self, exponent)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.getitem(self, index)

    def sum(self, axis=None, keepdims=False):
        from . import ops
        return ops.sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, mask=None):
        from . import ops
        return ops.mean(self, axis=axis, mask=mask)

    def reshape(self, *shape):
        from . import ops
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return ops.reshape(self, shape)

    def transpose(self, *axes):
        from . import ops
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return ops.transpose(self, axes or None)
