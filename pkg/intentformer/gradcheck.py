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

"""Central finite-difference oracle for checking backward rules"""

from __future__ import print_function, division, absolute_import

import logging

import numpy as np

from .tensor import ComputationTape, Tensor, DTYPE

logger = logging.getLogger(__name__)

# entries below this fraction of the largest gradient are compared at that scale
FLOOR_FRACTION = 1e-3


def _scalar(value):
    if isinstance(value, Tensor):
        value = value.data
    return float(np.asarray(value).reshape(-1)[0])


def numerical_gradient(f, tensor, h=1e-5):
    """
    Central differences of the scalar function `f()` with respect to
    every entry of `tensor`, perturbing `tensor.data` in place.
    """
    grad = np.zeros(tensor.shape, dtype=DTYPE)
    flat = tensor.data.reshape(-1)
    flat_grad = grad.reshape(-1)
    for i in range(flat.size):
        original = flat[i]
        flat[i] = original + h
        f_plus = _scalar(f())
        flat[i] = original - h
        f_minus = _scalar(f())
        flat[i] = original
        flat_grad[i] = (f_plus - f_minus) / (2 * h)
    return grad


def analytic_gradients(f, tensors):
    """Gradients of `f()` for each tensor, from one taped backward pass"""
    for tensor in tensors:
        tensor.zero_grad()
        tensor.requires_grad = True
    with ComputationTape() as tape:
        loss = f()
    tape.backward(loss)
    return [
        np.zeros(t.shape, dtype=DTYPE) if t.grad is None else t.grad.copy()
        for t in tensors
    ]


class GradientError(object):
    """
    Worst per-entry disagreement between analytic and numeric gradients
    of one tensor.
    """
    def __init__(self, name, relative, absolute, index=None):
        self.name = name
        self.relative = relative
        self.absolute = absolute
        self.index = index

    def passes(self, tolerance):
        return self.relative < tolerance

    def __repr__(self):
        return "GradientError(%s, relative=%.3g, absolute=%.3g, index=%s)" % (
            self.name, self.relative, self.absolute, self.index)


def entrywise_error(name, analytic, numeric):
    """
    Max over entries of |analytic - numeric| / max(|analytic|, |numeric|, floor),
    where floor is FLOOR_FRACTION of the largest numeric entry (and never
    below 1e-12), so entries that are zero up to finite-difference noise
    are judged against the tensor's own scale.
    """
    diff = np.abs(analytic - numeric)
    if diff.size == 0:
        return GradientError(name, 0.0, 0.0)
    floor = max(FLOOR_FRACTION * float(np.max(np.abs(numeric))), 1e-12)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    relative = diff / scale
    worst = int(np.argmax(relative))
    return GradientError(
        name,
        float(relative.reshape(-1)[worst]),
        float(diff.max()),
        index=np.unravel_index(worst, diff.shape))


def gradient_errors(f, tensors, names=None, h=1e-5):
    """
    Compare backward() against central differences for every tensor.

    Parameters
    ----------
    f : callable
        No-argument function returning a scalar Tensor built from `tensors`.

    tensors : list of Tensor

    names : list of str, optional
        Labels used in the returned error records.

    h : float
        Finite-difference step.

    Returns list of GradientError, one per tensor, holding the largest
    per-entry relative error and where it occurred.
    """
    if names is None:
        names = ["tensor_%d" % i for i in range(len(tensors))]
    analytic = analytic_gradients(f, tensors)
    errors = []
    for name, tensor, grad in zip(names, tensors, analytic):
        numeric = numerical_gradient(f, tensor, h=h)
        error = entrywise_error(name, grad, numeric)
        logger.debug("%s", error)
        errors.append(error)
    return errors
