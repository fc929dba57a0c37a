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

from __future__ import print_function, division, absolute_import

import logging

import numpy as np

from .errors import UsageError

logger = logging.getLogger(__name__)


def global_grad_norm(grads):
    """L2 norm of all gradient arrays taken together"""
    return float(np.sqrt(sum(float(np.sum(g * g)) for g in grads)))


def clip_by_global_norm(grads, max_norm):
    """
    Scale every gradient by max_norm / norm when the global norm exceeds
    max_norm. Returns (clipped gradients, norm before clipping).
    """
    norm = global_grad_norm(grads)
    if max_norm is None or norm <= max_norm:
        return list(grads), norm
    scale = max_norm / norm
    return [g * scale for g in grads], norm


class Adam(object):
    """
    Adaptive moment estimation over a ModelParams object.

    step() replaces each parameter's data array with a new one, so arrays
    handed out before the step are never modified.
    """
    def __init__(
            self,
            params,
            learning_rate=3e-4,
            beta1=0.9,
            beta2=0.999,
            eps=1e-8,
            grad_clip=1.0):
        self.params = params
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.grad_clip = grad_clip
        self.step_count = 0
        self.first_moments = [np.zeros_like(t.data) for t in params.tensors()]
        self.second_moments = [np.zeros_like(t.data) for t in params.tensors()]

    @classmethod
    def from_config(cls, params, train_config):
        return cls(
            params,
            learning_rate=train_config.learning_rate,
            beta1=train_config.adam_beta1,
            beta2=train_config.adam_beta2,
            eps=train_config.adam_eps,
            grad_clip=train_config.grad_clip)

    def step(self, grads):
        """
        Apply one update from `grads` (one array per parameter, in
        parameter order). Returns the global gradient norm before clipping.
        """
        tensors = self.params.tensors()
        if len(grads) != len(tensors):
            raise UsageError(
                "Got %d gradients for %d parameters" % (len(grads), len(tensors)))
        grads, norm = clip_by_global_norm(grads, self.grad_clip)
        self.step_count += 1
        t = self.step_count
        correction1 = 1.0 - self.beta1 ** t
        correction2 = 1.0 - self.beta2 ** t
        for i, (tensor, grad) in enumerate(zip(tensors, grads)):
            m = self.beta1 * self.first_moments[i] + (1.0 - self.beta1) * grad
            v = self.beta2 * self.second_moments[i] + (1.0 - self.beta2) * grad * grad
            self.first_moments[i] = m
            self.second_moments[i] = v
            update = self.learning_rate * (m / correction1) / (
                np.sqrt(v / correction2) + self.eps)
            tensor.data = tensor.data - update
        logger.debug("Adam step %d, grad norm %.6g", t, norm)
        return norm
