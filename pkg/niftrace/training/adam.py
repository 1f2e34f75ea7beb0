"""
Adam optimiser over a list of parameter arrays.
"""

import logging
from dataclasses import dataclass, field
from typing import List

import numpy as np

from niftrace.constants import ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON, DEFAULT_LEARNING_RATE
from niftrace.core.precision import quantise_f16_stochastic
from niftrace.exceptions import ConfigurationError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """
    First and second moments (float32) per parameter array and the step count.
    """
    m: List[np.ndarray] = field(default_factory=list)
    v: List[np.ndarray] = field(default_factory=list)
    t: int = 0

    @classmethod
    def zeros_like(cls, params, dtype=np.float32):
        return cls([np.zeros(p.shape, dtype=dtype) for p in params],
                   [np.zeros(p.shape, dtype=dtype) for p in params], 0)


def adam_step(params, grads, state, lr=DEFAULT_LEARNING_RATE, beta1=ADAM_BETA1, beta2=ADAM_BETA2,
              eps=ADAM_EPSILON, grad_scale=1.0, stochastic_rng=None):
    """
    One bias-corrected Adam update.

    Args:
        params: list of parameter arrays.
        grads: list of gradients of the same shapes, possibly multiplied by grad_scale.
        state: AdamState.
        grad_scale: the gradients are divided by this before the moment update.
        stochastic_rng: numpy Generator; when given, the updated parameters
            are re-quantised to float16 values with stochastic rounding.

    Returns:
        (params, state, accepted). A step with any non-finite gradient is
        rejected: the inputs come back unchanged and accepted is False.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ConfigurationError("parameter, gradient and moment lists differ in length")
    for p, g in zip(params, grads):
        if p.shape != g.shape:
            raise ConfigurationError(f"gradient shape {g.shape} does not match parameter {p.shape}")
    if not all(np.all(np.isfinite(g)) for g in grads):
        return params, state, False

    t = state.t + 1
    correction1 = 1.0 - beta1 ** t
    correction2 = 1.0 - beta2 ** t
    new_params, new_m, new_v = [], [], []
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g.astype(m.dtype)
        if grad_scale != 1.0:
            g = g / m.dtype.type(grad_scale)
        m = beta1 * m + (1.0 - beta1) * g
        v = beta2 * v + (1.0 - beta2) * (g * g)
        m_hat = m / correction1
        v_hat = v / correction2
        p = (p - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(p.dtype)
        if stochastic_rng is not None:
            p = quantise_f16_stochastic(p, stochastic_rng).astype(p.dtype)
        new_params.append(p)
        new_m.append(m.astype(state.m[0].dtype))
        new_v.append(v.astype(state.v[0].dtype))
    return new_params, AdamState(new_m, new_v, t), True
