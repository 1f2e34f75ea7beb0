"""
Huber loss on tone-compressed colours.
"""

import numpy as np

from niftrace.exceptions import DomainError


def huber(pred, target, delta):
    """
    Elementwise Huber loss: 0.5 e^2 for |e| <= delta, delta (|e| - 0.5 delta)
    beyond, with e = pred - target.
    """
    if not delta > 0:
        raise DomainError(f"huber delta must be positive, got {delta}")
    e = np.asarray(pred) - np.asarray(target)
    a = np.abs(e)
    return np.where(a <= delta, 0.5 * e * e, delta * (a - 0.5 * delta))


def huber_grad(pred, target, delta):
    """
    Derivative of huber with respect to pred: clamp(e, -delta, delta).
    """
    if not delta > 0:
        raise DomainError(f"huber delta must be positive, got {delta}")
    e = np.asarray(pred) - np.asarray(target)
    return np.clip(e, -delta, delta)


def huber_mean(pred, target, delta):
    """
    Mean Huber loss over every element of an (N, 3) batch and its gradient.

    Returns:
        (loss float, gradient array shaped like pred)
    """
    pred = np.asarray(pred)
    count = pred.size
    loss = float(np.mean(huber(pred, target, delta), dtype=np.float64))
    grad = (huber_grad(pred, target, delta) / count).astype(pred.dtype)
    return loss, grad
