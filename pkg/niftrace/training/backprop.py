"""
Reverse-mode gradients through the field: Fourier embedding (constant),
dense/ReLU trunk with the concat layer, activation-free output layer and
the fixed colour matrix. The loss lives in tone-compressed RGB, so nothing
is propagated through the inverse tone mapping.

The arithmetic follows the dtype of the weights, which lets the gradient
tests run everything at float64.
"""

from dataclasses import dataclass
from typing import List

import numpy as np

from niftrace.constants import DEFAULT_HUBER_DELTA
from niftrace.nif.colour import colour_matrix
from niftrace.nif.network import NifWeights, fourier_encode_batch
from niftrace.training.losses import huber_mean


@dataclass
class ForwardCache:
    encoding: np.ndarray
    inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]
    output: np.ndarray
    prediction: np.ndarray


def forward(weights, config, encoding):
    """
    Training-time forward pass up to compressed RGB.

    Args:
        weights: NifWeights.
        config: NifConfig.
        encoding: (N, F) embedding, cast to the weight dtype.

    Returns:
        ForwardCache; prediction is (N, 3) compressed RGB.
    """
    dtype = weights.weights[0].dtype
    enc = np.asarray(encoding, dtype=dtype)
    c = config.concat_layer
    x = enc
    inputs, pre = [], []
    for k in range(config.layers):
        inputs.append(x)
        z = x @ weights.weights[k] + weights.biases[k]
        pre.append(z)
        x = np.maximum(z, 0)
        if k + 1 == c:
            x = np.concatenate([x, enc], axis=1)
    inputs.append(x)
    y = x @ weights.weights[-1] + weights.biases[-1]
    cmat = colour_matrix(config.colour_matrix, dtype=dtype)
    return ForwardCache(encoding=enc, inputs=inputs, pre_activations=pre, output=y, prediction=y @ cmat.T)


def backward_from_prediction(weights, config, cache, dpred):
    """
    Gradients of all trainable parameters given dL/dprediction.

    Returns:
        NifWeights holding the gradients.
    """
    cmat = colour_matrix(config.colour_matrix, dtype=dpred.dtype)
    L = config.layers
    c = config.concat_layer
    grads_w = [None] * (L + 1)
    grads_b = [None] * (L + 1)

    dy = dpred @ cmat
    grads_w[L] = cache.inputs[L].T @ dy
    grads_b[L] = dy.sum(axis=0)
    dx = dy @ weights.weights[L].T
    for k in range(L - 1, -1, -1):
        if k + 1 == c:
            # the embedding half of the concat is a constant input
            dx = dx[:, :config.hidden - config.fourier_dim]
        dz = dx * (cache.pre_activations[k] > 0)
        grads_w[k] = cache.inputs[k].T @ dz
        grads_b[k] = dz.sum(axis=0)
        if k > 0:
            dx = dz @ weights.weights[k].T
    return NifWeights(config, grads_w, grads_b)


def loss_and_gradients(weights, config, uv, targets, delta=DEFAULT_HUBER_DELTA, loss_scale=1.0,
                       encoding=None):
    """
    Mean Huber loss of a batch and the gradients of every parameter.

    Args:
        uv: (N, 2) coordinates.
        targets: (N, 3) compressed RGB.
        loss_scale: factor applied to the loss gradient before backpropagation.
        encoding: precomputed embedding of uv, if available.

    Returns:
        (loss, NifWeights of gradients)
    """
    if encoding is None:
        encoding = fourier_encode_batch(uv, config.fourier_dim)
    cache = forward(weights, config, encoding)
    dtype = cache.prediction.dtype
    loss, dpred = huber_mean(cache.prediction, np.asarray(targets, dtype=dtype), delta)
    if loss_scale != 1.0:
        dpred = dpred * dtype.type(loss_scale)
    return loss, backward_from_prediction(weights, config, cache, dpred)


def backward(weights, config, uv, targets, delta=DEFAULT_HUBER_DELTA):
    """
    Gradients of the mean Huber loss with respect to every trainable parameter.
    """
    return loss_and_gradients(weights, config, uv, targets, delta)[1]
