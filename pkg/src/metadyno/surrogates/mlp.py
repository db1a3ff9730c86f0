"""Fully connected ReLU network ``n -> 40 -> 40 -> 40 -> 1`` on a flat parameter vector."""
from __future__ import annotations

import numpy as np

from ._params import HIDDEN, NN, Prediction, SurrogateParams, mlp_layer_sizes

__all__ = ["unpack", "forward", "nn_loss", "nn_loss_grad", "nn_loss_and_grad", "nn_predict"]


def unpack(params: SurrogateParams, hidden=HIDDEN):
    """Split the flat vector into ``[(W, b), ...]`` views, one pair per layer."""
    sizes = mlp_layer_sizes(params.n_inputs, hidden)
    layers, pos = [], 0
    v = params.values
    for a, b in zip(sizes[:-1], sizes[1:]):
        W = v[pos : pos + a * b].reshape(a, b)
        pos += a * b
        layers.append((W, v[pos : pos + b]))
        pos += b
    return layers


def forward(params: SurrogateParams, X):
    h = np.atleast_2d(np.asarray(X, dtype=float))
    layers = unpack(params)
    for W, b in layers[:-1]:
        h = np.maximum(h @ W + b, 0.0)
    W, b = layers[-1]
    return (h @ W + b)[:, 0]


def _check(params, data):
    if params.kind != NN:
        raise ValueError(f"expected NN parameters, got {params.kind}")
    if len(data) == 0:
        raise ValueError("NN loss needs at least one observation")


def nn_loss(params: SurrogateParams, data) -> float:
    _check(params, data)
    r = forward(params, data.X) - data.y
    return float(np.mean(r * r))


def nn_loss_and_grad(params: SurrogateParams, data):
    _check(params, data)
    layers = unpack(params)
    acts = [data.X]
    pre = []
    h = data.X
    for W, b in layers[:-1]:
        z = h @ W + b
        pre.append(z)
        h = np.maximum(z, 0.0)
        acts.append(h)
    W, b = layers[-1]
    out = (h @ W + b)[:, 0]
    r = out - data.y
    N = r.size
    delta = (2.0 / N) * r[:, None]

    grads = []
    for k in range(len(layers) - 1, -1, -1):
        W, _ = layers[k]
        grads.append((acts[k].T @ delta, delta.sum(axis=0)))
        if k > 0:
            delta = (delta @ W.T) * (pre[k - 1] > 0)
    flat = np.concatenate([np.concatenate([gW.ravel(), gb]) for gW, gb in reversed(grads)])
    return float(np.mean(r * r)), flat


def nn_loss_grad(params: SurrogateParams, data) -> np.ndarray:
    return nn_loss_and_grad(params, data)[1]


def nn_predict(params: SurrogateParams, data, x) -> Prediction:
    """Network output at ``x``; variance is always zero."""
    if params.kind != NN:
        raise ValueError(f"expected NN parameters, got {params.kind}")
    Xq = np.asarray(x, dtype=float)
    single = Xq.ndim == 1
    Xq = np.atleast_2d(Xq)
    if data is not None and data.norm is not None:
        Xq = data.norm.transform_x(Xq)
    mean = forward(params, Xq)
    if data is not None and data.norm is not None:
        mean = data.norm.inverse_y(mean)
    var = np.zeros_like(mean)
    if single:
        return Prediction(float(mean[0]), 0.0)
    return Prediction(mean, var)
