from __future__ import annotations

import numpy as np

from ._params import GPR, NN
from .gpr import gpr_loss, gpr_loss_and_grad, gpr_predict
from .mlp import nn_loss, nn_loss_and_grad, nn_predict

_LOSS = {GPR: gpr_loss, NN: nn_loss}
_LOSS_GRAD = {GPR: gpr_loss_and_grad, NN: nn_loss_and_grad}
_PREDICT = {GPR: gpr_predict, NN: nn_predict}


def loss(params, data):
    return _LOSS[params.kind](params, data)


def loss_and_grad(params, data):
    return _LOSS_GRAD[params.kind](params, data)


def loss_grad(params, data):
    return _LOSS_GRAD[params.kind](params, data)[1]


def predict(params, data, x):
    return _PREDICT[params.kind](params, data, x)


class Adam:
    def __init__(self, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, grad):
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


class SGD:
    def __init__(self, lr):
        self.lr = lr

    def step(self, grad):
        return self.lr * grad


def make_optimizer(name, lr):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr)
    raise ValueError(f"unknown optimizer {name!r}; expected 'sgd' or 'adam'")


def fit_params(params, data, lr=0.01, max_iter=100, tol=1e-6, optimizer="sgd"):
    """Minimize the surrogate loss on ``data`` starting from ``params``.

    Stops after ``max_iter`` updates or once a step improves the loss by
    less than ``tol``. A step that raises the loss or leaves the valid
    parameter region is rejected, so the returned loss never exceeds the
    starting loss. Returns ``(params, loss_history)``.
    """
    if max_iter <= 0:
        return params, []
    opt = make_optimizer(optimizer, lr)
    current, grad = loss_and_grad(params, data)
    history = [current]
    for _ in range(max_iter):
        try:
            candidate = params.with_values(params.values - opt.step(grad))
            new, new_grad = loss_and_grad(candidate, data)
        except (ValueError, np.linalg.LinAlgError, FloatingPointError):
            break
        if not np.isfinite(new) or new > current:
            break
        improvement = current - new
        params, current, grad = candidate, new, new_grad
        history.append(current)
        if improvement < tol:
            break
    return params, history
