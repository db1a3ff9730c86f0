from __future__ import annotations

from dataclasses import dataclass

import numpy as np

GPR = "GPR"
NN = "NN"

HIDDEN = (40, 40, 40)


def mlp_layer_sizes(n_inputs, hidden=HIDDEN):
    return (int(n_inputs), *hidden, 1)


def mlp_param_count(n_inputs, hidden=HIDDEN):
    sizes = mlp_layer_sizes(n_inputs, hidden)
    return sum(a * b + b for a, b in zip(sizes[:-1], sizes[1:]))


@dataclass(frozen=True, eq=False)
class SurrogateParams:
    """Flat parameter vector of a surrogate.

    GPR stores ``(log l, log sigma_f^2, log sigma_n^2)``; NN stores all
    weights and biases of the ``n -> 40 -> 40 -> 40 -> 1`` network, layer
    by layer, weights (row-major) before biases.
    """

    kind: str
    values: np.ndarray
    n_inputs: int = 0

    def __post_init__(self):
        v = np.array(self.values, dtype=float).ravel()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        if self.kind == GPR:
            if v.shape != (3,):
                raise ValueError("GPR parameters must have exactly 3 entries")
            with np.errstate(over="ignore", under="ignore"):
                scales = np.exp([2.0 * v[0], v[1], v[2]])  # the kernel uses l**2
            if not np.all(np.isfinite(scales)) or np.any(scales <= 0):
                raise ValueError("GPR hyperparameters must be positive and finite")
        elif self.kind == NN:
            expected = mlp_param_count(self.n_inputs)
            if v.shape != (expected,):
                raise ValueError(f"NN parameter vector must have {expected} entries, got {v.size}")
            if not np.all(np.isfinite(v)):
                raise ValueError("NN parameters must be finite")
        else:
            raise ValueError(f"unknown surrogate kind {self.kind!r}")

    def with_values(self, values):
        return SurrogateParams(self.kind, values, self.n_inputs)

    def __eq__(self, other):
        if not isinstance(other, SurrogateParams):
            return NotImplemented
        return (
            self.kind == other.kind
            and self.n_inputs == other.n_inputs
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    @property
    def names(self):
        if self.kind == GPR:
            return ["log_lengthscale", "log_signal_var", "log_noise_var"]
        return [f"w{i}" for i in range(self.values.size)]

    def to_dict(self):
        return {"kind": self.kind, "n_inputs": self.n_inputs, "values": self.values.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(d["kind"], d["values"], int(d.get("n_inputs", 0)))


def gpr_params(length_scale=1.0, signal_var=1.0, noise_var=0.01):
    return SurrogateParams(GPR, np.log([length_scale, signal_var, noise_var]))


def default_gpr_params():
    """l = 1, sigma_f^2 = 1, sigma_n^2 = 0.01 (GPy defaults)."""
    return gpr_params(1.0, 1.0, 0.01)


def init_mlp_params(n_inputs, rng, hidden=HIDDEN):
    """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
    sizes = mlp_layer_sizes(n_inputs, hidden)
    chunks = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = np.sqrt(6.0 / fan_in)
        chunks.append(rng.uniform(-bound, bound, fan_in * fan_out))
        chunks.append(np.zeros(fan_out))
    return SurrogateParams(NN, np.concatenate(chunks), int(n_inputs))


@dataclass(frozen=True)
class Prediction:
    mean: np.ndarray | float
    variance: np.ndarray | float
