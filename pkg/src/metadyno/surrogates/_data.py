from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Normalizer:
    """Affine maps between raw and model space.

    Inputs are min-max scaled by the search bounds, targets standardized
    by the training set they were fitted on.
    """

    x_shift: np.ndarray
    x_scale: np.ndarray
    y_mean: float = 0.0
    y_std: float = 1.0

    @classmethod
    def fit(cls, X, y, bounds=None):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if bounds is None:
            lo, hi = X.min(axis=0), X.max(axis=0)
        else:
            lo, hi = (np.asarray(b, dtype=float) for b in bounds)
        scale = np.where(hi > lo, hi - lo, 1.0)
        std = float(y.std()) if y.size > 1 else 0.0
        return cls(
            np.broadcast_to(lo, X.shape[1:]).astype(float),
            np.broadcast_to(scale, X.shape[1:]).astype(float),
            float(y.mean()) if y.size else 0.0,
            std if std > 0 else 1.0,
        )

    def transform_x(self, X):
        return (np.asarray(X, dtype=float) - self.x_shift) / self.x_scale

    def transform_y(self, y):
        return (np.asarray(y, dtype=float) - self.y_mean) / self.y_std

    def inverse_y(self, y):
        return np.asarray(y, dtype=float) * self.y_std + self.y_mean

    def inverse_var(self, var):
        return np.asarray(var, dtype=float) * self.y_std**2


@dataclass(eq=False)
class Dataset:
    """Observations ``(X, y)`` collected at time step ``t``.

    When ``norm`` is set, ``X`` and ``y`` are already in model space and
    predictions built on this dataset map raw queries through ``norm``.
    """

    X: np.ndarray
    y: np.ndarray
    t: int = 0
    norm: Normalizer | None = field(default=None, repr=False)

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        if X.ndim == 1:
            X = X.reshape(-1, 1) if X.size else X.reshape(0, 1)
        y = np.asarray(self.y, dtype=float).ravel()
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]}")
        if not np.all(np.isfinite(y)) or not np.all(np.isfinite(X)):
            raise ValueError("dataset contains non-finite values")
        self.X, self.y = X, y

    def __len__(self):
        return self.y.shape[0]

    @property
    def dims(self):
        return self.X.shape[1]

    def normalized(self, bounds=None):
        """Return a model-space copy with a fresh :class:`Normalizer` attached."""
        norm = Normalizer.fit(self.X, self.y, bounds)
        return Dataset(norm.transform_x(self.X), norm.transform_y(self.y), self.t, norm)

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.X[idx], self.y[idx], self.t, self.norm)

    def concat(self, other):
        return Dataset(
            np.vstack([self.X, other.X]), np.concatenate([self.y, other.y]), other.t, self.norm
        )


def support_query_split(data, k, rng):
    """Draw a support and a query set of ``k`` points each.

    Disjoint draws without replacement when ``len(data) >= 2k``; otherwise
    both sets are drawn with replacement.
    """
    n = len(data)
    if n == 0:
        raise ValueError("cannot sample from an empty dataset")
    if n >= 2 * k:
        idx = rng.choice(n, size=2 * k, replace=False)
        return data.subset(idx[:k]), data.subset(idx[k:])
    return data.subset(rng.integers(0, n, k)), data.subset(rng.integers(0, n, k))
