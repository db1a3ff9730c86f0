"""Moving Peaks Benchmark with cone-shaped peaks.

The landscape at time step ``t`` is

    f(x, t) = max_i [ H_i(t) - W_i(t) * ||x - X_i(t)|| ]

and every environment change perturbs heights, widths and centers. Peaks
follow the usual shift-vector update: the new shift has length
``shift_severity`` and its direction blends a fresh random direction with
the previous shift through ``correlation``.

States are immutable; :func:`mpb_advance` returns a new state. Randomness
for step ``t`` is drawn from a generator seeded with ``(seed, t)`` so the
landscape sequence does not depend on how often anything else touched an
RNG.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

__all__ = [
    "ConfigError",
    "MpbConfig",
    "MpbState",
    "mpb_init",
    "mpb_eval",
    "mpb_advance",
    "mpb_global_optimum",
    "state_to_dict",
    "state_from_dict",
]


class ConfigError(ValueError):
    """Raised for invalid benchmark or campaign configuration."""


def _as_interval(value, name):
    lo, hi = (float(v) for v in value)
    if not (np.isfinite(lo) and np.isfinite(hi)):
        raise ConfigError(f"{name}: bounds must be finite, got {value!r}")
    if lo > hi:
        raise ConfigError(f"{name}: empty interval {value!r}")
    return (lo, hi)


@dataclass(frozen=True)
class MpbConfig:
    """Static description of a Moving Peaks instance.

    ``bounds`` is either one ``(lo, hi)`` pair applied to every dimension
    or a sequence of ``dims`` pairs.
    """

    dims: int = 2
    num_peaks: int = 5
    bounds: tuple = (0.0, 100.0)
    height_range: tuple = (30.0, 70.0)
    width_range: tuple = (1.0, 12.0)
    height_severity: float = 7.0
    shift_severity: float = 5.0
    width_severity: float = 1.0
    correlation: float = 0.0
    num_environments: int = 10
    seed: int = 0

    def __post_init__(self):
        if int(self.dims) != self.dims or self.dims < 1:
            raise ConfigError(f"dims must be a positive integer, got {self.dims!r}")
        if int(self.num_peaks) != self.num_peaks or self.num_peaks < 1:
            raise ConfigError(f"num_peaks must be a positive integer, got {self.num_peaks!r}")
        if int(self.num_environments) != self.num_environments or self.num_environments < 1:
            raise ConfigError(
                f"num_environments must be a positive integer, got {self.num_environments!r}"
            )
        b = np.asarray(self.bounds, dtype=float)
        if b.shape == (2,):
            b = np.tile(b, (self.dims, 1))
        if b.shape != (self.dims, 2):
            raise ConfigError(f"bounds must be a pair or {self.dims} pairs, got shape {b.shape}")
        if np.any(~np.isfinite(b)) or np.any(b[:, 0] >= b[:, 1]):
            raise ConfigError("bounds must satisfy lower < upper in every dimension")
        object.__setattr__(self, "bounds", tuple(tuple(float(v) for v in row) for row in b))
        for name in ("height_range", "width_range"):
            lo, hi = _as_interval(getattr(self, name), name)
            if lo <= 0:
                raise ConfigError(f"{name}: lower bound must be positive")
            object.__setattr__(self, name, (lo, hi))
        for name in ("height_severity", "shift_severity", "width_severity"):
            v = float(getattr(self, name))
            if not np.isfinite(v) or v < 0:
                raise ConfigError(f"{name} must be a finite non-negative number")
            object.__setattr__(self, name, v)
        if not 0.0 <= float(self.correlation) <= 1.0:
            raise ConfigError("correlation must lie in [0, 1]")
        if int(self.seed) < 0 or int(self.seed) >= 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        object.__setattr__(self, "seed", int(self.seed))

    @property
    def lower(self):
        return np.array([b[0] for b in self.bounds])

    @property
    def upper(self):
        return np.array([b[1] for b in self.bounds])

    def to_dict(self):
        d = asdict(self)
        d["bounds"] = [list(b) for b in self.bounds]
        d["height_range"] = list(self.height_range)
        d["width_range"] = list(self.width_range)
        return d


def _frozen(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MpbState:
    """One environment of the benchmark.

    Arrays are read-only; ``centers`` and ``shifts`` have shape
    ``(num_peaks, dims)``.
    """

    time_step: int
    centers: np.ndarray
    heights: np.ndarray
    widths: np.ndarray
    shifts: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("centers", "heights", "widths", "shifts"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))

    @property
    def num_peaks(self):
        return self.heights.shape[0]

    def __eq__(self, other):
        if not isinstance(other, MpbState):
            return NotImplemented
        return (
            self.time_step == other.time_step
            and np.array_equal(self.centers, other.centers)
            and np.array_equal(self.heights, other.heights)
            and np.array_equal(self.widths, other.widths)
            and np.array_equal(self.shifts, other.shifts)
        )

    __hash__ = None


def _reflect(values, lo, hi):
    """Mirror ``values`` back into ``[lo, hi]`` (repeated reflection)."""
    values = np.asarray(values, dtype=float)
    lo = np.broadcast_to(np.asarray(lo, dtype=float), values.shape)
    hi = np.broadcast_to(np.asarray(hi, dtype=float), values.shape)
    span = hi - lo
    out = lo.copy()
    ok = span > 0
    r = np.mod(values[ok] - lo[ok], 2 * span[ok])
    out[ok] = lo[ok] + np.where(r > span[ok], 2 * span[ok] - r, r)
    return out


def _uniform(rng, interval, size):
    lo, hi = interval
    if lo == hi:
        return np.full(size, lo)
    return rng.uniform(lo, hi, size)


def mpb_init(config: MpbConfig) -> MpbState:
    if not isinstance(config, MpbConfig):
        raise ConfigError("mpb_init expects an MpbConfig")
    rng = np.random.default_rng([config.seed, 0])
    p, n = config.num_peaks, config.dims
    centers = rng.uniform(config.lower, config.upper, size=(p, n))
    heights = _uniform(rng, config.height_range, p)
    widths = _uniform(rng, config.width_range, p)
    return MpbState(0, centers, heights, widths, np.zeros((p, n)))


def _peak_values(state, X):
    d = np.linalg.norm(X[:, None, :] - state.centers[None, :, :], axis=-1)
    return state.heights[None, :] - state.widths[None, :] * d


def mpb_eval(state: MpbState, x, bounds=None):
    """Evaluate the landscape at ``x`` (a point or a ``(k, n)`` batch).

    When ``bounds`` (an ``MpbConfig`` or ``(lower, upper)`` pair) is given,
    points outside the box raise ``ValueError``.
    """
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    if X.shape[1] != state.centers.shape[1]:
        raise ValueError(f"expected {state.centers.shape[1]}-dimensional input, got {X.shape[1]}")
    if bounds is not None:
        lo, hi = (bounds.lower, bounds.upper) if isinstance(bounds, MpbConfig) else bounds
        if np.any(X < lo) or np.any(X > hi):
            raise ValueError("point lies outside the search bounds")
    vals = _peak_values(state, X).max(axis=1)
    return float(vals[0]) if single else vals


def _random_directions(rng, p, n):
    r = rng.standard_normal((p, n))
    norms = np.linalg.norm(r, axis=1, keepdims=True)
    # a zero draw has probability zero; guard anyway
    norms[norms == 0] = 1.0
    return r / norms


def mpb_advance(state: MpbState, config: MpbConfig) -> MpbState:
    t_next = state.time_step + 1
    if t_next >= config.num_environments:
        raise ValueError(
            f"cannot advance past the last environment (T={config.num_environments})"
        )
    rng = np.random.default_rng([config.seed, t_next])
    p, n = state.centers.shape

    heights = _reflect(
        state.heights + config.height_severity * rng.standard_normal(p), *config.height_range
    )
    widths = _reflect(
        state.widths + config.width_severity * rng.standard_normal(p), *config.width_range
    )

    lam = config.correlation
    blend = (1.0 - lam) * _random_directions(rng, p, n) + lam * state.shifts
    norms = np.linalg.norm(blend, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    shifts = config.shift_severity * blend / norms

    moved = state.centers + shifts
    lo, hi = config.lower, config.upper
    outside = (moved < lo) | (moved > hi)
    centers = _reflect(moved, lo, hi)
    shifts = np.where(outside, -shifts, shifts)
    return MpbState(t_next, centers, heights, widths, shifts)


def mpb_global_optimum(state: MpbState):
    """Return ``(center, height)`` of the highest peak; ties go to the lowest index."""
    i = int(np.argmax(state.heights))
    return state.centers[i].copy(), float(state.heights[i])


def state_to_dict(state: MpbState):
    return {
        "time_step": state.time_step,
        "centers": state.centers.tolist(),
        "heights": state.heights.tolist(),
        "widths": state.widths.tolist(),
        "shifts": state.shifts.tolist(),
    }


def state_from_dict(d):
    return MpbState(
        int(d["time_step"]), d["centers"], d["heights"], d["widths"], d["shifts"]
    )
