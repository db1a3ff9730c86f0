import numpy as np
from scipy.stats import qmc


def latin_hypercube(k, lower, upper, rng):
    """``k`` Latin-hypercube points in the box, drawn from ``rng``."""
    lower, upper = np.asarray(lower, dtype=float), np.asarray(upper, dtype=float)
    if k <= 0:
        return np.empty((0, lower.size))
    unit = qmc.LatinHypercube(d=lower.size, seed=rng).random(k)
    return lower + unit * (upper - lower)


def uniform_population(k, lower, upper, rng):
    return rng.uniform(lower, upper, size=(k, np.asarray(lower).size))
