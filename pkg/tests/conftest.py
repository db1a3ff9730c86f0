import numpy as np
import pytest

from metadyno.engine import EnvRecord, RunTrace


def synthetic_trace(rng, T=4, per_env=6, algorithm="A", seed=0):
    """A RunTrace with random evaluations below a known per-environment optimum."""
    tr = RunTrace(algorithm, seed, 2, {}, {"num_environments": T}, {})
    for t in range(T):
        opt = float(rng.uniform(50, 70))
        rec = EnvRecord(t, optimum_x=[0.0, 0.0], optimum_y=opt)
        best = None
        for f in range(1, per_env + 1):
            y = float(opt - rng.uniform(0, 30))
            if best is None or y > best:
                best = y
                rec.best_x, rec.best_y, rec.fe_to_best = [0.0, 0.0], y, f
            tr.env.append(t)
            tr.fe.append(f)
            tr.x.append([0.0, 0.0])
            tr.y.append(y)
            tr.best_so_far.append(best)
        rec.n_fe = per_env
        tr.envs.append(rec)
    return tr


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance")
        for line in sorted(mod.RESULTS):
            terminalreporter.write_line(line)
