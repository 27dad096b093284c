import numpy as np
import pytest

from smom.models import (generalized_gamma, generalized_normal, gn_reference_theta,
                         matrix_bingham, multivariate_normal, ppi_model)

SIGMA3 = np.array([[2.0, 0.5, 0.0], [0.5, 1.0, 0.2], [0.0, 0.2, 1.5]])


def model_cases():
    """The six models of the Stein suite with a representative parameter."""
    mv = multivariate_normal(np.array([0.3, -0.2, 0.1]), SIGMA3)
    ppi = ppi_model(np.full(3, -0.5))
    bing = matrix_bingham(3, 2)
    return [
        ("gnormal1", generalized_normal(1), np.array([0.5])),
        ("gnormal2", generalized_normal(2), np.array([gn_reference_theta(2)])),
        ("ggamma2", generalized_gamma(2), np.array([1.3])),
        ("normal3", mv, mv.default_theta),
        ("ppi3", ppi, ppi.default_theta),
        ("bingham32", bing, bing.default_theta),
    ]


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_spd(rng, p, floor=0.5):
    a = rng.normal(size=(p, p))
    return a @ a.T + floor * np.eye(p)


def fd_grad(fn, x, h=1e-6):
    """Central differences of a batched scalar function, ``(m, D)`` -> ``(m, D)``."""
    x = np.asarray(x, float)
    out = np.empty_like(x)
    for a in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[a] = h
        out[:, a] = (fn(x + e) - fn(x - e)) / (2 * h)
    return out


def fd_jac(fn, x, h=1e-6):
    """Central-difference Jacobian of a batched vector function."""
    x = np.asarray(x, float)
    cols = []
    for a in range(x.shape[1]):
        e = np.zeros(x.shape[1])
        e[a] = h
        cols.append((fn(x + e) - fn(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


def within_se(values, k=4.0):
    v = np.asarray(values, float)
    se = v.std(ddof=1) / np.sqrt(v.size)
    return abs(v.mean()) <= k * se + 1e-300, v.mean(), se


# acceptance report: criterion -> (passed, detail), printed after the run
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        ok, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key} {'PASS' if ok else 'FAIL'} {detail}")
