import sys

import numpy as np
import pytest

from varinverse.catalysis import catalysis_model


def central_diff(fun, x, h=1e-6):
    """Central-difference gradient of a scalar or vector function (last axis = x)."""
    x = np.asarray(x, dtype=float)
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e.flat[j] = h
        cols.append((np.asarray(fun(x + e)) - np.asarray(fun(x - e))) / (2 * h))
    out = np.stack(cols, axis=-1)
    return out.reshape(out.shape[:-1] + x.shape)


def second_diff(fun, x, h=1e-4):
    """Diagonal second derivatives by the three-point stencil."""
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(fun(x))
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e.flat[j] = h
        cols.append((np.asarray(fun(x + e)) - 2 * f0 + np.asarray(fun(x - e))) / h**2)
    out = np.stack(cols, axis=-1)
    return out.reshape(out.shape[:-1] + x.shape)


def rel_err(a, b, floor=1e-8):
    a, b = np.asarray(a, float), np.asarray(b, float)
    return float(np.max(np.abs(a - b)) / max(np.max(np.abs(b)), floor))


@pytest.fixture(scope="session")
def catalysis():
    return catalysis_model()


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = (getattr(mod, "RESULTS", []) + getattr(mod, "INFO", [])) if mod else []
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
