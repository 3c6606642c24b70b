import sys

import numpy as np
import pytest

from simkv.models import (
    CurieWeissSpec,
    GaussianModelSpec,
    NNetSpec,
    curie_weiss_model,
    gaussian_model,
    make_sin_cos_dataset,
    nnet_model,
)
from simkv.rng import RngStream


def fd_gradient(f, x, h=1e-5):
    """Central differences of a scalar function."""
    x = np.asarray(x, dtype=float)
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e.flat[i] = h
        g.flat[i] = (f(x + e) - f(x - e)) / (2 * h)
    return g


def fd_jacobian(f, x, h=1e-5):
    """Central differences of a vector function; rows index outputs."""
    x = np.asarray(x, dtype=float)
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        cols.append((f(x + e) - f(x - e)) / (2 * h))
    return np.stack(cols, axis=-1)


@pytest.fixture
def gauss1():
    return gaussian_model(GaussianModelSpec(1))


@pytest.fixture
def gauss2():
    return gaussian_model(GaussianModelSpec(2))


@pytest.fixture
def cw_strong():
    return curie_weiss_model(CurieWeissSpec(2.0, 2.0))


@pytest.fixture
def nnet_small():
    z, labels = make_sin_cos_dataset(5, RngStream(11, 0))
    return nnet_model(NNetSpec(z, labels))


def all_models():
    z, labels = make_sin_cos_dataset(5, RngStream(11, 0))
    return [
        gaussian_model(GaussianModelSpec(1)),
        gaussian_model(GaussianModelSpec(3)),
        curie_weiss_model(CurieWeissSpec(2.0, 2.0)),
        curie_weiss_model(CurieWeissSpec(0.5, 1.0)),
        nnet_model(NNetSpec(z, labels)),
    ]


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in mod.RESULTS:
            terminalreporter.write_line(line)
