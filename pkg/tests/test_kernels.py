"""Compiled and pure-Python kernels must agree bit for bit."""

import importlib
import os
import subprocess
import sys

import numpy as np
import pytest

from nnlft import _backend, _kernels_py
from nnlft.model import sigmoid
from nnlft.solver import epoch_order

needs_ext = pytest.mark.skipif("cython" not in _backend.available(), reason="extension not built")


def _problem(seed=0, rank=5, n=400, shape=(20, 15, 6)):
    rng = np.random.default_rng(seed)
    tables = [rng.uniform(-1, 1, (d, rank)) for d in shape]
    idx = np.stack([rng.integers(0, d, n) for d in shape], axis=1).astype(np.int64)
    vals = rng.random(n)
    return tables, idx, vals


def test_python_sigmoid_matches_model():
    for a in (-40.0, -3.2, -0.0, 0.0, 1e-9, 2.5, 37.0):
        assert _kernels_py.sigmoid(a) == sigmoid(a)


@needs_ext
def test_sigmoid_parity():
    ext = _backend.get_kernels("cython")
    y = np.linspace(-40, 40, 2001)
    assert np.array_equal(ext.sigmoid_array(y), _kernels_py.sigmoid_array(y))


@needs_ext
@pytest.mark.parametrize("raw_y", [False, True])
def test_epoch_parity(raw_y):
    ext = _backend.get_kernels("cython")
    tables, idx, vals = _problem()
    a = [t.copy() for t in tables] + [np.zeros_like(t) for t in tables]
    b = [t.copy() for t in a]
    for epoch in (1, 2, 3):
        order = epoch_order(len(vals), 0, epoch)
        assert ext.msgd_epoch(*a, idx, vals, order, 0.05, 0.01, 0.9, raw_y) == -1
        assert _kernels_py.msgd_epoch(*b, idx, vals, order, 0.05, 0.01, 0.9, raw_y) == -1
    for x, y in zip(a, b):
        assert np.array_equal(x, y)
    c = [t.copy() for t in tables]
    d = [t.copy() for t in tables]
    order = epoch_order(len(vals), 1, 1)
    ext.sgd_epoch(*c, idx, vals, order, 0.05, 0.01, raw_y)
    _kernels_py.sgd_epoch(*d, idx, vals, order, 0.05, 0.01, raw_y)
    for x, y in zip(c, d):
        assert np.array_equal(x, y)


@needs_ext
def test_eval_parity():
    ext = _backend.get_kernels("cython")
    tables, idx, vals = _problem(seed=3)
    assert np.array_equal(ext.predict_many(*tables, idx), _kernels_py.predict_many(*tables, idx))
    assert ext.loss_terms(*tables, idx, vals, 0.3) == _kernels_py.loss_terms(*tables, idx, vals, 0.3)
    assert ext.residual_sums(*tables, idx, vals) == _kernels_py.residual_sums(*tables, idx, vals)


@pytest.mark.parametrize("name", _backend.available())
def test_divergence_reported(name):
    k = _backend.get_kernels(name)
    tables, idx, vals = _problem(rank=2, n=50)
    vel = [np.zeros_like(t) for t in tables]
    failed = k.msgd_epoch(*tables, *vel, idx, vals * 1e200, epoch_order(50, 0, 1), 1e200, 0.0, 0.99, False)
    assert failed >= 0


def test_env_var_forces_pure_python():
    code = "import nnlft._backend as b; print(b.BACKEND)"
    env = dict(os.environ, NNLFT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_unknown_backend():
    with pytest.raises(ValueError):
        _backend.get_kernels("fortran")
