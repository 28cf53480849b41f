import inspect
import math
import re

import numpy as np
import pytest

from nnlft import _backend, _kernels_py, solver
from nnlft.errors import ConfigError, DivergenceError
from nnlft.metrics import synth_tensor
from nnlft.model import FactorState, point_gradient, residual
from nnlft.solver import (TrainConfig, VelocityState, init_factors, load_trace, msgd_step, save_trace,
                          sgd_step, train)
from nnlft.tensor_store import Entry, SparseTensorCOO, split

from conftest import random_state


def test_config_validation():
    for bad in (dict(rank=0), dict(eta=0), dict(lam=-1), dict(gamma=1.0), dict(gamma=-0.1),
                dict(max_epochs=0), dict(patience=0), dict(seed=-3), dict(reg_mode="x"),
                dict(init_scale=0)):
        with pytest.raises(ConfigError):
            TrainConfig(**bad)


def test_init_factors_deterministic_and_bounded():
    cfg = TrainConfig(rank=3, seed=9, init_scale=0.1)
    a, b = init_factors((10, 8, 4), cfg), init_factors((10, 8, 4), cfg)
    assert a == b
    for t in a.tables:
        assert np.all(np.abs(t) <= 0.1)
    for t in a.factors():
        assert np.all((t > 0.475) & (t < 0.525))
    assert init_factors((2, 2, 2), cfg.replace(rank=1)).y_i.shape == (2, 1)
    assert [t.shape for t in init_factors((2, 2, 2), cfg.replace(rank=1)).tables] == [(2, 1)] * 3


def test_sgd_step_worked_example(backend):
    s = FactorState.constant((2, 2, 2), 1)
    out = sgd_step(s, Entry(0, 0, 0, 1.0), TrainConfig(rank=1, eta=1.0, lam=0.0), backend=backend)
    assert out.y_i[0, 0] == out.y_j[0, 0] == out.y_k[0, 0] == 0.0546875
    assert out.y_i[1, 0] == 0.0  # locality
    assert s.y_i[0, 0] == 0.0  # input untouched


def test_sgd_step_no_change_on_exact_fit(backend):
    rng = np.random.default_rng(1)
    s = random_state(rng)
    from nnlft.model import predict
    e = Entry(1, 2, 0, predict(s, 1, 2, 0))
    assert sgd_step(s, e, TrainConfig(rank=4, lam=0.0), backend=backend) == s


def test_sgd_step_equals_gradient_update(backend):
    rng = np.random.default_rng(2)
    s = random_state(rng)
    e = Entry(3, 1, 2, 0.7)
    cfg = TrainConfig(rank=4, eta=0.3, lam=0.02)
    out = sgd_step(s, e, cfg, backend=backend)
    gi, gj, gk = point_gradient(s, e, cfg.lam)
    assert np.array_equal(out.y_i[3], s.y_i[3] - cfg.eta * gi)
    assert np.array_equal(out.y_j[1], s.y_j[1] - cfg.eta * gj)
    assert np.array_equal(out.y_k[2], s.y_k[2] - cfg.eta * gk)


@pytest.mark.parametrize("gamma", [0.0, 0.5, 0.9])
def test_first_momentum_step_equals_sgd(backend, gamma):
    rng = np.random.default_rng(3)
    s = random_state(rng)
    e = Entry(0, 3, 1, 0.2)
    cfg = TrainConfig(rank=4, eta=0.2, lam=0.01, gamma=gamma)
    m, v = msgd_step(s, VelocityState.zeros_like(s), e, cfg, backend=backend)
    assert m == sgd_step(s, e, cfg, backend=backend)


def test_gamma_zero_step_is_sgd_even_with_velocity(backend):
    rng = np.random.default_rng(4)
    s = random_state(rng)
    vel = VelocityState(*(rng.normal(size=t.shape) for t in s.tables))
    cfg = TrainConfig(rank=4, eta=0.2, lam=0.01, gamma=0.0)
    e = Entry(2, 2, 2, 0.9)
    m, _ = msgd_step(s, vel, e, cfg, backend=backend)
    assert m == sgd_step(s, e, cfg, backend=backend)


def test_momentum_pure_decay(backend):
    # second step sees zero gradient (exact fit, no penalty): v2 = gamma * v1
    s = FactorState.constant((1, 1, 1), 1)
    cfg = TrainConfig(rank=1, eta=1.0, lam=0.0, gamma=0.9)
    s1, v1 = msgd_step(s, VelocityState.zeros_like(s), Entry(0, 0, 0, 1.0), cfg, backend=backend)
    from nnlft.model import predict
    target = predict(s1, 0, 0, 0)
    _, v2 = msgd_step(s1, v1, Entry(0, 0, 0, target), cfg, backend=backend)
    for a, b in zip(v1.tables, v2.tables):
        assert np.array_equal(b, 0.9 * a)


def test_momentum_step_locality(backend):
    rng = np.random.default_rng(5)
    s = random_state(rng)
    vel = VelocityState(*(rng.normal(size=t.shape) for t in s.tables))
    m, v = msgd_step(s, vel, Entry(1, 2, 0, 0.5), TrainConfig(rank=4, gamma=0.8), backend=backend)
    for new, old, row in zip(m.tables + v.tables, s.tables + vel.tables, (1, 2, 0) * 2):
        mask = np.ones(len(old), bool)
        mask[row] = False
        assert np.array_equal(new[mask], old[mask])
        assert not np.array_equal(new[row], old[row])


def test_descent_sanity_single_entry(backend):
    s = FactorState.constant((1, 1, 1), 2, 0.3)
    e = Entry(0, 0, 0, 0.05)
    cfg = TrainConfig(rank=2, eta=0.1, lam=0.0, gamma=0.0)
    prev = 0.5 * residual(s, e) ** 2
    for _ in range(200000):
        s = sgd_step(s, e, cfg, backend=backend)
        r = residual(s, e)
        cur = 0.5 * r ** 2
        if abs(r) < 1e-8:
            break
        assert cur < prev
        prev = cur
    assert abs(residual(s, e)) < 1e-8


def test_divergence_error_names_entry_and_epoch(small_synth, small_split):
    tensor, _ = small_synth
    # sigmoid saturation bounds the gradient, so only an absurd step overflows
    cfg = TrainConfig(rank=3, eta=1e308, gamma=0.99, lam=0.0, max_epochs=50)
    with pytest.raises(DivergenceError) as info:
        train(tensor, small_split, cfg)
    assert info.value.epoch is not None and info.value.entry is not None
    assert "epoch" in str(info.value)


def test_train_one_epoch(small_synth, small_split, backend):
    _, trace = train(small_synth[0], small_split, TrainConfig(rank=3, max_epochs=1), backend=backend)
    assert trace.epochs == 1 and trace.best_epoch == 1
    assert trace.stopped_reason == "max_epochs"


def test_train_deterministic(small_synth, small_split):
    cfg = TrainConfig(rank=3, max_epochs=15)
    a_state, a = train(small_synth[0], small_split, cfg)
    b_state, b = train(small_synth[0], small_split, cfg)
    assert a == b and a_state == b_state


def test_train_backends_identical(small_synth, small_split):
    if len(_backend.available()) < 2:
        pytest.skip("extension not built")
    cfg = TrainConfig(rank=3, max_epochs=5)
    sa, a = train(small_synth[0], small_split, cfg, backend="cython")
    sb, b = train(small_synth[0], small_split, cfg, backend="python")
    assert a == b and sa == sb


def test_gamma_zero_trace_matches_plain_sgd(small_synth, small_split, backend):
    cfg = TrainConfig(rank=3, gamma=0.0, max_epochs=20)
    sm, m = train(small_synth[0], small_split, cfg, method="msgd", backend=backend)
    ss, s = train(small_synth[0], small_split, cfg, method="sgd", backend=backend)
    assert m == s and sm == ss


def test_best_epoch_is_argmin(small_synth, small_split):
    _, trace = train(small_synth[0], small_split, TrainConfig(rank=3, eta=0.05, max_epochs=60))
    rm = trace.val_rmse()
    assert trace.best_validation_rmse == rm.min()
    assert trace.best_epoch == int(np.argmin(rm)) + 1


def test_patience_stops(small_synth, small_split):
    cfg = TrainConfig(rank=3, eta=0.05, patience=2, min_delta=1.0, max_epochs=100)
    _, trace = train(small_synth[0], small_split, cfg)
    assert trace.epochs == 3 and trace.stopped_reason == "patience"


def test_returns_best_snapshot(small_synth, small_split):
    from nnlft.metrics import rmse
    tensor = small_synth[0]
    best, trace = train(tensor, small_split, TrainConfig(rank=3, eta=0.05, max_epochs=30))
    assert rmse(best, tensor.subset(small_split.validation)) == trace.best_validation_rmse


def test_empty_split_rejected(small_synth, small_split):
    from nnlft.tensor_store import SplitAssignment
    bad = SplitAssignment(small_split.train, np.array([], dtype=np.int64), small_split.test, 0)
    with pytest.raises(ConfigError):
        train(small_synth[0], bad, TrainConfig(rank=2))


def test_no_projection_code_in_solver_path():
    # factors stay positive through the sigmoid alone; nothing may clamp y
    import pathlib
    import nnlft
    sources = [inspect.getsource(m) for m in (solver, _kernels_py)]
    pyx = pathlib.Path(nnlft.__file__).with_name("_kernels.pyx")
    if pyx.exists():
        sources.append(pyx.read_text())
    pattern = re.compile(r"\b(clip|clamp|fmax|fmin|maximum|minimum|max|min)\s*\(")
    for src in sources:
        code = [line for line in src.splitlines() if not line.lstrip().startswith("#")]
        assert not [line for line in code if pattern.search(line)]


def test_momentum_beats_plain_at_equal_epoch():
    """Synthetic rank-4 data: momentum's best RMSE below plain SGD's RMSE at that epoch."""
    tensor, _ = synth_tensor((200, 200, 20), 4, 50000, 0.0, 0)
    wins = 0
    for seed in range(10):
        parts = split(tensor, (0.7, 0.1, 0.2), seed)
        cfg = TrainConfig(rank=4, eta=1e-2, lam=1e-5, gamma=0.9, seed=seed)
        _, mom = train(tensor, parts, cfg)
        _, plain = train(tensor, parts, cfg.replace(gamma=0.0, max_epochs=mom.best_epoch,
                                                     patience=mom.best_epoch))
        wins += mom.best_validation_rmse < plain.val_rmse_at(mom.best_epoch)
    assert wins > 5


def test_trace_csv_roundtrip(tmp_path, small_synth, small_split):
    _, trace = train(small_synth[0], small_split, TrainConfig(rank=2, max_epochs=4))
    path = tmp_path / "trace.csv"
    save_trace(trace, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_rmse"
    assert lines[-1].startswith(f"#best,{trace.best_epoch},")
    back = load_trace(path)
    assert back.records == trace.records
    assert back.best_validation_rmse == trace.best_validation_rmse


def test_low_penalty_recovery_beats_mean_predictor():
    tensor, _ = synth_tensor((200, 200, 20), 4, 50000, 0.0, 0)
    parts = split(tensor, (0.7, 0.1, 0.2), 0)
    from nnlft.metrics import rmse
    best, _ = train(tensor, parts, TrainConfig(rank=4, lam=1e-5))
    test_idx, test_vals = tensor.subset(parts.test)
    assert rmse(best, (test_idx, test_vals)) < 0.5 * test_vals.std()
