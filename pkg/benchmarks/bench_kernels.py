"""Epoch throughput of the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--entries 50000] [--rank 4] [--epochs 3]
"""

import argparse
import time

import numpy as np

from nnlft import _backend
from nnlft.metrics import synth_tensor
from nnlft.solver import TrainConfig, VelocityState, epoch_order, init_factors
from nnlft.tensor_store import split


def bench(kernels, tensor, parts, config, epochs):
    state = init_factors(tensor.shape, config)
    velocity = VelocityState.zeros_like(state)
    idx, vals = tensor.subset(parts.train)
    t0 = time.perf_counter()
    for epoch in range(1, epochs + 1):
        kernels.msgd_epoch(*state.tables, *velocity.tables, idx, vals,
                           epoch_order(len(vals), config.seed, epoch),
                           config.eta, config.lam, config.gamma, False)
        kernels.loss_terms(*state.tables, idx, vals, config.lam)
    return (time.perf_counter() - t0) / epochs, state


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--entries", type=int, default=50000)
    ap.add_argument("--rank", type=int, default=4)
    ap.add_argument("--epochs", type=int, default=3)
    args = ap.parse_args()

    tensor, _ = synth_tensor((200, 200, 20), 4, args.entries, 0.0, 0)
    parts = split(tensor, (0.7, 0.1, 0.2), 0)
    config = TrainConfig(rank=args.rank)
    results = {}
    for name in _backend.available():
        seconds, state = bench(_backend.get_kernels(name), tensor, parts, config, args.epochs)
        results[name] = (seconds, state)
        print(f"{name:>7}: {seconds * 1e3:9.2f} ms/epoch  "
              f"({len(parts.train) / seconds:,.0f} entry updates/s)")
    if len(results) == 2:
        (t_py, s_py), (t_cy, s_cy) = results["python"], results["cython"]
        same = all(np.array_equal(a, b) for a, b in zip(s_py.tables, s_cy.tables))
        print(f"speedup: {t_py / t_cy:.1f}x   bit-identical states: {same}")


if __name__ == "__main__":
    main()
