"""Finite-difference check of the analytic per-entry gradient.

The reference loss below is written out independently of ``model`` and the
kernels (naive sigmoid, straight-line sums) so a bug shared by those paths
cannot hide itself.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .model import FactorState, point_gradient


def _phi(y):
    return 1.0 / (1.0 + math.exp(-y))


def reference_entry_loss(row_i, row_j, row_k, value, lam):
    pred = sum(_phi(a) * _phi(b) * _phi(c) for a, b, c in zip(row_i, row_j, row_k))
    penalty = sum(_phi(a) ** 2 + _phi(b) ** 2 + _phi(c) ** 2 for a, b, c in zip(row_i, row_j, row_k))
    return 0.5 * (value - pred) ** 2 + 0.5 * lam * penalty


def finite_difference_gradient(row_i, row_j, row_k, value, lam, step=1e-6):
    """Central differences of the reference loss for all 3R parameters."""
    rows = [list(map(float, row_i)), list(map(float, row_j)), list(map(float, row_k))]
    grads = []
    for mode in range(3):
        g = []
        for r in range(len(rows[mode])):
            y0 = rows[mode][r]
            rows[mode][r] = y0 + step
            plus = reference_entry_loss(*rows, value, lam)
            rows[mode][r] = y0 - step
            minus = reference_entry_loss(*rows, value, lam)
            rows[mode][r] = y0
            g.append((plus - minus) / (2 * step))
        grads.append(np.array(g))
    return tuple(grads)


def scaled_error(analytic, numeric, floor=1e-3):
    """|a - n| / max(|a|, |n|, floor): relative error, absolute below ``floor``."""
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    return np.abs(analytic - numeric) / np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)


@dataclass
class GradCheckReport:
    passed: bool
    max_error: float
    n_cases: int
    n_components: int
    tolerance: float
    seconds: float
    worst_case: dict = field(default_factory=dict)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = (f"{status}: max scaled error {self.max_error:.3e} (tol {self.tolerance:.0e}) "
                f"over {self.n_cases} cases / {self.n_components} components "
                f"in {self.seconds:.2f}s")
        if not self.passed:
            text += "\nworst case: " + ", ".join(f"{k}={v}" for k, v in self.worst_case.items())
        return text


def run_grad_check(n_cases=1000, seed=0, max_rank=8, y_scale=3.0, lam_max=0.1,
                   lam_zero=False, gradient=point_gradient, step=1e-6, tol=1e-6, floor=1e-3):
    """Compare ``gradient`` against central finite differences on random cases.

    Each case draws a rank in ``[1, max_rank]``, a small random state with
    parameters uniform on ``[-y_scale, y_scale]``, a target in [0, 1] and
    ``lam`` uniform on ``[0, lam_max]`` (or exactly 0 with ``lam_zero``).
    Components with magnitude below ``floor`` are judged on absolute error
    ``tol * floor``.
    """
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    worst = -1.0
    worst_case = {}
    n_comp = 0
    for case in range(n_cases):
        rank = int(rng.integers(1, max_rank + 1))
        dims = rng.integers(1, 4, size=3)
        state = FactorState(*(rng.uniform(-y_scale, y_scale, (int(d), rank)) for d in dims))
        i, j, k = (int(rng.integers(0, d)) for d in dims)
        value = float(rng.uniform(0.0, 1.0))
        lam = 0.0 if lam_zero else float(rng.uniform(0.0, lam_max))
        entry = (i, j, k, value)
        analytic = gradient(state, entry, lam)
        numeric = finite_difference_gradient(state.y_i[i], state.y_j[j], state.y_k[k], value, lam, step)
        for mode, (ga, gn) in enumerate(zip(analytic, numeric)):
            err = scaled_error(ga, gn, floor)
            n_comp += len(err)
            r = int(np.argmax(err))
            if err[r] > worst:
                worst = float(err[r])
                worst_case = {
                    "case": case, "mode": "ijk"[mode], "component": r, "rank": rank,
                    "entry": entry, "lambda": lam,
                    "y_i": state.y_i[i].tolist(), "y_j": state.y_j[j].tolist(),
                    "y_k": state.y_k[k].tolist(),
                    "analytic": float(ga[r]), "finite_difference": float(gn[r]),
                }
    return GradCheckReport(worst <= tol, worst, n_cases, n_comp, tol,
                           time.perf_counter() - t0, worst_case)


def literal_sign_gradient(state, entry, lam):
    """Gradient with the opposite sign, as the printed momentum update reads.

    Only used to demonstrate that the checker rejects it.
    """
    return tuple(-g for g in point_gradient(state, entry, lam))


VARIANTS = {
    "exact": point_gradient,
    "literal-sign": literal_sign_gradient,
    "raw-y": lambda state, entry, lam: point_gradient(state, entry, lam, reg_mode="raw-y"),
}
