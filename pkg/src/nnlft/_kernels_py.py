"""Pure-Python kernels, used when the compiled extension is unavailable.

Every routine here mirrors ``_kernels.pyx`` operation for operation so the
two backends produce bit-identical results.  Tables are converted to nested
lists for the duration of a call; element access on lists is several times
cheaper than on numpy arrays.
"""

import math

import numpy as np

NAME = "python"


def sigmoid(a):
    if a >= 0.0:
        return 1.0 / (1.0 + math.exp(-a))
    z = math.exp(a)
    return z / (1.0 + z)


def sigmoid_array(y):
    y = np.asarray(y, dtype=np.float64)
    return np.array([sigmoid(a) for a in y.ravel().tolist()], dtype=np.float64).reshape(y.shape)


def predict_many(yi, yj, yk, idx):
    ti, tj, tk = yi.tolist(), yj.tolist(), yk.tolist()
    rank = yi.shape[1]
    out = []
    for i, j, k in idx.tolist():
        a, b, c = ti[i], tj[j], tk[k]
        acc = 0.0
        for r in range(rank):
            acc += sigmoid(a[r]) * sigmoid(b[r]) * sigmoid(c[r])
        out.append(acc)
    return np.array(out, dtype=np.float64)


def residual_sums(yi, yj, yk, idx, vals):
    """Sum of squared and of absolute residuals, accumulated in entry order."""
    pred = predict_many(yi, yj, yk, idx)
    sq = 0.0
    ab = 0.0
    for a, p in zip(vals.tolist(), pred.tolist()):
        e = a - p
        sq += e * e
        ab += abs(e)
    return sq, ab


def loss_terms(yi, yj, yk, idx, vals, lam):
    """Half squared-error sum and half Tikhonov sum over the given entries."""
    ti, tj, tk = yi.tolist(), yj.tolist(), yk.tolist()
    rank = yi.shape[1]
    data = 0.0
    reg = 0.0
    for (i, j, k), a in zip(idx.tolist(), vals.tolist()):
        ri, rj, rk = ti[i], tj[j], tk[k]
        pred = 0.0
        sq = 0.0
        for r in range(rank):
            pi = sigmoid(ri[r])
            pj = sigmoid(rj[r])
            pk = sigmoid(rk[r])
            pred += pi * pj * pk
            sq += pi * pi + pj * pj + pk * pk
        e = a - pred
        data += e * e
        reg += sq
    return 0.5 * data, 0.5 * lam * reg


def _entry_gradients(ri, rj, rk, a, lam, raw_y, rank):
    pi = [sigmoid(x) for x in ri]
    pj = [sigmoid(x) for x in rj]
    pk = [sigmoid(x) for x in rk]
    pred = 0.0
    for r in range(rank):
        pred += pi[r] * pj[r] * pk[r]
    e = a - pred
    gi, gj, gk = [], [], []
    for r in range(rank):
        if raw_y:
            si, sj, sk = ri[r], rj[r], rk[r]
        else:
            si, sj, sk = pi[r], pj[r], pk[r]
        gi.append((pi[r] * (1.0 - pi[r])) * (lam * si - e * (pj[r] * pk[r])))
        gj.append((pj[r] * (1.0 - pj[r])) * (lam * sj - e * (pi[r] * pk[r])))
        gk.append((pk[r] * (1.0 - pk[r])) * (lam * sk - e * (pi[r] * pj[r])))
    return gi, gj, gk


def sgd_epoch(yi, yj, yk, idx, vals, order, eta, lam, raw_y):
    """Plain per-entry SGD over ``order``; tables are updated in place.

    Returns -1, or the position in ``order`` whose update went non-finite.
    """
    ti, tj, tk = yi.tolist(), yj.tolist(), yk.tolist()
    il, vl = idx.tolist(), vals.tolist()
    rank = yi.shape[1]
    failed = -1
    for pos, n in enumerate(order.tolist()):
        i, j, k = il[n]
        ri, rj, rk = ti[i], tj[j], tk[k]
        gi, gj, gk = _entry_gradients(ri, rj, rk, vl[n], lam, raw_y, rank)
        check = 0.0
        for r in range(rank):
            ri[r] = ri[r] - eta * gi[r]
            rj[r] = rj[r] - eta * gj[r]
            rk[r] = rk[r] - eta * gk[r]
            check += ri[r] + rj[r] + rk[r]
        if not math.isfinite(check):
            failed = pos
            break
    yi[...] = ti
    yj[...] = tj
    yk[...] = tk
    return failed


def msgd_epoch(yi, yj, yk, vi, vj, vk, idx, vals, order, eta, lam, gamma, raw_y):
    """Momentum SGD over ``order``: v = gamma*v + eta*g, then y = y - v."""
    ti, tj, tk = yi.tolist(), yj.tolist(), yk.tolist()
    ui, uj, uk = vi.tolist(), vj.tolist(), vk.tolist()
    il, vl = idx.tolist(), vals.tolist()
    rank = yi.shape[1]
    failed = -1
    for pos, n in enumerate(order.tolist()):
        i, j, k = il[n]
        ri, rj, rk = ti[i], tj[j], tk[k]
        wi, wj, wk = ui[i], uj[j], uk[k]
        gi, gj, gk = _entry_gradients(ri, rj, rk, vl[n], lam, raw_y, rank)
        check = 0.0
        for r in range(rank):
            wi[r] = gamma * wi[r] + eta * gi[r]
            wj[r] = gamma * wj[r] + eta * gj[r]
            wk[r] = gamma * wk[r] + eta * gk[r]
            ri[r] = ri[r] - wi[r]
            rj[r] = rj[r] - wj[r]
            rk[r] = rk[r] - wk[r]
            check += ri[r] + rj[r] + rk[r] + wi[r] + wj[r] + wk[r]
        if not math.isfinite(check):
            failed = pos
            break
    yi[...] = ti
    yj[...] = tj
    yk[...] = tk
    vi[...] = ui
    vj[...] = uj
    vk[...] = uk
    return failed
