# Compiled counterpart of _kernels_py.py.  Keep the floating-point
# operation order identical to the Python version: tests compare the two
# backends bit for bit.

import numpy as np

from libc.math cimport exp, fabs, isfinite
from libc.stdlib cimport free, malloc

NAME = "cython"

ctypedef long long index_t


cdef inline double _sigmoid(double a) noexcept nogil:
    cdef double z
    if a >= 0.0:
        return 1.0 / (1.0 + exp(-a))
    z = exp(a)
    return z / (1.0 + z)


def sigmoid(double a):
    return _sigmoid(a)


def sigmoid_array(y):
    cdef double[::1] flat = np.ascontiguousarray(y, dtype=np.float64).ravel()
    out = np.empty(flat.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    cdef Py_ssize_t n
    for n in range(flat.shape[0]):
        o[n] = _sigmoid(flat[n])
    return out.reshape(np.shape(y))


def predict_many(const double[:, ::1] yi, const double[:, ::1] yj, const double[:, ::1] yk,
                 const index_t[:, ::1] idx):
    cdef Py_ssize_t n, r, rank = yi.shape[1]
    cdef index_t i, j, k
    cdef double acc
    out = np.empty(idx.shape[0], dtype=np.float64)
    cdef double[::1] o = out
    with nogil:
        for n in range(idx.shape[0]):
            i = idx[n, 0]
            j = idx[n, 1]
            k = idx[n, 2]
            acc = 0.0
            for r in range(rank):
                acc += _sigmoid(yi[i, r]) * _sigmoid(yj[j, r]) * _sigmoid(yk[k, r])
            o[n] = acc
    return out


def residual_sums(const double[:, ::1] yi, const double[:, ::1] yj, const double[:, ::1] yk,
                  const index_t[:, ::1] idx, const double[::1] vals):
    cdef double[::1] pred = predict_many(yi, yj, yk, idx)
    cdef double sq = 0.0, ab = 0.0, e
    cdef Py_ssize_t n
    with nogil:
        for n in range(vals.shape[0]):
            e = vals[n] - pred[n]
            sq += e * e
            ab += fabs(e)
    return sq, ab


def loss_terms(const double[:, ::1] yi, const double[:, ::1] yj, const double[:, ::1] yk,
               const index_t[:, ::1] idx, const double[::1] vals, double lam):
    cdef Py_ssize_t n, r, rank = yi.shape[1]
    cdef index_t i, j, k
    cdef double data = 0.0, reg = 0.0, pred, sq, pi, pj, pk, e
    with nogil:
        for n in range(idx.shape[0]):
            i = idx[n, 0]
            j = idx[n, 1]
            k = idx[n, 2]
            pred = 0.0
            sq = 0.0
            for r in range(rank):
                pi = _sigmoid(yi[i, r])
                pj = _sigmoid(yj[j, r])
                pk = _sigmoid(yk[k, r])
                pred += pi * pj * pk
                sq += pi * pi + pj * pj + pk * pk
            e = vals[n] - pred
            data += e * e
            reg += sq
    return 0.5 * data, 0.5 * lam * reg


cdef void _entry_gradients(double[:, ::1] yi, double[:, ::1] yj, double[:, ::1] yk,
                           index_t i, index_t j, index_t k, double a, double lam, bint raw_y,
                           Py_ssize_t rank, double* buf) noexcept nogil:
    # buf layout: pi, pj, pk, gi, gj, gk, each of length rank
    cdef double* pi = buf
    cdef double* pj = buf + rank
    cdef double* pk = buf + 2 * rank
    cdef double* gi = buf + 3 * rank
    cdef double* gj = buf + 4 * rank
    cdef double* gk = buf + 5 * rank
    cdef Py_ssize_t r
    cdef double pred = 0.0, e, si, sj, sk
    for r in range(rank):
        pi[r] = _sigmoid(yi[i, r])
    for r in range(rank):
        pj[r] = _sigmoid(yj[j, r])
    for r in range(rank):
        pk[r] = _sigmoid(yk[k, r])
    for r in range(rank):
        pred += pi[r] * pj[r] * pk[r]
    e = a - pred
    for r in range(rank):
        if raw_y:
            si = yi[i, r]
            sj = yj[j, r]
            sk = yk[k, r]
        else:
            si = pi[r]
            sj = pj[r]
            sk = pk[r]
        gi[r] = (pi[r] * (1.0 - pi[r])) * (lam * si - e * (pj[r] * pk[r]))
        gj[r] = (pj[r] * (1.0 - pj[r])) * (lam * sj - e * (pi[r] * pk[r]))
        gk[r] = (pk[r] * (1.0 - pk[r])) * (lam * sk - e * (pi[r] * pj[r]))


def sgd_epoch(double[:, ::1] yi, double[:, ::1] yj, double[:, ::1] yk,
              const index_t[:, ::1] idx, const double[::1] vals, const index_t[::1] order,
              double eta, double lam, bint raw_y):
    cdef Py_ssize_t rank = yi.shape[1], pos, r
    cdef index_t n, i, j, k
    cdef double check
    cdef Py_ssize_t failed = -1
    cdef double* buf = <double*> malloc(6 * rank * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* gi = buf + 3 * rank
    cdef double* gj = buf + 4 * rank
    cdef double* gk = buf + 5 * rank
    try:
        with nogil:
            for pos in range(order.shape[0]):
                n = order[pos]
                i = idx[n, 0]
                j = idx[n, 1]
                k = idx[n, 2]
                _entry_gradients(yi, yj, yk, i, j, k, vals[n], lam, raw_y, rank, buf)
                check = 0.0
                for r in range(rank):
                    yi[i, r] = yi[i, r] - eta * gi[r]
                    yj[j, r] = yj[j, r] - eta * gj[r]
                    yk[k, r] = yk[k, r] - eta * gk[r]
                    check += yi[i, r] + yj[j, r] + yk[k, r]
                if not isfinite(check):
                    failed = pos
                    break
    finally:
        free(buf)
    return failed


def msgd_epoch(double[:, ::1] yi, double[:, ::1] yj, double[:, ::1] yk,
               double[:, ::1] vi, double[:, ::1] vj, double[:, ::1] vk,
               const index_t[:, ::1] idx, const double[::1] vals, const index_t[::1] order,
               double eta, double lam, double gamma, bint raw_y):
    cdef Py_ssize_t rank = yi.shape[1], pos, r
    cdef index_t n, i, j, k
    cdef double check
    cdef Py_ssize_t failed = -1
    cdef double* buf = <double*> malloc(6 * rank * sizeof(double))
    if buf == NULL:
        raise MemoryError()
    cdef double* gi = buf + 3 * rank
    cdef double* gj = buf + 4 * rank
    cdef double* gk = buf + 5 * rank
    try:
        with nogil:
            for pos in range(order.shape[0]):
                n = order[pos]
                i = idx[n, 0]
                j = idx[n, 1]
                k = idx[n, 2]
                _entry_gradients(yi, yj, yk, i, j, k, vals[n], lam, raw_y, rank, buf)
                check = 0.0
                for r in range(rank):
                    vi[i, r] = gamma * vi[i, r] + eta * gi[r]
                    vj[j, r] = gamma * vj[j, r] + eta * gj[r]
                    vk[k, r] = gamma * vk[k, r] + eta * gk[r]
                    yi[i, r] = yi[i, r] - vi[i, r]
                    yj[j, r] = yj[j, r] - vj[j, r]
                    yk[k, r] = yk[k, r] - vk[k, r]
                    check += yi[i, r] + yj[j, r] + yk[k, r] + vi[i, r] + vj[j, r] + vk[k, r]
                if not isfinite(check):
                    failed = pos
                    break
    finally:
        free(buf)
    return failed
