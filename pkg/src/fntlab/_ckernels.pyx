# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled dynamic-programming kernels (see _pykernels for the reference)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, INFINITY

cnp.import_array()


cdef inline double _lae(double a, double b) nogil:
    if a == -INFINITY:
        return b
    if b == -INFINITY:
        return a
    if a > b:
        return a + log1p(exp(b - a))
    return b + log1p(exp(a - b))


def transducer_fwd_bwd(logp, targets, Py_ssize_t blank):
    cdef double[:, :, ::1] lp = np.ascontiguousarray(logp, dtype=np.float64)
    cdef cnp.int64_t[::1] y = np.ascontiguousarray(targets, dtype=np.int64)
    cdef Py_ssize_t T = lp.shape[0], U1 = lp.shape[1], K = lp.shape[2]
    cdef Py_ssize_t U = U1 - 1
    alpha_np = np.full((T, U1), -np.inf)
    beta_np = np.full((T, U1), -np.inf)
    grad_np = np.zeros((T, U1, K))
    cdef double[:, ::1] alpha = alpha_np
    cdef double[:, ::1] beta = beta_np
    cdef double[:, :, ::1] grad = grad_np
    cdef Py_ssize_t t, u
    cdef double a, b, loglik, al

    with nogil:
        alpha[0, 0] = 0.0
        for t in range(T):
            for u in range(U1):
                if t == 0 and u == 0:
                    continue
                a = -INFINITY
                b = -INFINITY
                if t > 0:
                    a = alpha[t - 1, u] + lp[t - 1, u, blank]
                if u > 0:
                    b = alpha[t, u - 1] + lp[t, u - 1, y[u - 1]]
                alpha[t, u] = _lae(a, b)
        loglik = alpha[T - 1, U] + lp[T - 1, U, blank]

        for t in range(T - 1, -1, -1):
            for u in range(U, -1, -1):
                if t == T - 1 and u == U:
                    beta[t, u] = lp[t, u, blank]
                    continue
                a = -INFINITY
                b = -INFINITY
                if t < T - 1:
                    a = beta[t + 1, u] + lp[t, u, blank]
                if u < U:
                    b = beta[t, u + 1] + lp[t, u, y[u]]
                beta[t, u] = _lae(a, b)

        if loglik != -INFINITY:
            for t in range(T):
                for u in range(U1):
                    al = alpha[t, u]
                    if al == -INFINITY:
                        continue
                    if t < T - 1:
                        grad[t, u, blank] = -exp(al + lp[t, u, blank] + beta[t + 1, u] - loglik)
                    elif u == U:
                        grad[t, u, blank] = -exp(al + lp[t, u, blank] - loglik)
                    if u < U:
                        grad[t, u, y[u]] = -exp(al + lp[t, u, y[u]] + beta[t, u + 1] - loglik)
    return alpha_np, beta_np, loglik, grad_np


def levenshtein_counts(ref, hyp):
    cdef cnp.int64_t[::1] r = np.ascontiguousarray(ref, dtype=np.int64)
    cdef cnp.int64_t[::1] h = np.ascontiguousarray(hyp, dtype=np.int64)
    cdef Py_ssize_t n = r.shape[0], m = h.shape[0]
    cost_np = np.zeros((n + 1, m + 1), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] cost = cost_np
    cdef Py_ssize_t i, j
    cdef cnp.int64_t sub, dele, ins, c
    cdef long S = 0, I = 0, D = 0
    with nogil:
        for i in range(1, n + 1):
            cost[i, 0] = i
        for j in range(1, m + 1):
            cost[0, j] = j
        for i in range(1, n + 1):
            for j in range(1, m + 1):
                sub = cost[i - 1, j - 1] + (r[i - 1] != h[j - 1])
                dele = cost[i - 1, j] + 1
                ins = cost[i, j - 1] + 1
                c = sub
                if dele < c:
                    c = dele
                if ins < c:
                    c = ins
                cost[i, j] = c
        i = n
        j = m
        while i > 0 or j > 0:
            c = cost[i, j]
            if i > 0 and j > 0 and c == cost[i - 1, j - 1] + (r[i - 1] != h[j - 1]):
                S += r[i - 1] != h[j - 1]
                i -= 1
                j -= 1
            elif i > 0 and c == cost[i - 1, j] + 1:
                D += 1
                i -= 1
            else:
                I += 1
                j -= 1
    return S, I, D
