"""Pure-Python versions of the dynamic-programming kernels.

Same signatures and results as the compiled ``_ckernels`` module; used when
the extension is not built or ``FNTLAB_PURE_PYTHON=1`` is set.
"""

import math

import numpy as np

NEG_INF = float("-inf")


def _lae(a, b):
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a > b:
        return a + math.log1p(math.exp(b - a))
    return b + math.log1p(math.exp(a - b))


def transducer_fwd_bwd(logp, targets, blank):
    """Forward-backward over one lattice.

    ``logp`` is float64 [T, U+1, K], ``targets`` int64 [U]. Returns
    ``(alpha, beta, loglik, grad)`` where ``grad`` is d(-loglik)/d(logp).
    """
    logp = np.ascontiguousarray(logp, dtype=np.float64)
    targets = np.ascontiguousarray(targets, dtype=np.int64)
    T, U1, K = logp.shape
    U = U1 - 1
    blank_lp = logp[:, :, blank].tolist()
    if U > 0:
        emit_lp = logp[:, np.arange(U), targets].tolist()
    else:
        emit_lp = [[] for _ in range(T)]

    alpha = [[NEG_INF] * U1 for _ in range(T)]
    alpha[0][0] = 0.0
    for t in range(T):
        row = alpha[t]
        prev = alpha[t - 1] if t else None
        bprev = blank_lp[t - 1] if t else None
        erow = emit_lp[t]
        for u in range(U1):
            if t == 0 and u == 0:
                continue
            a = prev[u] + bprev[u] if t else NEG_INF
            b = row[u - 1] + erow[u - 1] if u else NEG_INF
            row[u] = _lae(a, b)
    loglik = alpha[T - 1][U] + blank_lp[T - 1][U]

    beta = [[NEG_INF] * U1 for _ in range(T)]
    for t in range(T - 1, -1, -1):
        row = beta[t]
        nxt = beta[t + 1] if t < T - 1 else None
        brow = blank_lp[t]
        erow = emit_lp[t]
        for u in range(U, -1, -1):
            if t == T - 1 and u == U:
                row[u] = brow[u]
                continue
            a = nxt[u] + brow[u] if t < T - 1 else NEG_INF
            b = row[u + 1] + erow[u] if u < U else NEG_INF
            row[u] = _lae(a, b)

    grad = np.zeros((T, U1, K))
    if loglik == NEG_INF:
        return np.array(alpha), np.array(beta), loglik, grad
    exp = math.exp
    for t in range(T):
        for u in range(U1):
            al = alpha[t][u]
            if al == NEG_INF:
                continue
            if t < T - 1:
                grad[t, u, blank] = -exp(al + blank_lp[t][u] + beta[t + 1][u] - loglik)
            elif u == U:
                grad[t, u, blank] = -exp(al + blank_lp[t][u] - loglik)
            if u < U:
                grad[t, u, targets[u]] = -exp(al + emit_lp[t][u] + beta[t][u + 1] - loglik)
    return np.array(alpha), np.array(beta), loglik, grad


def levenshtein_counts(ref, hyp):
    """Unit-cost alignment; returns ``(S, I, D)``.

    Backtrace prefers substitution/match, then deletion, then insertion.
    """
    ref = list(ref)
    hyp = list(hyp)
    n, m = len(ref), len(hyp)
    cost = [[0] * (m + 1) for _ in range(n + 1)]
    for i in range(1, n + 1):
        cost[i][0] = i
    for j in range(1, m + 1):
        cost[0][j] = j
    for i in range(1, n + 1):
        ci, cp = cost[i], cost[i - 1]
        r = ref[i - 1]
        for j in range(1, m + 1):
            sub = cp[j - 1] + (r != hyp[j - 1])
            dele = cp[j] + 1
            ins = ci[j - 1] + 1
            ci[j] = min(sub, dele, ins)
    S = I = D = 0
    i, j = n, m
    while i > 0 or j > 0:
        c = cost[i][j]
        if i > 0 and j > 0 and c == cost[i - 1][j - 1] + (ref[i - 1] != hyp[j - 1]):
            S += ref[i - 1] != hyp[j - 1]
            i -= 1
            j -= 1
        elif i > 0 and c == cost[i - 1][j] + 1:
            D += 1
            i -= 1
        else:
            I += 1
            j -= 1
    return S, I, D
