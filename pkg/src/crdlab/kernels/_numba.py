"""numba-compiled kernels mirroring ``_numpy`` operation for operation.

No ``fastmath``: the coder relies on encoder and decoder reproducing the
same floating-point reconstruction bit for bit across both backends.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit

LOG2 = math.log(2.0)


@njit(cache=True)
def dpcm_encode(x, dither, a, step, beta):
    n = x.shape[0]
    q = np.empty(n)
    y = np.empty(n)
    u = np.empty(n)
    prev = 0.0
    for k in range(n):
        uk = x[k] - a * prev
        qk = np.floor((uk + dither[k]) / step + 0.5)
        prev = a * prev + beta * (qk * step - dither[k])
        q[k] = qk
        y[k] = prev
        u[k] = uk
    return q, y, u


@njit(cache=True)
def dpcm_reconstruct(q, dither, a, step, beta, prev):
    n = q.shape[0]
    y = np.empty(n)
    for k in range(n):
        prev = a * prev + beta * (q[k] * step - dither[k])
        y[k] = prev
    return y


@njit(cache=True)
def _bit_length1(v):
    nb = 0
    while v > 0:
        nb += 1
        v >>= np.uint64(1)
    return nb


@njit(cache=True)
def gamma_lengths(values):
    out = np.empty(values.shape[0], dtype=np.int64)
    for i in range(values.shape[0]):
        out[i] = 2 * _bit_length1(np.uint64(values[i])) - 1
    return out


@njit(cache=True)
def gamma_encode(values):
    lens = gamma_lengths(values)
    bits = np.zeros(lens.sum(), dtype=np.uint8)
    pos = 0
    for i in range(values.shape[0]):
        v = np.uint64(values[i])
        nb = (lens[i] + 1) // 2
        pos += nb - 1
        for j in range(nb):
            bits[pos + j] = np.uint8((v >> np.uint64(nb - 1 - j)) & np.uint64(1))
        pos += nb
    return bits


@njit(cache=True)
def gamma_decode(bits, start, count):
    out = np.zeros(count, dtype=np.uint64)
    pos = start
    total = bits.shape[0]
    done = 0
    while done < count:
        z = 0
        while pos + z < total and bits[pos + z] == 0:
            z += 1
        if z > 63 or pos + 2 * z + 1 > total:
            break
        v = np.uint64(0)
        for j in range(z + 1):
            v = (v << np.uint64(1)) | np.uint64(bits[pos + z + j])
        out[done] = v
        done += 1
        pos += 2 * z + 1
    return out, done, pos


@njit(cache=True)
def kt_codelengths(symbols, contexts, alphabet, n_contexts):
    n = symbols.shape[0]
    counts = np.zeros((n_contexts, alphabet))
    totals = np.zeros(n_contexts)
    out = np.empty(n)
    for t in range(n):
        c = contexts[t]
        s = symbols[t]
        out[t] = -math.log2((counts[c, s] + 0.5) / (totals[c] + 0.5 * alphabet))
        counts[c, s] += 1.0
        totals[c] += 1.0
    return out


@njit(cache=True)
def _interp_log(W, lg, x):
    G = lg.shape[0]
    if x <= lg[0]:
        return W[0]
    if x >= lg[G - 1]:
        return W[G - 1]
    # grid is geometric, so log-grid spacing is uniform
    h = (lg[G - 1] - lg[0]) / (G - 1)
    lo = min(int((x - lg[0]) / h), G - 2)
    t = (x - lg[lo]) / (lg[lo + 1] - lg[lo])
    return W[lo] + t * (W[lo + 1] - W[lo])


@njit(cache=True)
def dp_backward(grid, n, a2, s2, lam):
    G = grid.shape[0]
    lg = np.log(grid)
    W = np.zeros((n + 1, G))
    F = np.empty(G)
    pm = np.empty(G)
    # the predictor variance depends only on the grid point, not on the stage
    p = a2 * grid + s2
    lp = np.log(p)
    idx = np.empty(G, dtype=np.int64)
    lo = np.empty(G, dtype=np.int64)
    t = np.empty(G)
    h = (lg[G - 1] - lg[0]) / (G - 1)
    i = -1
    for j in range(G):
        while i + 1 < G and grid[i + 1] <= p[j]:
            i += 1
        idx[j] = i
        if lp[j] <= lg[0]:
            lo[j] = 0
            t[j] = 0.0
        elif lp[j] >= lg[G - 1]:
            lo[j] = G - 2
            t[j] = 1.0
        else:
            lo[j] = min(int((lp[j] - lg[0]) / h), G - 2)
            t[j] = (lp[j] - lg[lo[j]]) / (lg[lo[j] + 1] - lg[lo[j]])
    for k in range(n - 1, 0, -1):
        Wn = W[k + 1]
        for j in range(G):
            F[j] = -0.5 * lg[j] / LOG2 + lam * grid[j] + Wn[j]
        run = np.inf
        for j in range(G):
            if F[j] < run:
                run = F[j]
            pm[j] = run
        for j in range(G):
            cg = pm[idx[j]] if idx[j] >= 0 else np.inf
            wi = Wn[lo[j]] + t[j] * (Wn[lo[j] + 1] - Wn[lo[j]])
            cp = -0.5 * lp[j] / LOG2 + lam * p[j] + wi
            W[k, j] = 0.5 * lp[j] / LOG2 + min(cg, cp)
    return W


@njit(cache=True)
def dp_forward(grid, W, n, a2, s2, lam, rho0):
    G = grid.shape[0]
    lg = np.log(grid)
    d = np.empty(n)
    p = rho0
    for k in range(n):
        lp = math.log(p)
        fp = -0.5 * lp / LOG2 + lam * p + _interp_log(W[k + 1], lg, lp)
        best = np.inf
        bj = -1
        for j in range(G):
            if grid[j] > p:
                break
            f = -0.5 * lg[j] / LOG2 + lam * grid[j] + W[k + 1, j]
            if f < best:
                best = f
                bj = j
        if bj >= 0 and best < fp:
            d[k] = grid[bj]
        else:
            d[k] = p
        p = a2 * d[k] + s2
    return d


@njit(cache=True)
def refine_ratios(s, lam, a2, s2, rho0, sweeps, tol):
    n = s.shape[0]
    c = 0.5 / LOG2
    s = s.copy()
    Gk = np.empty(n)
    for it in range(sweeps):
        Gk[n - 1] = 1.0
        for k in range(n - 2, -1, -1):
            Gk[k] = 1.0 + a2 * s[k + 1] * Gk[k + 1]
        p = rho0
        change = 0.0
        for k in range(n):
            new = min(1.0, c / (lam * p * Gk[k]))
            change = max(change, abs(new - s[k]))
            s[k] = new
            p = a2 * s[k] * p + s2
        if change <= tol:
            return s, it + 1
    return s, sweeps


@njit(cache=True)
def brute_force(n, step, rho0, a2, s2, budget):
    eps = 1e-12 * max(budget, 1.0)
    d = np.zeros(n)
    best_d = np.zeros(n)
    best = np.inf
    idx = np.zeros(n, dtype=np.int64)      # 1..gmax grid points, gmax+1 means d = p
    gmax = np.zeros(n, dtype=np.int64)
    p = np.zeros(n)
    tot = np.zeros(n + 1)
    rate = np.zeros(n + 1)
    if n == 0:
        return best, best_d
    k = 0
    p[0] = rho0
    gmax[0] = int(math.floor((p[0] + eps) / step))
    idx[0] = 0
    while k >= 0:
        if k == n - 1:
            room = budget - tot[k]
            if p[k] <= room + eps:
                dk = p[k]
            else:
                dk = math.floor((room + eps) / step) * step
            if dk > 0:
                r = rate[k] + 0.5 * math.log2(p[k] / dk)
                if r < best:
                    best = r
                    for i in range(k):
                        best_d[i] = d[i]
                    best_d[k] = dk
            k -= 1
            continue
        idx[k] += 1
        if idx[k] > gmax[k] + 1:
            k -= 1
            continue
        if idx[k] <= gmax[k]:
            dk = idx[k] * step
        else:
            dk = p[k]
        if tot[k] + dk + (n - 1 - k) * step > budget + eps:
            if idx[k] <= gmax[k]:
                idx[k] = gmax[k]   # larger grid points are infeasible too
            continue
        d[k] = dk
        tot[k + 1] = tot[k] + dk
        rate[k + 1] = rate[k] + 0.5 * math.log2(p[k] / dk)
        p[k + 1] = a2 * dk + s2
        gmax[k + 1] = int(math.floor((p[k + 1] + eps) / step))
        idx[k + 1] = 0
        k += 1
    return best, best_d
