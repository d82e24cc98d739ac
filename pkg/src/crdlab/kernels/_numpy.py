"""Pure-numpy kernels. Reference path and fallback when numba is unavailable."""

from __future__ import annotations

import math

import numpy as np

LOG2 = math.log(2.0)


# -- predictive dithered quantizer -------------------------------------------


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


def dpcm_reconstruct(q, dither, a, step, beta, prev):
    n = q.shape[0]
    y = np.empty(n)
    for k in range(n):
        prev = a * prev + beta * (q[k] * step - dither[k])
        y[k] = prev
    return y


# -- Elias-gamma bit layer ----------------------------------------------------


def _bit_length(v):
    # exact for uint64 (float log2 is not)
    v = v.astype(np.uint64)
    nb = np.zeros(v.shape, dtype=np.int64)
    w = v.copy()
    for shift in (32, 16, 8, 4, 2, 1):
        big = w >= (np.uint64(1) << np.uint64(shift))
        nb[big] += shift
        w[big] >>= np.uint64(shift)
    return nb + (w > 0)


def gamma_lengths(values):
    return 2 * _bit_length(values) - 1


def gamma_encode(values):
    """Concatenated Elias-gamma codewords as an array of 0/1 bytes."""
    v = values.astype(np.uint64)
    nb = _bit_length(v)
    lens = 2 * nb - 1
    starts = np.concatenate(([0], np.cumsum(lens)[:-1])).astype(np.int64)
    bits = np.zeros(int(lens.sum()), dtype=np.uint8)
    for j in range(int(nb.max(initial=0))):
        m = nb > j
        shift = (nb[m] - 1 - j).astype(np.uint64)
        bits[starts[m] + nb[m] - 1 + j] = ((v[m] >> shift) & np.uint64(1)).astype(np.uint8)
    return bits


def gamma_decode(bits, start, count):
    """Decode up to ``count`` codewords; stops early at the first incomplete one."""
    out = np.zeros(count, dtype=np.uint64)
    pos = int(start)
    total = bits.shape[0]
    ones = np.flatnonzero(bits[pos:]) + pos
    oi = 0
    done = 0
    while done < count:
        while oi < ones.size and ones[oi] < pos:
            oi += 1
        if oi >= ones.size:
            break
        z = int(ones[oi]) - pos
        if z > 63 or pos + 2 * z + 1 > total:
            break
        word = bits[pos + z : pos + 2 * z + 1]
        v = 0
        for b in word:
            v = (v << 1) | int(b)
        out[done] = v
        done += 1
        pos += 2 * z + 1
    return out, done, pos


# -- adaptive context model ----------------------------------------------------


def kt_codelengths(symbols, contexts, alphabet, n_contexts):
    """Sequential Krichevsky-Trofimov codelengths (bits) per sample.

    Counts before time t are occurrence ranks within (context, symbol) and
    within context, which vectorizes the sequential update exactly.
    """
    n = symbols.shape[0]
    if n == 0:
        return np.zeros(0)
    key = contexts.astype(np.int64) * alphabet + symbols.astype(np.int64)
    sym_count = _occurrence_rank(key)
    ctx_count = _occurrence_rank(contexts.astype(np.int64))
    return -np.log2((sym_count + 0.5) / (ctx_count + 0.5 * alphabet))


def _occurrence_rank(key):
    order = np.argsort(key, kind="stable")
    sk = key[order]
    first = np.ones(sk.size, dtype=bool)
    first[1:] = sk[1:] != sk[:-1]
    group_start = np.maximum.accumulate(np.where(first, np.arange(sk.size), 0))
    rank = np.empty(sk.size, dtype=np.float64)
    rank[order] = np.arange(sk.size) - group_start
    return rank


# -- finite-horizon allocation ---------------------------------------------------


def _interp_log(W, loggrid, logp):
    return np.interp(logp, loggrid, W)


def dp_backward(grid, n, a2, s2, lam):
    """Cost-to-go tables ``W[k, j]`` for stage k given previous distortion grid[j]."""
    G = grid.shape[0]
    lg = np.log(grid)
    W = np.zeros((n + 1, G))
    p = a2 * grid + s2
    logp = np.log(p)
    idx = np.searchsorted(grid, p, side="right") - 1
    base = -0.5 * lg / LOG2 + lam * grid
    for k in range(n - 1, 0, -1):
        F = base + W[k + 1]
        pm = np.minimum.accumulate(F)
        cand_grid = np.where(idx >= 0, pm[np.maximum(idx, 0)], np.inf)
        cand_p = -0.5 * logp / LOG2 + lam * p + _interp_log(W[k + 1], lg, logp)
        W[k] = 0.5 * logp / LOG2 + np.minimum(cand_grid, cand_p)
    return W


def dp_forward(grid, W, n, a2, s2, lam, rho0):
    lg = np.log(grid)
    base = -0.5 * lg / LOG2 + lam * grid
    d = np.empty(n)
    p = rho0
    for k in range(n):
        F = base + W[k + 1]
        i = int(np.searchsorted(grid, p, side="right")) - 1
        fp = -0.5 * math.log(p) / LOG2 + lam * p + _interp_log(W[k + 1], lg, math.log(p))
        if i >= 0:
            j = int(np.argmin(F[: i + 1]))
            d[k] = grid[j] if F[j] < fp else p
        else:
            d[k] = p
        p = a2 * d[k] + s2
    return d


def refine_ratios(s, lam, a2, s2, rho0, sweeps, tol):
    """Gauss-Seidel sweeps on ``s_k = d_k / p_k`` for the Lagrangian.

    With every other ratio fixed the total distortion is affine in s_k with
    slope ``p_k * G_k``, so each coordinate has the closed-form minimizer
    ``min(1, c / (lam p_k G_k))``, ``c = 1 / (2 ln 2)``.
    """
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


# -- exhaustive grid oracle --------------------------------------------------------


def brute_force(n, step, rho0, a2, s2, budget):
    """Best grid allocation; returns (sum of stage rates in bits, allocation).

    Candidates per stage are ``{j*step <= p_k} U {p_k}``. The last stage rate
    decreases in d_n, so its best candidate is the largest feasible one.
    """
    eps = 1e-12 * max(budget, 1.0)
    best = [math.inf, None]

    def last_stage(tot, prev, rate, hist):
        p = rho0 if hist.shape[1] == 0 else a2 * prev + s2
        p = np.broadcast_to(p, tot.shape).astype(float)
        room = budget - tot
        d = np.where(p <= room + eps, p, np.floor((room + eps) / step) * step)
        ok = d > 0
        r = rate + 0.5 * np.log2(p / np.where(ok, d, 1.0))
        r = np.where(ok, r, np.inf)
        if r.size:
            j = int(np.argmin(r))
            if r[j] < best[0]:
                best[0] = float(r[j])
                best[1] = np.append(hist[j], d[j])

    def expand(k, tot, prev, rate, hist):
        if k == n - 1:
            last_stage(tot, prev, rate, hist)
            return
        p = np.full(tot.shape, rho0) if k == 0 else a2 * prev + s2
        gmax = int(math.floor((p.max() + eps) / step))
        grid = step * np.arange(1, gmax + 1)
        chunk = max(1, 2_000_000 // max(gmax + 1, 1))
        for lo in range(0, tot.size, chunk):
            sl = slice(lo, lo + chunk)
            pp = p[sl, None]
            cand = np.concatenate([np.broadcast_to(grid, (pp.shape[0], gmax)), pp], axis=1)
            valid = np.concatenate(
                [np.broadcast_to(grid, (pp.shape[0], gmax)) <= pp + eps,
                 np.ones((pp.shape[0], 1), dtype=bool)], axis=1)
            # the last stages each need at least one grid step of distortion
            nt = tot[sl, None] + cand
            valid &= nt + (n - 1 - k) * step <= budget + eps
            rows, cols = np.nonzero(valid)
            if rows.size == 0:
                continue
            dd = cand[rows, cols]
            expand(
                k + 1,
                nt[rows, cols],
                dd,
                rate[sl][rows] + 0.5 * np.log2(pp[rows, 0] / dd),
                np.concatenate([hist[sl][rows], dd[:, None]], axis=1),
            )

    expand(0, np.zeros(1), np.zeros(1), np.zeros(1), np.zeros((1, 0)))
    if best[1] is None:
        return math.inf, np.zeros(0)
    return best[0], best[1]
