"""Process constructions on linear-Gaussian block channels.

Block replication drives a stationary source through independent copies of
one causal block channel. Random-shift stationarization mixes the windows of
the replicated pair over a uniform phase T, and concatenation prepends a
short head pair built from the source pre-samples. Everything stays
second-order: each mixture component is an ordinary Gaussian model, and
mixture-level information is always taken conditionally on T.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import block_diag, toeplitz

from .gauss import (
    DEFAULT_TOL,
    ArSourceModel,
    CovarianceMatrix,
    IndexLike,
    JointProcessModel,
    as_index_set,
    channel_model,
    conditional_mutual_information,
    joint_stationarity_audit,
    logdet,
    markov_chain_check,
    mutual_information,
)
from .report import AuditReport, Check, fmt

MI_TOL = 1e-9
QJS_SLACK = 1e-6


@dataclass(frozen=True, eq=False)
class BlockChannel:
    """``y = C x + v`` on one block, ``C`` lower triangular, ``v ~ N(0, noise_cov)``."""

    n: int
    gain: np.ndarray
    noise_cov: np.ndarray

    def __post_init__(self):
        G = np.atleast_2d(np.asarray(self.gain, dtype=float))
        N = CovarianceMatrix(np.atleast_2d(np.asarray(self.noise_cov, dtype=float))).entries
        if G.shape != (self.n, self.n) or N.shape != (self.n, self.n):
            raise ValueError(f"gain and noise_cov must be {self.n}x{self.n}")
        if np.any(np.triu(G, 1) != 0):
            raise ValueError("gain must be lower triangular (row i may only use x(1..i))")
        object.__setattr__(self, "gain", G)
        object.__setattr__(self, "noise_cov", N)

    @classmethod
    def memoryless(cls, n: int, gain: float = 1.0, noise_var: float = 1.0) -> "BlockChannel":
        return cls(n, gain * np.eye(n), noise_var * np.eye(n))

    def to_dict(self) -> dict:
        return {"n": self.n, "gain": self.gain, "noise_cov": self.noise_cov}

    @classmethod
    def from_dict(cls, d: dict) -> "BlockChannel":
        return cls(int(d["n"]), np.asarray(d["gain"], dtype=float),
                   np.asarray(d["noise_cov"], dtype=float))


@dataclass(frozen=True, eq=False)
class ReplicatedModel:
    """Stationary source through L independent uses of one block channel.

    Times are 1-based; block b covers ``(b-1) n + 1 .. b n``. The source is
    the stationary two-sided process, so x is available before time 1.
    """

    base: ArSourceModel
    channel: BlockChannel
    blocks: int

    @property
    def n(self) -> int:
        return self.channel.n

    @property
    def length(self) -> int:
        return self.blocks * self.channel.n

    def window(self, first: int, last: int, lead: int = 0, label: str = "") -> JointProcessModel:
        """Law of ``x(first-lead..last), y(first..last)`` relabelled to start at 1."""
        if not 1 <= first <= last <= self.length:
            raise ValueError(f"window {first}..{last} outside 1..{self.length}")
        n = self.n
        b0 = (first - 1) // n
        b1 = (last - 1) // n
        lo = min(first - lead, b0 * n + 1)
        hi = (b1 + 1) * n
        R = toeplitz(self.base.autocovariances(hi - lo + 1))
        nb = b1 - b0 + 1
        G = block_diag(*([self.channel.gain] * nb))
        N = block_diag(*([self.channel.noise_cov] * nb))
        cols = np.arange(b0 * n + 1, (b1 + 1) * n + 1) - lo    # x of the touched blocks
        ysel = np.arange(first, last + 1) - (b0 * n + 1)
        xsel = np.arange(first - lead, last + 1) - lo
        Gs = G[ysel]
        Kxx = R[np.ix_(xsel, xsel)]
        Kyx = Gs @ R[np.ix_(cols, xsel)]
        Kyy = Gs @ R[np.ix_(cols, cols)] @ Gs.T + N[np.ix_(ysel, ysel)]
        S = np.block([[Kxx, Kyx.T], [Kyx, Kyy]])
        return JointProcessModel(last - first + 1, CovarianceMatrix(0.5 * (S + S.T)),
                                 label or f"replicated[{first}..{last}]", self.base, lead)

    @property
    def joint(self) -> JointProcessModel:
        return self.window(1, self.length)

    def block_mi(self) -> float:
        """``I(x; y)`` of a single block."""
        m = self.window(1, self.n)
        return mutual_information(m, m.x(1, self.n), m.y(1, self.n))


def replicate_blocks(base: ArSourceModel, channel: BlockChannel, L: int) -> ReplicatedModel:
    if L < 1 or channel.n < 1:
        raise ValueError("need L >= 1 and a non-empty block")
    return ReplicatedModel(base, channel, int(L))


def verify_block_identities(r: ReplicatedModel, tol: float = MI_TOL) -> AuditReport:
    """Per-block information equality, block conditional independence and
    the per-sample bound ``I(x^{ln}; y^{ln}) / (l n) <= I(block) / n``."""
    n, L = r.n, r.blocks
    J = r.joint
    rep = AuditReport("constructions.block_identities")
    mis = [mutual_information(J, J.x(b * n + 1, (b + 1) * n), J.y(b * n + 1, (b + 1) * n))
           for b in range(L)]
    spread = max(mis) - min(mis)
    rep.add(Check.leq("block_mi_equal_across_blocks", spread, tol,
                      detail=f"I(block)={fmt(mis[0])}"))
    for b in range(L):
        own = J.x(b * n + 1, (b + 1) * n)
        rest = J.x(1, b * n) | J.x((b + 1) * n + 1, L * n) | J.y(1, b * n) | J.y((b + 1) * n + 1, L * n)
        if len(rest):
            cert = markov_chain_check(J, J.y(b * n + 1, (b + 1) * n), own, rest, DEFAULT_TOL)
            rep.add(Check.leq("y_block_independent_given_own_x_block", cert.residual, cert.tolerance,
                              detail=f"block={b + 1}"))
    per_block = mis[0] / n
    for ell in range(1, L + 1):
        lhs = mutual_information(J, J.x(1, ell * n), J.y(1, ell * n)) / (ell * n)
        rep.add(Check.leq("blocks_rate_at_most_single_block_rate", lhs, per_block + tol,
                          detail=f"l={ell}"))
    return rep


def kappa_lagged_causality_audit(r: ReplicatedModel, kappa: int, tol: float = DEFAULT_TOL,
                                 max_offset: int | None = None) -> AuditReport:
    """``x(m+k+1..) <-> x(m+2-kappa..m+k) <-> y(m+1..m+k)`` over the replicated horizon."""
    J = r.joint
    N = J.horizon
    rep = AuditReport("constructions.kappa_lagged_causality")
    top = N - 1 if max_offset is None else min(N - 1, max_offset)
    for m in range(0, top):
        for k in range(1, N - m):
            cert = markov_chain_check(J, J.x(m + k + 1, N), J.x(max(1, m + 2 - kappa), m + k),
                                      J.y(m + 1, m + k), tol)
            rep.add(Check.leq("future_x_independent_of_recent_y", cert.residual, tol,
                              detail=f"m={m},k={k}"))
    return rep


# ---------------------------------------------------------------------------
# Random-shift stationarization
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ShiftMixtureModel:
    """Uniform mixture over the phase T = 0..n-1 of replicated-pair windows.

    Component t is the law of ``(x, y)`` on times ``n+1+t .. n+t+window``,
    carrying ``lead`` extra x samples in front.
    """

    n: int
    window: int
    lead: int
    components: tuple[JointProcessModel, ...]
    source: ReplicatedModel = field(repr=False)

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.n, 1.0 / self.n)

    def phase(self, t: int, k: int) -> int:
        """Block phase of local time k in component t."""
        return (self.n + t + k - 1) % self.n

    def window_covariance(self, k: int, length: int) -> np.ndarray:
        """Mixture covariance of ``(x(k..k+length-1), y(k..k+length-1))``."""
        mats = [_window(c, k, length) for c in self.components]
        return np.sum(mats, axis=0) / self.n


def _window(m: JointProcessModel, k: int, length: int) -> np.ndarray:
    return m.block(m.x(k, k + length - 1) | m.y(k, k + length - 1))


def shift_stationarize(r: ReplicatedModel, window: int, lead: int = 0) -> ShiftMixtureModel:
    n = r.n
    need = window + 2 * n
    if r.length < need:
        raise ValueError(f"replicated horizon {r.length} too short: need blocks*n >= {need} "
                         f"(at least {math.ceil(need / n)} blocks)")
    comps = tuple(r.window(n + 1 + t, n + t + window, lead, label=f"shift t={t}") for t in range(n))
    return ShiftMixtureModel(n, window, lead, comps, r)


@dataclass(frozen=True)
class MixtureStationarity:
    covariance_residual: float
    multiset_residual: float
    tolerance: float

    @property
    def holds(self) -> bool:
        return max(self.covariance_residual, self.multiset_residual) <= self.tolerance


def mixture_stationarity(s: ShiftMixtureModel, length: int, tol: float = MI_TOL
                         ) -> MixtureStationarity:
    """Shift invariance of the mixture's windows of a given length.

    Two criteria: the averaged covariances agree across window starts, and
    the component window laws agree as multisets (matched by block phase),
    which is complete for uniform finite Gaussian mixtures.
    """
    starts = range(1, s.window - length + 2)
    if len(starts) < 2:
        raise ValueError("window too long to compare shifts")
    cov = joint_stationarity_audit([s.window_covariance(k, length) for k in starts], tol)
    ref = None
    multi = 0.0
    for k in starts:
        by_phase = sorted(range(s.n), key=lambda t: s.phase(t, k))
        mats = np.stack([_window(s.components[t], k, length) for t in by_phase])
        if ref is None:
            ref = mats
        else:
            multi = max(multi, float(np.max(np.abs(mats - ref))))
    return MixtureStationarity(cov.residual, multi, tol)


@dataclass(frozen=True)
class MixtureMiBound:
    m: int
    conditional_mi: float
    per_sample: float
    block_mi: float
    bound: float
    check: Check


def mixture_conditional_mi(s: ShiftMixtureModel, m: int, tol: float = MI_TOL) -> MixtureMiBound:
    """``I(x(1..m); y(1..m) | T)`` and its bound ``(1/n + 2/m) I(block)`` per sample."""
    if not 1 <= m <= s.window:
        raise ValueError(f"m must lie in 1..{s.window}")
    parts = [mutual_information(c, c.x(1, m), c.y(1, m)) for c in s.components]
    cmi = math.fsum(parts) / s.n
    blk = s.source.block_mi()
    bound = (1.0 / s.n + 2.0 / m) * blk
    chk = Check.leq("windowed_rate_below_block_rate_plus_edge", cmi / m, bound + tol,
                    detail=f"m={m}")
    return MixtureMiBound(m, cmi, cmi / m, blk, bound, chk)


# ---------------------------------------------------------------------------
# First-samples concatenation
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ConcatenatedModel:
    """Head pair on the kappa-1 source pre-samples followed by the tail pair.

    ``components`` hold the laws of the concatenated pair for each tail
    component (a single one for a plain tail), on horizon ``kappa-1+window``.
    """

    kappa: int
    head: JointProcessModel | None
    head_channel: BlockChannel | None
    components: tuple[JointProcessModel, ...]
    tail_mi: float

    @property
    def horizon(self) -> int:
        return self.components[0].horizon

    def head_mi(self) -> float:
        if self.head is None:
            return 0.0
        h = self.head.horizon
        return mutual_information(self.head, self.head.x(1, h), self.head.y(1, h))


def default_head_channel(kappa: int) -> BlockChannel:
    """``y = x + v`` with unit-variance noise on the kappa-1 head samples."""
    return BlockChannel.memoryless(kappa - 1, 1.0, 1.0)


def _tail_components(tail) -> tuple[tuple[JointProcessModel, ...], float]:
    if isinstance(tail, ShiftMixtureModel):
        return tail.components, tail.source.block_mi()
    if isinstance(tail, JointProcessModel):
        n = tail.horizon
        # excess dependence of y on the pre-samples plays the block term's role
        extra = (conditional_mutual_information(tail, tail.x_past, tail.y(1, n), tail.x(1, n))
                 if tail.past else 0.0)
        return (tail,), extra
    raise TypeError("tail must be a ShiftMixtureModel or JointProcessModel")


def concatenate_first_samples(tail, head_channel: BlockChannel | None = None,
                              kappa: int = 1) -> ConcatenatedModel:
    """Prepend ``(x_hat, y_hat)``: x_hat is the tail's kappa-1 pre-samples,
    y_hat is produced from x_hat alone by ``head_channel``."""
    comps, tail_mi = _tail_components(tail)
    if kappa <= 1:
        return ConcatenatedModel(kappa, None, None, comps, tail_mi)
    h = kappa - 1
    if head_channel is None:
        head_channel = default_head_channel(kappa)
    if head_channel.n != h:
        raise ValueError(f"head channel must have length kappa-1 = {h}")
    if any(c.past < h for c in comps):
        raise ValueError(f"tail must carry at least kappa-1 = {h} pre-samples")
    H, Nh = head_channel.gain, head_channel.noise_cov
    out = []
    for c in comps:
        n = c.horizon
        X = c.x(1 - h, n)
        Kx = c.block(X)
        Kyx = c.block(c.y(1, n), X)
        Kyy = c.block(c.y(1, n))
        Kxhat = Kx[:h]                         # rows of the pre-samples
        Cyhat_x = H @ Kxhat                    # cov(y_hat, x)
        Cyhat_y = H @ Kyx[:, :h].T             # cov(y_hat, y_tail)
        Cyhat = H @ Kx[:h, :h] @ H.T + Nh
        Ky = np.block([[Cyhat, Cyhat_y], [Cyhat_y.T, Kyy]])
        Kyx_all = np.vstack([Cyhat_x, Kyx])
        S = np.block([[Kx, Kyx_all.T], [Kyx_all, Ky]])
        out.append(JointProcessModel(h + n, CovarianceMatrix(0.5 * (S + S.T)),
                                     f"concatenated[{c.label}]", c.source))
    src = comps[0].source
    head = None
    if src is not None:
        head = channel_model(src, h, H, Nh, label="head")
    else:
        Kh = out[0].block(out[0].x(1, h) | out[0].y(1, h))
        head = JointProcessModel(h, CovarianceMatrix(Kh), "head")
    return ConcatenatedModel(kappa, head, head_channel, tuple(out), tail_mi)


@dataclass(frozen=True)
class QjsGap:
    horizon: int
    full_mi: float
    tail_mi: float
    gap: float
    bound: float


def qjs_audit(c: ConcatenatedModel, horizons: Sequence[int], slack: float = QJS_SLACK
              ) -> tuple[list[QjsGap], AuditReport]:
    """``g_i = |I(x(1..i); y(1..i) | T) - I(x(k..i); y(k..i) | T)| / i`` with k = kappa.

    Each gap is bounded by ``(I(head) + I(block) + slack) / i``.
    """
    hs = [int(h) for h in horizons]
    if any(b <= a for a, b in zip(hs, hs[1:])):
        raise ValueError("horizons must be increasing")
    k0 = max(c.kappa, 1)
    if hs and (hs[0] < k0 or hs[-1] > c.horizon):
        raise ValueError(f"horizons must lie in {k0}..{c.horizon}")
    budget = c.head_mi() + c.tail_mi + slack
    rows = []
    rep = AuditReport("constructions.qjs")
    for i in hs:
        full = math.fsum(mutual_information(m, m.x(1, i), m.y(1, i)) for m in c.components)
        late = math.fsum(mutual_information(m, m.x(k0, i), m.y(k0, i)) for m in c.components)
        full /= len(c.components)
        late /= len(c.components)
        g = abs(full - late) / i
        rows.append(QjsGap(i, full, late, g, budget / i))
        rep.add(Check.leq("first_samples_gap_bounded", g * i, budget, detail=f"i={i}"))
    return rows, rep


# ---------------------------------------------------------------------------
# Conditionally independent copies and distortion
# ---------------------------------------------------------------------------


def conditionally_independent_copy(m: JointProcessModel, A: IndexLike, B: IndexLike,
                                   C: IndexLike, tol: float = DEFAULT_TOL) -> JointProcessModel:
    """Replace A by a copy drawn from the law of A given B alone.

    ``(A_new, B)`` keeps the law of ``(A, B)``, and the cross-covariance of
    ``A_new`` with every index outside ``A U B`` (in particular with C) is
    ``Sigma_AB Sigma_B^{-1} Sigma_B.``, so ``A_new <-> B <-> C`` holds.
    """
    A, B, C = as_index_set(A), as_index_set(B), as_index_set(C)
    S = m.sigma.entries
    dim = S.shape[0]
    a, b = A.zero_based, B.zero_based
    if not len(A) or not len(B) or not len(C):
        raise ValueError("A, B and C must be non-empty")
    if set(a) & set(b) or set(a) & set(C.zero_based) or set(b) & set(C.zero_based):
        raise ValueError("index sets must be disjoint")
    logdet(S[np.ix_(b, b)], "Sigma_B")
    rest = np.setdiff1d(np.arange(dim), np.concatenate([a, b]))
    proj = np.linalg.solve(S[np.ix_(b, b)], S[np.ix_(b, a)]).T     # Sigma_AB Sigma_B^{-1}
    out = S.copy()
    new = proj @ S[np.ix_(b, rest)]
    out[np.ix_(a, rest)] = new
    out[np.ix_(rest, a)] = new.T
    res = JointProcessModel(m.horizon, CovarianceMatrix(out), f"ci-copy[{m.label}]",
                            m.source, m.past)
    cert = markov_chain_check(res, A, B, C, tol)
    if not cert.holds:  # pragma: no cover - guaranteed by construction
        raise ArithmeticError(f"copy failed its Markov certificate (residual {cert.residual:.3g})")
    return res


def mean_squared_error(m: JointProcessModel) -> float:
    """``(1/n) sum E[(x(k) - y(k))^2]``."""
    n = m.horizon
    xs, ys = m.x(1, n).zero_based, m.y(1, n).zero_based
    S = m.sigma.entries
    return float(np.mean(S[xs, xs] + S[ys, ys] - 2 * S[xs, ys]))


def distortion_check(m: JointProcessModel, D: float, slack: float = 1e-10) -> Check:
    """Average per-letter MSE within the budget D."""
    return Check.leq("average_mse_within_budget", mean_squared_error(m), D + slack,
                     detail=f"D={fmt(D)}")
