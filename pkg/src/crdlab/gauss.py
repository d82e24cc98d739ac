"""Second-order algebra for jointly Gaussian source/reconstruction pairs.

Everything here is exact linear algebra on covariance matrices: stationary
autocovariances of AR sources, mutual information from log-determinants,
and Markov-chain / stationarity certificates from conditional covariances.
All information quantities are in bits.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Sequence, Union

import numpy as np
from scipy.linalg import toeplitz

LN2 = math.log(2.0)
PIVOT_FLOOR = 1e-13
MI_SLACK = 1e-10
DEFAULT_TOL = 1e-8


class UnstableModelError(ValueError):
    pass


class SingularCovarianceError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Sources and covariance containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ArSourceModel:
    """Scalar stationary AR source ``x(k) = sum_i a_i x(k-i) + w(k)``."""

    coeffs: tuple[float, ...]
    innovation_variance: float = 1.0

    def __post_init__(self):
        coeffs = tuple(float(c) for c in np.atleast_1d(np.asarray(self.coeffs, dtype=float)))
        object.__setattr__(self, "coeffs", coeffs)
        s2 = float(self.innovation_variance)
        object.__setattr__(self, "innovation_variance", s2)
        if not all(math.isfinite(c) for c in coeffs) or not math.isfinite(s2):
            raise ValueError("AR parameters must be finite")
        if s2 <= 0:
            raise ValueError("innovation variance must be positive")
        roots = self.characteristic_roots
        if roots.size and np.max(np.abs(roots)) >= 1.0:
            raise UnstableModelError(
                f"AR recursion is not strictly stable: max |root| = {np.max(np.abs(roots)):.6g} >= 1"
            )

    @property
    def order(self) -> int:
        nz = [i for i, c in enumerate(self.coeffs) if c != 0.0]
        return nz[-1] + 1 if nz else 0

    @property
    def a(self) -> np.ndarray:
        return np.array(self.coeffs[: self.order], dtype=float)

    @property
    def characteristic_roots(self) -> np.ndarray:
        a = self.coeffs[: self.order]
        if not a:
            return np.zeros(0)
        return np.roots(np.concatenate(([1.0], -np.asarray(a))))

    @cached_property
    def _yule_walker(self) -> np.ndarray:
        k = self.order
        a = self.a
        if k == 0:
            return np.array([self.innovation_variance])
        # unknowns r_0..r_k; r_t - sum_i a_i r_|t-i| = s2 * [t == 0]
        M = np.eye(k + 1)
        for t in range(k + 1):
            for i in range(1, k + 1):
                M[t, abs(t - i)] -= a[i - 1]
        rhs = np.zeros(k + 1)
        rhs[0] = self.innovation_variance
        return np.linalg.solve(M, rhs)

    def autocovariances(self, n: int) -> np.ndarray:
        """First ``n`` stationary autocovariances rho_0..rho_{n-1}."""
        if n < 0:
            raise ValueError("n must be non-negative")
        k = self.order
        base = self._yule_walker
        out = np.zeros(n)
        m = min(n, k + 1)
        out[:m] = base[:m]
        a = self.a
        for t in range(k + 1, n):
            out[t] = np.dot(a, out[t - k : t][::-1])
        return out

    @property
    def stationary_variance(self) -> float:
        return float(self._yule_walker[0])

    def to_dict(self) -> dict:
        return {
            "type": "ar",
            "coeffs": list(self.coeffs),
            "innovation_variance": self.innovation_variance,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ArSourceModel":
        if d.get("type", "ar") != "ar":
            raise ValueError(f"unsupported model type {d.get('type')!r}")
        return cls(tuple(d["coeffs"]), float(d["innovation_variance"]))


def autocovariance(model: ArSourceModel, lag: int) -> float:
    if lag < 0:
        raise ValueError("lag must be non-negative")
    return float(model.autocovariances(lag + 1)[lag])


@dataclass(frozen=True, eq=False)
class CovarianceMatrix:
    entries: np.ndarray

    def __post_init__(self):
        S = np.array(self.entries, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
            raise ValueError("covariance must be a non-empty square matrix")
        if not np.all(np.isfinite(S)):
            raise ValueError("covariance entries must be finite")
        scale = max(np.max(np.abs(S)), np.finfo(float).tiny)
        if np.max(np.abs(S - S.T)) > 1e-12 * scale:
            raise ValueError("covariance is not symmetric")
        S = 0.5 * (S + S.T)
        ev = np.linalg.eigvalsh(S)
        if ev[0] < -1e-10 * max(ev[-1], 0.0):
            raise ValueError(f"covariance is not PSD (min eigenvalue {ev[0]:.3g})")
        S.setflags(write=False)
        object.__setattr__(self, "entries", S)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def to_dict(self) -> dict:
        return {"dim": self.dim, "entries": self.entries.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "CovarianceMatrix":
        S = np.asarray(d["entries"], dtype=float)
        if S.shape != (int(d["dim"]), int(d["dim"])):
            raise ValueError("entries do not match declared dim")
        return cls(S)


def toeplitz_covariance(model: ArSourceModel, n: int) -> CovarianceMatrix:
    if n < 1:
        raise ValueError("n must be at least 1")
    return CovarianceMatrix(toeplitz(model.autocovariances(n)))


@dataclass(frozen=True)
class IndexSet:
    """Strictly increasing 1-based positions into a model's layout."""

    indices: tuple[int, ...]

    def __post_init__(self):
        idx = tuple(int(i) for i in self.indices)
        if any(i < 1 for i in idx):
            raise ValueError("positions are 1-based")
        if any(b <= a for a, b in zip(idx, idx[1:])):
            raise ValueError("positions must be strictly increasing")
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return len(self.indices)

    def __iter__(self):
        return iter(self.indices)

    def __or__(self, other: "IndexSet") -> "IndexSet":
        other = as_index_set(other)
        if set(self.indices) & set(other.indices):
            raise ValueError("index sets overlap")
        return IndexSet(tuple(sorted(self.indices + other.indices)))

    @property
    def zero_based(self) -> np.ndarray:
        return np.asarray(self.indices, dtype=int) - 1


EMPTY = IndexSet(())
IndexLike = Union[IndexSet, Sequence[int]]


def as_index_set(idx: IndexLike) -> IndexSet:
    return idx if isinstance(idx, IndexSet) else IndexSet(tuple(idx))


@dataclass(frozen=True, eq=False)
class JointProcessModel:
    """Finite-horizon jointly Gaussian pair ``(x, y)`` as one covariance.

    Layout is ``x(1-past)..x(n), y(1)..y(n)``; with ``past = 0`` this is
    the plain ``2n`` layout. Pre-samples ``x(k <= 0)`` only matter for the
    strong (two-sided) causality audit.
    """

    horizon: int
    sigma: CovarianceMatrix
    label: str = ""
    source: ArSourceModel | None = None
    past: int = 0

    def __post_init__(self):
        if not isinstance(self.sigma, CovarianceMatrix):
            object.__setattr__(self, "sigma", CovarianceMatrix(self.sigma))
        if self.horizon < 1 or self.past < 0:
            raise ValueError("horizon must be >= 1 and past >= 0")
        if self.sigma.dim != self.past + 2 * self.horizon:
            raise ValueError(
                f"sigma has dim {self.sigma.dim}, layout needs {self.past + 2 * self.horizon}"
            )
        if self.source is not None:
            nx = self.past + self.horizon
            Kx = self.sigma.entries[:nx, :nx]
            ref = toeplitz(self.source.autocovariances(nx))
            if np.max(np.abs(Kx - ref)) > 1e-9 * max(1.0, ref[0, 0]):
                raise ValueError("x-marginal does not match the attached source law")

    @property
    def dim(self) -> int:
        return self.sigma.dim

    @property
    def n(self) -> int:
        return self.horizon

    def x(self, first: int, last: int | None = None) -> IndexSet:
        last = first if last is None else last
        if first > last:
            return EMPTY
        if first < 1 - self.past or last > self.horizon:
            raise IndexError(f"x({first}..{last}) outside model range")
        return IndexSet(tuple(range(first + self.past, last + self.past + 1)))

    def y(self, first: int, last: int | None = None) -> IndexSet:
        last = first if last is None else last
        if first > last:
            return EMPTY
        if first < 1 or last > self.horizon:
            raise IndexError(f"y({first}..{last}) outside model range")
        off = self.past + self.horizon
        return IndexSet(tuple(range(first + off, last + off + 1)))

    @property
    def x_past(self) -> IndexSet:
        return IndexSet(tuple(range(1, self.past + 1)))

    def block(self, A: IndexLike, B: IndexLike | None = None) -> np.ndarray:
        a = as_index_set(A).zero_based
        b = a if B is None else as_index_set(B).zero_based
        return self.sigma.entries[np.ix_(a, b)]

    def to_dict(self) -> dict:
        d = {"horizon": self.horizon, "past": self.past, "label": self.label}
        d.update(self.sigma.to_dict())
        if self.source is not None:
            d["source"] = self.source.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "JointProcessModel":
        sigma = CovarianceMatrix.from_dict(d)
        past = int(d.get("past", 0))
        horizon = int(d.get("horizon", (sigma.dim - past) // 2))
        source = ArSourceModel.from_dict(d["source"]) if "source" in d else None
        return cls(horizon, sigma, d.get("label", ""), source, past)


def load_json(path: str | Path):
    """Load an AR model, joint model, or bare covariance from a JSON document."""
    d = json.loads(Path(path).read_text())
    if d.get("type") == "ar":
        return ArSourceModel.from_dict(d)
    if "horizon" in d or "past" in d:
        return JointProcessModel.from_dict(d)
    if "entries" in d:
        return CovarianceMatrix.from_dict(d)
    raise ValueError(f"{path}: unrecognized document")


# ---------------------------------------------------------------------------
# Linear-Gaussian channel assembly
# ---------------------------------------------------------------------------


def channel_model(
    source: ArSourceModel,
    n: int,
    gain: np.ndarray,
    noise_cov: np.ndarray | float,
    t_first: int = 1,
    past: int = 0,
    label: str = "",
) -> JointProcessModel:
    """Joint model of ``y = G x[t_first..] + v`` with ``v`` independent of x.

    ``gain`` has shape ``(n, m)`` and column ``j`` multiplies ``x(t_first + j)``,
    so the channel may reach before time 1 or beyond time n. The returned
    model keeps ``x(1-past)..x(n)`` and ``y(1)..y(n)``.
    """
    G = np.atleast_2d(np.asarray(gain, dtype=float))
    if G.shape[0] != n:
        raise ValueError("gain must have n rows")
    m = G.shape[1]
    lo = min(t_first, 1 - past)
    hi = max(t_first + m - 1, n)
    R = toeplitz(source.autocovariances(hi - lo + 1))
    cols = np.arange(t_first, t_first + m) - lo
    keep = np.arange(1 - past, n + 1) - lo
    N = np.eye(n) * noise_cov if np.isscalar(noise_cov) else np.asarray(noise_cov, dtype=float)
    Kxx = R[np.ix_(keep, keep)]
    Kyx = G @ R[np.ix_(cols, keep)]
    Kyy = G @ R[np.ix_(cols, cols)] @ G.T + N
    S = np.block([[Kxx, Kyx.T], [Kyx, Kyy]])
    return JointProcessModel(n, CovarianceMatrix(0.5 * (S + S.T)), label, source, past)


def fir_channel_model(
    source: ArSourceModel,
    n: int,
    taps: dict[int, float],
    noise_var: float,
    past: int = 0,
    stage_gain: Sequence[float] | None = None,
    label: str = "",
) -> JointProcessModel:
    """``y(k) = g_k * sum_lag taps[lag] x(k - lag) + v(k)``.

    Negative lags look ahead. Samples at times <= 0 come from the stationary
    two-sided extension of the source.
    """
    lags = sorted(taps)
    t_first = 1 - max(lags[-1], 0)
    t_last = n - min(lags[0], 0)
    G = np.zeros((n, t_last - t_first + 1))
    g = np.ones(n) if stage_gain is None else np.asarray(stage_gain, dtype=float)
    for k in range(1, n + 1):
        for lag, c in taps.items():
            G[k - 1, k - lag - t_first] += g[k - 1] * c
    return channel_model(source, n, G, noise_var, t_first, past, label)


# ---------------------------------------------------------------------------
# Information quantities
# ---------------------------------------------------------------------------


def _sigma(m) -> np.ndarray:
    if isinstance(m, JointProcessModel):
        return m.sigma.entries
    if isinstance(m, CovarianceMatrix):
        return m.entries
    return np.asarray(m, dtype=float)


def logdet(S: np.ndarray, what: str = "covariance") -> float:
    """Natural log-determinant of an SPD block via Cholesky with a pivot floor.

    Pivots (conditional variances) below ``1e-13 * trace`` mean the block is
    a deterministic function of itself, not merely ill-conditioned.
    """
    if S.shape[0] == 0:
        return 0.0
    floor = PIVOT_FLOOR * float(np.trace(S))
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise SingularCovarianceError(
            f"{what} is singular: deterministic dependence, mutual information infinite"
        ) from None
    piv = np.diag(L) ** 2
    if piv.min() <= floor:
        raise SingularCovarianceError(
            f"{what} is singular (pivot {piv.min():.3g} <= {floor:.3g}): "
            "deterministic dependence, mutual information infinite"
        )
    return 2.0 * float(np.sum(np.log(np.diag(L))))


def _check_disjoint(*sets: IndexSet, dim: int):
    seen: set[int] = set()
    for s in sets:
        if s.indices and s.indices[-1] > dim:
            raise IndexError(f"position {s.indices[-1]} beyond dimension {dim}")
        if seen & set(s.indices):
            raise ValueError("index sets must be disjoint")
        seen |= set(s.indices)


def mutual_information(m, A: IndexLike, B: IndexLike) -> float:
    """``I(A; B)`` in bits for a jointly Gaussian vector."""
    S = _sigma(m)
    A, B = as_index_set(A), as_index_set(B)
    if not len(A) or not len(B):
        raise ValueError("mutual information needs non-empty sets")
    _check_disjoint(A, B, dim=S.shape[0])
    a, b = A.zero_based, B.zero_based
    ab = np.concatenate([a, b])
    val = (
        logdet(S[np.ix_(a, a)], "Sigma_A")
        + logdet(S[np.ix_(b, b)], "Sigma_B")
        - logdet(S[np.ix_(ab, ab)], "Sigma_AuB")
    ) / (2 * LN2)
    if -MI_SLACK <= val < 0:
        return 0.0
    return val


def conditional_mutual_information(m, A: IndexLike, B: IndexLike, C: IndexLike = ()) -> float:
    """``I(A; B | C) = I(A; B, C) - I(A; C)``."""
    A, B, C = as_index_set(A), as_index_set(B), as_index_set(C)
    if not len(C):
        return mutual_information(m, A, B)
    _check_disjoint(A, B, C, dim=_sigma(m).shape[0])
    val = mutual_information(m, A, B | C) - mutual_information(m, A, C)
    if -MI_SLACK <= val < 0:
        return 0.0
    return val


def conditional_cross_covariance(m, A: IndexLike, B: IndexLike, C: IndexLike = ()) -> np.ndarray:
    """``Sigma_AB - Sigma_AC Sigma_C^{-1} Sigma_CB``."""
    S = _sigma(m)
    a, b = as_index_set(A).zero_based, as_index_set(B).zero_based
    c = as_index_set(C).zero_based
    out = S[np.ix_(a, b)].copy()
    if c.size:
        Sc = S[np.ix_(c, c)]
        logdet(Sc, "Sigma_C (conditioning block)")
        out -= S[np.ix_(a, c)] @ np.linalg.solve(Sc, S[np.ix_(c, b)])
    return out


@dataclass(frozen=True)
class MarkovCertificate:
    residual: float
    holds: bool
    tolerance: float
    label: str = ""

    def to_dict(self) -> dict:
        return {"label": self.label, "residual": self.residual, "holds": self.holds,
                "tolerance": self.tolerance}


def markov_chain_check(m, A: IndexLike, C: IndexLike, B: IndexLike, tol: float = DEFAULT_TOL,
                       label: str = "") -> MarkovCertificate:
    """Certify ``A <-> C <-> B`` through the conditional cross-covariance."""
    A, C, B = as_index_set(A), as_index_set(C), as_index_set(B)
    if not len(A) or not len(B):
        raise ValueError("Markov chain ends must be non-empty")
    _check_disjoint(A, B, C, dim=_sigma(m).shape[0])
    resid = float(np.max(np.abs(conditional_cross_covariance(m, A, B, C))))
    return MarkovCertificate(resid, resid <= tol, tol, label)


def causality_audit(m: JointProcessModel, variant: str = "short",
                    tol: float = DEFAULT_TOL) -> list[MarkovCertificate]:
    """Per-time causality certificates.

    ``short``: ``x(k+1..n) <-> x(1..k) <-> y(1..k)`` for k = 1..n-1.
    ``strong-prefix``: the future set also carries the model's pre-samples,
    and the k = n chain ``x_past <-> x(1..n) <-> y(1..n)`` is included.
    """
    if variant not in ("short", "strong-prefix"):
        raise ValueError(f"unknown causality variant {variant!r}")
    n = m.horizon
    strong = variant == "strong-prefix" and m.past > 0
    certs = []
    last = n if strong else n - 1
    for k in range(1, last + 1):
        fut = m.x(k + 1, n)
        if strong:
            fut = m.x_past | fut
        certs.append(markov_chain_check(m, fut, m.x(1, k), m.y(1, k), tol, label=f"k={k}"))
    return certs


# ---------------------------------------------------------------------------
# Stationarity
# ---------------------------------------------------------------------------


def window_blocks(m: JointProcessModel, length: int, starts: Iterable[int] | None = None
                  ) -> list[CovarianceMatrix]:
    """Covariances of ``(x(k..k+length-1), y(k..k+length-1))`` for each start k."""
    if starts is None:
        starts = range(1, m.horizon - length + 2)
    out = []
    for k in starts:
        idx = m.x(k, k + length - 1) | m.y(k, k + length - 1)
        out.append(CovarianceMatrix(m.block(idx)))
    return out


@dataclass(frozen=True)
class StationarityResult:
    holds: bool
    residual: float
    tolerance: float

    def __bool__(self):
        return self.holds


def joint_stationarity_audit(blocks: Sequence, tol: float = DEFAULT_TOL) -> StationarityResult:
    """Max pairwise difference between window covariances."""
    mats = [_sigma(b) for b in blocks]
    if len(mats) < 2:
        raise ValueError("need at least two window blocks")
    if len({M.shape for M in mats}) != 1:
        raise ValueError("window blocks differ in dimension")
    stack = np.stack(mats)
    resid = float(np.max(stack.max(axis=0) - stack.min(axis=0)))
    return StationarityResult(resid <= tol, resid, tol)


def toeplitz_residual(M: np.ndarray) -> float:
    """Largest deviation of ``M`` from being constant along its diagonals."""
    M = np.asarray(M)
    if M.shape[0] < 2:
        return 0.0
    return float(np.max(np.abs(M[1:, 1:] - M[:-1, :-1])))


# ---------------------------------------------------------------------------
# Causal + jointly stationary => geometric autocorrelation
# ---------------------------------------------------------------------------

GEOMETRIC = "geometric"
MEMORYLESS_INCONCLUSIVE = "memoryless_inconclusive"
VIOLATED = "violated"


@dataclass(frozen=True)
class GeometricDecayCertificate:
    """Outcome of fitting ``K_yx = A K_x`` and testing ``rho_k = zeta rho_{k-1}``."""

    zeta: float
    geometric_residual: float
    status: str
    gain: np.ndarray = field(repr=False)
    stationarity_residual: float = 0.0

    def to_dict(self) -> dict:
        return {
            "zeta": self.zeta,
            "geometric_residual": self.geometric_residual,
            "status": self.status,
            "stationarity_residual": self.stationarity_residual,
            "gain_upper_residual": float(np.max(np.abs(np.triu(self.gain, 1)), initial=0.0)),
        }


def geometric_decay_certificate(m: JointProcessModel, tol: float = DEFAULT_TOL
                                ) -> GeometricDecayCertificate:
    """Certificate that a jointly stationary causal Gaussian pair forces
    a geometric source autocorrelation.

    The ratio ``zeta = (a11 - a22) / a21`` is read off the fitted gain; it
    is undefined when ``a21`` vanishes (memoryless channels), in which case
    the status is ``memoryless_inconclusive``.
    """
    n = m.horizon
    if n < 3:
        raise ValueError("certificate needs horizon n >= 3")
    X, Y = m.x(1, n), m.y(1, n)
    Kx, Ky, Kyx = m.block(X), m.block(Y), m.block(Y, X)
    stat = max(toeplitz_residual(Kx), toeplitz_residual(Ky), toeplitz_residual(Kyx))
    if stat > tol:
        raise ValueError(f"model is not jointly stationary (Toeplitz residual {stat:.3g} > {tol:.3g})")
    logdet(Kx, "K_x")
    A = np.linalg.solve(Kx.T, Kyx.T).T
    rho = Kx[0]
    a11, a21, a22 = A[0, 0], A[1, 0], A[1, 1]
    if abs(a21) <= tol:
        return GeometricDecayCertificate(math.nan, math.nan, MEMORYLESS_INCONCLUSIVE, A, stat)
    zeta = float((a11 - a22) / a21)
    resid = float(np.max(np.abs(rho[1:] - zeta * rho[:-1])) / rho[0])
    status = GEOMETRIC if resid <= tol else VIOLATED
    return GeometricDecayCertificate(zeta, resid, status, A, stat)


def markov_order(model: ArSourceModel, tol: float = DEFAULT_TOL) -> int:
    """Smallest k with ``x(1..i) <-> x(i+1..i+k) <-> x(i+k+1..H)`` for all i."""
    H = max(2 * model.order + 3, 8)
    K = toeplitz_covariance(model, H)
    for k in range(H - 1):
        ok = True
        for i in range(1, H - k):
            past = range(1, i + 1)
            mid = range(i + 1, i + k + 1)
            fut = range(i + k + 1, H + 1)
            if conditional_mutual_information(K, past, fut, mid) > tol:
                ok = False
                break
        if ok:
            return k
    return H - 1
