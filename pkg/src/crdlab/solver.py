"""Causal rate-distortion function of scalar Gauss-Markov sources under MSE.

The finite-horizon problem is posed over the sequential Gaussian stage
family: at stage k the reconstruction error of the previous stage is
propagated through the source recursion, giving a prediction-error variance
``p_k = a^2 d_{k-1} + s2`` (``p_1`` = stationary variance), and the stage
spends ``0.5 log2(p_k / d_k)`` bits to reach distortion ``d_k <= p_k``.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .gauss import ArSourceModel, JointProcessModel, channel_model
from .report import AuditReport, Check, fmt

LOG2 = math.log(2.0)


class UnsupportedOrderError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class StageAllocation:
    d: np.ndarray
    p: np.ndarray

    @property
    def n(self) -> int:
        return self.d.shape[0]

    @property
    def rates(self) -> np.ndarray:
        return np.maximum(0.0, 0.5 * np.log2(self.p / self.d))

    @property
    def mean_distortion(self) -> float:
        return float(np.mean(self.d))

    def to_dict(self) -> dict:
        return {"d": self.d, "p": self.p}


@dataclass(frozen=True, eq=False)
class RdPoint:
    D: float
    R: float
    horizon: float
    method: str
    allocation: StageAllocation | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = {"D": self.D, "R_bits": self.R, "method": self.method,
               "horizon": "inf" if math.isinf(self.horizon) else int(self.horizon)}
        if self.allocation is not None:
            out["allocation"] = self.allocation.to_dict()
        return out


def _params(model: ArSourceModel) -> tuple[float, float, float]:
    if model.order > 1:
        raise UnsupportedOrderError(
            f"solver handles AR order <= 1 (got {model.order}); "
            "use the covariance certificates for higher-order sources"
        )
    a = model.coeffs[0] if model.order == 1 else 0.0
    return a * a, model.innovation_variance, model.stationary_variance


def _check_distortion(D: float) -> float:
    D = float(D)
    if not D > 0 or not math.isfinite(D):
        raise ValueError(f"distortion must be positive and finite, got {D}")
    return D


def allocation_from_distortions(model: ArSourceModel, d: Sequence[float]) -> StageAllocation:
    """Attach the predictor variances implied by a distortion sequence."""
    a2, s2, rho0 = _params(model)
    d = np.asarray(d, dtype=float)
    p = np.empty_like(d)
    if d.size:
        p[0] = rho0
        p[1:] = a2 * d[:-1] + s2
    if np.any(d <= 0) or np.any(d > p * (1 + 1e-12)):
        raise ValueError("allocation violates 0 < d_k <= p_k")
    return StageAllocation(d, p)


def stationary_irdf(model: ArSourceModel, D: float) -> RdPoint:
    """Steady-state value ``0.5 log2(a^2 + s2 / D)``, zero once ``D >= rho_0``."""
    a2, s2, rho0 = _params(model)
    D = _check_distortion(D)
    if D >= rho0:
        return RdPoint(D, 0.0, math.inf, "stationary")
    return RdPoint(D, 0.5 * math.log2(a2 + s2 / D), math.inf, "stationary")


def _mean_rate(alloc: StageAllocation) -> float:
    return math.fsum(alloc.rates) / alloc.n


def _ratios_to_alloc(s: np.ndarray, a2: float, s2: float, rho0: float) -> StageAllocation:
    n = s.shape[0]
    d = np.empty(n)
    p = np.empty(n)
    pk = rho0
    for k in range(n):
        p[k] = pk
        d[k] = s[k] * pk
        pk = a2 * d[k] + s2
    return StageAllocation(d, p)


def _bisect_lambda(mean_d, D, lam0, rtol, max_iter, lam_rtol=1e-15):
    """Smallest-rate multiplier whose allocation meets the budget.

    ``mean_d(lam)`` is non-increasing. Returns the feasible end of the final
    bracket and the number of evaluations used.
    """
    lo = hi = lam0
    evals = 0
    while mean_d(hi) > D and evals < max_iter:
        lo, hi = hi, hi * 4.0
        evals += 1
    while mean_d(lo) <= D and evals < max_iter and lo > 1e-300:
        hi, lo = lo, lo / 4.0
        evals += 1
    for _ in range(max_iter - evals):
        mid = math.sqrt(lo * hi)
        m = mean_d(mid)
        evals += 1
        if m <= D:
            hi = mid
            if D - m <= rtol * D:
                break
        else:
            lo = mid
        if hi / lo - 1.0 < lam_rtol:
            break
    return hi, evals


def finite_horizon_irdf(
    model: ArSourceModel,
    D: float,
    n: int,
    grid_points: int = 2048,
    rtol: float = 1e-8,
    max_iter: int = 200,
    refine: bool = True,
) -> RdPoint:
    """Minimal average rate over n sequential Gaussian stages with mean distortion <= D.

    A Lagrangian relaxation ``rate + lam * sum(d)`` is solved by dynamic
    programming on a log-spaced distortion grid, bisecting on ``lam`` for the
    budget. The grid optimum is then polished by exact coordinate descent on
    the ratios ``d_k / p_k`` with a second bisection on ``lam``.
    """
    a2, s2, rho0 = _params(model)
    D = _check_distortion(D)
    if n < 1:
        raise ValueError("horizon must be at least 1")
    if D >= rho0:
        alloc = allocation_from_distortions(model, np.full(n, rho0))
        return RdPoint(D, 0.0, n, "zero-rate", alloc)

    c = 0.5 / LOG2
    lam0 = c * s2 / (a2 * D * D + s2 * D)
    grid = np.geomspace(1e-6 * min(s2, rho0), rho0, grid_points)

    cache: dict[float, np.ndarray] = {}

    def dp_alloc(lam):
        if lam not in cache:
            W = kernels.dp_backward(grid, n, a2, s2, lam)
            cache[lam] = kernels.dp_forward(grid, W, n, a2, s2, lam, rho0)
        return cache[lam]

    # the grid only needs to locate the multiplier; refinement meets rtol
    dp_rtol = 1e-3 if refine else rtol
    lam_dp, _ = _bisect_lambda(lambda l: float(np.mean(dp_alloc(l))), D, lam0, dp_rtol, max_iter,
                               lam_rtol=1e-3 if refine else 1e-15)
    d_dp = dp_alloc(lam_dp)
    best = allocation_from_distortions(model, d_dp)
    method = "dp"

    if refine:
        warm = {"s": best.d / best.p}
        solved: dict[float, np.ndarray] = {}

        def cd_alloc(lam):
            if lam not in solved:
                s, _ = kernels.refine_ratios(warm["s"], lam, a2, s2, rho0, 20000, 1e-14)
                warm["s"] = s
                solved[lam] = s
            return solved[lam]

        def mean_d(lam):
            return _ratios_to_alloc(cd_alloc(lam), a2, s2, rho0).mean_distortion

        lam_cd, _ = _bisect_lambda(mean_d, D, lam_dp, rtol, max_iter)
        cand = _ratios_to_alloc(cd_alloc(lam_cd), a2, s2, rho0)
        if cand.mean_distortion <= D + 1e-10 and _mean_rate(cand) <= _mean_rate(best):
            best = cand
            method = "dp+refine"

    return RdPoint(D, _mean_rate(best), n, method, best)


def brute_force_irdf(model: ArSourceModel, D: float, n: int, grid_step: float) -> RdPoint:
    """Exhaustive search over ``d_k in {j * grid_step <= p_k} U {p_k}``."""
    a2, s2, rho0 = _params(model)
    D = _check_distortion(D)
    if not grid_step > 0:
        raise ValueError("grid_step must be positive")
    if not 1 <= n <= 4:
        raise ValueError("brute force is limited to 1 <= n <= 4")
    total, d = kernels.brute_force(n, float(grid_step), rho0, a2, s2, n * D)
    if not math.isfinite(total):
        raise ValueError("no feasible grid allocation; decrease grid_step")
    alloc = allocation_from_distortions(model, d)
    return RdPoint(D, max(0.0, total / n), n, f"brute-force(step={grid_step:g})", alloc)


def realize_allocation(model: ArSourceModel, alloc: StageAllocation) -> JointProcessModel:
    """Joint law of the source and the stage-by-stage MMSE reconstruction.

    Stage k observes the innovation ``x(k) - a y(k-1)`` through an additive
    Gaussian channel of variance ``p d / (p - d)`` and updates
    ``y(k) = a y(k-1) + beta_k (observation)``, ``beta_k = 1 - d_k / p_k``.
    """
    a2, s2, rho0 = _params(model)
    a = model.coeffs[0] if model.order == 1 else 0.0
    n = alloc.n
    beta = 1.0 - alloc.d / alloc.p
    theta = np.where(beta > 0, alloc.p * alloc.d / np.maximum(alloc.p - alloc.d, 1e-300), 0.0)
    # y = M x + B v with v ~ N(0, I)
    M = np.zeros((n, n))
    B = np.zeros((n, n))
    prev_m = np.zeros(n)
    prev_b = np.zeros(n)
    for k in range(n):
        mk = (1 - beta[k]) * a * prev_m
        bk = (1 - beta[k]) * a * prev_b
        mk[k] += beta[k]
        bk[k] += beta[k] * math.sqrt(theta[k])
        M[k], B[k] = mk, bk
        prev_m, prev_b = mk, bk
    return channel_model(model, n, M, B @ B.T, label="sequential-gaussian-stages")


@dataclass
class ConvergenceReport:
    D: float
    stationary: float
    rows: list[tuple[int, float, float]]
    report: AuditReport

    @property
    def passed(self) -> bool:
        return self.report.passed

    def to_dict(self) -> dict:
        return {
            "D": self.D,
            "R_stationary_bits": self.stationary,
            "rows": [{"horizon": n, "R_finite_bits": r, "gap_bits": g} for n, r, g in self.rows],
            "audit": self.report.to_dict(),
        }


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("CRDLAB_THREADS", "1")))
    except ValueError:
        return 1


def _ordered_map(fn, items):
    items = list(items)
    workers = min(_threads(), len(items)) or 1
    if workers == 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as ex:
        return list(ex.map(fn, items))


def convergence_report(model: ArSourceModel, D: float, horizons: Iterable[int],
                       tol: float = 1e-3) -> ConvergenceReport:
    horizons = [int(h) for h in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ValueError("horizons must be increasing")
    R = stationary_irdf(model, D).R
    pts = _ordered_map(lambda h: finite_horizon_irdf(model, D, h), horizons)
    rows = [(h, pt.R, abs(pt.R - R)) for h, pt in zip(horizons, pts)]
    rep = AuditReport("solver.convergence")
    gaps = [g for _, _, g in rows]
    if gaps[0] > 0:
        rep.add(Check.leq("finite_horizon_gap_shrinks", gaps[-1], gaps[0]))
    rep.add(Check.leq("finite_horizon_gap_below_tol", gaps[-1], tol))
    return ConvergenceReport(D, R, rows, rep)


@dataclass(frozen=True)
class SweepRow:
    D: float
    R_stationary: float
    R_finite: float
    horizon: int

    @property
    def gap(self) -> float:
        return abs(self.R_finite - self.R_stationary)


CSV_COLUMNS = ("D", "R_stationary_bits", "R_finite_bits", "horizon", "gap_bits")


def rd_sweep(model: ArSourceModel, D_list: Sequence[float], horizon: int = 256
             ) -> tuple[list[SweepRow], AuditReport]:
    Ds = [_check_distortion(D) for D in D_list]

    def one(D):
        return SweepRow(D, stationary_irdf(model, D).R,
                        finite_horizon_irdf(model, D, horizon).R, horizon)

    rows = _ordered_map(one, Ds)
    rep = AuditReport("solver.sweep")
    ordered = sorted(rows, key=lambda r: r.D)
    for lo, hi in zip(ordered, ordered[1:]):
        rep.add(Check.leq("rate_nonincreasing_in_distortion", hi.R_stationary, lo.R_stationary,
                          detail=f"D={fmt(lo.D)}->{fmt(hi.D)}"))
    return rows, rep


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in rows:
        w.writerow([fmt(r.D), fmt(r.R_stationary), fmt(r.R_finite), r.horizon, fmt(r.gap)])
    return buf.getvalue()
