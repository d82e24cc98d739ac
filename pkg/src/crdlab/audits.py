"""Invariant suites behind ``crdlab audit``.

Each suite returns an AuditReport whose checks carry both sides of the
inequality they test. Randomized checks draw from a seeded generator so a
suite is a deterministic function of its seed.
"""

from __future__ import annotations

import math

import numpy as np

from . import coder, constructions as cons, gauss, solver
from .report import AuditReport, Check

SUITES = ("gauss", "constructions", "solver", "coder")


# ---------------------------------------------------------------------------
# Random Gaussian models
# ---------------------------------------------------------------------------


def random_covariance(rng: np.random.Generator, dim: int, ridge: float = 0.1) -> np.ndarray:
    """Well-conditioned random covariance normalized to unit mean variance."""
    A = rng.standard_normal((dim, dim))
    S = A @ A.T + ridge * dim * np.eye(dim)
    return S / np.mean(np.diag(S))


def random_partition(rng: np.random.Generator, dim: int, parts: int) -> list[list[int]]:
    """Split ``1..dim`` into ``parts`` non-empty disjoint 1-based index lists."""
    perm = rng.permutation(dim) + 1
    cuts = np.sort(rng.choice(np.arange(1, dim), parts - 1, replace=False))
    return [sorted(int(i) for i in p) for p in np.split(perm, cuts)]


def markov_quadruple(rng: np.random.Generator, d: int = 2) -> tuple[np.ndarray, list[list[int]]]:
    """Gaussian ``(a1, a2, b1, b2)`` with ``b_i = G_i a_i + v_i``.

    Any joint law of ``(a1, a2)`` works; independent channel noises make
    ``(a2, b2) <-> a1 <-> b1`` and ``(a1, b1) <-> a2 <-> b2`` hold.
    """
    Ka = random_covariance(rng, 2 * d)
    G1, G2 = rng.standard_normal((d, d)), rng.standard_normal((d, d))
    N1, N2 = random_covariance(rng, d), random_covariance(rng, d)
    G = np.zeros((2 * d, 2 * d))
    G[:d, :d], G[d:, d:] = G1, G2
    N = np.zeros((2 * d, 2 * d))
    N[:d, :d], N[d:, d:] = N1, N2
    Kb = G @ Ka @ G.T + N
    Kba = G @ Ka
    S = np.block([[Ka, Kba.T], [Kba, Kb]])
    r = list(range(1, 4 * d + 1))
    return 0.5 * (S + S.T), [r[:d], r[d:2 * d], r[2 * d:3 * d], r[3 * d:]]


def conditionally_independent_quadruple(rng: np.random.Generator, d: int = 2
                                        ) -> tuple[np.ndarray, list[list[int]]]:
    """``(a, b, c, d)`` with ``a = F c + w``, so ``a <-> c <-> (b, d)``."""
    K = random_covariance(rng, 3 * d)            # joint of (b, c, d)
    F = rng.standard_normal((d, d))
    W = random_covariance(rng, d)
    E = np.zeros((d, 3 * d))
    E[:, d:2 * d] = F
    Kab = E @ K
    S = np.block([[E @ K @ E.T + W, Kab], [Kab.T, K]])
    r = list(range(1, 4 * d + 1))
    return 0.5 * (S + S.T), [r[:d], r[d:2 * d], r[2 * d:3 * d], r[3 * d:]]


# ---------------------------------------------------------------------------
# gauss
# ---------------------------------------------------------------------------


def information_identities(seed: int, trials: int = 100, tol: float = 1e-8) -> AuditReport:
    rng = np.random.default_rng(seed)
    rep = AuditReport("gauss.information_identities")
    chain = quad = mono = neg = 0.0
    for _ in range(trials):
        dim = int(rng.integers(3, 9))
        S = random_covariance(rng, dim)
        A, B, C = random_partition(rng, dim, 3)
        i_bc = gauss.mutual_information(S, A, sorted(B + C))
        i_c = gauss.mutual_information(S, A, C)
        i_b = gauss.mutual_information(S, A, B)
        i_b_c = gauss.conditional_mutual_information(S, A, B, C)
        chain = max(chain, abs(i_bc - (i_c + i_b_c)))
        mono = max(mono, i_b - i_bc)
        neg = max(neg, -min(i_b, i_c, i_b_c))
        S4, (a1, a2, b1, b2) = markov_quadruple(rng, int(rng.integers(1, 3)))
        lhs = gauss.mutual_information(S4, sorted(a1 + a2), sorted(b1 + b2))
        rhs = (gauss.mutual_information(S4, a1, b1) + gauss.mutual_information(S4, a2, b2)
               - gauss.mutual_information(S4, b1, b2))
        quad = max(quad, abs(lhs - rhs))
    rep.add(Check.leq("chain_rule_max_error", chain, tol, detail=f"trials={trials}"))
    rep.add(Check.leq("two_chain_identity_max_error", quad, tol, detail=f"trials={trials}"))
    rep.add(Check.leq("conditioning_on_more_never_lowers_mi", mono, 1e-9))
    rep.add(Check.leq("mi_nonnegative", neg, 1e-9))
    return rep


def chain_splitting(seed: int, trials: int = 50, tol: float = 1e-9) -> AuditReport:
    """``I(a; b,d | c) = 0`` iff ``I(a; d | c) = 0`` and ``I(a; b | c,d) = 0``."""
    rng = np.random.default_rng(seed + 1)
    rep = AuditReport("gauss.chain_splitting")
    split_err = 0.0
    mismatches = 0
    for t in range(trials):
        d = int(rng.integers(1, 3))
        if t % 2 == 0:
            S, (a, b, c, dd) = conditionally_independent_quadruple(rng, d)
        else:
            S = random_covariance(rng, 4 * d)
            r = list(range(1, 4 * d + 1))
            a, b, c, dd = r[:d], r[d:2 * d], r[2 * d:3 * d], r[3 * d:]
        whole = gauss.conditional_mutual_information(S, a, sorted(b + dd), c)
        first = gauss.conditional_mutual_information(S, a, dd, c)
        second = gauss.conditional_mutual_information(S, a, b, sorted(c + dd))
        split_err = max(split_err, abs(whole - first - second))
        if (whole <= tol) != (first <= tol and second <= tol):
            mismatches += 1
    rep.add(Check.leq("split_identity_max_error", split_err, tol))
    rep.add(Check.leq("zero_iff_both_parts_zero_mismatches", mismatches, 0))
    return rep


def stationary_causal_family(seed: int) -> list[gauss.JointProcessModel]:
    """Linear-Gaussian channels over AR sources, causal or not, stationary or not."""
    rng = np.random.default_rng(seed + 2)
    sources = [gauss.ArSourceModel([0.9], 0.19), gauss.ArSourceModel([0.5, -0.3], 1.0),
               gauss.ArSourceModel([0.0], 1.0), gauss.ArSourceModel([0.3, 0.2, 0.1], 1.0)]
    out = []
    for src in sources:
        for taps in ({0: 1.0}, {0: 1.0, 1: 0.5}, {1: 1.0}, {-1: 1.0}, {0: 1.0, 2: -0.4}):
            n = 6
            out.append(gauss.fir_channel_model(src, n, taps, float(rng.uniform(0.05, 1.0))))
            g = 1.0 + 0.1 * np.arange(1, n + 1)
            out.append(gauss.fir_channel_model(src, n, taps, 0.3, stage_gain=g))
    return out


def stationary_causal_implication(seed: int, tol: float = gauss.DEFAULT_TOL) -> AuditReport:
    """Jointly stationary plus causal forces ``x(k+1..n) <-> x(k) <-> y(k)``."""
    rep = AuditReport("gauss.stationary_causal_implication")
    premises = 0
    for m in stationary_causal_family(seed):
        n = m.horizon
        stat = gauss.joint_stationarity_audit(gauss.window_blocks(m, n // 2), tol)
        causal = all(c.holds for c in gauss.causality_audit(m, "short", tol))
        if not (stat.holds and causal):
            continue
        premises += 1
        worst = max(gauss.markov_chain_check(m, m.x(k + 1, n), m.x(k), m.y(k), tol).residual
                    for k in range(1, n))
        rep.add(Check.leq("single_sample_markov_chain", worst, tol, detail=m.label or f"model {premises}"))
    rep.add(Check.leq("premise_models_found", -premises, -1))
    return rep


def certificate_cases(tol: float = gauss.DEFAULT_TOL) -> dict[str, gauss.GeometricDecayCertificate]:
    ar1 = gauss.ArSourceModel([0.9], 0.19)
    ar2 = gauss.ArSourceModel([0.5, -0.3], 1.0)
    return {
        "ar1_delayed_mix": gauss.geometric_decay_certificate(
            gauss.fir_channel_model(ar1, 6, {0: 1.0, 1: 0.5}, 0.1), tol),
        "ar2_memoryless": gauss.geometric_decay_certificate(
            gauss.fir_channel_model(ar2, 6, {0: 1.0}, 0.1), tol),
        "ar2_causal_mix": gauss.geometric_decay_certificate(
            gauss.fir_channel_model(ar2, 6, {1: 1.0}, 0.1), tol),
    }


def gauss_suite(seed: int = 0, tol: float = gauss.DEFAULT_TOL) -> list[AuditReport]:
    rep = AuditReport("gauss.fixtures")
    rep.add(Check.close("autocovariance_ar1_lag1", gauss.autocovariance(gauss.ArSourceModel([0.5], 0.75), 1), 0.5, 1e-12))
    rep.add(Check.close("autocovariance_ar1_lag2", gauss.autocovariance(gauss.ArSourceModel([0.9], 0.19), 2), 0.81, 1e-12))
    for coeffs, want in (([0.0], 0), ([0.9], 1), ([0.5, -0.3], 2)):
        got = gauss.markov_order(gauss.ArSourceModel(coeffs, 1.0 - coeffs[0] ** 2 if len(coeffs) == 1 else 1.0), tol)
        rep.add(Check.close("markov_order_matches_declared", got, want, 0, detail=str(coeffs)))
    certs = certificate_cases(tol)
    c = certs["ar1_delayed_mix"]
    rep.add(Check.close("geometric_status_ar1", float(c.status == gauss.GEOMETRIC), 1.0, 0))
    rep.add(Check.close("geometric_ratio_equals_coefficient", c.zeta, 0.9, 1e-6))
    rep.add(Check.close("memoryless_inconclusive_ar2",
                        float(certs["ar2_memoryless"].status == gauss.MEMORYLESS_INCONCLUSIVE), 1.0, 0))
    v = certs["ar2_causal_mix"]
    rep.add(Check.close("violated_status_ar2", float(v.status == gauss.VIOLATED), 1.0, 0))
    rep.add(Check.leq("violated_residual_large", 0.01, v.geometric_residual))
    return [rep, information_identities(seed), chain_splitting(seed),
            stationary_causal_implication(seed, tol)]


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------


def random_block_channel(rng: np.random.Generator, n: int) -> cons.BlockChannel:
    G = np.tril(rng.uniform(-0.5, 0.5, (n, n)))
    G[np.diag_indices(n)] = rng.uniform(0.5, 1.5, n)
    return cons.BlockChannel(n, G, random_covariance(rng, n) * 0.3)


def constructions_suite(seed: int = 0, tol: float = gauss.DEFAULT_TOL) -> list[AuditReport]:
    rng = np.random.default_rng(seed + 10)
    n = 4
    ar1 = gauss.ArSourceModel([0.9], 0.19)
    ar2 = gauss.ArSourceModel([0.5, -0.3], 1.0)
    ch = random_block_channel(rng, n)
    reports = [verify_named(cons.verify_block_identities(cons.replicate_blocks(ar1, ch, 8)), "ar1"),
               verify_named(cons.verify_block_identities(cons.replicate_blocks(ar2, ch, 8)), "ar2"),
               cons.kappa_lagged_causality_audit(cons.replicate_blocks(ar2, ch, 3), 2, tol)]

    r = cons.replicate_blocks(ar1, ch, 18)
    s = cons.shift_stationarize(r, 16 * n, lead=1)
    rep = AuditReport("constructions.shift_mixture")
    st = cons.mixture_stationarity(s, 2 * n)
    rep.add(Check.leq("mixture_window_covariance_shift_invariant", st.covariance_residual, 1e-9))
    rep.add(Check.leq("mixture_component_multiset_shift_invariant", st.multiset_residual, 1e-9))
    for m in (n, 2 * n, 4 * n, 16 * n):
        rep.add(cons.mixture_conditional_mi(s, m).check)
    reports.append(rep)

    s2 = cons.shift_stationarize(cons.replicate_blocks(ar2, ch, 18), 16 * n, lead=1)
    c = cons.concatenate_first_samples(s2, kappa=2)
    rows, qrep = cons.qjs_audit(c, [8, 16, 32, 64])
    for a, b in zip(rows, rows[1:]):
        qrep.add(Check.leq("first_samples_gap_decreasing", b.gap, a.gap, detail=f"i={b.horizon}"))
    qrep.add(Check.leq("first_samples_gap_small_at_64", rows[-1].gap, 0.02))
    head_causal = max(x.residual for x in gauss.causality_audit(c.components[0], "short", tol))
    qrep.add(Check.leq("concatenated_pair_short_causal", head_causal, tol))
    reports.append(qrep)

    rep = AuditReport("constructions.strong_causal_copy")
    m = gauss.fir_channel_model(ar1, 5, {0: 1.0, 1: 0.5}, 0.2, past=1)
    short = max(x.residual for x in gauss.causality_audit(m, "short", tol))
    rep.add(Check.leq("input_short_causal", short, tol))
    copy = cons.conditionally_independent_copy(m, m.y(1, 5), m.x(1, 5), m.x_past, tol)
    strong = max(x.residual for x in gauss.causality_audit(copy, "strong-prefix", tol))
    rep.add(Check.leq("copy_strong_causal", strong, tol))
    keep = m.x(1, 5) | m.y(1, 5)
    rep.add(Check.leq("copy_preserves_pair_law", float(np.max(np.abs(copy.block(keep) - m.block(keep)))), 0.0))
    reports.append(rep)
    return reports


def verify_named(rep: AuditReport, tag: str) -> AuditReport:
    return AuditReport(f"{rep.name}[{tag}]", rep.checks)


# ---------------------------------------------------------------------------
# solver
# ---------------------------------------------------------------------------

BRUTE_FORCE_QUERIES = (
    (0.9, 0.19, 0.1, 1), (0.9, 0.19, 0.1, 2), (0.9, 0.19, 0.1, 3), (0.9, 0.19, 0.05, 2),
    (0.9, 0.19, 0.3, 3), (0.5, 0.75, 0.1, 2), (0.5, 0.75, 0.25, 3), (0.0, 1.0, 0.25, 1),
    (0.0, 1.0, 0.5, 3), (0.7, 0.51, 0.2, 3),
)
CONVERGENCE_CASES = ((0.5, 0.05), (0.5, 0.1), (0.9, 0.05), (0.9, 0.1))
HORIZONS = (4, 16, 64, 256, 1024)


def ar1(a: float) -> gauss.ArSourceModel:
    return gauss.ArSourceModel([a], 1.0 - a * a)


def solver_suite(seed: int = 0, tol: float = 1e-3) -> list[AuditReport]:
    rep = AuditReport("solver.fixtures")
    rep.add(Check.close("stationary_value", solver.stationary_irdf(ar1(0.9), 0.1).R,
                        0.5 * math.log2(2.71), 1e-5))
    for a, s2, D, n in BRUTE_FORCE_QUERIES:
        m = gauss.ArSourceModel([a], s2)
        fine = solver.finite_horizon_irdf(m, D, n).R
        brute = solver.brute_force_irdf(m, D, n, 1e-3).R
        rep.add(Check.leq("finite_horizon_matches_brute_force", abs(fine - brute), 5e-3,
                          detail=f"a={a},D={D},n={n}"))
    Ds = np.linspace(0.01, 0.99, 99)
    R = [solver.stationary_irdf(ar1(0.9), D).R for D in Ds]
    rep.add(Check.leq("stationary_strictly_decreasing", float(np.max(np.diff(R))), -1e-12))
    reports = [rep]

    for a, D in CONVERGENCE_CASES:
        cr = solver.convergence_report(ar1(a), D, HORIZONS, tol)
        gaps = [g for _, _, g in cr.rows]
        for x, y in zip(gaps, gaps[1:]):
            cr.report.add(Check.leq("gap_decreasing_over_horizons", y, x))
        reports.append(AuditReport(f"solver.convergence[a={a},D={D}]", cr.report.checks))

    rep = AuditReport("solver.realized_pair")
    for a, D in CONVERGENCE_CASES:
        pt = solver.finite_horizon_irdf(ar1(a), D, 16)
        jm = solver.realize_allocation(ar1(a), pt.allocation)
        worst = max(c.residual for c in gauss.causality_audit(jm, "short"))
        rep.add(Check.leq("realized_pair_short_causal", worst, gauss.DEFAULT_TOL, detail=f"a={a},D={D}"))
        rep.add(cons.distortion_check(jm, D, 1e-8))
        mi = gauss.mutual_information(jm, jm.x(1, 16), jm.y(1, 16)) / 16
        rep.add(Check.close("realized_pair_rate_matches", mi, pt.R, 1e-8, detail=f"a={a},D={D}"))
    reports.append(rep)
    return reports


# ---------------------------------------------------------------------------
# coder
# ---------------------------------------------------------------------------


def coder_suite(seed: int = 0, samples: int = 200_000) -> list[AuditReport]:
    model = ar1(0.9)
    ev = coder.evaluate(model, 0.1, samples, seed)
    reports = [ev.report]
    rng, key = coder.seeds(seed)
    cfg = coder.design_coder(model, 0.1, key)
    x = coder.synthesize(model, samples, rng)
    noise, u = coder.quantizer_noise(x, cfg)
    reports.append(coder.dither_noise_audit(noise, cfg.step, u))
    rep = AuditReport("coder.determinism")
    e1, e2 = coder.encode(x[:20_000], cfg), coder.encode(x[:20_000], cfg)
    rep.add(Check.leq("identical_bitstreams", float(e1.bitstream != e2.bitstream), 0.0))
    iid = coder.evaluate(gauss.ArSourceModel([0.0], 1.0), 0.5, samples, seed)
    rep.add(Check.leq("memoryless_mse_within_3pct", abs(iid.stats.mse / 0.5 - 1.0), 0.03))
    reports.append(rep)
    return reports


def run_suite(name: str, seed: int = 0, tol: float | None = None) -> list[AuditReport]:
    if name == "gauss":
        return gauss_suite(seed, tol or gauss.DEFAULT_TOL)
    if name == "constructions":
        return constructions_suite(seed, tol or gauss.DEFAULT_TOL)
    if name == "solver":
        return solver_suite(seed, tol or 1e-3)
    if name == "coder":
        return coder_suite(seed)
    raise ValueError(f"unknown suite {name!r}; choose from {', '.join(SUITES)}")
