"""``crdlab`` command line: solve, sweep, audit, code, certify.

Exit status: 0 success, 1 when an audited invariant fails, 2 on usage or
configuration errors. Artifacts depend only on the arguments.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import audits, coder, gauss, solver
from .report import AuditReport, Check, dumps, fmt

EXIT_OK, EXIT_AUDIT, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive(kind):
    def parse(s):
        try:
            v = kind(s)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not a valid {kind.__name__}: {s!r}") from None
        if not v > 0:
            raise argparse.ArgumentTypeError(f"must be positive: {s!r}")
        return v
    return parse


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="crdlab", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    def common(sp, model=True):
        if model:
            sp.add_argument("--model", required=True, help="source or joint model JSON")
        sp.add_argument("--out", help="write the artifact here instead of stdout")
        sp.add_argument("--tol", type=_positive(float), help="override the check tolerance")

    s = sub.add_parser("solve", help="stationary and finite-horizon causal IRDF")
    common(s)
    s.add_argument("--distortion", type=_positive(float), nargs="+", required=True)
    s.add_argument("--horizon", type=_positive(int), nargs="+", default=list(audits.HORIZONS))
    s.add_argument("--grid", type=_positive(int), default=2048, help="DP grid points")

    s = sub.add_parser("sweep", help="rate vs distortion table as CSV")
    common(s)
    s.add_argument("--distortion", type=_positive(float), nargs="+", required=True)
    s.add_argument("--horizon", type=_positive(int), default=256)

    s = sub.add_parser("audit", help="run an invariant suite")
    common(s, model=False)
    s.add_argument("--suite", choices=audits.SUITES + ("all",), default="all")
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("code", help="simulate the dithered predictive coder")
    common(s)
    s.add_argument("--distortion", type=_positive(float), required=True)
    s.add_argument("--samples", type=_positive(int), default=200_000)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("certify", help="causality, stationarity and geometric-decay certificates")
    common(s)
    return p


def _load(path: str):
    if not Path(path).is_file():
        raise UsageError(f"model file not found: {path}")
    try:
        return gauss.load_json(path)
    except (ValueError, KeyError, TypeError) as exc:
        raise UsageError(f"{path}: {exc}") from None


def _source(path: str) -> gauss.ArSourceModel:
    m = _load(path)
    if not isinstance(m, gauss.ArSourceModel):
        raise UsageError(f"{path}: expected an AR source document")
    return m


def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _summary(reports: list[AuditReport]) -> int:
    status = EXIT_OK
    for r in reports:
        for c in r.failures:
            sys.stderr.write(f"FAIL {r.name}: {c.check} lhs={fmt(c.lhs)} rhs={fmt(c.rhs)}"
                             f"{' ' + c.detail if c.detail else ''}\n")
            status = EXIT_AUDIT
    return status


def cmd_solve(args) -> int:
    model = _source(args.model)
    horizons = sorted(set(args.horizon))
    tol = args.tol or 1e-3
    docs, reports, lines = [], [], []
    for D in args.distortion:
        Rs = solver.stationary_irdf(model, D).R
        pts = [solver.finite_horizon_irdf(model, D, n, grid_points=args.grid) for n in horizons]
        rep = AuditReport(f"solve[D={fmt(D)}]")
        gaps = [abs(p.R - Rs) for p in pts]
        if len(gaps) > 1 and gaps[0] > 0:
            rep.add(Check.leq("finite_horizon_gap_shrinks", gaps[-1], gaps[0]))
        rep.add(Check.leq("finite_horizon_gap_below_tol", gaps[-1], tol))
        reports.append(rep)
        lines.append(f"D = {fmt(D)}  R_stationary = {fmt(Rs)} bits/sample")
        lines.append(f"{'horizon':>8}  {'R_finite':>16}  {'gap':>16}")
        for n, p, g in zip(horizons, pts, gaps):
            lines.append(f"{n:>8}  {fmt(p.R):>16}  {fmt(g):>16}")
        docs.append({"D": D, "R_stationary_bits": Rs,
                     "finite": [p.to_dict() | {"gap_bits": g} for p, g in zip(pts, gaps)],
                     "audit": rep.to_dict()})
    if args.out:
        _emit(dumps({"model": model.to_dict(), "results": docs}), args.out)
    print("\n".join(lines))
    return _summary(reports)


def cmd_sweep(args) -> int:
    model = _source(args.model)
    rows, rep = solver.rd_sweep(model, args.distortion, args.horizon)
    _emit(solver.sweep_csv(rows), args.out)
    return _summary([rep])


def cmd_audit(args) -> int:
    names = audits.SUITES if args.suite == "all" else (args.suite,)
    reports = [r for name in names for r in audits.run_suite(name, args.seed, args.tol)]
    doc = {"seed": args.seed, "pass": all(r.passed for r in reports),
           "reports": [r.to_dict() for r in reports]}
    if args.out:
        _emit(dumps(doc), args.out)
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name}  ({len(r.checks)} checks)")
    return _summary(reports)


def cmd_code(args) -> int:
    model = _source(args.model)
    try:
        ev = coder.evaluate(model, args.distortion, args.samples, args.seed)
    except coder.ZeroRateError as exc:
        raise UsageError(str(exc)) from None
    _emit(dumps(ev.to_dict()), args.out)
    return _summary([ev.report])


def cmd_certify(args) -> int:
    tol = args.tol or gauss.DEFAULT_TOL
    m = _load(args.model)
    doc: dict = {}
    if isinstance(m, gauss.ArSourceModel):
        doc["source"] = m.to_dict()
        doc["markov_order"] = gauss.markov_order(m, tol)
        doc["stationary_variance"] = m.stationary_variance
    elif isinstance(m, gauss.JointProcessModel):
        n = m.horizon
        doc["horizon"] = n
        doc["short_causality"] = [c.to_dict() for c in gauss.causality_audit(m, "short", tol)]
        if m.past:
            doc["strong_prefix_causality"] = [c.to_dict() for c in
                                              gauss.causality_audit(m, "strong-prefix", tol)]
        if n >= 2:
            st = gauss.joint_stationarity_audit(gauss.window_blocks(m, max(1, n // 2)), tol)
            doc["joint_stationarity"] = {"holds": st.holds, "residual": st.residual,
                                         "tolerance": st.tolerance}
        if n >= 3:
            try:
                doc["geometric_decay"] = gauss.geometric_decay_certificate(m, tol).to_dict()
            except ValueError as exc:
                doc["geometric_decay"] = {"status": "not_applicable", "reason": str(exc)}
    else:
        raise UsageError(f"{args.model}: certify needs an AR source or a joint model")
    _emit(dumps(doc), args.out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "audit": cmd_audit,
            "code": cmd_code, "certify": cmd_certify}


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        sys.stderr.write(f"crdlab: error: {exc}\n")
        return EXIT_USAGE
    except (solver.UnsupportedOrderError, gauss.UnstableModelError) as exc:
        sys.stderr.write(f"crdlab: error: {exc}\n")
        return EXIT_USAGE


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
