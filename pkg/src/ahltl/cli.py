"""End-to-end driver: load models and a formula, run the iterative
deepening loop under both bounded semantics, and report the verdict.

Soundness of the verdicts: a pessimistic SAT proves the property holds; an
optimistic UNSAT proves it is violated. For acyclic models the loop is a
decision procedure: at depth K (the deepest model) with trajectory bound
M = K * #traces * #trajectories the two semantics must agree, so the loop
always terminates with Holds or Violated unless the user fixed smaller
bounds, in which case Unknown(k, m) is possible.

Exit codes: 0 Holds, 1 Violated, 2 Unknown, 3 usage/input error,
4 solver failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from . import oracle as oracle_mod
from .encoder import build_session
from .formula import (AhltlFormula, FormulaError, UnsupportedFragmentError,
                      dual, parse_formula)
from .model import (KripkeModel, ModelBundle, ModelError, is_acyclic,
                    max_depth, parse_model)
from .oracle import HOPT, HPES, OracleBudgetError
from .qbf import to_qcir, to_qdimacs
from .solver import (SAT, TIMEOUT, UNSAT, DecodedWitness, SolverBackend,
                     decode_witness, render_witness, solve)

HOLDS = "holds"
VIOLATED = "violated"
UNKNOWN = "unknown"

EXIT_CODES = {HOLDS: 0, VIOLATED: 1, UNKNOWN: 2}


class BmcError(Exception):
    """Solver failure or internal inconsistency; maps to exit code 4."""


@dataclass
class BmcConfig:
    models: list[str] = field(default_factory=list)  # "name=path" or "path"
    formula: str = ""
    semantics: str = "both"  # hpes | hopt | both
    k: int | None = None
    m: int | None = None
    auto_bounds: bool = True
    solver_path: str | None = None
    fmt: str = "qcir"
    emit_qbf: str | None = None
    oracle: bool = False
    oracle_budget: int = oracle_mod.DEFAULT_BUDGET
    json_output: bool = False
    keep_artifacts: bool = False
    timeout: float | None = None


@dataclass
class IterationRow:
    k: int
    m: int
    hpes: str | None = None
    hopt: str | None = None
    seconds_gen: float = 0.0
    seconds_tr: float = 0.0
    seconds_solve: float = 0.0
    oracle_note: str | None = None


@dataclass
class BmcReport:
    verdict: str
    k: int
    m: int
    iterations: list[IterationRow] = field(default_factory=list)
    witness: DecodedWitness | None = None
    witness_text: str | None = None
    gen_qbf_s: float = 0.0
    build_tr_s: float = 0.0
    solve_qbf_s: float = 0.0
    total_s: float = 0.0


def load_bundle(specs: list[str]) -> ModelBundle:
    models: dict[str, KripkeModel] = {}
    for spec in specs:
        name = None
        path = spec
        if "=" in spec:
            name, path = spec.split("=", 1)
        try:
            with open(path, encoding="utf-8") as fh:
                m = parse_model(fh.read())
        except OSError as e:
            raise ModelError(f"cannot read model file {path!r}: {e}") from e
        if name:
            m = KripkeModel(name, m.state_names, m.init, m.transitions,
                            m.labels, m.props, m.successors)
        if m.name in models:
            raise ModelError(f"duplicate model name {m.name!r}")
        models[m.name] = m
    return ModelBundle(models)


def _schedule(bundle: ModelBundle, f: AhltlFormula,
              cfg: BmcConfig) -> tuple[list[tuple[int, int]], bool]:
    """Bound pairs to try; second value says the last pair is complete."""
    if cfg.k is not None or cfg.m is not None:
        if cfg.k is None or cfg.m is None:
            raise BmcError("fixed bounds need both -k and -m")
        return [(cfg.k, cfg.m)], False
    paths = len(f.trace_vars)
    trajs = len(f.traj_vars)
    depth = 0
    for q in f.trace_prefix:
        model = bundle.resolve(q.model)
        if not is_acyclic(model):
            raise ModelError(
                f"model {model.name!r} is not acyclic; automatic bounds need "
                "terminating models (pass -k/-m to bound the search)")
        depth = max(depth, max_depth(model))
    if depth == 0:
        return [(0, 0)], True
    return [(k, k * paths * trajs) for k in range(1, depth + 1)], True


def _solve_one(bundle, f, k, m, mode, backend, emit=None):
    session = build_session(bundle, f, k, m, mode)
    if emit is not None:
        prefix, fmt = emit
        text = to_qcir(session.query) if fmt == "qcir" else to_qdimacs(session.query)
        path = f"{prefix}_k{k}_m{m}_{mode}.{fmt}"
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    result = solve(session.query, backend)
    if result.verdict in (TIMEOUT, "error"):
        raise BmcError(
            f"solver failed at k={k} m={m} ({mode}): "
            f"{result.verdict} {result.detail}".strip())
    return session, result


def run_bmc(cfg: BmcConfig) -> BmcReport:
    bundle = load_bundle(cfg.models)
    try:
        with open(cfg.formula, encoding="utf-8") as fh:
            f = parse_formula(fh.read())
    except OSError as e:
        raise FormulaError(f"cannot read formula file {cfg.formula!r}: {e}") from e
    backend = _make_backend(cfg)
    return bmc_check(bundle, f, backend, semantics=cfg.semantics, cfg=cfg)


def _make_backend(cfg: BmcConfig) -> SolverBackend:
    if cfg.solver_path:
        return SolverBackend("external", cfg.solver_path, cfg.fmt,
                             timeout=cfg.timeout,
                             keep_artifacts=cfg.keep_artifacts)
    return SolverBackend("internal", timeout=cfg.timeout)


def bmc_check(bundle: ModelBundle, f: AhltlFormula,
              backend: SolverBackend | None = None, semantics: str = "both",
              cfg: BmcConfig | None = None) -> BmcReport:
    """The BMC loop over already-loaded inputs."""
    cfg = cfg or BmcConfig()
    backend = backend or SolverBackend("internal", timeout=cfg.timeout)
    if semantics not in ("hpes", "hopt", "both"):
        raise BmcError(f"unknown semantics {semantics!r}")
    modes = [HPES, HOPT] if semantics == "both" else [semantics]
    schedule, complete = _schedule(bundle, f, cfg)
    emit = (cfg.emit_qbf, cfg.fmt) if cfg.emit_qbf else None

    t_start = time.perf_counter()
    report = BmcReport(UNKNOWN, *schedule[-1])

    for idx, (k, m) in enumerate(schedule):
        row = IterationRow(k, m)
        report.iterations.append(row)
        outcomes: dict[str, tuple] = {}
        if len(modes) == 2:
            # the two semantics are independent; solve them in parallel
            with ThreadPoolExecutor(max_workers=2) as pool:
                futs = {mode: pool.submit(_solve_one, bundle, f, k, m, mode,
                                          backend, emit)
                        for mode in modes}
                for mode, fut in futs.items():
                    outcomes[mode] = fut.result()
        else:
            outcomes[modes[0]] = _solve_one(bundle, f, k, m, modes[0],
                                            backend, emit)
        for mode, (session, result) in outcomes.items():
            row.seconds_gen += session.seconds_unroll + session.seconds_encode
            row.seconds_tr += session.seconds_trajectory
            row.seconds_solve += result.seconds
            if mode == HPES:
                row.hpes = result.verdict
            else:
                row.hopt = result.verdict
        report.gen_qbf_s += row.seconds_gen
        report.build_tr_s += row.seconds_tr
        report.solve_qbf_s += row.seconds_solve

        if cfg.oracle:
            row.oracle_note = _oracle_check(bundle, f, k, m, outcomes, cfg)

        last = idx == len(schedule) - 1
        if HPES in outcomes and outcomes[HPES][1].verdict == SAT:
            report.verdict, report.k, report.m = HOLDS, k, m
            _attach_holds_witness(report, outcomes[HPES])
            break
        if HOPT in outcomes and outcomes[HOPT][1].verdict == UNSAT:
            report.verdict, report.k, report.m = VIOLATED, k, m
            # extract over fully unrolled traces: at the completeness bound
            # the negation is guaranteed satisfiable and its witnesses are
            # complete runs, not prefixes
            wit_bounds = schedule[-1] if complete else (k, m)
            _attach_violation_witness(report, bundle, f, backend, wit_bounds)
            break
        if last and complete and len(modes) == 2:
            # at the completeness bound the semantics must agree; reaching
            # this point means hpes said unsat and hopt said sat
            raise BmcError(
                f"internal error: semantics disagree at the completeness "
                f"bound k={k} m={m} (hpes={row.hpes}, hopt={row.hopt}); "
                "this indicates an encoding bug, not a property of the input")
        if last:
            report.verdict, report.k, report.m = UNKNOWN, k, m

    report.total_s = time.perf_counter() - t_start
    return report


def _attach_holds_witness(report: BmcReport, outcome):
    session, result = outcome
    if result.witness:
        w = decode_witness(result, session)
        report.witness = w
        report.witness_text = None if w.is_empty() else render_witness(w, session)
    if not report.witness_text:
        report.witness_text = "(no extractable prefix)"


def _attach_violation_witness(report: BmcReport, bundle, f, backend, bounds):
    """Re-solve the negation so the violating traces sit in a leading
    existential prefix and can be read off the model."""
    neg = dual(f)
    k, m = bounds
    try:
        session, result = _solve_one(bundle, neg, k, m, HPES, backend)
    except BmcError:
        return
    if result.verdict == SAT:
        if result.witness:
            w = decode_witness(result, session)
            report.witness = w
            report.witness_text = None if w.is_empty() \
                else render_witness(w, session)
        if not report.witness_text:
            report.witness_text = "(no extractable prefix)"
        return
    report.witness_text = "(no counterexample extracted at these bounds)"


def _oracle_check(bundle, f, k, m, outcomes, cfg) -> str:
    notes = []
    for mode, (_session, result) in outcomes.items():
        try:
            truth = oracle_mod.eval_bounded(bundle, f, k, m, mode,
                                            budget=cfg.oracle_budget)
        except OracleBudgetError:
            notes.append(f"{mode}: skipped (budget)")
            continue
        expect = SAT if truth else UNSAT
        if result.verdict != expect:
            raise BmcError(
                f"internal error: oracle disagrees with the QBF verdict at "
                f"k={k} m={m} ({mode}): oracle={expect} qbf={result.verdict}")
        notes.append(f"{mode}: ok")
    return ", ".join(notes)


# --- reporting ----------------------------------------------------------------

def emit_report(report: BmcReport, fmt: str = "text") -> str:
    if fmt == "json":
        payload = {
            "verdict": report.verdict.upper(),
            "k": report.k,
            "m": report.m,
            "iterations": [
                {"k": r.k, "m": r.m, "hpes": r.hpes, "hopt": r.hopt,
                 "oracle": r.oracle_note}
                for r in report.iterations
            ],
            "timings": {
                "gen_qbf_s": round(report.gen_qbf_s, 6),
                "build_tr_s": round(report.build_tr_s, 6),
                "solve_qbf_s": round(report.solve_qbf_s, 6),
                "total_s": round(report.total_s, 6),
            },
            "witness": report.witness_text,
        }
        return json.dumps(payload, indent=2)

    lines = [f"RESULT: {report.verdict.upper()}",
             f"bounds: k={report.k} m={report.m}"]
    lines.append(f"{'k':>3} {'m':>4} {'hpes':>6} {'hopt':>6} "
                 f"{'gen[s]':>8} {'tr[s]':>8} {'solve[s]':>9}")
    for r in report.iterations:
        lines.append(f"{r.k:>3} {r.m:>4} {r.hpes or '-':>6} {r.hopt or '-':>6} "
                     f"{r.seconds_gen:>8.3f} {r.seconds_tr:>8.3f} "
                     f"{r.seconds_solve:>9.3f}"
                     + (f"  oracle: {r.oracle_note}" if r.oracle_note else ""))
    lines.append(f"timings: genQBF={report.gen_qbf_s:.3f}s "
                 f"buildTr={report.build_tr_s:.3f}s "
                 f"solveQBF={report.solve_qbf_s:.3f}s "
                 f"total={report.total_s:.3f}s")
    if report.witness_text:
        lines.append("witness:")
        lines.extend("  " + ln for ln in report.witness_text.splitlines())
    return "\n".join(lines)


# --- entry point ----------------------------------------------------------------

def build_arg_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="ahltl-bmc",
        description="Bounded model checker for asynchronous hyperproperties "
                    "over acyclic Kripke structures, via QBF.")
    ap.add_argument("--model", action="append", default=[], metavar="[NAME=]PATH",
                    help="model file; repeat for multi-model formulas")
    ap.add_argument("--formula", required=True, metavar="PATH")
    ap.add_argument("-k", type=int, default=None, help="fixed unrolling depth")
    ap.add_argument("-m", type=int, default=None, help="fixed trajectory bound")
    ap.add_argument("--auto-bounds", action="store_true",
                    help="iterate bounds up to the completeness bound (default)")
    ap.add_argument("--semantics", choices=["hpes", "hopt", "both"],
                    default="both")
    ap.add_argument("--solver", default=None, metavar="PATH",
                    help="external QBF solver executable (default: internal)")
    ap.add_argument("--format", choices=["qcir", "qdimacs"], default="qcir")
    ap.add_argument("--emit-qbf", default=None, metavar="PREFIX",
                    help="write each query to PREFIX_k<k>_m<m>_<mode>.<fmt>")
    ap.add_argument("--oracle", action="store_true",
                    help="cross-check every verdict against the enumeration "
                         "oracle (small instances only)")
    ap.add_argument("--json", action="store_true", dest="json_output")
    ap.add_argument("--keep-artifacts", action="store_true")
    ap.add_argument("--timeout", type=float, default=None, metavar="SECONDS")
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_arg_parser()
    ns = ap.parse_args(argv)
    if ns.auto_bounds and (ns.k is not None or ns.m is not None):
        print("error: --auto-bounds conflicts with -k/-m", file=sys.stderr)
        return 3
    cfg = BmcConfig(
        models=ns.model, formula=ns.formula, semantics=ns.semantics,
        k=ns.k, m=ns.m, auto_bounds=ns.k is None and ns.m is None,
        solver_path=ns.solver, fmt=ns.format, emit_qbf=ns.emit_qbf,
        oracle=ns.oracle, json_output=ns.json_output,
        keep_artifacts=ns.keep_artifacts, timeout=ns.timeout)
    if not cfg.models:
        print("error: at least one --model is required", file=sys.stderr)
        return 3
    try:
        report = run_bmc(cfg)
    except (ModelError, FormulaError, UnsupportedFragmentError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except BmcError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    print(emit_report(report, "json" if cfg.json_output else "text"))
    return EXIT_CODES[report.verdict]


if __name__ == "__main__":
    sys.exit(main())
