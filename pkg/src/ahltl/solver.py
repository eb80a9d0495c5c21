"""Solver backends and witness decoding.

A query is decided either by the internal expansion evaluator or by an
external QBF solver run as a subprocess on a serialized QCIR/QDIMACS file
(exit code 10 = sat, 20 = unsat, with a stdout token scan as fallback).
Satisfying witnesses cover the leading existential prefix only; they decode
back to state sequences and trajectory move sets, which can be replayed
through the reference evaluator.
"""

from __future__ import annotations

import os
import subprocess
import tempfile
import time
from dataclasses import dataclass, field

from .encoder import EncodingSession
from .oracle import AsyncAssignment, TrajectoryWord, _advance
from .qbf import (BudgetExceededError, QbfQuery, eval_expand, to_qcir,
                  to_qdimacs)

SAT = "sat"
UNSAT = "unsat"
TIMEOUT = "timeout"
ERROR = "error"

DEFAULT_NODE_BUDGET = 4_000_000


@dataclass
class SolverBackend:
    """Internal evaluator (kind='internal') or external executable."""

    kind: str = "internal"
    path: str | None = None
    fmt: str = "qcir"
    timeout: float | None = None
    budget: int = DEFAULT_NODE_BUDGET
    keep_artifacts: bool = False

    def __post_init__(self):
        if self.kind not in ("internal", "external"):
            raise ValueError(f"unknown backend kind {self.kind!r}")
        if self.fmt not in ("qcir", "qdimacs"):
            raise ValueError(f"unknown format {self.fmt!r}")
        if self.kind == "external":
            if not self.path:
                raise ValueError("external backend needs an executable path")
            if not (os.path.isfile(self.path) and os.access(self.path, os.X_OK)):
                raise ValueError(f"not an executable: {self.path!r}")


@dataclass
class SolveResult:
    verdict: str
    witness: dict[int, bool] | None = None
    counter_witness: dict[int, bool] | None = None
    detail: str = ""
    seconds: float = 0.0
    artifact: str | None = None


def solve(query: QbfQuery, backend: SolverBackend) -> SolveResult:
    t0 = time.perf_counter()
    if backend.kind == "internal":
        res = _solve_internal(query, backend)
    else:
        res = _solve_external(query, backend)
    res.seconds = time.perf_counter() - t0
    return res


def _solve_internal(query: QbfQuery, backend: SolverBackend) -> SolveResult:
    deadline = time.monotonic() + backend.timeout if backend.timeout else None
    try:
        r = eval_expand(query, budget=backend.budget, deadline=deadline)
    except BudgetExceededError as e:
        return SolveResult(ERROR, detail=f"internal budget exceeded: {e}")
    except TimeoutError:
        return SolveResult(TIMEOUT, detail="internal solver timed out")
    if r.status == "sat":
        return SolveResult(SAT, witness=r.witness)
    return SolveResult(UNSAT, counter_witness=r.counter_witness)


def _solve_external(query: QbfQuery, backend: SolverBackend) -> SolveResult:
    text = to_qcir(query) if backend.fmt == "qcir" else to_qdimacs(query)
    fd, fname = tempfile.mkstemp(suffix=f".{backend.fmt}", prefix="ahltl_")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        try:
            proc = subprocess.run(
                [backend.path, fname], capture_output=True, text=True,
                timeout=backend.timeout)
        except subprocess.TimeoutExpired:
            return SolveResult(TIMEOUT, detail=f"killed after {backend.timeout}s",
                               artifact=fname if backend.keep_artifacts else None)
        verdict = _interpret(proc.returncode, proc.stdout)
        if verdict is None:
            return SolveResult(
                ERROR,
                detail=f"unrecognized solver output (rc={proc.returncode}): "
                       f"{proc.stderr.strip()[:500]}",
                artifact=fname if backend.keep_artifacts else None)
        return SolveResult(verdict,
                           artifact=fname if backend.keep_artifacts else None)
    finally:
        if not backend.keep_artifacts:
            try:
                os.unlink(fname)
            except OSError:
                pass


def _interpret(returncode: int, stdout: str) -> str | None:
    if returncode == 10:
        return SAT
    if returncode == 20:
        return UNSAT
    if "s cnf 1" in stdout or "r SAT" in stdout:
        return SAT
    if "s cnf 0" in stdout or "r UNSAT" in stdout:
        return UNSAT
    if "UNSAT" in stdout:
        return UNSAT
    if "SAT" in stdout:
        return SAT
    return None


# --- witness decoding ---------------------------------------------------------

@dataclass
class DecodedWitness:
    """Human-readable projection of a leading-existential witness."""

    traces: dict[str, list[str]] = field(default_factory=dict)
    trajectories: dict[str, list[frozenset[str]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def is_empty(self) -> bool:
        return not self.traces and not self.trajectories


def decode_witness(result: SolveResult, session: EncodingSession) -> DecodedWitness:
    """Map witness bits back to state sequences and trajectory move sets.

    Only variables inside the leading existential prefix are available;
    universally bound traces/trajectories are reported as warnings.
    """
    if result.verdict != SAT or result.witness is None:
        raise ValueError("witness available only for sat results with a witness")
    values = result.witness
    out = DecodedWitness()

    for q in session.formula.trace_prefix:
        bank = session.unrolled[q.var].bank
        if all(v in values for v in bank.variable_ids()):
            model = bank.model
            states = [bank.decode_state(i, values) for i in range(session.k + 1)]
            bad = [s for s in states if s >= model.num_states]
            if bad:
                out.warnings.append(
                    f"trace {q.var}: witness encodes an invalid state")
                continue
            out.traces[q.var] = [model.state_names[s] for s in states]
        else:
            out.warnings.append(
                f"trace {q.var}: no extractable prefix (not leading-existential)")

    for q in session.formula.traj_prefix:
        ids_ok = True
        steps: list[set[str]] = [set() for _ in range(session.m + 1)]
        for (pi, tau), bank in session.banks.items():
            if tau != q.var:
                continue
            if not all(n.var in values for n in bank.t):
                ids_ok = False
                break
            for j, node in enumerate(bank.t):
                if values[node.var]:
                    steps[j].add(pi)
        if ids_ok:
            out.trajectories[q.var] = [frozenset(s) for s in steps]
        else:
            out.warnings.append(
                f"trajectory {q.var}: no extractable prefix (not leading-existential)")
    return out


def witness_assignment(w: DecodedWitness, session: EncodingSession) -> AsyncAssignment | None:
    """Rebuild a full assignment for replay; needs every variable decoded."""
    f = session.formula
    if set(w.traces) != set(f.trace_vars) or set(w.trajectories) != set(f.traj_vars):
        return None
    traces = {}
    for q in f.trace_prefix:
        model = session.bundle.resolve(q.model)
        sids = [model.state_id(nm) for nm in w.traces[q.var]]
        traces[q.var] = tuple(model.labels[s] for s in sids)
    words = {tau: TrajectoryWord(tuple(steps))
             for tau, steps in w.trajectories.items()}
    return AsyncAssignment(session.k, traces, words)


def position_table(w: DecodedWitness, session: EncodingSession,
                   pi: str, tau: str) -> list[int]:
    """Positions of one pair over steps 0..m, derived from the witness."""
    q = next(q for q in session.formula.trace_prefix if q.var == pi)
    model = session.bundle.resolve(q.model)
    trace = tuple(model.labels[model.state_id(nm)] for nm in w.traces[pi])
    steps = w.trajectories[tau]
    ps = [0]
    p = 0
    for step in steps[:-1]:
        p = _advance(p, pi in step, trace, session.k)
        ps.append(p)
    return ps


def render_witness(w: DecodedWitness, session: EncodingSession) -> str:
    """Traces, move sets, and the derived position grid, as display text."""
    lines: list[str] = []
    for pi, states in sorted(w.traces.items()):
        lines.append(f"trace {pi}: " + " -> ".join(states))
    for tau, steps in sorted(w.trajectories.items()):
        rendered = " ".join("{" + ",".join(sorted(s)) + "}" for s in steps)
        lines.append(f"trajectory {tau}: {rendered}")
    for tau in sorted(w.trajectories):
        for pi in sorted(w.traces):
            ps = position_table(w, session, pi, tau)
            lines.append(f"pos[{pi},{tau}]  " + "  ".join(
                "off" if p < 0 else str(p) for p in ps))
    for msg in w.warnings:
        lines.append(f"warning: {msg}")
    return "\n".join(lines)
