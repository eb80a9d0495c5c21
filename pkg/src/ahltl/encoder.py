"""QBF encoding of the bounded model-checking problem.

Translates the NNF temporal body step-indexed into the circuit (atoms as
position-guarded state lookups; until/release unrolled over trajectory
steps with mode-specific end rules), wraps it with the moves obligations of
the quantifier-prefix shape, and assembles the prenex query: one block per
trace quantifier over its state bits, one per trajectory quantifier over
its move bits, and a final existential block holding the functionally
determined position/off bits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .formula import (AhltlFormula, And, Atom, Body, FalseConst, Not, Or,
                      PrefixShape, Release, TrueConst, Until, classify_prefix,
                      nnf)
from .model import ModelBundle, is_acyclic, ModelError
from .oracle import HOPT, HPES, MODES
from .qbf import Circuit, FunctionalDefs, Node, QbfQuery, QuantBlock, SpineHint
from .trajectory import (TrajectoryBank, build_banks, build_pos,
                         halted_predicate, moves_predicate,
                         position_definitions)
from .unroll import UnrolledModel, unroll


@dataclass
class EncodingSession:
    """Everything produced while encoding one (formula, bounds, mode) query."""

    mode: str
    k: int
    m: int
    bundle: ModelBundle
    formula: AhltlFormula
    body: Body  # NNF
    shape: PrefixShape
    circuit: Circuit
    unrolled: dict[str, UnrolledModel]
    banks: dict[tuple[str, str], TrajectoryBank]
    pos_constraint: Node
    query: QbfQuery | None = None
    seconds_unroll: float = 0.0
    seconds_trajectory: float = 0.0
    seconds_encode: float = 0.0
    _memo: dict[tuple[int, int], Node] = field(default_factory=dict)
    _ids: dict[int, Body] = field(default_factory=dict)


def encode_body(s: EncodingSession, body: Body, j: int) -> Node:
    """Truth of an NNF subformula at trajectory step j, as a circuit node.

    Memoized on (subformula, j): the until/release rules reference j+1, so
    sharing keeps the expansion linear in |body| * (m+1) instead of
    exponential.
    """
    key = (id(body), j)
    got = s._memo.get(key)
    if got is not None:
        return got
    s._ids[id(body)] = body  # keep alive for the memo key
    c = s.circuit
    if isinstance(body, TrueConst):
        node = c.true
    elif isinstance(body, FalseConst):
        node = c.false
    elif isinstance(body, (Atom, Not)):
        node = _encode_atom(s, body, j)
    elif isinstance(body, And):
        node = c.land(encode_body(s, body.left, j), encode_body(s, body.right, j))
    elif isinstance(body, Or):
        node = c.lor(encode_body(s, body.left, j), encode_body(s, body.right, j))
    elif isinstance(body, Until):
        node = _encode_until(s, body, j)
    elif isinstance(body, Release):
        node = _encode_release(s, body, j)
    else:
        raise ValueError(f"body not in NNF: {body!r}")
    s._memo[key] = node
    return node


def _encode_atom(s: EncodingSession, body: Body, j: int) -> Node:
    c = s.circuit
    if isinstance(body, Not):
        atom = body.arg
        positive = False
        if not isinstance(atom, Atom):
            raise ValueError("body not in NNF")
    else:
        atom = body
        positive = True
    bank = s.banks[(atom.trace, atom.traj)]
    u = s.unrolled[atom.trace]
    parts = []
    for i in range(s.k + 1):
        lit = _prop(s, u, atom.prop, i)
        parts.append(c.land(bank.pos[i][j], lit if positive else c.lnot(lit)))
    return c.lor(*parts)


def _prop(s: EncodingSession, u: UnrolledModel, prop: str, i: int) -> Node:
    from .unroll import prop_literal
    return prop_literal(s.circuit, u, prop, i)


def _off_any(s: EncodingSession, j: int) -> Node:
    return s.circuit.lor(*(b.off[j] for b in s.banks.values()))


def _halted_all(s: EncodingSession, j: int) -> Node:
    return halted_predicate(s.circuit, s.banks, s.unrolled,
                            s.formula.traj_vars, j)


def _encode_until(s: EncodingSession, body: Until, j: int) -> Node:
    c = s.circuit
    if j == s.m:
        p2 = encode_body(s, body.right, j)
        if s.mode == HPES:
            return p2
        # optimistic bound: a pending eventuality is assumed fulfilled
        # unless everything has provably halted
        p1 = encode_body(s, body.left, j)
        return c.lor(p2, c.land(c.lnot(_halted_all(s, j)), p1))
    p1 = encode_body(s, body.left, j)
    p2 = encode_body(s, body.right, j)
    rest = encode_body(s, body, j + 1)
    core = c.lor(p2, c.land(p1, rest))
    if s.mode == HPES:
        return c.land(c.lnot(_off_any(s, j)), core)
    return c.lor(_off_any(s, j), core)


def _encode_release(s: EncodingSession, body: Release, j: int) -> Node:
    c = s.circuit
    if j == s.m:
        p2 = encode_body(s, body.right, j)
        if s.mode == HOPT:
            return p2
        p1 = encode_body(s, body.left, j)
        return c.lor(c.land(p1, p2), c.land(_halted_all(s, j), p2))
    p1 = encode_body(s, body.left, j)
    p2 = encode_body(s, body.right, j)
    rest = encode_body(s, body, j + 1)
    core = c.land(p2, c.lor(p1, rest))
    if s.mode == HPES:
        return c.land(c.lnot(_off_any(s, j)), core)
    return c.lor(_off_any(s, j), core)


def encode_prefix_shape(s: EncodingSession, shape: PrefixShape,
                        body_node: Node) -> Node:
    """Wrap the step-0 body with the moves obligations of the shape.

    Existential trajectory blocks are restricted to words that never
    globally stutter; universal blocks only need to be considered on such
    words. With one alternation, the inner block must additionally keep
    moving once the outer block has halted all its pairs.
    """
    c = s.circuit

    def moves_all(taus) -> Node:
        return c.land(*(moves_predicate(c, s.banks, s.unrolled, taus, j)
                        for j in range(s.m + 1)))

    if shape.kind == "E":
        return c.land(moves_all(shape.first), body_node)
    if shape.kind == "A":
        return c.implies(moves_all(shape.first), body_node)

    outer, inner = shape.first, shape.second
    chain = c.land(*(
        c.implies(halted_predicate(c, s.banks, s.unrolled, outer, j),
                  moves_predicate(c, s.banks, s.unrolled, inner, j))
        for j in range(s.m + 1)))
    if shape.kind == "AE":
        return c.implies(moves_all(outer), c.land(chain, body_node))
    return c.land(moves_all(outer), c.implies(chain, body_node))


def assemble(s: EncodingSession) -> QbfQuery:
    """Build the prenex query; trace blocks nest via implication when
    universal and conjunction when existential."""
    c = s.circuit
    body0 = encode_body(s, s.body, 0)
    enc = encode_prefix_shape(s, s.shape, body0)

    rest = c.land(s.pos_constraint, enc)
    matrix = rest
    base = c.false
    for q in reversed(s.formula.trace_prefix):
        constraint = s.unrolled[q.var].constraint
        if q.kind == "forall":
            matrix = c.implies(constraint, matrix)
            base = c.implies(constraint, base)
        else:
            matrix = c.land(constraint, matrix)
            base = c.land(constraint, base)
    care = c.land(*(s.unrolled[q.var].constraint
                    for q in s.formula.trace_prefix))

    blocks: list[QuantBlock] = []
    for q in s.formula.trace_prefix:
        kind = "a" if q.kind == "forall" else "e"
        blocks.append(QuantBlock(kind, tuple(s.unrolled[q.var].bank.variable_ids())))
    for q in s.formula.traj_prefix:
        kind = "a" if q.kind == "A" else "e"
        ids = []
        for (pi, tau), bank in s.banks.items():
            if tau == q.var:
                ids.extend(bank.move_ids())
        blocks.append(QuantBlock(kind, tuple(ids)))
    inner = []
    for bank in s.banks.values():
        inner.extend(bank.pos_off_ids())
    blocks.append(QuantBlock("e", tuple(inner)))

    from .model import HALT
    from .unroll import prop_literal
    defs: list[tuple[int, Node]] = []
    for (pi, _tau), bank in s.banks.items():
        halt_k = prop_literal(c, s.unrolled[pi], HALT, s.k)
        defs.extend(position_definitions(c, bank, halt_k, s.k, s.m))
    hints = FunctionalDefs(defs, s.pos_constraint)

    query = QbfQuery(c, blocks, matrix, var_order=_bdd_order(s),
                     functional=hints, spine=SpineHint(base, care, rest))
    query.validate()
    s.query = query
    return query


def _bdd_order(s: EncodingSession) -> list[int]:
    """Step-major variable order: state bits first, then per trajectory step
    the move bits and the position/off columns. Keeps the internal
    evaluator's frontier to the current alignment state."""
    order: list[int] = []
    for q in s.formula.trace_prefix:
        order.extend(s.unrolled[q.var].bank.variable_ids())
    for j in range(s.m + 2):
        for bank in s.banks.values():
            if j <= s.m:
                order.append(bank.t[j].var)
        for bank in s.banks.values():
            order.extend(bank.pos[i][j].var for i in range(s.k + 1))
            order.append(bank.off[j].var)
    return order


def build_session(bundle: ModelBundle, f: AhltlFormula, k: int, m: int,
                  mode: str) -> EncodingSession:
    """Unroll, build trajectory banks and constraints, encode, assemble."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    shape = classify_prefix(f)
    circuit = Circuit()

    t0 = time.perf_counter()
    unrolled = {}
    for q in f.trace_prefix:
        model = bundle.resolve(q.model)
        if not is_acyclic(model):
            raise ModelError(f"model {model.name!r} is not acyclic")
        unrolled[q.var] = unroll(circuit, model, q.var, k)
    t1 = time.perf_counter()

    pairs = [(pi, tau) for pi in f.trace_vars for tau in f.traj_vars]
    banks = build_banks(circuit, pairs, k, m)
    pos = build_pos(circuit, banks, unrolled, k, m)
    t2 = time.perf_counter()

    session = EncodingSession(
        mode=mode, k=k, m=m, bundle=bundle, formula=f, body=nnf(f.body),
        shape=shape, circuit=circuit, unrolled=unrolled, banks=banks,
        pos_constraint=pos.node)
    assemble(session)
    t3 = time.perf_counter()
    session.seconds_unroll = t1 - t0
    session.seconds_trajectory = t2 - t1
    session.seconds_encode = t3 - t2
    return session
