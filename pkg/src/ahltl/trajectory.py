"""Trajectory encoding: move bits, position bits, off flags, and the
constraint that ties them together.

For every (trace variable, trajectory variable) pair there are move bits
t^j (j = 0..m), position bits pos^{i,j} (i = 0..k, j = 0..m+1) and off bits
off^j (j = 0..m+1). pos^{i,j} means: after j trajectory steps the pair sits
at path position i. off^j means the trajectory drove the trace past the
unrolling depth k before it halted. Column m+1 exists only to receive the
updates written by step j = m; nothing reads it.

The position constraint makes pos/off a function of the move bits and the
unrolled path: start at position 0, advance on a move, stutter otherwise,
saturate at k while halted, fall off (and stay off) when pushed past k
without halt.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import HALT
from .qbf import Circuit, Node
from .unroll import UnrolledModel, prop_literal


@dataclass
class TrajectoryBank:
    """Variable banks for one (trace variable, trajectory variable) pair."""

    pi: str
    tau: str
    t: list[Node]            # move bits, j = 0..m
    pos: list[list[Node]]    # pos[i][j], i = 0..k, j = 0..m+1
    off: list[Node]          # off[j], j = 0..m+1

    def move_ids(self) -> list[int]:
        return [n.var for n in self.t]

    def pos_off_ids(self) -> list[int]:
        ids = [n.var for row in self.pos for n in row]
        ids.extend(n.var for n in self.off)
        return ids


def build_banks(circuit: Circuit, pairs: list[tuple[str, str]], k: int,
                m: int) -> dict[tuple[str, str], TrajectoryBank]:
    banks = {}
    for pi, tau in pairs:
        t = [circuit.new_var(f"mv_{tau}_{pi}_{j}") for j in range(m + 1)]
        pos = [[circuit.new_var(f"pos_{pi}_{tau}_{i}_{j}") for j in range(m + 2)]
               for i in range(k + 1)]
        off = [circuit.new_var(f"off_{pi}_{tau}_{j}") for j in range(m + 2)]
        banks[(pi, tau)] = TrajectoryBank(pi, tau, t, pos, off)
    return banks


@dataclass
class PosConstraint:
    node: Node


def _setpos(c: Circuit, bank: TrajectoryBank, i: int, j: int, k: int) -> Node:
    lits = [bank.pos[i][j]]
    lits.extend(c.lnot(bank.pos[n][j]) for n in range(k + 1) if n != i)
    lits.append(c.lnot(bank.off[j]))
    return c.land(*lits)


def _nopos(c: Circuit, bank: TrajectoryBank, j: int, k: int) -> Node:
    lits = [bank.off[j]]
    lits.extend(c.lnot(bank.pos[n][j]) for n in range(k + 1))
    return c.land(*lits)


def build_pos(circuit: Circuit, banks: dict[tuple[str, str], TrajectoryBank],
              unrolled: dict[str, UnrolledModel], k: int, m: int) -> PosConstraint:
    """The full position constraint over every pair.

    Conjunction of: the initial column (every pair at position 0), and for
    each step j <= m the step/stutter/ends updates plus off persistence.
    Under it, each column is either exactly-one-position or off, and the
    whole pos/off table is determined by the move bits and the state bits.
    """
    c = circuit
    parts = []
    for bank in banks.values():
        parts.append(_setpos(c, bank, 0, 0, k))
    for (pi, _tau), bank in banks.items():
        halt_k = prop_literal(c, unrolled[pi], HALT, k)
        for j in range(m + 1):
            move = bank.t[j]
            stay = c.lnot(move)
            for i in range(k):
                parts.append(c.implies(c.land(bank.pos[i][j], move),
                                       _setpos(c, bank, i + 1, j + 1, k)))
            for i in range(k + 1):
                parts.append(c.implies(c.land(bank.pos[i][j], stay),
                                       _setpos(c, bank, i, j + 1, k)))
            parts.append(c.implies(
                c.land(bank.pos[k][j], move),
                c.land(c.implies(c.lnot(halt_k), _nopos(c, bank, j + 1, k)),
                       c.implies(halt_k, _setpos(c, bank, k, j + 1, k)))))
            # off is absorbing; keeps pos/off functionally determined
            parts.append(c.implies(bank.off[j], _nopos(c, bank, j + 1, k)))
    return PosConstraint(c.land(*parts))


def position_definitions(circuit: Circuit, bank: TrajectoryBank, halt_k: Node,
                         k: int, m: int) -> list[tuple[int, Node]]:
    """pos/off expressed as functions of the move and state bits.

    Column by column, matching the position constraint exactly: position 0
    at the start, advance on a move, stutter otherwise, saturate at k while
    on a halt label, otherwise fall off and stay off. Used as a solver hint
    (the position constraint is implied by these definitions).
    """
    c = circuit
    defs: list[tuple[int, Node]] = [(bank.pos[0][0].var, c.true)]
    defs.extend((bank.pos[i][0].var, c.false) for i in range(1, k + 1))
    defs.append((bank.off[0].var, c.false))
    for j in range(m + 1):
        move = bank.t[j]
        stay = c.lnot(move)
        for i in range(k + 1):
            parts = [c.land(bank.pos[i][j], stay)]
            if i >= 1:
                parts.append(c.land(bank.pos[i - 1][j], move))
            if i == k:
                parts.append(c.land(bank.pos[k][j], move, halt_k))
            defs.append((bank.pos[i][j + 1].var, c.lor(*parts)))
        fell = c.land(bank.pos[k][j], move, c.lnot(halt_k))
        defs.append((bank.off[j + 1].var, c.lor(bank.off[j], fell)))
    return defs


def halt_at_position(circuit: Circuit, banks, unrolled, pi: str, tau: str,
                     j: int) -> Node:
    """The pair sits on a halt-labeled position after j steps."""
    bank = banks[(pi, tau)]
    u = unrolled[pi]
    return circuit.lor(*(circuit.land(bank.pos[i][j],
                                      prop_literal(circuit, u, HALT, i))
                         for i in range(u.k + 1)))


def halted_predicate(circuit: Circuit, banks, unrolled, taus, j: int) -> Node:
    """Every pair of the given trajectory variables is on a halt position."""
    ts = set(taus)
    return circuit.land(*(halt_at_position(circuit, banks, unrolled, pi, tau, j)
                          for (pi, tau) in banks if tau in ts))


def moves_predicate(circuit: Circuit, banks, unrolled, taus, j: int) -> Node:
    """At step j the trajectory set makes progress: either all its pairs
    have halted, or it moves some pair that is not on a halt position."""
    ts = set(taus)
    options = []
    for (pi, tau), bank in banks.items():
        if tau not in ts:
            continue
        not_halted = circuit.lnot(
            halt_at_position(circuit, banks, unrolled, pi, tau, j))
        options.append(circuit.land(bank.t[j], not_halted))
    return circuit.lor(halted_predicate(circuit, banks, unrolled, ts, j),
                       *options)
