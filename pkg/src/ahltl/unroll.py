"""Transition-system unrolling: per-trace-variable Boolean state banks.

Each trace variable gets k+1 binary-encoded state copies x^0..x^k with the
initial condition on x^0 and the transition relation between consecutive
copies, so satisfying assignments are exactly the length-(k+1) paths of the
model from its initial state. Terminal self-loops are part of the relation,
which lets shorter runs stutter in their final state.
"""

from __future__ import annotations

from dataclasses import dataclass

from .model import HALT, KripkeModel
from .qbf import Circuit, Node


@dataclass
class VarBank:
    """State bits for one trace variable: bits[i][b], i <= k."""

    pi: str
    model: KripkeModel
    nbits: int
    bits: list[list[Node]]

    def state_eq(self, circuit: Circuit, i: int, s: int) -> Node:
        lits = []
        for b in range(self.nbits):
            bit = self.bits[i][b]
            lits.append(bit if s >> b & 1 else circuit.lnot(bit))
        return circuit.land(*lits)

    def decode_state(self, i: int, values: dict[int, bool]) -> int:
        s = 0
        for b in range(self.nbits):
            if values.get(self.bits[i][b].var, False):
                s |= 1 << b
        return s

    def variable_ids(self) -> list[int]:
        return [bit.var for row in self.bits for bit in row]


@dataclass
class UnrolledModel:
    bank: VarBank
    constraint: Node
    k: int

    @property
    def model(self) -> KripkeModel:
        return self.bank.model


def unroll(circuit: Circuit, model: KripkeModel, pi: str, k: int) -> UnrolledModel:
    """Build the state banks and the path constraint for trace variable pi."""
    if k < 0:
        raise ValueError("k must be non-negative")
    n = model.num_states
    nbits = max(1, (n - 1).bit_length())
    bits = [[circuit.new_var(f"x_{pi}_{i}_{b}") for b in range(nbits)]
            for i in range(k + 1)]
    bank = VarBank(pi, model, nbits, bits)

    parts = [bank.state_eq(circuit, 0, model.init)]
    for i in range(k):
        step = circuit.lor(*(
            circuit.land(bank.state_eq(circuit, i, a), bank.state_eq(circuit, i + 1, b))
            for a, b in sorted(model.transitions)))
        parts.append(step)
    if n < (1 << nbits):
        # exclude the unused bit patterns so paths and assignments biject
        for i in range(k + 1):
            parts.append(circuit.lor(*(bank.state_eq(circuit, i, s)
                                       for s in range(n))))
    return UnrolledModel(bank, circuit.land(*parts), k)


def prop_literal(circuit: Circuit, u: UnrolledModel, prop: str, i: int) -> Node:
    """Formula over the step-i state bits, true exactly on prop-labeled states."""
    model = u.model
    if prop != HALT and prop not in model.props:
        raise ValueError(f"unknown proposition {prop!r} in model {model.name!r}")
    if not 0 <= i <= u.k:
        raise ValueError(f"step {i} outside 0..{u.k}")
    holding = model.states_with(prop)
    if len(holding) == model.num_states:
        return circuit.true
    if not holding:
        return circuit.false
    return circuit.lor(*(u.bank.state_eq(circuit, i, s) for s in holding))
