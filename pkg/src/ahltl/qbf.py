"""QBF circuits: interned Boolean DAGs, prenex queries, QCIR/QDIMACS
serialization, and an internal expansion-based evaluator.

A `Circuit` owns the variable allocator and the structural-hashing table, so
two syntactically equal subterms built in the same circuit share identity.
Queries are prenex: an ordered list of quantifier blocks over variable ids,
plus a matrix node.
"""

from __future__ import annotations

import re
import sys
import time
from dataclasses import dataclass, field

from ._bdd import Bdd, BddLimitError

TRUE = "true"
FALSE = "false"
VAR = "var"
NOT = "not"
AND = "and"
OR = "or"

_NAME_RE = re.compile(r"[A-Za-z0-9_]+\Z")


class QbfError(Exception):
    pass


class BudgetExceededError(QbfError):
    """Internal evaluator ran out of its node budget; use an external solver."""


@dataclass(frozen=True)
class Node:
    kind: str
    id: int
    var: int = 0
    children: tuple["Node", ...] = ()

    def __repr__(self):
        if self.kind == VAR:
            return f"v{self.var}"
        if self.kind in (TRUE, FALSE):
            return self.kind
        return f"{self.kind}#{self.id}"


class Circuit:
    """Node factory with interning and fresh-variable allocation."""

    def __init__(self):
        self._next_id = 2
        self._next_var = 1
        self._table: dict[tuple, Node] = {}
        self.true = Node(TRUE, 0)
        self.false = Node(FALSE, 1)
        self.var_names: dict[int, str] = {}
        self._names_used: set[str] = set()

    def new_var(self, name: str | None = None) -> Node:
        vid = self._next_var
        self._next_var += 1
        if name is None:
            name = f"v{vid}"
        if not _NAME_RE.match(name):
            raise QbfError(f"variable name not QCIR-safe: {name!r}")
        if name in self._names_used:
            raise QbfError(f"duplicate variable name: {name!r}")
        self._names_used.add(name)
        self.var_names[vid] = name
        return self._intern(VAR, var=vid)

    def _intern(self, kind: str, var: int = 0, children: tuple[Node, ...] = ()) -> Node:
        key = (kind, var, tuple(c.id for c in children))
        node = self._table.get(key)
        if node is None:
            node = Node(kind, self._next_id, var, children)
            self._next_id += 1
            self._table[key] = node
        return node

    def const(self, value: bool) -> Node:
        return self.true if value else self.false

    def lnot(self, x: Node) -> Node:
        if x.kind == TRUE:
            return self.false
        if x.kind == FALSE:
            return self.true
        if x.kind == NOT:
            return x.children[0]
        return self._intern(NOT, children=(x,))

    def _nary(self, kind: str, xs, absorbing: Node, neutral: Node) -> Node:
        flat: list[Node] = []
        seen: set[int] = set()
        stack = list(reversed(list(xs)))
        while stack:
            x = stack.pop()
            if x is absorbing:
                return absorbing
            if x is neutral:
                continue
            if x.kind == kind:
                stack.extend(reversed(x.children))
                continue
            if x.id not in seen:
                seen.add(x.id)
                flat.append(x)
        if not flat:
            return neutral
        if len(flat) == 1:
            return flat[0]
        return self._intern(kind, children=tuple(flat))

    def land(self, *xs: Node) -> Node:
        return self._nary(AND, xs, self.false, self.true)

    def lor(self, *xs: Node) -> Node:
        return self._nary(OR, xs, self.true, self.false)

    def implies(self, a: Node, b: Node) -> Node:
        return self.lor(self.lnot(a), b)

    def iff(self, a: Node, b: Node) -> Node:
        return self.land(self.implies(a, b), self.implies(b, a))

    def all_of(self, xs) -> Node:
        return self.land(*xs)

    def any_of(self, xs) -> Node:
        return self.lor(*xs)


@dataclass(frozen=True)
class QuantBlock:
    quantifier: str  # 'e' or 'a'
    variables: tuple[int, ...]

    def __post_init__(self):
        if self.quantifier not in ("e", "a"):
            raise QbfError(f"bad quantifier {self.quantifier!r}")


@dataclass
class FunctionalDefs:
    """Optional solver hint: innermost existential variables that are
    functions of earlier variables.

    `defs` lists (variable id, defining node) in dependency order; a
    definition may reference previously defined variables. `axioms` is a
    matrix conjunct that the definitions satisfy by construction, so the
    internal evaluator may substitute the definitions and treat the axiom
    node as constant true. Serialization ignores the hint entirely.
    """

    defs: list[tuple[int, Node]]
    axioms: Node


@dataclass
class SpineHint:
    """Optional solver hint: the matrix equals `base | (care & rest)`.

    Right-nested implication/conjunction matrices have this shape with
    `care` the conjunction of the antecedent constraints, `base` the matrix
    with `rest` replaced by false, and `rest` the innermost conjunct. The
    internal evaluator then builds `rest` restricted to the care set, which
    is what keeps structured queries small. Serialization ignores the hint.
    """

    base: Node
    care: Node
    rest: Node


@dataclass
class QbfQuery:
    circuit: Circuit
    blocks: list[QuantBlock]
    matrix: Node
    # preferred variable order for the internal evaluator (outermost first);
    # defaults to block order
    var_order: list[int] | None = None
    functional: FunctionalDefs | None = None
    spine: SpineHint | None = None

    def block_vars(self) -> list[int]:
        out = []
        for b in self.blocks:
            out.extend(b.variables)
        return out

    def validate(self):
        bound = self.block_vars()
        if len(bound) != len(set(bound)):
            raise QbfError("variable bound in more than one block")
        free = _collect_vars(self.matrix) - set(bound)
        if free:
            raise QbfError(f"unbound matrix variables: {sorted(free)[:5]}")
        if self.functional is not None:
            if not self.blocks or self.blocks[-1].quantifier != "e":
                raise QbfError("functional hints need an innermost e-block")
            inner = set(self.blocks[-1].variables)
            for v, _node in self.functional.defs:
                if v not in inner:
                    raise QbfError(
                        f"functionally defined variable {v} is not in the "
                        "innermost existential block")


def _collect_vars(root: Node) -> set[int]:
    out: set[int] = set()
    seen: set[int] = set()
    stack = [root]
    while stack:
        n = stack.pop()
        if n.id in seen:
            continue
        seen.add(n.id)
        if n.kind == VAR:
            out.add(n.var)
        else:
            stack.extend(n.children)
    return out


def node_count(root: Node) -> int:
    seen: set[int] = set()
    stack = [root]
    while stack:
        n = stack.pop()
        if n.id in seen:
            continue
        seen.add(n.id)
        stack.extend(n.children)
    return len(seen)


# ---------------------------------------------------------------------------
# QCIR-G14
# ---------------------------------------------------------------------------

def to_qcir(query: QbfQuery) -> str:
    """Serialize to QCIR-G14 with and/or gates and '-' negation."""
    query.validate()
    names = query.circuit.var_names
    lines = ["#QCIR-G14"]
    for b in query.blocks:
        kw = "exists" if b.quantifier == "e" else "forall"
        lines.append(f"{kw}({', '.join(names[v] for v in b.variables)})")

    gates: list[str] = []
    gate_no = 0
    lit_of: dict[int, str] = {}

    def emit(n: Node) -> str:
        nonlocal gate_no
        got = lit_of.get(n.id)
        if got is not None:
            return got
        if n.kind == VAR:
            lit = names[n.var]
        elif n.kind == NOT:
            lit = "-" + emit(n.children[0])
        elif n.kind in (AND, OR):
            args = [emit(c) for c in n.children]
            gate_no += 1
            g = f"g{gate_no}"
            gates.append(f"{g} = {n.kind}({', '.join(args)})")
            lit = g
        elif n.kind == TRUE:
            gate_no += 1
            g = f"g{gate_no}"
            gates.append(f"{g} = and()")
            lit = g
        else:  # FALSE
            gate_no += 1
            g = f"g{gate_no}"
            gates.append(f"{g} = or()")
            lit = g
        lit_of[n.id] = lit
        return lit

    out_lit = emit(query.matrix)
    lines.append(f"output({out_lit})")
    lines.extend(gates)
    return "\n".join(lines) + "\n"


def read_qcir(text: str) -> QbfQuery:
    """Parse the QCIR subset produced by to_qcir (plus free whitespace).

    Used by tests for round-trip checks and by solver shims; not a general
    QCIR front end (no xor/ite, no cleansed-form numbers).
    """
    circuit = Circuit()
    blocks: list[QuantBlock] = []
    by_name: dict[str, Node] = {}
    output_lit: str | None = None
    gate_defs: list[tuple[str, str, list[str]]] = []

    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        m = re.match(r"(exists|forall)\((.*)\)\Z", line)
        if m:
            if output_lit is not None:
                raise QbfError("quantifier block after output")
            vs = [s.strip() for s in m.group(2).split(",") if s.strip()]
            ids = []
            for name in vs:
                if name in by_name:
                    raise QbfError(f"variable {name!r} quantified twice")
                node = circuit.new_var(name)
                by_name[name] = node
                ids.append(node.var)
            blocks.append(QuantBlock("e" if m.group(1) == "exists" else "a", tuple(ids)))
            continue
        m = re.match(r"output\((.*)\)\Z", line)
        if m:
            output_lit = m.group(1).strip()
            continue
        m = re.match(r"([-A-Za-z0-9_]+)\s*=\s*(and|or)\((.*)\)\Z", line)
        if m:
            args = [s.strip() for s in m.group(3).split(",") if s.strip()]
            gate_defs.append((m.group(1), m.group(2), args))
            continue
        raise QbfError(f"unparsable QCIR line: {raw!r}")

    if output_lit is None:
        raise QbfError("missing output(...)")

    def lit(s: str) -> Node:
        neg = s.startswith("-")
        if neg:
            s = s[1:]
        node = by_name.get(s)
        if node is None:
            raise QbfError(f"undefined literal {s!r}")
        return circuit.lnot(node) if neg else node

    for gname, op, args in gate_defs:
        if gname in by_name:
            raise QbfError(f"gate {gname!r} redefined")
        nodes = [lit(a) for a in args]
        by_name[gname] = circuit.land(*nodes) if op == "and" else circuit.lor(*nodes)

    return QbfQuery(circuit, blocks, lit(output_lit))


# ---------------------------------------------------------------------------
# QDIMACS (via Tseitin)
# ---------------------------------------------------------------------------

def _push_nnf(circuit: Circuit, root: Node) -> Node:
    """Rewrite so negation applies only to variables."""
    memo: dict[tuple[int, bool], Node] = {}

    def go(n: Node, neg: bool) -> Node:
        key = (n.id, neg)
        got = memo.get(key)
        if got is not None:
            return got
        if n.kind == VAR:
            r = circuit.lnot(n) if neg else n
        elif n.kind in (TRUE, FALSE):
            r = circuit.lnot(n) if neg else n
        elif n.kind == NOT:
            r = go(n.children[0], not neg)
        elif n.kind == AND:
            parts = [go(c, neg) for c in n.children]
            r = circuit.lor(*parts) if neg else circuit.land(*parts)
        else:
            parts = [go(c, neg) for c in n.children]
            r = circuit.land(*parts) if neg else circuit.lor(*parts)
        memo[key] = r
        return r

    return go(root, False)


def to_qdimacs(query: QbfQuery) -> str:
    """Tseitin-transform the matrix and emit QDIMACS.

    One fresh variable per gate (one-sided encoding; the matrix is in NNF so
    every gate occurs positively). Gate variables join the innermost
    existential block, creating one if the query ends with a universal block.
    """
    query.validate()
    circuit = query.circuit
    matrix = _push_nnf(circuit, query.matrix)

    # dense renumbering: block variables first, then gate variables
    num: dict[int, int] = {}
    for v in query.block_vars():
        num[v] = len(num) + 1
    next_free = len(num) + 1

    clauses: list[list[int]] = []
    gate_lits: list[int] = []
    memo: dict[int, int] = {}

    def lit_of(n: Node) -> int:
        nonlocal next_free
        got = memo.get(n.id)
        if got is not None:
            return got
        if n.kind == VAR:
            lit = num[n.var]
        elif n.kind == NOT:
            lit = -lit_of(n.children[0])
        else:
            child = [lit_of(c) for c in n.children]
            g = next_free
            next_free += 1
            gate_lits.append(g)
            if n.kind == AND:
                for c in child:
                    clauses.append([-g, c])
            else:
                clauses.append([-g] + child)
            lit = g
        memo[n.id] = lit
        return lit

    if matrix.kind == TRUE:
        # one dummy existential variable with a satisfiable unit clause
        return "p cnf 1 1\ne 1 0\n1 0\n"
    if matrix.kind == FALSE:
        return "p cnf 1 2\ne 1 0\n1 0\n-1 0\n"

    root = lit_of(matrix)
    clauses.append([root])

    # merge adjacent same-quantifier blocks; QDIMACS wants alternation
    merged: list[tuple[str, list[int]]] = []
    for b in query.blocks:
        vs = [num[v] for v in b.variables]
        if merged and merged[-1][0] == b.quantifier:
            merged[-1][1].extend(vs)
        else:
            merged.append((b.quantifier, vs))
    if gate_lits:
        if merged and merged[-1][0] == "e":
            merged[-1][1].extend(gate_lits)
        else:
            merged.append(("e", gate_lits))

    nvars = next_free - 1
    lines = [f"p cnf {nvars} {len(clauses)}"]
    for q, vs in merged:
        if vs:
            lines.append(f"{q} {' '.join(map(str, vs))} 0")
    for cl in clauses:
        lines.append(f"{' '.join(map(str, cl))} 0")
    return "\n".join(lines) + "\n"


def read_qdimacs(text: str) -> QbfQuery:
    """Parse QDIMACS into a query (clauses become or-nodes)."""
    circuit = Circuit()
    blocks: list[QuantBlock] = []
    clauses: list[Node] = []
    nvars = 0
    by_num: dict[int, Node] = {}
    quantified: set[int] = set()

    def var_node(i: int) -> Node:
        node = by_num.get(i)
        if node is None:
            node = circuit.new_var(f"x{i}")
            by_num[i] = node
        return node

    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("c"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise QbfError(f"bad problem line: {raw!r}")
            nvars = int(parts[2])
            continue
        if line[0] in "ae":
            nums = [int(t) for t in line[1:].split()]
            if not nums or nums[-1] != 0:
                raise QbfError(f"quantifier line not 0-terminated: {raw!r}")
            ids = []
            for i in nums[:-1]:
                quantified.add(i)
                ids.append(var_node(i).var)
            blocks.append(QuantBlock("e" if line[0] == "e" else "a", tuple(ids)))
            continue
        nums = [int(t) for t in line.split()]
        if not nums or nums[-1] != 0:
            raise QbfError(f"clause not 0-terminated: {raw!r}")
        lits = []
        for t in nums[:-1]:
            v = var_node(abs(t))
            lits.append(circuit.lnot(v) if t < 0 else v)
        clauses.append(circuit.lor(*lits))

    free = sorted(i for i in by_num if i not in quantified)
    if free:
        blocks.insert(0, QuantBlock("e", tuple(by_num[i].var for i in free)))
    del nvars
    return QbfQuery(circuit, blocks, circuit.land(*clauses) if clauses else circuit.true)


# ---------------------------------------------------------------------------
# Internal evaluator
# ---------------------------------------------------------------------------

@dataclass
class ExpandResult:
    status: str  # 'sat' | 'unsat'
    # assignment of the leading maximal existential prefix, on 'sat'
    witness: dict[int, bool] | None = None
    # assignment of the leading universal block falsifying the rest, on 'unsat'
    counter_witness: dict[int, bool] | None = None
    nodes_used: int = 0


def eval_expand(query: QbfQuery, budget: int = 2_000_000,
                deadline: float | None = None) -> ExpandResult:
    """Decide a prenex query by quantifier expansion over a shared BDD.

    Blocks are eliminated innermost-first (Shannon expansion: or-join for
    existential variables, and-join for universal ones), leaving a function
    over the leading maximal same-quantifier prefix, from which the witness
    or counter-witness is read off. Functionally defined variables (see
    FunctionalDefs) are substituted instead of expanded.

    Raises BudgetExceededError when the interned node count passes `budget`;
    the caller should fall back to an external solver.
    """
    query.validate()
    defined: dict[int, Node] = dict(query.functional.defs) if query.functional else {}
    axiom_id = query.functional.axioms.id if query.functional else None

    order = list(query.var_order) if query.var_order else query.block_vars()
    missing = [v for v in query.block_vars() if v not in set(order)]
    order.extend(missing)
    order = [v for v in order if v not in defined]
    lvl_of = {v: i for i, v in enumerate(order)}

    def check():
        if deadline is not None and time.monotonic() > deadline:
            raise TimeoutError("internal solver deadline exceeded")

    bdd = Bdd(len(order), budget=budget, check=check)
    old = sys.getrecursionlimit()
    sys.setrecursionlimit(max(old, 10000 + 4 * len(order)))
    try:
        try:
            if query.spine is not None:
                base = _build_bdd(bdd, query.spine.base, lvl_of, defined, axiom_id)
                care = _build_bdd(bdd, query.spine.care, lvl_of, defined, axiom_id)
                if care == 0:
                    f = base
                else:
                    rest = _build_bdd(bdd, query.spine.rest, lvl_of, defined,
                                      axiom_id, care=care)
                    f = bdd.apply_or(base, bdd.apply_and(care, rest))
            else:
                f = _build_bdd(bdd, query.matrix, lvl_of, defined, axiom_id)
            # leading maximal prefix of one quantifier kind
            lead = 1
            while lead < len(query.blocks) and \
                    query.blocks[lead].quantifier == query.blocks[0].quantifier:
                lead += 1
            if not query.blocks:
                lead = 0
            for b in reversed(query.blocks[lead:]):
                levels = frozenset(lvl_of[v] for v in b.variables
                                   if v not in defined)
                f = bdd.quantify(f, levels, existential=(b.quantifier == "e"))
        except BddLimitError as e:
            raise BudgetExceededError(str(e)) from e

        used = bdd.size()
        if not query.blocks:
            return ExpandResult("sat" if f == 1 else "unsat", nodes_used=used)

        lead_vars = [v for b in query.blocks[:lead] for v in b.variables]
        if query.blocks[0].quantifier == "e":
            if f == 0:
                return ExpandResult("unsat", nodes_used=used)
            path = bdd.find_path(f, 1)
            wit = {v: path.get(lvl_of[v], False) for v in lead_vars
                   if v not in defined}
            _complete_defined(wit, query, lead)
            return ExpandResult("sat", witness=wit, nodes_used=used)
        # leading universal prefix
        if f == 1:
            return ExpandResult("sat", nodes_used=used)
        path = bdd.find_path(f, 0)
        cw = {v: path.get(lvl_of[v], False) for v in lead_vars}
        return ExpandResult("unsat", counter_witness=cw, nodes_used=used)
    finally:
        sys.setrecursionlimit(old)


def _complete_defined(wit: dict[int, bool], query: QbfQuery, lead: int):
    """Fill substituted variables of a fully-existential witness by
    evaluating their definitions."""
    if query.functional is None or lead < len(query.blocks):
        return
    memo: dict[int, bool] = {}

    def ev(n: Node) -> bool:
        got = memo.get(n.id)
        if got is not None:
            return got
        if n.kind == TRUE:
            r = True
        elif n.kind == FALSE:
            r = False
        elif n.kind == VAR:
            r = wit.get(n.var, False)
        elif n.kind == NOT:
            r = not ev(n.children[0])
        elif n.kind == AND:
            r = all(ev(c) for c in n.children)
        else:
            r = any(ev(c) for c in n.children)
        memo[n.id] = r
        return r

    for v, node in query.functional.defs:
        wit[v] = ev(node)


def _build_bdd(bdd: Bdd, root: Node, lvl_of: dict[int, int],
               defined: dict[int, Node] | None = None,
               axiom_id: int | None = None, care: int = 1) -> int:
    """Bottom-up BDD of a circuit node.

    With `care` set, every variable leaf is restricted by the generalized
    cofactor, which (since it distributes over Boolean operations) yields
    the restriction of the whole formula to the care set.
    """
    defined = defined or {}
    memo: dict[int, int] = {}

    def go(n: Node) -> int:
        got = memo.get(n.id)
        if got is not None:
            return got
        if n.id == axiom_id:
            r = 1  # implied by the substituted definitions
        elif n.kind == TRUE:
            r = 1
        elif n.kind == FALSE:
            r = 0
        elif n.kind == VAR:
            d = defined.get(n.var)
            if d is not None:
                r = go(d)
            else:
                r = bdd.var(lvl_of[n.var])
                if care != 1:
                    r = bdd.constrain(r, care)
        elif n.kind == NOT:
            r = bdd.apply_not(go(n.children[0]))
        elif n.kind == AND:
            r = 1
            for c in n.children:
                r = bdd.apply_and(r, go(c))
                if r == 0:
                    break
        else:
            r = 0
            for c in n.children:
                r = bdd.apply_or(r, go(c))
                if r == 1:
                    break
        memo[n.id] = r
        return r

    return go(root)
