"""Hyperproperty formulas: prenex trace/trajectory quantifiers over a
stutter-insensitive temporal body.

Atoms are written ``p[pi,tau]``: proposition p on the trace bound to pi, at
the position that trajectory tau has advanced pi to. There is no next
operator. Trajectory quantifiers (A/E) must be innermost, after all trace
quantifiers (forall/exists), and at most one E/A alternation is supported
by the QBF encoding.

Formula file grammar (UTF-8, '#' comments, whitespace-insensitive):

    group <name> <p1> <p2> ...        # optional observable groups
    (forall|exists) <var> [in <model>] . ...  (A|E) <var> . ...  <body>

Body operators, loosest to tightest: ``<->``, ``->``, ``|``, ``&``,
``U``/``R`` (right associative), unary ``!``/``F``/``G``. Besides plain
atoms, ``x[p,t] = y[q,t]``, ``!=`` and ``<->`` compare two references;
group references expand to a conjunction of per-proposition biconditionals.
"""

from __future__ import annotations

import re
from dataclasses import dataclass


class FormulaError(Exception):
    pass


class UnsupportedFragmentError(FormulaError):
    pass


# --- body AST ---------------------------------------------------------------

@dataclass(frozen=True)
class TrueConst:
    pass


@dataclass(frozen=True)
class FalseConst:
    pass


@dataclass(frozen=True)
class Atom:
    prop: str
    trace: str
    traj: str


@dataclass(frozen=True)
class Not:
    arg: "Body"


@dataclass(frozen=True)
class And:
    left: "Body"
    right: "Body"


@dataclass(frozen=True)
class Or:
    left: "Body"
    right: "Body"


@dataclass(frozen=True)
class Implies:
    left: "Body"
    right: "Body"


@dataclass(frozen=True)
class Until:
    left: "Body"
    right: "Body"


@dataclass(frozen=True)
class Release:
    left: "Body"
    right: "Body"


@dataclass(frozen=True)
class Eventually:
    arg: "Body"


@dataclass(frozen=True)
class Globally:
    arg: "Body"


Body = (TrueConst | FalseConst | Atom | Not | And | Or | Implies
        | Until | Release | Eventually | Globally)

TRUE = TrueConst()
FALSE = FalseConst()


@dataclass(frozen=True)
class TraceQuantifier:
    kind: str  # 'forall' | 'exists'
    var: str
    model: str | None = None


@dataclass(frozen=True)
class TrajQuantifier:
    kind: str  # 'A' | 'E'
    var: str


@dataclass(frozen=True)
class AhltlFormula:
    trace_prefix: tuple[TraceQuantifier, ...]
    traj_prefix: tuple[TrajQuantifier, ...]
    body: Body

    @property
    def trace_vars(self) -> tuple[str, ...]:
        return tuple(q.var for q in self.trace_prefix)

    @property
    def traj_vars(self) -> tuple[str, ...]:
        return tuple(q.var for q in self.traj_prefix)


@dataclass(frozen=True)
class PrefixShape:
    """Trajectory prefix split at its (single) quantifier alternation.

    kind is 'E', 'A', 'AE' or 'EA'; `first`/`second` hold the trajectory
    variables of each run (second empty for the alternation-free shapes).
    """
    kind: str
    first: tuple[str, ...]
    second: tuple[str, ...] = ()


def atoms_of(body: Body) -> list[Atom]:
    out: list[Atom] = []

    def walk(b: Body):
        if isinstance(b, Atom):
            out.append(b)
        elif isinstance(b, (Not, Eventually, Globally)):
            walk(b.arg)
        elif isinstance(b, (And, Or, Implies, Until, Release)):
            walk(b.left)
            walk(b.right)

    walk(body)
    return out


def check_well_formed(f: AhltlFormula):
    tvars = [q.var for q in f.trace_prefix]
    jvars = [q.var for q in f.traj_prefix]
    dup = {v for v in tvars + jvars if (tvars + jvars).count(v) > 1}
    if dup:
        raise FormulaError(f"variable quantified twice: {sorted(dup)[0]!r}")
    for a in atoms_of(f.body):
        if a.trace not in tvars:
            raise FormulaError(f"unbound trace variable {a.trace!r}")
        if a.traj not in jvars:
            raise FormulaError(f"unbound trajectory variable {a.traj!r}")
    classify_prefix(f)


def classify_prefix(f: AhltlFormula) -> PrefixShape:
    """Split the trajectory prefix into one of the four supported shapes."""
    if not f.traj_prefix:
        raise UnsupportedFragmentError("formula has no trajectory quantifier")
    kinds = [q.kind for q in f.traj_prefix]
    vars_ = [q.var for q in f.traj_prefix]
    flip = [i for i in range(1, len(kinds)) if kinds[i] != kinds[i - 1]]
    if len(flip) > 1:
        raise UnsupportedFragmentError(
            "more than one trajectory quantifier alternation "
            f"({''.join(kinds)}); only one E/A flip is supported")
    if not flip:
        return PrefixShape(kinds[0], tuple(vars_))
    cut = flip[0]
    kind = kinds[0] + kinds[cut]
    return PrefixShape(kind, tuple(vars_[:cut]), tuple(vars_[cut:]))


# --- negation normal form ---------------------------------------------------

def nnf(body: Body) -> Body:
    """Push negations to atoms; expand F, G, ->, and false-as-negation.

    The result uses only True/False, Atom, Not(Atom), And, Or, Until and
    Release. Standard duals: !(a U b) = !a R !b and !(a R b) = !a U !b.
    """
    return _nnf(body, False)


def _nnf(b: Body, neg: bool) -> Body:
    if isinstance(b, TrueConst):
        return FALSE if neg else TRUE
    if isinstance(b, FalseConst):
        return TRUE if neg else FALSE
    if isinstance(b, Atom):
        return Not(b) if neg else b
    if isinstance(b, Not):
        return _nnf(b.arg, not neg)
    if isinstance(b, And):
        l, r = _nnf(b.left, neg), _nnf(b.right, neg)
        return Or(l, r) if neg else And(l, r)
    if isinstance(b, Or):
        l, r = _nnf(b.left, neg), _nnf(b.right, neg)
        return And(l, r) if neg else Or(l, r)
    if isinstance(b, Implies):
        return _nnf(Or(Not(b.left), b.right), neg)
    if isinstance(b, Until):
        l, r = _nnf(b.left, neg), _nnf(b.right, neg)
        return Release(l, r) if neg else Until(l, r)
    if isinstance(b, Release):
        l, r = _nnf(b.left, neg), _nnf(b.right, neg)
        return Until(l, r) if neg else Release(l, r)
    if isinstance(b, Eventually):
        return _nnf(Until(TRUE, b.arg), neg)
    if isinstance(b, Globally):
        return _nnf(Release(FALSE, b.arg), neg)
    raise TypeError(f"not a body node: {b!r}")


def dual(f: AhltlFormula) -> AhltlFormula:
    """The negation, with quantifiers flipped and the body re-normalized."""
    tp = tuple(
        TraceQuantifier("forall" if q.kind == "exists" else "exists", q.var, q.model)
        for q in f.trace_prefix)
    jp = tuple(TrajQuantifier("A" if q.kind == "E" else "E", q.var)
               for q in f.traj_prefix)
    return AhltlFormula(tp, jp, nnf(Not(f.body)))


# --- concrete syntax --------------------------------------------------------

_TOKEN = re.compile(r"""
    \s+ | \#[^\n]* |
    (?P<op><->|->|!=|=|[().,\[\]&|!]) |
    (?P<word>[A-Za-z_][A-Za-z0-9_]*)
""", re.VERBOSE)

_KEYWORDS = {"forall", "exists", "in", "A", "E", "U", "R", "F", "G",
             "true", "false", "group"}


class _Parser:
    def __init__(self, text: str):
        self.toks: list[tuple[str, str]] = []
        pos = 0
        while pos < len(text):
            m = _TOKEN.match(text, pos)
            if not m:
                raise FormulaError(f"bad character {text[pos]!r} at offset {pos}")
            pos = m.end()
            if m.group("op"):
                self.toks.append(("op", m.group("op")))
            elif m.group("word"):
                self.toks.append(("word", m.group("word")))
        self.i = 0
        self.groups: dict[str, tuple[str, ...]] = {}

    def peek(self) -> tuple[str, str] | None:
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self) -> tuple[str, str]:
        t = self.peek()
        if t is None:
            raise FormulaError("unexpected end of formula")
        self.i += 1
        return t

    def expect(self, kind: str, value: str | None = None) -> str:
        t = self.next()
        if t[0] != kind or (value is not None and t[1] != value):
            want = value if value is not None else kind
            raise FormulaError(f"expected {want!r}, got {t[1]!r}")
        return t[1]

    def at_op(self, op: str) -> bool:
        t = self.peek()
        return t is not None and t == ("op", op)

    def eat_op(self, op: str) -> bool:
        if self.at_op(op):
            self.i += 1
            return True
        return False

    # prefix ------------------------------------------------------------

    def parse_formula(self) -> AhltlFormula:
        while self.peek() == ("word", "group"):
            self.next()
            gname = self.expect("word")
            members: list[str] = []
            while (t := self.peek()) is not None and t[0] == "word" \
                    and t[1] not in ("group", "forall", "exists"):
                members.append(self.next()[1])
            if not members:
                raise FormulaError(f"group {gname!r} declared empty")
            self.groups[gname] = tuple(members)

        trace_prefix: list[TraceQuantifier] = []
        traj_prefix: list[TrajQuantifier] = []
        while True:
            t = self.peek()
            if t == ("word", "forall") or t == ("word", "exists"):
                if traj_prefix:
                    raise FormulaError(
                        "trace quantifier after a trajectory quantifier; "
                        "trajectory quantifiers must be innermost")
                self.next()
                var = self.expect("word")
                mdl = None
                if self.peek() == ("word", "in"):
                    self.next()
                    mdl = self.expect("word")
                self.expect("op", ".")
                trace_prefix.append(TraceQuantifier(t[1], var, mdl))
            elif t in (("word", "A"), ("word", "E")):
                self.next()
                var = self.expect("word")
                self.expect("op", ".")
                traj_prefix.append(TrajQuantifier(t[1], var))
            else:
                break
        if not trace_prefix:
            raise FormulaError("formula has no trace quantifier")
        if not traj_prefix:
            raise FormulaError("formula has no trajectory quantifier")
        body = self.parse_iff()
        if self.peek() is not None:
            raise FormulaError(f"trailing input at {self.peek()[1]!r}")
        f = AhltlFormula(tuple(trace_prefix), tuple(traj_prefix), body)
        check_well_formed(f)
        return f

    # body (precedence climbing) -----------------------------------------

    def parse_iff(self) -> Body:
        left = self.parse_implies()
        if self.eat_op("<->"):
            right = self.parse_iff()
            return And(Implies(left, right), Implies(right, left))
        return left

    def parse_implies(self) -> Body:
        left = self.parse_or()
        if self.eat_op("->"):
            return Implies(left, self.parse_implies())
        return left

    def parse_or(self) -> Body:
        left = self.parse_and()
        while self.eat_op("|"):
            left = Or(left, self.parse_and())
        return left

    def parse_and(self) -> Body:
        left = self.parse_temporal()
        while self.eat_op("&"):
            left = And(left, self.parse_temporal())
        return left

    def parse_temporal(self) -> Body:
        left = self.parse_unary()
        t = self.peek()
        if t == ("word", "U"):
            self.next()
            return Until(left, self.parse_temporal())
        if t == ("word", "R"):
            self.next()
            return Release(left, self.parse_temporal())
        return left

    def parse_unary(self) -> Body:
        t = self.peek()
        if t is None:
            raise FormulaError("unexpected end of formula")
        if t == ("op", "!"):
            self.next()
            return Not(self.parse_unary())
        if t == ("word", "F"):
            self.next()
            return Eventually(self.parse_unary())
        if t == ("word", "G"):
            self.next()
            return Globally(self.parse_unary())
        if t == ("op", "("):
            self.next()
            inner = self.parse_iff()
            self.expect("op", ")")
            return inner
        if t == ("word", "true"):
            self.next()
            return TRUE
        if t == ("word", "false"):
            self.next()
            return FALSE
        if t[0] == "word":
            return self.parse_reference()
        raise FormulaError(f"unexpected token {t[1]!r}")

    def parse_reference(self) -> Body:
        name, trace, traj = self.parse_indexed()
        for op in ("=", "!=", "<->"):
            # comparison binds immediately between two indexed references
            if self.at_op(op) and self._next_is_indexed():
                self.next()
                name2, trace2, traj2 = self.parse_indexed()
                eq = self._expand_equality(name, trace, traj, name2, trace2, traj2)
                return Not(eq) if op == "!=" else eq
        if name in self.groups:
            raise FormulaError(
                f"group {name!r} can only be used in =/!=/<-> comparisons")
        return Atom(name, trace, traj)

    def _next_is_indexed(self) -> bool:
        return (self.i + 1 < len(self.toks)
                and self.toks[self.i + 1][0] == "word"
                and self.i + 2 < len(self.toks)
                and self.toks[self.i + 2] == ("op", "["))

    def parse_indexed(self) -> tuple[str, str, str]:
        name = self.expect("word")
        self.expect("op", "[")
        trace = self.expect("word")
        self.expect("op", ",")
        traj = self.expect("word")
        self.expect("op", "]")
        return name, trace, traj

    def _expand_equality(self, n1, tr1, tj1, n2, tr2, tj2) -> Body:
        g1 = self.groups.get(n1)
        g2 = self.groups.get(n2)
        if (g1 is None) != (g2 is None) or (g1 is not None and g1 != g2):
            raise FormulaError(
                f"cannot compare {n1!r} with {n2!r}: group mismatch")
        props = g1 if g1 is not None else (n1,) if n1 == n2 else None
        if props is None:
            # plain prop vs different plain prop: single biconditional
            props = None
            a, b = Atom(n1, tr1, tj1), Atom(n2, tr2, tj2)
            return And(Implies(a, b), Implies(b, a))
        out: Body | None = None
        for p in props:
            a, b = Atom(p, tr1, tj1), Atom(p, tr2, tj2)
            bi = And(Implies(a, b), Implies(b, a))
            out = bi if out is None else And(out, bi)
        return out


def parse_formula(text: str) -> AhltlFormula:
    return _Parser(text).parse_formula()


# --- printing ---------------------------------------------------------------

def format_body(b: Body) -> str:
    if isinstance(b, TrueConst):
        return "true"
    if isinstance(b, FalseConst):
        return "false"
    if isinstance(b, Atom):
        return f"{b.prop}[{b.trace},{b.traj}]"
    if isinstance(b, Not):
        return f"!{format_body(b.arg)}" if isinstance(b.arg, (Atom, TrueConst, FalseConst)) \
            else f"!({format_body(b.arg)})"
    if isinstance(b, Eventually):
        return f"F ({format_body(b.arg)})"
    if isinstance(b, Globally):
        return f"G ({format_body(b.arg)})"
    ops = {And: "&", Or: "|", Implies: "->", Until: "U", Release: "R"}
    op = ops[type(b)]
    return f"({format_body(b.left)} {op} {format_body(b.right)})"


def format_formula(f: AhltlFormula) -> str:
    parts = []
    for q in f.trace_prefix:
        binding = f" in {q.model}" if q.model else ""
        parts.append(f"{q.kind} {q.var}{binding}.")
    for q in f.traj_prefix:
        parts.append(f"{q.kind} {q.var}.")
    parts.append(format_body(f.body))
    return " ".join(parts)
