"""Reference evaluator of the bounded semantics by explicit enumeration.

Ground truth for differential-testing the QBF pipeline: trace quantifiers
enumerate the label sequences of the unrolled model, trajectory quantifiers
enumerate bounded trajectory words subject to the same moves/halted side
conditions the QBF encoding imposes, and the temporal body is evaluated by
the bounded-semantics recursion.

Two modes:

* ``hpes`` (halting pessimistic): eventualities pending at the bound are
  assumed to fail; a true verdict is sound for the infinite semantics.
* ``hopt`` (halting optimistic): pending eventualities are assumed to be
  fulfilled unless every trace has provably halted; a false verdict is
  sound for the infinite semantics.

Positions saturate the way the encoding's pos variables do: a trace that is
moved while on a halt-labeled state stays on its terminal stutter, and a
trace driven past the unrolling depth k without having halted falls OFF,
after which its atoms are false in both polarities.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product

from .formula import (AhltlFormula, And, Atom, Body, FalseConst, Not, Or,
                      PrefixShape, Release, TrueConst, Until, classify_prefix,
                      nnf)
from .model import HALT, ModelBundle, traces_up_to

OFF = -1

HPES = "hpes"
HOPT = "hopt"
MODES = (HPES, HOPT)


class OracleBudgetError(Exception):
    """The instance is too large to enumerate; the caller must skip, not guess."""


@dataclass(frozen=True)
class TrajectoryWord:
    """Bounded trajectory: steps[j] is the set of trace variables moved at j."""

    steps: tuple[frozenset[str], ...]


@dataclass
class AsyncAssignment:
    """Concrete binding of every trace and trajectory variable.

    Binding a trace variable points every (trace var, trajectory var) pair
    at position 0 of the same trace; the pairs then advance independently,
    each driven by its own trajectory.
    """

    k: int
    traces: dict[str, tuple[frozenset[str], ...]]
    words: dict[str, TrajectoryWord]

    def pair_order(self) -> list[tuple[str, str]]:
        return [(pi, tau) for pi in self.traces for tau in self.words]

    def positions(self) -> dict[tuple[str, str], list[int]]:
        """Saturating position of each pair after j trajectory steps."""
        out: dict[tuple[str, str], list[int]] = {}
        for pi, trace in self.traces.items():
            for tau, word in self.words.items():
                ps = [0]
                p = 0
                for step in word.steps[:-1]:
                    p = _advance(p, pi in step, trace, self.k)
                    ps.append(p)
                out[(pi, tau)] = ps
        return out


def _advance(p: int, moved: bool, trace, k: int) -> int:
    if not moved or p == OFF:
        return p
    if HALT in trace[p]:
        return min(p + 1, k)
    return p + 1 if p < k else OFF


# --- indexed subformulas ------------------------------------------------------

class _SubIndex:
    """Postorder-indexed NNF body with deduplicated subterms."""

    def __init__(self, body: Body, pair_index: dict[tuple[str, str], int]):
        self.nodes: list[tuple] = []
        self._memo: dict[Body, int] = {}
        self.temporal: list[int] = []
        self.pair_index = pair_index
        self.root = self._add(body)

    def _add(self, b: Body) -> int:
        got = self._memo.get(b)
        if got is not None:
            return got
        if isinstance(b, TrueConst):
            node = ("true",)
        elif isinstance(b, FalseConst):
            node = ("false",)
        elif isinstance(b, Atom):
            node = ("atom", self.pair_index[(b.trace, b.traj)], b.prop, True)
        elif isinstance(b, Not):
            a = b.arg
            if not isinstance(a, Atom):
                raise ValueError("body not in NNF")
            node = ("atom", self.pair_index[(a.trace, a.traj)], a.prop, False)
        elif isinstance(b, (And, Or, Until, Release)):
            l = self._add(b.left)
            r = self._add(b.right)
            kind = {And: "and", Or: "or", Until: "until", Release: "release"}[type(b)]
            node = (kind, l, r)
        else:
            raise ValueError(f"body not in NNF: {b!r}")
        idx = len(self.nodes)
        self.nodes.append(node)
        if node[0] in ("until", "release"):
            self.temporal.append(idx)
        self._memo[b] = idx
        return idx


class _Tables:
    """Per-pair label/halt lookup for one concrete trace binding."""

    def __init__(self, pairs, traces_by_var, k):
        self.k = k
        self.npairs = len(pairs)
        self.letters = [traces_by_var[pi] for pi, _tau in pairs]
        self.halt = [[HALT in self.letters[i][p] for p in range(k + 1)]
                     for i in range(self.npairs)]

    def halted_at(self, i: int, p: int) -> bool:
        return p != OFF and self.halt[i][p]

    def all_halted(self, posvec, idxs) -> bool:
        return all(self.halted_at(i, posvec[i]) for i in idxs)


def _column(sub: _SubIndex, tables: _Tables, j: int, m: int, mode: str,
            posvec, tv_next: int) -> int:
    """Truth bitmask of every subformula at trajectory step j."""
    off_j = OFF in posvec
    halted_j = tables.all_halted(posvec, range(tables.npairs))
    bits = 0
    for idx, node in enumerate(sub.nodes):
        kind = node[0]
        if kind == "true":
            v = True
        elif kind == "false":
            v = False
        elif kind == "atom":
            _, pi_i, prop, positive = node
            p = posvec[pi_i]
            v = False if p == OFF else (prop in tables.letters[pi_i][p]) == positive
        elif kind == "and":
            v = bool(bits >> node[1] & 1) and bool(bits >> node[2] & 1)
        elif kind == "or":
            v = bool(bits >> node[1] & 1) or bool(bits >> node[2] & 1)
        elif kind == "until":
            p1 = bool(bits >> node[1] & 1)
            p2 = bool(bits >> node[2] & 1)
            if j == m:
                v = p2 if mode == HPES else p2 or (not halted_j and p1)
            elif mode == HPES:
                v = not off_j and (p2 or (p1 and bool(tv_next >> idx & 1)))
            else:
                v = off_j or p2 or (p1 and bool(tv_next >> idx & 1))
        else:  # release
            p1 = bool(bits >> node[1] & 1)
            p2 = bool(bits >> node[2] & 1)
            if j == m:
                v = (p1 and p2) or (halted_j and p2) if mode == HPES else p2
            elif mode == HPES:
                v = not off_j and p2 and (p1 or bool(tv_next >> idx & 1))
            else:
                v = off_j or (p2 and (p1 or bool(tv_next >> idx & 1)))
        if v:
            bits |= 1 << idx
    return bits


def eval_pointwise(a: AsyncAssignment, body: Body, i: int, m: int,
                   mode: str) -> bool:
    """Truth of an NNF body at trajectory step i under a full assignment."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    pairs = a.pair_order()
    pair_index = {pr: n for n, pr in enumerate(pairs)}
    sub = _SubIndex(body, pair_index)
    tables = _Tables(pairs, a.traces, a.k)
    positions = a.positions()
    posvecs = [tuple(positions[pr][j] for pr in pairs) for j in range(m + 1)]
    tv = _column(sub, tables, m, m, mode, posvecs[m], 0)
    for j in range(m - 1, i - 1, -1):
        tv = _column(sub, tables, j, m, mode, posvecs[j], tv)
    return bool(tv >> sub.root & 1)


# --- word quantification ------------------------------------------------------

class _Budget:
    def __init__(self, limit: int):
        self.limit = limit
        self.used = 0

    def charge(self, n: int = 1):
        self.used += n
        if self.used > self.limit:
            raise OracleBudgetError(
                f"enumeration budget exceeded ({self.limit} units)")


class _TrajEngine:
    """Quantifies bounded trajectory words for one concrete trace binding.

    All quantifications range over words satisfying the moves/halted side
    conditions of the corresponding prefix shape; globally stuttering steps
    are never legal, which is what makes the bounded check decisive.
    """

    def __init__(self, sub: _SubIndex, tables: _Tables, pairs, m: int,
                 mode: str, budget: _Budget):
        self.sub = sub
        self.tables = tables
        self.pairs = pairs
        self.m = m
        self.mode = mode
        self.budget = budget
        self.k = tables.k

    def pair_idxs(self, taus) -> list[int]:
        ts = set(taus)
        return [i for i, (_pi, tau) in enumerate(self.pairs) if tau in ts]

    def _moves(self, idxs, posvec, has_contrib: bool) -> bool:
        return self.tables.all_halted(posvec, idxs) or has_contrib

    def _transitions(self, posvec, idxs):
        """Distinct per-step outcomes over the controlled pairs.

        Yields (new positions for idxs, contribution available), where a
        contribution is a move of a pair that is not sitting on a halt
        label (a pair that has fallen off still counts as movable).
        """
        opts = []
        for i in idxs:
            p = posvec[i]
            if p == OFF:
                opts.append(((OFF, False), (OFF, True)))
            elif self.tables.halt[i][p]:
                stay = (p, False)
                adv = (min(p + 1, self.k), False)
                opts.append((stay,) if adv == stay else (stay, adv))
            elif p < self.k:
                opts.append(((p, False), (p + 1, True)))
            else:
                opts.append(((p, False), (OFF, True)))
        seen = set()
        for combo in product(*opts):
            news = tuple(c[0] for c in combo)
            contrib = any(c[1] for c in combo)
            key = (news, contrib)
            if key not in seen:
                seen.add(key)
                yield news, contrib

    def achievable(self, ctrl_idxs, bg, step_filter) -> frozenset[int]:
        """Truth bitmasks reachable at step 0 over filtered controlled words.

        bg maps step j to the fixed positions of the uncontrolled pairs
        (empty when the controlled block covers everything). step_filter
        decides whether a step with the given contribution is legal; words
        must pass it at every j <= m.
        """
        memo: dict[tuple[int, tuple[int, ...]], frozenset[int]] = {}
        npairs = self.tables.npairs
        ctrl_pos = {i: n for n, i in enumerate(ctrl_idxs)}

        def full(j: int, cpos) -> tuple[int, ...]:
            row = bg[j]
            return tuple(cpos[ctrl_pos[i]] if i in ctrl_pos else row[i]
                         for i in range(npairs))

        def go(j: int, cpos) -> frozenset[int]:
            key = (j, cpos)
            got = memo.get(key)
            if got is not None:
                return got
            self.budget.charge()
            posvec = full(j, cpos)
            if j == self.m:
                ok = any(step_filter(j, posvec, contrib)
                         for _n, contrib in self._transitions(posvec, ctrl_idxs))
                res = frozenset([_column(self.sub, self.tables, j, self.m,
                                         self.mode, posvec, 0)]) if ok else frozenset()
            else:
                out: set[int] = set()
                for news, contrib in self._transitions(posvec, ctrl_idxs):
                    if not step_filter(j, posvec, contrib):
                        continue
                    for tv in go(j + 1, news):
                        out.add(_column(self.sub, self.tables, j, self.m,
                                        self.mode, posvec, tv))
                res = frozenset(out)
            memo[key] = res
            return res

        return go(0, tuple(0 for _ in ctrl_idxs))

    def valid_paths(self, ctrl_idxs, step_filter):
        """All position paths of filtered words over the controlled pairs.

        Yields lists pos[j] (j = 0..m) of position tuples over ALL pairs,
        with uncontrolled pairs pinned at 0 (callers only read controlled
        columns). Distinct words with identical position paths are merged.
        """
        npairs = self.tables.npairs
        ctrl_pos = {i: n for n, i in enumerate(ctrl_idxs)}

        def full(cpos) -> tuple[int, ...]:
            return tuple(cpos[ctrl_pos[i]] if i in ctrl_pos else 0
                         for i in range(npairs))

        def go(j: int, cpos, acc):
            self.budget.charge()
            posvec = full(cpos)
            acc.append(posvec)
            if j == self.m:
                if any(step_filter(j, posvec, contrib)
                       for _n, contrib in self._transitions(posvec, ctrl_idxs)):
                    yield list(acc)
            else:
                seen = set()
                for news, contrib in self._transitions(posvec, ctrl_idxs):
                    if not step_filter(j, posvec, contrib) or news in seen:
                        continue
                    seen.add(news)
                    yield from go(j + 1, news, acc)
            acc.pop()

        yield from go(0, tuple(0 for _ in ctrl_idxs), [])

    # shape dispatch -----------------------------------------------------

    def run(self, shape: PrefixShape) -> bool:
        root = self.sub.root
        all_zero = [tuple(0 for _ in range(self.tables.npairs))] * (self.m + 1)
        if shape.kind in ("E", "A"):
            idxs = self.pair_idxs(shape.first)

            def filt(j, posvec, contrib):
                return self._moves(idxs, posvec, contrib)

            tvs = self.achievable(idxs, all_zero, filt)
            if shape.kind == "E":
                return any(tv >> root & 1 for tv in tvs)
            return all(tv >> root & 1 for tv in tvs)

        outer_taus, inner_taus = shape.first, shape.second
        outer = self.pair_idxs(outer_taus)
        inner = self.pair_idxs(inner_taus)

        def outer_filt(j, posvec, contrib):
            return self._moves(outer, posvec, contrib)

        for path in self.valid_paths(outer, outer_filt):
            outer_halted = [self.tables.all_halted(path[j], outer)
                            for j in range(self.m + 1)]

            def inner_filt(j, posvec, contrib):
                # the inner block must move once the outer block has halted
                return not outer_halted[j] or self._moves(inner, posvec, contrib)

            tvs = self.achievable(inner, path, inner_filt)
            if shape.kind == "AE":
                if not any(tv >> root & 1 for tv in tvs):
                    return False
            else:  # EA: the universal inner block must hold on every word
                if all(tv >> root & 1 for tv in tvs):
                    return True
        return shape.kind == "AE"


# --- top level ----------------------------------------------------------------

DEFAULT_BUDGET = 500_000


def eval_bounded(bundle: ModelBundle, f: AhltlFormula, k: int, m: int,
                 mode: str, budget: int = DEFAULT_BUDGET) -> bool:
    """Bounded truth of a closed formula over a bundle, by enumeration."""
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    if k < 0 or m < 0:
        raise ValueError("bounds must be non-negative")
    shape = classify_prefix(f)
    body = nnf(f.body)
    counter = _Budget(budget)

    trace_vars = f.trace_vars
    traj_vars = f.traj_vars
    pairs = [(pi, tau) for pi in trace_vars for tau in traj_vars]
    pair_index = {pr: n for n, pr in enumerate(pairs)}
    sub = _SubIndex(body, pair_index)

    domains = {q.var: traces_up_to(bundle.resolve(q.model), k)
               for q in f.trace_prefix}

    def eval_traj(binding: dict[str, tuple]) -> bool:
        tables = _Tables(pairs, binding, k)
        engine = _TrajEngine(sub, tables, pairs, m, mode, counter)
        return engine.run(shape)

    def rec(qi: int, binding: dict) -> bool:
        if qi == len(f.trace_prefix):
            return eval_traj(binding)
        q = f.trace_prefix[qi]
        outcomes = (rec(qi + 1, {**binding, q.var: tr})
                    for tr in domains[q.var])
        return any(outcomes) if q.kind == "exists" else all(outcomes)

    return rec(0, {})
