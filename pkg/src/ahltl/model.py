"""Kripke structures: parsing, validation, and graph queries.

A model is a finite state graph with a single initial state, a total
transition relation, and a labeling of states with atomic propositions.
The proposition ``halt`` is reserved: it marks exactly the terminal states
(states whose only outgoing edge is a self-loop). Terminal states model
program termination; a terminated run stutters in its final state forever.

Model file grammar (UTF-8, line oriented, ``#`` comments):

    model <name>
    props <p1> <p2> ...
    state <sname> [<p_i> ...]
    init <sname>
    trans <sname> -> <sname>
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

HALT = "halt"

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


class ModelError(Exception):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class KripkeModel:
    """Immutable validated model; states are dense ids 0..n-1."""

    name: str
    state_names: tuple[str, ...]
    init: int
    transitions: frozenset[tuple[int, int]]
    labels: tuple[frozenset[str], ...]
    props: tuple[str, ...]
    successors: tuple[tuple[int, ...], ...] = field(compare=False)

    @property
    def num_states(self) -> int:
        return len(self.state_names)

    def state_id(self, name: str) -> int:
        return self.state_names.index(name)

    def is_terminal(self, s: int) -> bool:
        return self.successors[s] == (s,)

    def states_with(self, prop: str) -> list[int]:
        return [s for s in range(self.num_states) if prop in self.labels[s]]


def make_model(name: str, state_names, init: int, transitions, labels,
               props) -> KripkeModel:
    """Validate raw parts and build a KripkeModel (halt handling included)."""
    n = len(state_names)
    succ: list[list[int]] = [[] for _ in range(n)]
    for a, b in sorted(set(transitions)):
        if not (0 <= a < n and 0 <= b < n):
            raise ModelError(f"transition endpoint out of range: ({a},{b})")
        succ[a].append(b)
    for s in range(n):
        if not succ[s]:
            raise ModelError(
                f"state {state_names[s]!r} has no outgoing transition")
    if not 0 <= init < n:
        raise ModelError("initial state out of range")

    succs = tuple(tuple(sorted(set(s))) for s in succ)
    terminal = [succs[s] == (s,) for s in range(n)]
    final_labels = []
    for s in range(n):
        lab = set(labels[s])
        if HALT in lab and not terminal[s]:
            raise ModelError(
                f"state {state_names[s]!r} labeled {HALT!r} but is not terminal")
        if terminal[s]:
            lab.add(HALT)
        final_labels.append(frozenset(lab))

    prop_set = set(props) | {HALT}
    for s in range(n):
        extra = final_labels[s] - prop_set
        if extra:
            raise ModelError(
                f"state {state_names[s]!r} uses undeclared proposition "
                f"{sorted(extra)[0]!r}")
    all_props = set(props)
    if any(HALT in lab for lab in final_labels):
        all_props.add(HALT)

    return KripkeModel(
        name=name,
        state_names=tuple(state_names),
        init=init,
        transitions=frozenset((a, b) for a, bs in enumerate(succs) for b in bs),
        labels=tuple(final_labels),
        props=tuple(sorted(all_props)),
        successors=succs,
    )


def parse_model(text: str) -> KripkeModel:
    """Parse and validate one model file."""
    name = None
    props: list[str] = []
    state_names: list[str] = []
    state_labels: list[set[str]] = []
    by_name: dict[str, int] = {}
    init_name = None
    init_line = None
    edges: list[tuple[str, str, int]] = []

    def ident(tok: str, what: str, ln: int) -> str:
        if not _IDENT.match(tok):
            raise ModelError(f"bad {what} name {tok!r}", ln)
        return tok

    for ln, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        toks = line.split()
        kw = toks[0]
        if kw == "model":
            if len(toks) != 2:
                raise ModelError("expected: model <name>", ln)
            if name is not None:
                raise ModelError("duplicate model line", ln)
            name = ident(toks[1], "model", ln)
        elif kw == "props":
            for t in toks[1:]:
                p = ident(t, "proposition", ln)
                if p not in props:
                    props.append(p)
        elif kw == "state":
            if len(toks) < 2:
                raise ModelError("expected: state <name> [props...]", ln)
            sname = ident(toks[1], "state", ln)
            if sname in by_name:
                raise ModelError(f"duplicate state {sname!r}", ln)
            labels = set()
            for t in toks[2:]:
                p = ident(t, "proposition", ln)
                if p != HALT and p not in props:
                    raise ModelError(f"undeclared proposition {p!r}", ln)
                labels.add(p)
            by_name[sname] = len(state_names)
            state_names.append(sname)
            state_labels.append(labels)
        elif kw == "init":
            if len(toks) != 2:
                raise ModelError("expected: init <state>", ln)
            if init_name is not None:
                raise ModelError("duplicate init line", ln)
            init_name, init_line = toks[1], ln
        elif kw == "trans":
            if len(toks) != 4 or toks[2] != "->":
                raise ModelError("expected: trans <state> -> <state>", ln)
            edges.append((toks[1], toks[3], ln))
        else:
            raise ModelError(f"unknown directive {kw!r}", ln)

    if name is None:
        raise ModelError("missing model line")
    if not state_names:
        raise ModelError("model has no states")
    if init_name is None:
        raise ModelError("no initial state")
    if init_name not in by_name:
        raise ModelError(f"undeclared state {init_name!r}", init_line)

    transitions = []
    for a, b, ln in edges:
        for s in (a, b):
            if s not in by_name:
                raise ModelError(f"undeclared state {s!r}", ln)
        transitions.append((by_name[a], by_name[b]))

    try:
        return make_model(name, state_names, by_name[init_name],
                          transitions, state_labels, props)
    except ModelError:
        raise


def format_model(m: KripkeModel) -> str:
    """Render back to the model file syntax (parse/format round-trips)."""
    lines = [f"model {m.name}"]
    declared = [p for p in m.props if p != HALT]
    if declared:
        lines.append("props " + " ".join(declared))
    for s, sname in enumerate(m.state_names):
        labs = sorted(m.labels[s])
        lines.append(("state " + sname + " " + " ".join(labs)).rstrip())
    lines.append(f"init {m.state_names[m.init]}")
    for a, b in sorted(m.transitions):
        lines.append(f"trans {m.state_names[a]} -> {m.state_names[b]}")
    return "\n".join(lines) + "\n"


def is_acyclic(m: KripkeModel) -> bool:
    """True iff every cycle is a self-loop on a terminal state."""
    color = [0] * m.num_states  # 0 new, 1 active, 2 done
    for root in range(m.num_states):
        if color[root]:
            continue
        stack: list[tuple[int, int]] = [(root, 0)]
        color[root] = 1
        while stack:
            s, idx = stack[-1]
            nxt = [t for t in m.successors[s] if t != s or not m.is_terminal(s)]
            if idx < len(nxt):
                stack[-1] = (s, idx + 1)
                t = nxt[idx]
                if color[t] == 1:
                    return False
                if color[t] == 0:
                    color[t] = 1
                    stack.append((t, 0))
            else:
                color[s] = 2
                stack.pop()
    return True


def max_depth(m: KripkeModel) -> int:
    """Edge count of the longest init-to-terminal path, self-loops ignored.

    This is the unrolling bound at which every path of the model has reached
    a terminal state.
    """
    if not is_acyclic(m):
        raise ModelError(f"model {m.name!r} is not acyclic")
    memo: dict[int, int] = {}

    def depth(s: int) -> int:
        if m.is_terminal(s):
            return 0
        got = memo.get(s)
        if got is None:
            got = 1 + max(depth(t) for t in m.successors[s] if t != s)
            memo[s] = got
        return got

    return depth(m.init)


def paths_up_to(m: KripkeModel, k: int) -> list[tuple[int, ...]]:
    """All state paths of length k+1 from init (terminals stutter)."""
    out: list[tuple[int, ...]] = []

    def walk(prefix: list[int]):
        if len(prefix) == k + 1:
            out.append(tuple(prefix))
            return
        for t in m.successors[prefix[-1]]:
            prefix.append(t)
            walk(prefix)
            prefix.pop()

    walk([m.init])
    return out


def traces_up_to(m: KripkeModel, k: int) -> list[tuple[frozenset[str], ...]]:
    """Deduplicated label sequences of the length-(k+1) paths from init."""
    if not is_acyclic(m):
        raise ModelError(f"model {m.name!r} is not acyclic")
    seen = {tuple(m.labels[s] for s in p) for p in paths_up_to(m, k)}
    return sorted(seen, key=lambda tr: tuple(tuple(sorted(x)) for x in tr))


@dataclass(frozen=True)
class ModelBundle:
    """Named models; trace variables may range over distinct structures."""

    models: dict[str, KripkeModel]

    def __post_init__(self):
        if not self.models:
            raise ModelError("bundle holds no models")

    def resolve(self, name: str | None) -> KripkeModel:
        if name is None:
            if len(self.models) == 1:
                return next(iter(self.models.values()))
            raise ModelError(
                "trace variable needs an explicit model binding "
                f"(bundle has {len(self.models)} models)")
        try:
            return self.models[name]
        except KeyError:
            raise ModelError(f"unknown model {name!r}") from None


def bundle_of(*models: KripkeModel) -> ModelBundle:
    out: dict[str, KripkeModel] = {}
    for m in models:
        if m.name in out:
            raise ModelError(f"duplicate model name {m.name!r}")
        out[m.name] = m
    return ModelBundle(out)
