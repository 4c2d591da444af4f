"""Dynamic irrelevance: sample graphs, skip conditions, sample schedules.

Within a slice of an evidence-integrated schema, a variable need not be
sampled when its value provably cannot reach any variable of interest (or
any sensor, whose weight is always evaluated) at any present or future
time.  The analysis is stationary: it processes the generic transition
slice once and applies at every slice.

Phases:

1. unconditional relevance — ancestors of the interest set under the
   transition's parent relation, iterated across the slice boundary;
2. sample graphs — CPT trees quotiented by shared structure, so the
   variables a sampling of the child must read can be followed as a DAG;
3. skip conditions — for a candidate v and each relevant consumer, the DNF
   of minimal branch contexts none of whose completions read v.  A test of
   a variable in the consumer's own slice cannot be conditioned on (it is
   sampled after the skip decision); the search there requires that
   variable's own already-found condition AND every branch below to be
   v-free.  The final condition conjoins all consumers;
4. schedule — an in-slice order in which every variable named in a
   retained skip condition precedes the variable it guards; when ordering
   conflicts make that impossible the offending disjuncts are dropped
   (sampling more is always sound).

A guard here is the *skip* condition: the variable is sampled unless its
guard is satisfied by values already fixed in the trial.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, NamedTuple, Sequence

from .dpn import DpnSchema, base_name, is_prev
from .errors import CyclicSlice
from .network import _topo_sort
from .trees import CptTree, Leaf


class Literal(NamedTuple):
    """One conjunct: a variable (in the guarded variable's own slice, or
    one slice earlier when ``prev``) equals ``value``."""

    name: str
    prev: bool
    value: str

    def __str__(self):
        return f"prev:{self.name}={self.value}" if self.prev else f"{self.name}={self.value}"


def _literal_key(lit: Literal):
    return (lit.prev, lit.name, lit.value)


@dataclass(frozen=True)
class DnfCondition:
    """Disjunction of conjunctions of literals.

    No disjuncts is FALSE; a single empty disjunct is TRUE.  Disjuncts are
    kept subsumption-free and canonically ordered so equal conditions
    serialize identically.
    """

    disjuncts: tuple[frozenset[Literal], ...]

    @staticmethod
    def false() -> "DnfCondition":
        return DnfCondition(())

    @staticmethod
    def true() -> "DnfCondition":
        return DnfCondition((frozenset(),))

    @staticmethod
    def of(*disjuncts: Iterable[Literal]) -> "DnfCondition":
        return _canonical([frozenset(d) for d in disjuncts])

    @property
    def is_false(self) -> bool:
        return not self.disjuncts

    @property
    def is_true(self) -> bool:
        return self.disjuncts == (frozenset(),)

    def mentions(self) -> set[tuple[str, bool]]:
        return {(lit.name, lit.prev) for d in self.disjuncts for lit in d}

    def conj(self, other: "DnfCondition") -> "DnfCondition":
        out = []
        for d1 in self.disjuncts:
            for d2 in other.disjuncts:
                u = d1 | d2
                if _consistent(u):
                    out.append(u)
        return _canonical(out)

    def disj(self, other: "DnfCondition") -> "DnfCondition":
        return _canonical(list(self.disjuncts) + list(other.disjuncts))

    def satisfied(self, cur: Mapping[str, str | None],
                  prev: Mapping[str, str | None]) -> bool:
        """True when some disjunct's literals all match assigned values.

        An unassigned or skipped (None) literal variable leaves its
        disjunct unsatisfied: never skipping on unknown values is sound.
        """
        for d in self.disjuncts:
            for lit in d:
                got = (prev if lit.prev else cur).get(lit.name)
                if got is None or got != lit.value:
                    break
            else:
                return True
        return False

    def __str__(self):
        if self.is_false:
            return "never"
        if self.is_true:
            return "always"
        parts = [" & ".join(str(lit) for lit in sorted(d, key=_literal_key))
                 for d in self.disjuncts]
        return " | ".join(parts)


def _consistent(literals: frozenset[Literal]) -> bool:
    seen: dict[tuple[str, bool], str] = {}
    for lit in literals:
        if seen.setdefault((lit.name, lit.prev), lit.value) != lit.value:
            return False
    return True


def _canonical(disjuncts: list[frozenset[Literal]]) -> DnfCondition:
    uniq = list(dict.fromkeys(disjuncts))
    kept = [d for d in uniq if not any(o < d for o in uniq)]
    kept.sort(key=lambda d: (len(d), sorted(map(_literal_key, d))))
    return DnfCondition(tuple(kept))


Domains = Mapping[str, tuple[str, ...]]


def simplify(dnf: DnfCondition, domains: Domains) -> DnfCondition:
    """Merge disjuncts that differ only in one variable covering its whole
    domain, then re-prune; repeated to a fixpoint.

    This is the adjacency rule only, not full logic minimization; it keeps
    machine-derived guards in the compact form a person would write.
    """
    current = _canonical(list(dnf.disjuncts))
    while True:
        buckets: dict[tuple, set[str]] = {}
        for d in current.disjuncts:
            for lit in d:
                rest = frozenset(d - {lit})
                buckets.setdefault((rest, lit.name, lit.prev), set()).add(lit.value)
        merged = None
        for (rest, name, prev), values in buckets.items():
            if values >= set(domains[name]):
                merged = (rest, name, prev)
                break
        if merged is None:
            return current
        rest, name, prev = merged
        survivors = []
        for d in current.disjuncts:
            on_var = [lit for lit in d if lit.name == name and lit.prev == prev]
            if len(on_var) == 1 and d - {on_var[0]} == rest:
                continue  # absorbed by the merged disjunct
            survivors.append(d)
        current = _canonical(survivors + [rest])


FALSE = DnfCondition.false()
TRUE = DnfCondition.true()


# ---------------------------------------------------------------------------
# Sample graphs
# ---------------------------------------------------------------------------

class VarRef(NamedTuple):
    name: str
    prev: bool


@dataclass(frozen=True)
class SampleGraph:
    """BDD-like quotient of a CPT tree.

    ``nodes[i]`` is ``("sink", payload)`` or
    ``("test", VarRef, child ids, domain)``.  With leaf values ignored
    (the default) there is a single sink and a test survives only if it
    changes which further variables get read; built value-aware, a test
    survives whenever it selects between different distributions.
    """

    root: int
    nodes: tuple[tuple, ...]

    def is_sink(self, i: int) -> bool:
        return self.nodes[i][0] == "sink"

    def tested_refs(self) -> set[VarRef]:
        return {n[1] for n in self.nodes if n[0] == "test"}

    def reads(self, cur: Mapping[str, str], prev: Mapping[str, str]) -> set[VarRef]:
        """Variables read when following the assignments to the sink."""
        out: set[VarRef] = set()
        i = self.root
        while not self.is_sink(i):
            _kind, ref, children, domain = self.nodes[i]
            out.add(ref)
            value = (prev if ref.prev else cur)[ref.name]
            i = children[domain.index(value)]
        return out


def build_sample_graph(tree: CptTree, *, ignore_leaf_values: bool = True) -> SampleGraph:
    """Quotient a tree by joining identical subtrees and collapsing tests
    whose branches all lead to the same subgraph."""
    nodes: list[tuple] = []
    interned: dict[tuple, int] = {}

    def intern(key: tuple, entry: tuple) -> int:
        if key not in interned:
            interned[key] = len(nodes)
            nodes.append(entry)
        return interned[key]

    def walk(t: CptTree) -> int:
        if isinstance(t, Leaf):
            payload = None if ignore_leaf_values else t.dist.probs
            return intern(("sink", payload), ("sink", payload))
        children = tuple(walk(c) for c in t.children)
        if all(c == children[0] for c in children):
            return children[0]
        ref = VarRef(base_name(t.test.name), is_prev(t.test.name))
        key = ("test", ref, children)
        return intern(key, ("test", ref, children, t.test.domain))

    root = walk(tree)
    return SampleGraph(root, tuple(nodes))


# ---------------------------------------------------------------------------
# Phase 1: unconditional relevance
# ---------------------------------------------------------------------------

def _ancestor_closure(schema: DpnSchema, seed: Iterable[str]) -> frozenset[str]:
    relevant = set(seed)
    frontier = list(relevant)
    while frontier:
        w = frontier.pop()
        for p in schema.transition.parents.get(w, ()):
            b = base_name(p)
            if b not in relevant:
                relevant.add(b)
                frontier.append(b)
    return frozenset(relevant)


def relevant_variables(schema: DpnSchema, interest: Iterable[str]) -> frozenset[str]:
    """Least fixpoint: interest plus every (same- or previous-slice) CPT
    parent of a relevant variable, iterated across the slice boundary."""
    interest = set(interest)
    outside = interest - set(schema.state_vars)
    if outside:
        raise ValueError(
            f"interest variables {sorted(outside)} are not state variables")
    return _ancestor_closure(schema, interest)


# ---------------------------------------------------------------------------
# Phase 3: skip conditions
# ---------------------------------------------------------------------------

def slice_ordering(schema: DpnSchema) -> list[str]:
    """Topological order of the slice by in-slice parents; declaration
    order breaks ties."""
    names = schema.slice_names()
    order = _topo_sort(names, {n: schema.in_slice_parents(n) for n in names})
    if order is None:
        raise CyclicSlice("in-slice dependency graph has a cycle")
    return order


def _pergraph(graph: SampleGraph, v: str, v_is_cur: bool,
              sub: Mapping[str, DnfCondition], domains: Domains) -> DnfCondition:
    """Minimal branch contexts of ``graph`` with no completion reading v.

    ``v_is_cur`` selects the frame.  False: the consumer sits one slice
    after v, v appears as the consumer's previous-slice copy, and the
    consumer's previous slice is v's own slice (plain guard literals);
    tests of consumer-slice variables are unknowable at skip time and are
    handled by substituting their own conditions (from ``sub``) conjoined
    over all branches.  True: the consumer shares v's slice; its
    previous-slice reads become prev-marked literals and its current-slice
    reads plain literals (the schedule builder orders or drops them).
    """
    memo_free: dict[int, bool] = {}
    memo_cond: dict[int, DnfCondition] = {}
    v_ref = VarRef(v, not v_is_cur)

    def literal_ref(ref: VarRef) -> Literal | None:
        # Map a graph test to a guard-literal prototype; None means the
        # test is in the consumer's own slice and cannot be conditioned on.
        if v_is_cur:
            return Literal(ref.name, ref.prev, "")
        return Literal(ref.name, False, "") if ref.prev else None

    def free(i: int) -> bool:
        if i not in memo_free:
            node = graph.nodes[i]
            if node[0] == "sink":
                out = True
            elif node[1] == v_ref:
                out = False
            elif literal_ref(node[1]) is None:
                out = (sub.get(node[1].name, FALSE).is_true
                       and all(free(c) for c in node[2]))
            else:
                out = all(free(c) for c in node[2])
            memo_free[i] = out
        return memo_free[i]

    def cond(i: int) -> DnfCondition:
        if i not in memo_cond:
            node = graph.nodes[i]
            if free(i) or node[0] == "sink":
                out = TRUE
            elif node[1] == v_ref:
                out = FALSE
            elif literal_ref(node[1]) is None:
                out = sub.get(node[1].name, FALSE)
                for c in node[2]:
                    out = out.conj(cond(c))
            else:
                proto = literal_ref(node[1])
                out = FALSE
                for value, c in zip(node[3], node[2]):
                    lit = Literal(proto.name, proto.prev, value)
                    out = out.disj(cond(c).conj(DnfCondition.of([lit])))
            memo_cond[i] = simplify(out, domains)
        return memo_cond[i]

    return cond(graph.root)


def _consumer_graph(schema: DpnSchema, w: str) -> SampleGraph:
    # Value-aware: a trailing test selecting between different
    # distributions is still a read and must stay visible to the search.
    return build_sample_graph(schema.transition.cpts[w], ignore_leaf_values=False)


def irrelevance_condition(schema: DpnSchema, v: str,
                          order: Sequence[str] | None = None,
                          prior_conditions: Mapping[str, DnfCondition] | None = None,
                          consumers: Iterable[str] | None = None) -> DnfCondition:
    """Contexts under which v's value is needed by no consumer, ever.

    Every consumer W is read once in the next-slice frame (v appears as
    W's previous-slice copy); a W that also tests v inside its own slice
    is read again in the same-slice frame.  ``prior_conditions`` seeds the
    per-consumer substitution map; missing entries are computed on demand
    in slice order, which guarantees a consumer's in-slice parents are
    available when its graph is searched.
    """
    order = list(order) if order is not None else slice_ordering(schema)
    consumer_set = set(consumers) if consumers is not None else set(order)
    pergraph: dict[str, DnfCondition] = dict(prior_conditions or {})
    domains = {u.name: u.domain for u in schema.variables}

    graphs = {w: _consumer_graph(schema, w) for w in order}
    for w in order:
        if w not in pergraph:
            pergraph[w] = _pergraph(graphs[w], v, v_is_cur=False,
                                    sub=pergraph, domains=domains)

    condition = TRUE
    for w in order:
        if w not in consumer_set:
            continue
        condition = simplify(condition.conj(pergraph[w]), domains)
        if VarRef(v, False) in graphs[w].tested_refs():
            condition = simplify(condition.conj(
                _pergraph(graphs[w], v, v_is_cur=True, sub=pergraph,
                          domains=domains)), domains)
    return condition


def irrelevance_conditions(schema: DpnSchema, interest: Iterable[str],
                           ) -> dict[str, DnfCondition]:
    """Skip conditions for every slice variable, given the interest set.

    Consumers are the unconditional-relevance closure of the interest set
    plus all sensors: sensor CPTs are evaluated each slice for the trial
    weight, so their ancestry must stay sampled.  Interest variables are
    never skipped — they are what the simulation is meant to sample.
    """
    interest = set(interest)
    consumers = _ancestor_closure(schema, interest | set(schema.sensor_vars))
    order = slice_ordering(schema)
    out: dict[str, DnfCondition] = {}
    for v in schema.slice_names():
        if v in interest:
            out[v] = FALSE
        else:
            out[v] = irrelevance_condition(schema, v, order, None, consumers)
    return out


# ---------------------------------------------------------------------------
# Phase 4: schedule construction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SampleSchedule:
    """Ordered (variable, skip-condition) pairs for one slice.

    Every current-slice variable mentioned in a retained guard precedes
    the variable it guards, so guards are evaluable when reached.
    """

    entries: tuple[tuple[str, DnfCondition], ...]
    notes: tuple[str, ...] = ()

    def order(self) -> list[str]:
        return [name for name, _g in self.entries]

    def guard(self, name: str) -> DnfCondition:
        for n, g in self.entries:
            if n == name:
                return g
        raise KeyError(name)


def build_schedule(schema: DpnSchema,
                   conditions: Mapping[str, DnfCondition]) -> SampleSchedule:
    """Order the slice so guards are evaluable; weaken guards that cannot be.

    In-slice CPT parenthood is a hard ordering constraint; "guard variable
    precedes guarded variable" is soft.  On a conflict, the
    earliest-declared guarded variable in the cycle loses the disjuncts
    naming the conflicting variable (the later-declared one keeps its
    guard), and the weakening is recorded in ``notes``.
    """
    names = schema.slice_names()
    decl_index = {n: i for i, n in enumerate(names)}
    hard = {n: set(schema.in_slice_parents(n)) for n in names}
    conds: dict[str, DnfCondition] = {n: conditions.get(n, FALSE) for n in names}
    notes: list[str] = []

    def soft_edges() -> set[tuple[str, str]]:
        return {(name, v)
                for v, dnf in conds.items()
                for name, prev in dnf.mentions()
                if not prev and name != v and name not in hard[v]}

    while True:
        soft = soft_edges()
        combined = {n: sorted(hard[n] | {g for g, t in soft if t == n},
                              key=decl_index.__getitem__) for n in names}
        order = _topo_sort(names, combined)
        if order is not None:
            break
        cycle = _find_cycle(names, combined)
        pairs = list(zip(cycle, cycle[1:] + cycle[:1]))  # (child, parent)
        cyc_soft = [(g, t) for t, g in pairs if (g, t) in soft]
        if not cyc_soft:
            raise CyclicSlice(f"in-slice dependency cycle: {cycle}")
        g, t = min(cyc_soft, key=lambda e: (decl_index[e[1]], decl_index[e[0]]))
        kept = [d for d in conds[t].disjuncts
                if not any(lit.name == g and not lit.prev for lit in d)]
        notes.append(f"guard of {t!r} weakened: ordering conflict with {g!r}")
        conds[t] = _canonical(kept)

    positions = {n: i for i, n in enumerate(order)}
    entries = []
    for n in order:
        kept = [d for d in conds[n].disjuncts
                if all(lit.prev or positions[lit.name] < positions[n] for lit in d)]
        entries.append((n, _canonical(kept)))
    return SampleSchedule(tuple(entries), tuple(notes))


def _find_cycle(names: list[str], parents: Mapping[str, Sequence[str]]) -> list[str]:
    """One directed cycle, as the node list along parent edges."""
    WHITE, GREY, BLACK = 0, 1, 2
    color = dict.fromkeys(names, WHITE)
    stack: list[str] = []

    def visit(n: str) -> list[str] | None:
        color[n] = GREY
        stack.append(n)
        for p in parents.get(n, ()):
            if color[p] == GREY:
                return stack[stack.index(p):]
            if color[p] == WHITE:
                found = visit(p)
                if found:
                    return found
        stack.pop()
        color[n] = BLACK
        return None

    for n in names:
        if color[n] == WHITE:
            found = visit(n)
            if found:
                return found
    raise AssertionError("no cycle found in a graph reported cyclic")


def plan_schedule(schema: DpnSchema, interest: Iterable[str]) -> SampleSchedule:
    """Phases 1-4 end to end for an integrated schema."""
    return build_schedule(schema, irrelevance_conditions(schema, interest))
