"""Arc reversal, tabular and tree-structured.

Reversing a -> o preserves the joint while flipping the arc.  With parent
classes X (a only), Y (shared), Z (o only):

    P(o | x, y, z)    = sum_a  P(o | y, z, a) * P(a | x, y)
    P(a | x, y, z, o) = P(o | a, y, z) * P(a | x, y) / P(o | x, y, z)

The tabular path evaluates both formulas at every full parent
instantiation.  The tree path rebuilds both CPTs structurally:

new tree for o —
  1. copy o's tree, cutting out every subtree rooted at an a-test and
     remembering its per-value subtrees; complete surviving branches keep
     their leaf untouched (o is independent of a there);
  2. graft a reduced copy of a's tree at each cut point, marking the
     copied root as a recomputed region;
  3. per cut point: merge the remembered per-value subtrees (annotating
     the value each takes), graft the merged tree below every leaf of the
     grafted copy, and evaluate the mixture formula at each new leaf.

new tree for a —
  for each leaf l of a's old tree (distribution P_l): graft a reduced copy
  of the new o-tree, collapse every mark-free subtree to a single leaf
  carrying P_l (the formula cancels where o's value ignores a), and under
  marks append an o-test whose children hold the conditioning formula's
  result.

Stats count one evaluation per produced leaf, matching the dense row count
a table would have required.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import NoSuchArc, NotATree, WouldCreateCycle
from .exact import DEFAULT_CAP, joint_table
from .network import BayesNet, partition
from .trees import (ATOL, CptTree, Distribution, Leaf, Node, TabularCpt,
                    Variable, branches, contains_mark, distinct_entries,
                    eval_tree, mark_root, merge_trees, reduce_tree,
                    strip_transient)


@dataclass(frozen=True)
class ReversalStats:
    """Work and size accounting for one tree reversal.

    ``o_leaves = o_leaves_retained + eq1_evals`` always holds: each new
    o-leaf is either carried over or costs one mixture evaluation.
    ``unreachable_*`` is the side report for conditioning at
    zero-probability contexts (the leaf is filled with a uniform
    distribution there).
    """

    eq1_evals: int
    eq2_evals: int
    o_leaves_retained: int
    o_leaves: int
    a_leaves: int
    unreachable_leaves: int = 0
    unreachable_contexts: tuple[tuple[tuple[str, str], ...], ...] = ()
    arc: tuple[str, str] | None = None

    def with_arc(self, a: str, o: str) -> "ReversalStats":
        return ReversalStats(self.eq1_evals, self.eq2_evals,
                             self.o_leaves_retained, self.o_leaves,
                             self.a_leaves, self.unreachable_leaves,
                             self.unreachable_contexts, (a, o))


def _check_reversible(net: BayesNet, a: str, o: str) -> None:
    if not net.has_arc(a, o):
        raise NoSuchArc(f"no arc {a!r} -> {o!r}")
    # Another directed path a ~> o would become a cycle after the flip.
    frontier = [c for c in net.children_of(a) if c != o]
    seen = set(frontier)
    while frontier:
        n = frontier.pop()
        if n == o:
            raise WouldCreateCycle(
                f"another directed path {a!r} ~> {o!r} exists")
        for c in net.children_of(n):
            if c not in seen:
                seen.add(c)
                frontier.append(c)


def _new_parent_orders(net: BayesNet, a: str, o: str) -> tuple[tuple[str, ...], tuple[str, ...]]:
    """Deterministic post-reversal parent orders for o and a."""
    part = partition(net, a, o)
    old_o = net.parents.get(o, ())
    old_a = net.parents.get(a, ())
    new_o = tuple(p for p in old_o if p != a) + part.x_set
    new_a = old_a + part.z_set + (o,)
    return new_o, new_a


# ---------------------------------------------------------------------------
# Tabular reversal (the oracle path)
# ---------------------------------------------------------------------------

def reverse_arc_tabular(net: BayesNet, a: str, o: str) -> BayesNet:
    """Reverse a -> o on dense tables; the joint is unchanged.

    Zero-probability contexts (the new o-row gives value o probability 0)
    get a uniform row in a's new table: any distribution is correct on a
    measure-zero context, and uniform is deterministic.
    """
    _check_reversible(net, a, o)
    new_o_parents, new_a_parents = _new_parent_orders(net, a, o)
    var_a, var_o = net.var(a), net.var(o)
    cpt_a, cpt_o = net.cpts[a], net.cpts[o]
    dom_a, dom_o = var_a.domain, var_o.domain

    o_parent_vars = tuple(net.var(p) for p in new_o_parents)
    o_rows = np.empty((int(np.prod([len(v.domain) for v in o_parent_vars], initial=1)),
                       len(dom_o)))
    from .trees import eval_cpt
    for i, vals in enumerate(itertools.product(*(v.domain for v in o_parent_vars))):
        ctx = dict(zip(new_o_parents, vals))
        row = np.zeros(len(dom_o))
        for ai, alabel in enumerate(dom_a):
            p_a = eval_cpt(cpt_a, ctx)[ai]
            row += p_a * eval_cpt(cpt_o, {**ctx, a: alabel}).as_array()
        o_rows[i] = row
    new_o_table = TabularCpt(var_o, o_parent_vars, o_rows)

    a_parent_vars = tuple(net.var(p) for p in new_a_parents)
    a_rows = np.empty((int(np.prod([len(v.domain) for v in a_parent_vars], initial=1)),
                       len(dom_a)))
    for i, vals in enumerate(itertools.product(*(v.domain for v in a_parent_vars))):
        ctx = dict(zip(new_a_parents, vals))
        denom = new_o_table.row(ctx)[var_o.index(ctx[o])]
        if denom <= 0.0:
            a_rows[i] = 1.0 / len(dom_a)
            continue
        prior = eval_cpt(cpt_a, ctx)
        for ai, alabel in enumerate(dom_a):
            like = eval_cpt(cpt_o, {**ctx, a: alabel})[var_o.index(ctx[o])]
            a_rows[i, ai] = like * prior[ai] / denom
    new_a_table = TabularCpt(var_a, a_parent_vars, a_rows)

    return (net.with_cpt(o, new_o_parents, new_o_table)
               .with_cpt(a, new_a_parents, new_a_table))


# ---------------------------------------------------------------------------
# Tree-structured reversal
# ---------------------------------------------------------------------------

@dataclass
class _Work:
    """Mutable counters shared across the recursive builders."""

    eq1: int = 0
    eq2: int = 0
    retained: int = 0
    unreachable: list[tuple[tuple[str, str], ...]] = field(default_factory=list)


def reverse_arc_tree(net: BayesNet, a: str, o: str) -> tuple[BayesNet, ReversalStats]:
    """Reverse a -> o on decision-tree CPTs, returning work statistics."""
    _check_reversible(net, a, o)
    tree_a = net.cpts[a]
    tree_o = net.cpts[o]
    if isinstance(tree_a, TabularCpt) or isinstance(tree_o, TabularCpt):
        raise NotATree(f"tree reversal needs tree CPTs for {a!r} and {o!r}")
    var_a, var_o = net.var(a), net.var(o)
    work = _Work()

    new_o = _build_new_o(tree_o, tree_a, var_a, {}, work)
    new_a = _build_new_a(tree_a, new_o, tree_o, var_a, var_o, {}, work)

    stats = ReversalStats(
        eq1_evals=work.eq1,
        eq2_evals=work.eq2,
        o_leaves_retained=work.retained,
        o_leaves=distinct_entries(new_o),
        a_leaves=distinct_entries(new_a),
        unreachable_leaves=len(work.unreachable),
        unreachable_contexts=tuple(work.unreachable),
        arc=(a, o),
    )
    new_o_parents, new_a_parents = _new_parent_orders(net, a, o)
    out = (net.with_cpt(o, new_o_parents, strip_transient(new_o))
              .with_cpt(a, new_a_parents, strip_transient(new_a)))
    return out, stats


def _build_new_o(tree: CptTree, tree_a: CptTree, var_a: Variable,
                 ctx: dict[str, str], work: _Work) -> CptTree:
    """Steps 1-3: cut a-subtrees, graft a's tree, merge and mix."""
    if isinstance(tree, Leaf):
        work.retained += 1
        return tree
    if tree.test == var_a:
        # Cut point: the per-value subtrees become the mixture components.
        merged = merge_trees([reduce_tree(c, ctx, collapse_identical=False)
                              for c in tree.children])
        copy_a = reduce_tree(tree_a, ctx, collapse_identical=False)
        return mark_root(_graft_mixture(copy_a, merged, ctx, work))
    children = tuple(
        _build_new_o(c, tree_a, var_a, {**ctx, tree.test.name: tree.test.domain[k]}, work)
        for k, c in enumerate(tree.children))
    return Node(tree.test, children, tree.marked)


def _graft_mixture(copy_a: CptTree, merged: CptTree, ctx: dict[str, str],
                   work: _Work) -> CptTree:
    """Put the merged tree below each leaf of the grafted copy of a's tree
    and evaluate the mixture formula at every resulting leaf."""
    if isinstance(copy_a, Node):
        children = tuple(
            _graft_mixture(c, merged, {**ctx, copy_a.test.name: copy_a.test.domain[k]}, work)
            for k, c in enumerate(copy_a.children))
        return Node(copy_a.test, children, copy_a.marked)
    p_a = copy_a.dist

    def mix(t: CptTree) -> CptTree:
        if isinstance(t, Node):
            return Node(t.test, tuple(mix(c) for c in t.children), t.marked)
        assert t.annotations is not None and len(t.annotations) == len(p_a)
        work.eq1 += 1
        probs = tuple(
            sum(ann[k] * p_a[i] for i, ann in enumerate(t.annotations))
            for k in range(len(t.annotations[0])))
        return Leaf(Distribution(probs))

    return mix(reduce_tree(merged, ctx, collapse_identical=False))


def _build_new_a(tree_a: CptTree, new_o: CptTree, old_o: CptTree,
                 var_a: Variable, var_o: Variable,
                 ctx: dict[str, str], work: _Work) -> CptTree:
    """Per old a-leaf: graft the new o-tree, collapse mark-free regions,
    append o-tests under marks."""
    if isinstance(tree_a, Node):
        children = tuple(
            _build_new_a(c, new_o, old_o, var_a, var_o,
                         {**ctx, tree_a.test.name: tree_a.test.domain[k]}, work)
            for k, c in enumerate(tree_a.children))
        return Node(tree_a.test, children, tree_a.marked)
    p_l = tree_a.dist
    grafted = reduce_tree(new_o, ctx, collapse_identical=False)
    collapsed = _collapse_unmarked(grafted, p_l)
    return _append_o_tests(collapsed, ctx, p_l, old_o, var_a, var_o, False, work)


def _collapse_unmarked(tree: CptTree, p_l: Distribution) -> CptTree:
    """Replace every maximal mark-free subtree by a single leaf carrying the
    old a-distribution (the conditioning formula cancels there)."""
    if not contains_mark(tree):
        return Leaf(p_l)
    if tree.marked or isinstance(tree, Leaf):
        return tree
    return Node(tree.test,
                tuple(_collapse_unmarked(c, p_l) for c in tree.children))


def _append_o_tests(tree: CptTree, ctx: dict[str, str], p_l: Distribution,
                    old_o: CptTree, var_a: Variable, var_o: Variable,
                    under_mark: bool, work: _Work) -> CptTree:
    if isinstance(tree, Node):
        under = under_mark or tree.marked
        children = tuple(
            _append_o_tests(c, {**ctx, tree.test.name: tree.test.domain[k]},
                            p_l, old_o, var_a, var_o, under, work)
            for k, c in enumerate(tree.children))
        return Node(tree.test, children, tree.marked)
    if not (under_mark or tree.marked):
        return tree
    p_lo = tree.dist
    leaves = []
    for oi, olabel in enumerate(var_o.domain):
        work.eq2 += 1
        denom = p_lo[oi]
        if denom <= 0.0:
            work.unreachable.append(
                tuple(sorted(ctx.items())) + ((var_o.name, olabel),))
            leaves.append(Leaf(Distribution.uniform(len(var_a.domain))))
            continue
        probs = tuple(
            eval_tree(old_o, {**ctx, var_a.name: alabel})[oi] * p_l[ai] / denom
            for ai, alabel in enumerate(var_a.domain))
        leaves.append(Leaf(Distribution(probs)))
    return Node(var_o, tuple(leaves), marked=tree.marked)


# ---------------------------------------------------------------------------
# Context-specific independence audit
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CsiReport:
    """Violations of the leaf-context independence claim for one variable.

    Each violation is (branch context, untested-parent assignment,
    deviation).  Empty means every branch context of the tree really does
    render the variable independent of its untested parents.
    """

    variable: str
    branches_checked: int
    violations: tuple[tuple[dict[str, str], dict[str, str], float], ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def verify_csi(net: BayesNet, v: str, cap: int = DEFAULT_CAP,
               atol: float = ATOL) -> CsiReport:
    """Check, by joint enumeration, that each leaf's branch context makes
    ``v`` independent of its untested parents (on positive-probability
    completions)."""
    cpt = net.cpts[v]
    if isinstance(cpt, TabularCpt):
        raise NotATree(f"{v!r} has a tabular CPT")
    jt = joint_table(net, cap)
    var = net.var(v)
    declared = net.parents.get(v, ())
    violations: list[tuple[dict[str, str], dict[str, str], float]] = []
    checked = 0
    for ctx, _leaf in branches(cpt):
        checked += 1
        untested = [p for p in declared if p not in ctx]
        base = jt.conditional(v, ctx)
        if base is None:
            continue
        for vals in itertools.product(*(net.var(p).domain for p in untested)):
            w = dict(zip(untested, vals))
            cond = jt.conditional(v, {**ctx, **w})
            if cond is None:
                continue
            dev = float(np.abs(cond - base).max())
            if dev > atol:
                violations.append((dict(ctx), w, dev))
    return CsiReport(v, checked, tuple(violations))
