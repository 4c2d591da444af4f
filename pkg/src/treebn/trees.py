"""Decision-tree CPTs and the algebra used by structured arc reversal.

A CPT tree maps contexts (partial assignments to the child's parents) to
distributions over the child variable.  Interior nodes test one parent and
have one subtree per domain value; leaves hold a distribution.  Reversal
builds new trees out of old ones with four primitives:

``reduce``   drop tests of variables fixed by a context, collapse nodes
             whose children are identical leaves;
``graft``    replace a leaf by a (reduced) copy of another tree;
``merge``    refine several trees into one whose branches distinguish
             everything any input distinguishes, annotating each leaf with
             the value every input takes there;
``eval``     follow a context to the unique leaf it selects.

Leaves and nodes carry a transient ``marked`` flag; reversal uses it to
separate recomputed regions from retained ones.  Finished trees have all
marks cleared.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field
from typing import Iterator, Mapping, Sequence, Union

import numpy as np

from .errors import InvalidLocator, MissingAssignment, UnknownVariable

#: Absolute tolerance for every probability comparison in the package.
ATOL = 1e-9

#: Variable names: identifiers, primes permitted (A', B'').
NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*\Z")

#: A context is a partial assignment, variable name -> value label.
Context = Mapping[str, str]


@dataclass(frozen=True)
class Variable:
    """A discrete variable with a fixed, canonical domain order."""

    name: str
    domain: tuple[str, ...]

    def __post_init__(self):
        if len(self.domain) < 2:
            raise ValueError(f"variable {self.name!r}: domain must have >= 2 values")
        if len(set(self.domain)) != len(self.domain):
            raise ValueError(f"variable {self.name!r}: duplicate domain labels")

    def index(self, label: str) -> int:
        try:
            return self.domain.index(label)
        except ValueError:
            raise ValueError(
                f"{label!r} is not a value of {self.name!r} {self.domain}") from None

    def __repr__(self):
        return f"Variable({self.name!r}, {self.domain!r})"


@dataclass(frozen=True)
class Distribution:
    """A probability vector over a variable's domain, in domain order."""

    probs: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        for p in self.probs:
            if not (-ATOL <= p <= 1.0 + ATOL):
                raise ValueError(f"probability {p!r} outside [0, 1]")
        if abs(sum(self.probs) - 1.0) > ATOL:
            raise ValueError(f"probabilities sum to {sum(self.probs)!r}, not 1")

    def __getitem__(self, i: int) -> float:
        return self.probs[i]

    def __len__(self) -> int:
        return len(self.probs)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=np.float64)

    def close_to(self, other: "Distribution", atol: float = ATOL) -> bool:
        return len(self) == len(other) and all(
            abs(p - q) <= atol for p, q in zip(self.probs, other.probs))

    @staticmethod
    def uniform(n: int) -> "Distribution":
        return Distribution((1.0 / n,) * n)


def uniform_leaf(var: Variable) -> "Leaf":
    return Leaf(Distribution.uniform(len(var.domain)))


@dataclass(frozen=True)
class Leaf:
    """A tree leaf: a distribution plus optional transient decorations.

    ``annotations`` records, per merge input, the distribution that input
    takes under this leaf's branch context.  ``marked`` on a leaf covers the
    degenerate case of a recomputed region that reduced to a single leaf.
    """

    dist: Distribution
    annotations: tuple[Distribution, ...] | None = None
    marked: bool = False


@dataclass(frozen=True)
class Node:
    """An interior node testing ``test``, one child per domain value."""

    test: Variable
    children: tuple["CptTree", ...]
    marked: bool = False

    def __post_init__(self):
        if len(self.children) != len(self.test.domain):
            raise ValueError(
                f"node on {self.test.name!r}: {len(self.children)} children for "
                f"{len(self.test.domain)} domain values")


CptTree = Union[Leaf, Node]


@dataclass(frozen=True)
class TabularCpt:
    """Dense CPT: one distribution row per full parent instantiation.

    Rows are indexed in row-major order over the declared parent order (the
    first parent varies slowest), which fixes the layout for golden files.
    """

    child: Variable
    parents: tuple[Variable, ...]
    rows: np.ndarray = field(repr=False)

    def __post_init__(self):
        rows = np.ascontiguousarray(np.asarray(self.rows, dtype=np.float64))
        expected = (self.n_rows, len(self.child.domain))
        if rows.shape != expected:
            raise ValueError(f"table shape {rows.shape}, expected {expected}")
        rows.setflags(write=False)
        object.__setattr__(self, "rows", rows)

    @property
    def n_rows(self) -> int:
        n = 1
        for p in self.parents:
            n *= len(p.domain)
        return n

    def row_index(self, ctx: Context) -> int:
        idx = 0
        for p in self.parents:
            if p.name not in ctx:
                raise MissingAssignment(f"table for {self.child.name!r} needs {p.name!r}")
            idx = idx * len(p.domain) + p.index(ctx[p.name])
        return idx

    def row(self, ctx: Context) -> Distribution:
        return Distribution(tuple(self.rows[self.row_index(ctx)]))

    def __eq__(self, other):
        return (isinstance(other, TabularCpt) and self.child == other.child
                and self.parents == other.parents
                and np.array_equal(self.rows, other.rows))


# ---------------------------------------------------------------------------
# Evaluation and structural queries
# ---------------------------------------------------------------------------

def eval_tree(tree: CptTree, ctx: Context) -> Distribution:
    """Follow ``ctx`` from the root to the unique leaf it selects."""
    node = tree
    while isinstance(node, Node):
        name = node.test.name
        if name not in ctx:
            raise MissingAssignment(f"context does not assign {name!r}")
        node = node.children[node.test.index(ctx[name])]
    return node.dist


def eval_cpt(cpt: CptTree | TabularCpt, ctx: Context) -> Distribution:
    if isinstance(cpt, TabularCpt):
        return cpt.row(ctx)
    return eval_tree(cpt, ctx)


def leaves(tree: CptTree) -> Iterator[Leaf]:
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Leaf):
            yield t
        else:
            stack.extend(reversed(t.children))


def distinct_entries(tree: CptTree) -> int:
    """Number of leaves: the distinct CPT entries the tree stores."""
    return sum(1 for _ in leaves(tree))


def branches(tree: CptTree) -> Iterator[tuple[dict[str, str], Leaf]]:
    """Yield (branch context, leaf) for every root-to-leaf path."""

    def walk(t: CptTree, ctx: dict[str, str]):
        if isinstance(t, Leaf):
            yield ctx, t
        else:
            for k, child in enumerate(t.children):
                yield from walk(child, {**ctx, t.test.name: t.test.domain[k]})

    yield from walk(tree, {})


def variables_tested(tree: CptTree) -> set[str]:
    out: set[str] = set()
    stack = [tree]
    while stack:
        t = stack.pop()
        if isinstance(t, Node):
            out.add(t.test.name)
            stack.extend(t.children)
    return out


def trees_equal(a: CptTree, b: CptTree, atol: float = ATOL) -> bool:
    """Structural equality: same tests, same shape, leaf dists within atol.

    Marks and annotations are transient and ignored.
    """
    if isinstance(a, Leaf) and isinstance(b, Leaf):
        return a.dist.close_to(b.dist, atol)
    if isinstance(a, Node) and isinstance(b, Node):
        return (a.test == b.test and len(a.children) == len(b.children)
                and all(trees_equal(x, y, atol) for x, y in zip(a.children, b.children)))
    return False


def strip_transient(tree: CptTree) -> CptTree:
    """Clear marks and annotations everywhere (finished-tree form)."""
    if isinstance(tree, Leaf):
        if tree.marked or tree.annotations is not None:
            return Leaf(tree.dist)
        return tree
    children = tuple(strip_transient(c) for c in tree.children)
    if tree.marked or any(c is not o for c, o in zip(children, tree.children)):
        return Node(tree.test, children)
    return tree


def mark_root(tree: CptTree) -> CptTree:
    if isinstance(tree, Leaf):
        return Leaf(tree.dist, tree.annotations, marked=True)
    return Node(tree.test, tree.children, marked=True)


def contains_mark(tree: CptTree) -> bool:
    stack = [tree]
    while stack:
        t = stack.pop()
        if t.marked:
            return True
        if isinstance(t, Node):
            stack.extend(t.children)
    return False


# ---------------------------------------------------------------------------
# Reduction, grafting, merging
# ---------------------------------------------------------------------------

def reduce_tree(tree: CptTree, fixed: Context,
                collapse_identical: bool = True) -> CptTree:
    """Specialize ``tree`` to the assignments in ``fixed``.

    Nodes testing a fixed variable are replaced by the selected child; a
    node whose children all became identical leaves collapses to that leaf.
    A mark on a removed node survives on its replacement, and a collapse
    keeps any mark found on the node or its leaves: recomputed regions must
    stay identifiable through reduction.

    ``collapse_identical=False`` restricts reduction to redundant-test
    removal.  Reversal uses that mode internally: a test may select between
    coincidentally equal mixtures whose components still differ, and the
    conditioning formula needs the test to stay.
    """
    if isinstance(tree, Leaf):
        return tree
    if tree.test.name in fixed:
        child = reduce_tree(tree.children[tree.test.index(fixed[tree.test.name])],
                            fixed, collapse_identical)
        return mark_root(child) if tree.marked and not child.marked else child
    children = tuple(reduce_tree(c, fixed, collapse_identical) for c in tree.children)
    first = children[0]
    if collapse_identical and isinstance(first, Leaf) and all(
            isinstance(c, Leaf) and c.dist.close_to(first.dist)
            and c.annotations == first.annotations for c in children):
        marked = tree.marked or any(c.marked for c in children)
        return Leaf(first.dist, first.annotations, marked=marked)
    return Node(tree.test, children, tree.marked)


def _locate(tree: CptTree, at: Sequence[int]) -> tuple[CptTree, dict[str, str]]:
    node, ctx = tree, {}
    for k in at:
        if not isinstance(node, Node) or not 0 <= k < len(node.children):
            raise InvalidLocator(f"no child {k} at {at!r}")
        ctx[node.test.name] = node.test.domain[k]
        node = node.children[k]
    return node, ctx


def graft(tree: CptTree, at: Sequence[int], subtree: CptTree,
          mark: bool = False) -> CptTree:
    """Replace the leaf at path ``at`` by ``subtree``.

    The copy is reduced under the branch context leading to the leaf, so
    tests the branch already decides never reappear below it.  With
    ``mark`` the copied root is flagged as a recomputed region.
    """
    target, ctx = _locate(tree, at)
    if not isinstance(target, Leaf):
        raise InvalidLocator(f"path {tuple(at)!r} ends at a node, not a leaf")
    replacement = reduce_tree(subtree, ctx)
    if mark:
        replacement = mark_root(replacement)

    def rebuild(t: CptTree, path: Sequence[int]) -> CptTree:
        if not path:
            return replacement
        assert isinstance(t, Node)
        k = path[0]
        children = list(t.children)
        children[k] = rebuild(children[k], path[1:])
        return Node(t.test, tuple(children), t.marked)

    return rebuild(tree, tuple(at))


def merge_trees(trees: Sequence[CptTree]) -> CptTree:
    """Merge trees so every input's distinctions appear in one tree.

    Each input, in order, is grafted onto every leaf of the running merge
    and reduced under that leaf's branch context.  Every leaf of the result
    is annotated with one distribution per input: the value that input takes
    under the leaf's context.  The result's own leaf distributions are the
    last input's values; callers that need the inputs use the annotations.
    """
    if not trees:
        raise ValueError("merge requires at least one tree")

    def annotate_self(t: CptTree) -> CptTree:
        if isinstance(t, Leaf):
            return Leaf(t.dist, (t.dist,))
        return Node(t.test, tuple(annotate_self(c) for c in t.children), t.marked)

    merged = annotate_self(trees[0])
    for tree in trees[1:]:
        merged = _merge_in(merged, tree, {})
    return merged


def _merge_in(acc: CptTree, tree: CptTree, ctx: dict[str, str]) -> CptTree:
    if isinstance(acc, Node):
        children = tuple(
            _merge_in(c, tree, {**ctx, acc.test.name: acc.test.domain[k]})
            for k, c in enumerate(acc.children))
        return Node(acc.test, children, acc.marked)
    prior = acc.annotations or ()

    def fill(t: CptTree) -> CptTree:
        if isinstance(t, Leaf):
            return Leaf(t.dist, prior + (t.dist,))
        return Node(t.test, tuple(fill(c) for c in t.children), t.marked)

    return fill(reduce_tree(tree, ctx, collapse_identical=False))


# ---------------------------------------------------------------------------
# Tabular conversion
# ---------------------------------------------------------------------------

def tree_to_table(tree: CptTree, child: Variable,
                  parents: Sequence[Variable]) -> TabularCpt:
    """Expand a tree over the given parent order into a dense table."""
    parents = tuple(parents)
    names = {p.name for p in parents}
    extra = variables_tested(tree) - names
    if extra:
        raise UnknownVariable(
            f"tree for {child.name!r} tests undeclared {sorted(extra)}")
    rows = np.empty((int(np.prod([len(p.domain) for p in parents], initial=1)),
                     len(child.domain)))
    for i, values in enumerate(itertools.product(*(p.domain for p in parents))):
        ctx = dict(zip((p.name for p in parents), values))
        rows[i] = eval_tree(tree, ctx).probs
    return TabularCpt(child, parents, rows)


def table_to_tree(table: TabularCpt, order: Sequence[Variable] | None = None) -> CptTree:
    """Build a tree testing ``order`` top-down, then collapse bottom-up.

    Collapse removes every node whose children are structurally identical
    subtrees, so the result has no redundant test on any path.
    """
    order = tuple(order) if order is not None else table.parents
    if sorted(v.name for v in order) != sorted(v.name for v in table.parents):
        raise ValueError("order must be a permutation of the table's parents")

    def build(i: int, ctx: dict[str, str]) -> CptTree:
        if i == len(order):
            return Leaf(table.row(ctx))
        var = order[i]
        children = tuple(
            build(i + 1, {**ctx, var.name: label}) for label in var.domain)
        first = children[0]
        if all(trees_equal(c, first) for c in children[1:]):
            return first
        return Node(var, children)

    return build(0, {})
