"""Static Bayesian networks over decision-tree (or tabular) CPTs."""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce as _reduce
from typing import Mapping, Sequence

import re

from .errors import MissingAssignment, NoSuchArc
from .trees import (CptTree, Context, NAME_RE, TabularCpt, Variable,
                    eval_cpt, variables_tested)

#: User names plus the generated forms: previous-slice copies (``X@prev``)
#: and unrolled time instances (``X@3``).
_INTERNAL_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_']*(@prev|@[0-9]+)?\Z")


@dataclass(frozen=True)
class BayesNet:
    """A DAG of variables with one CPT per variable.

    ``parents`` fixes the declared parent order per child; tree CPTs may
    test any subset of the declared parents, never more.  Networks are
    immutable after construction; ``with_cpt`` returns modified copies.
    """

    variables: tuple[Variable, ...]
    parents: Mapping[str, tuple[str, ...]]
    cpts: Mapping[str, CptTree | TabularCpt]
    _index: dict[str, Variable] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "parents",
                           {k: tuple(v) for k, v in self.parents.items()})
        object.__setattr__(self, "cpts", dict(self.cpts))
        object.__setattr__(self, "_index", {v.name: v for v in self.variables})

    def var(self, name: str) -> Variable:
        try:
            return self._index[name]
        except KeyError:
            raise KeyError(f"no variable named {name!r}") from None

    def has_arc(self, parent: str, child: str) -> bool:
        return parent in self.parents.get(child, ())

    def arcs(self) -> list[tuple[str, str]]:
        return [(p, c) for c in self.parents for p in self.parents[c]]

    def children_of(self, name: str) -> list[str]:
        return [c for c, ps in self.parents.items() if name in ps]

    def with_cpt(self, child: str, parents: Sequence[str],
                 cpt: CptTree | TabularCpt) -> "BayesNet":
        new_parents = dict(self.parents)
        new_parents[child] = tuple(parents)
        new_cpts = dict(self.cpts)
        new_cpts[child] = cpt
        return BayesNet(self.variables, new_parents, new_cpts)

    def topological_order(self) -> list[str]:
        """Parents-before-children order, declaration order as tie-break."""
        order = _topo_sort([v.name for v in self.variables], self.parents)
        if order is None:
            raise NoSuchArc("network is cyclic; no topological order")
        return order


def _topo_sort(names: list[str],
               parents: Mapping[str, Sequence[str]]) -> list[str] | None:
    remaining = dict.fromkeys(names)
    placed: set[str] = set()
    order: list[str] = []
    while remaining:
        ready = [n for n in remaining
                 if all(p in placed for p in parents.get(n, ()))]
        if not ready:
            return None
        n = ready[0]
        placed.add(n)
        order.append(n)
        del remaining[n]
    return order


def validate(net: BayesNet) -> list[str]:
    """Check every structural invariant; return one message per violation."""
    report: list[str] = []
    names = [v.name for v in net.variables]
    seen: set[str] = set()
    for v in net.variables:
        if not _INTERNAL_RE.match(v.name):
            report.append(f"variable name {v.name!r} is not a legal identifier")
        if v.name in seen:
            report.append(f"duplicate variable {v.name!r}")
        seen.add(v.name)
    for name in names:
        if name not in net.cpts:
            report.append(f"variable {name!r} has no CPT")
    for child in net.cpts:
        if child not in seen:
            report.append(f"CPT for undeclared variable {child!r}")
    for child, ps in net.parents.items():
        if len(set(ps)) != len(ps):
            report.append(f"{child!r}: duplicate parent declaration")
        for p in ps:
            if p not in seen:
                report.append(f"{child!r}: undeclared parent {p!r}")
    for child, cpt in net.cpts.items():
        declared = set(net.parents.get(child, ()))
        if isinstance(cpt, TabularCpt):
            table_parents = [p.name for p in cpt.parents]
            if table_parents != list(net.parents.get(child, ())):
                report.append(f"{child!r}: table parents {table_parents} != "
                              f"declared {list(declared)}")
        else:
            extra = variables_tested(cpt) - declared
            if extra:
                report.append(
                    f"{child!r}: tree tests undeclared parent(s) {sorted(extra)}")
    if _topo_sort(names, net.parents) is None:
        report.append("arcs contain a directed cycle")
    return report


def joint_probability(net: BayesNet, full: Context) -> float:
    """Chain-rule product of every CPT at the full assignment."""
    prob = 1.0
    for v in net.variables:
        if v.name not in full:
            raise MissingAssignment(f"joint probability needs {v.name!r}")
        prob *= eval_cpt(net.cpts[v.name], full)[v.index(full[v.name])]
    return prob


@dataclass(frozen=True)
class ReversalPartition:
    """The three parent classes induced by reversing arc a -> o.

    ``x_set``: parents of a only (become parents of o);
    ``y_set``: shared parents;
    ``z_set``: parents of o only, a excluded (become parents of a).
    """

    x_set: tuple[str, ...]
    y_set: tuple[str, ...]
    z_set: tuple[str, ...]


def partition(net: BayesNet, a: str, o: str) -> ReversalPartition:
    if not net.has_arc(a, o):
        raise NoSuchArc(f"no arc {a!r} -> {o!r}")
    pa, po = net.parents.get(a, ()), net.parents.get(o, ())
    x = tuple(p for p in pa if p not in po)
    y = tuple(p for p in pa if p in po)
    z = tuple(p for p in po if p not in pa and p != a)
    return ReversalPartition(x, y, z)


def tabular_size(net: BayesNet, child: str) -> int:
    """Row count of the dense CPT for ``child`` (product of parent domains)."""
    return _reduce(lambda acc, p: acc * len(net.var(p).domain),
                   net.parents.get(child, ()), 1)
