"""Brute-force enumeration oracles with size guards.

The joint over a network with n full contexts is materialized as a flat
float64 array indexed in row-major order over the variables' declaration
order (first variable slowest).  Everything else — joint comparison,
posteriors, conditional-independence checks — is a masked reduction over
that array.  A hard cap refuses instances that would not fit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import MismatchedVariables, TooLarge
from .network import BayesNet
from .trees import ATOL, CptTree, Leaf, TabularCpt

#: Default refusal threshold: number of full contexts.
DEFAULT_CAP = 2 ** 22


@dataclass(frozen=True)
class JointTable:
    """Full joint distribution plus the per-variable value grid."""

    net: BayesNet
    probs: np.ndarray                 # (n_contexts,)
    values: dict[str, np.ndarray]     # name -> (n_contexts,) value indices

    def mask(self, ctx: dict[str, str]) -> np.ndarray:
        m = np.ones(len(self.probs), dtype=bool)
        for name, label in ctx.items():
            m &= self.values[name] == self.net.var(name).index(label)
        return m

    def probability(self, ctx: dict[str, str]) -> float:
        return float(self.probs[self.mask(ctx)].sum())

    def conditional(self, query: str, ctx: dict[str, str]) -> np.ndarray | None:
        """P(query | ctx) as an array, or None if P(ctx) = 0."""
        m = self.mask(ctx)
        var = self.net.var(query)
        masses = np.array([
            self.probs[m & (self.values[query] == k)].sum()
            for k in range(len(var.domain))])
        total = masses.sum()
        if total <= 0.0:
            return None
        return masses / total


def context_count(net: BayesNet) -> int:
    n = 1
    for v in net.variables:
        n *= len(v.domain)
    return n


def joint_table(net: BayesNet, cap: int = DEFAULT_CAP) -> JointTable:
    n = context_count(net)
    if n > cap:
        raise TooLarge(f"{n} full contexts exceeds cap {cap}")
    strides: dict[str, int] = {}
    stride = n
    for v in net.variables:
        stride //= len(v.domain)
        strides[v.name] = stride
    idx = np.arange(n)
    values = {v.name: (idx // strides[v.name]) % len(v.domain)
              for v in net.variables}
    probs = np.ones(n)
    for v in net.variables:
        probs *= _cpt_factor(net.cpts[v.name], net, v.name, values)
    return JointTable(net, probs, values)


def _cpt_factor(cpt: CptTree | TabularCpt, net: BayesNet, child: str,
                values: dict[str, np.ndarray]) -> np.ndarray:
    """P(child = observed value | parents) per context, vectorized."""
    child_vals = values[child]
    n = len(child_vals)
    out = np.empty(n)
    if isinstance(cpt, TabularCpt):
        row = np.zeros(n, dtype=np.int64)
        for p in cpt.parents:
            row = row * len(p.domain) + values[p.name]
        out[:] = cpt.rows[row, child_vals]
        return out

    def walk(tree: CptTree, mask: np.ndarray):
        if isinstance(tree, Leaf):
            out[mask] = tree.dist.as_array()[child_vals[mask]]
            return
        vals = values[tree.test.name]
        for k, sub in enumerate(tree.children):
            sub_mask = mask & (vals == k)
            if sub_mask.any():
                walk(sub, sub_mask)

    walk(cpt, np.ones(n, dtype=bool))
    return out


@dataclass(frozen=True)
class OracleReport:
    """Outcome of an exhaustive comparison."""

    checks_run: int
    max_abs_deviation: float
    failing_contexts: tuple[tuple[dict[str, str], float, float], ...]
    tolerance: float = ATOL

    @property
    def ok(self) -> bool:
        return self.max_abs_deviation <= self.tolerance

    def __str__(self):
        status = "ok" if self.ok else f"{len(self.failing_contexts)} failing"
        return (f"OracleReport(checks={self.checks_run}, "
                f"max_dev={self.max_abs_deviation:.3e}, {status})")


MAX_FAILS_REPORTED = 10


def compare_joints(net1: BayesNet, net2: BayesNet,
                   cap: int = DEFAULT_CAP, atol: float = ATOL) -> OracleReport:
    """Max over all full contexts of |P1 - P2|; both nets enumerated."""
    names1 = {v.name: v.domain for v in net1.variables}
    names2 = {v.name: v.domain for v in net2.variables}
    if names1 != names2:
        raise MismatchedVariables(
            f"variable sets differ: {sorted(names1)} vs {sorted(names2)}")
    j1 = joint_table(net1, cap)
    # Align net2's enumeration to net1's variable order for a flat compare.
    net2_aligned = BayesNet(net1.variables, net2.parents, net2.cpts)
    j2 = joint_table(net2_aligned, cap)
    dev = np.abs(j1.probs - j2.probs)
    order = np.argsort(dev)[::-1]
    failing = []
    for i in order[:MAX_FAILS_REPORTED]:
        if dev[i] <= atol:
            break
        ctx = {v.name: v.domain[int(j1.values[v.name][i])] for v in net1.variables}
        failing.append((ctx, float(j1.probs[i]), float(j2.probs[i])))
    return OracleReport(len(dev), float(dev.max(initial=0.0)), tuple(failing), atol)
