"""Likelihood-weighting simulation of integrated schemas under a schedule.

Each slice clamps the observed sensors (multiplying the trial weight by
the probability of the observation given the already-sampled context) and
visits the remaining variables in schedule order, sampling each from its
CPT unless its guard — the skip condition — is satisfied by the values
fixed so far.  Sampling uses inverse-CDF over the canonical domain order.

Estimates are deterministic given (seed, trial count): the Philox uniform
stream is indexed by (trial, slice, variable), and aggregation reduces
preallocated per-trial arrays in a fixed order, so chunked or reordered
execution cannot change a byte of the result.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np

from . import _engine
from ._engine import Plan
from .dpn import DpnSchema, Evidence, at_time, is_prev, base_name
from .errors import (AllZeroWeights, SchemaError, TooLarge, ValidationError,
                     ZeroEvidenceProbability)
from .exact import DEFAULT_CAP, joint_table
from .irrelevance import SampleSchedule
from .network import BayesNet, _topo_sort
from .trees import CptTree, Distribution, Leaf, TabularCpt

#: Marker for a variable skipped by its guard in a trial's assignments.
UNSAMPLED = None


@dataclass(frozen=True)
class Trial:
    """One simulated trajectory.

    ``assignments[t-1]`` maps each variable to its value at slice t, with
    ``None`` for variables skipped by their guard.  ``weight`` is the
    product over observed sensors of the observation's probability given
    the sampled context.
    """

    assignments: tuple[dict[str, str | None], ...]
    weight: float
    seed: int
    index: int


@dataclass(frozen=True)
class SimulationEstimate:
    """Weighted estimate of P(query variable at query time | evidence)."""

    query: str
    time: int
    values: tuple[str, ...]
    masses: tuple[float, ...]        # weighted mass per value; sums to weight_sum
    trials: int
    weight_sum: float
    ess: float                       # (sum w)^2 / sum w^2
    std_errors: tuple[float, ...]    # delta-method standard error per value
    skip_rates: Mapping[str, tuple[float, ...]]  # var -> per-slice skip rate

    @property
    def probabilities(self) -> tuple[float, ...]:
        return tuple(m / self.weight_sum for m in self.masses)


def _check_integrated(schema: DpnSchema) -> None:
    for s in schema.sensor_vars:
        bad = schema.in_slice_parents(s)
        prior_bad = schema.prior.parents.get(s, ())
        if bad or prior_bad:
            raise SchemaError(
                f"sensor {s!r} still has current-slice parents "
                f"{list(bad) or list(prior_bad)}; integrate evidence first")


def compile_plan(schema: DpnSchema, schedule: SampleSchedule,
                 evidence: Evidence, horizon: int,
                 query: tuple[str, int] | None = None,
                 never_skip: frozenset[str] = frozenset()) -> Plan:
    """Flatten schema + schedule + evidence into engine arrays."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    _check_integrated(schema)
    problems = evidence.validate_against(schema)
    if problems:
        raise ValidationError("invalid evidence", problems)
    names = schema.slice_names()
    index = {n: i for i, n in enumerate(names)}
    V = len(names)
    if sorted(schedule.order()) != sorted(names):
        raise ValueError("schedule does not cover the slice variables")

    dom = np.array([len(v.domain) for v in schema.variables], dtype=np.int32)
    max_dom = int(dom.max())
    is_sensor = np.array([1 if n in schema.sensor_vars else 0 for n in names],
                         dtype=np.uint8)

    test_slot: list[int] = []
    leaf_row: list[int] = []
    child_ptr: list[int] = []
    children: list[int] = []
    rows: list[tuple[float, ...]] = []

    def compile_tree(tree: CptTree | TabularCpt, allow_prev: bool) -> int:
        if isinstance(tree, TabularCpt):
            raise SchemaError(
                f"{tree.child.name!r}: simulation needs tree CPTs")
        if isinstance(tree, Leaf):
            node = len(test_slot)
            test_slot.append(-1)
            leaf_row.append(len(rows))
            child_ptr.append(-1)
            rows.append(tree.dist.probs)
            return node
        kid_ids = [compile_tree(c, allow_prev) for c in tree.children]
        name = tree.test.name
        if is_prev(name):
            if not allow_prev:
                raise SchemaError(
                    f"slice-1 CPT tests previous-slice {name!r}")
            slot = V + index[base_name(name)]
        else:
            slot = index[name]
        node = len(test_slot)
        test_slot.append(slot)
        leaf_row.append(-1)
        child_ptr.append(len(children))
        children.extend(kid_ids)
        return node

    step_var: list[int] = []
    step_root: list[int] = []
    step_guard: list[int] = []
    guard_ptr = [0]
    disj_ptr = [0]
    lit_slot: list[int] = []
    lit_val: list[int] = []

    prior_order = _topo_sort(names, schema.prior.parents)
    if prior_order is None:
        raise SchemaError("prior network is cyclic")
    for n in prior_order:
        step_var.append(index[n])
        step_root.append(compile_tree(schema.prior.cpts[n], allow_prev=False))
        step_guard.append(-1)  # slice 1: guards are transition-derived
    prior_len = len(step_var)

    for n, dnf in schedule.entries:
        step_var.append(index[n])
        step_root.append(compile_tree(schema.transition.cpts[n], allow_prev=True))
        if dnf.is_false or n in never_skip:
            step_guard.append(-1)
            continue
        step_guard.append(len(guard_ptr) - 1)
        for d in dnf.disjuncts:
            for lit in sorted(d):
                var = schema.var(lit.name)
                lit_slot.append(index[lit.name] + (V if lit.prev else 0))
                lit_val.append(var.index(lit.value))
            disj_ptr.append(len(lit_slot))
        guard_ptr.append(len(disj_ptr) - 1)

    prob_rows = np.zeros((len(rows), max_dom))
    cum_rows = np.full((len(rows), max_dom), 2.0)
    for i, r in enumerate(rows):
        prob_rows[i, :len(r)] = r
        cum_rows[i, :len(r)] = np.cumsum(r)

    ev = np.full((horizon, V), -1, dtype=np.int32)
    for (t, name), label in evidence.observations.items():
        if t <= horizon:
            ev[t - 1, index[name]] = schema.var(name).index(label)

    if query is not None:
        qname, qtime = query
        if not 1 <= qtime <= horizon:
            raise ValueError(f"query time {qtime} outside 1..{horizon}")
        q_var, q_time = index[qname], qtime - 1
    else:
        q_var, q_time = 0, 0

    return Plan(
        n_vars=V, horizon=horizon, max_dom=max_dom, dom=dom,
        is_sensor=is_sensor, prior_len=prior_len,
        step_var=np.array(step_var, dtype=np.int32),
        step_root=np.array(step_root, dtype=np.int32),
        step_guard=np.array(step_guard, dtype=np.int32),
        test_slot=np.array(test_slot, dtype=np.int32),
        leaf_row=np.array(leaf_row, dtype=np.int32),
        child_ptr=np.array(child_ptr, dtype=np.int32),
        children=np.array(children or [0], dtype=np.int32),
        probs=prob_rows, cum=cum_rows,
        guard_ptr=np.array(guard_ptr, dtype=np.int32),
        disj_ptr=np.array(disj_ptr, dtype=np.int32),
        lit_slot=np.array(lit_slot or [0], dtype=np.int32),
        lit_val=np.array(lit_val or [0], dtype=np.int32),
        evidence=ev, query_var=q_var, query_time=q_time,
    )


def run_trial(schema: DpnSchema, schedule: SampleSchedule, evidence: Evidence,
              horizon: int, seed: int, index: int = 0,
              engine: str | None = None) -> Trial:
    """Run the single trial ``index`` of the run keyed by ``seed``.

    The trial is bit-identical to element ``index`` of an ``estimate``
    batch with the same seed.
    """
    plan = compile_plan(schema, schedule, evidence, horizon)
    u = _engine.trial_uniforms(seed, index, 1, plan)
    batch = _engine.run_batch(plan, u, engine)
    names = schema.slice_names()
    assignments = []
    for t in range(horizon):
        row = {}
        for i, n in enumerate(names):
            got = int(batch.values[0, t, i])
            row[n] = UNSAMPLED if got < 0 else schema.var(n).domain[got]
        assignments.append(row)
    return Trial(tuple(assignments), float(batch.weights[0]), seed, index)


def estimate(schema: DpnSchema, schedule: SampleSchedule, evidence: Evidence,
             query: tuple[str, int], horizon: int, trials: int, seed: int,
             chunk_size: int | None = None,
             engine: str | None = None) -> SimulationEstimate:
    """Aggregate ``trials`` independent weighted trials for the query.

    ``chunk_size`` only partitions execution; results are byte-identical
    for every chunking.  The query variable is never skipped.
    """
    qname, qtime = query
    if not 1 <= qtime <= horizon:
        raise ValueError(f"query time {qtime} outside 1..{horizon}")
    plan = compile_plan(schema, schedule, evidence, horizon,
                        query=query, never_skip=frozenset({qname}))
    n = trials
    weights = np.empty(n)
    qvals = np.empty(n, dtype=np.int32)
    skip_sum = np.zeros((horizon, plan.n_vars), dtype=np.int64)
    chunk = n if chunk_size is None else max(1, chunk_size)
    for start in range(0, n, chunk):
        m = min(chunk, n - start)
        u = _engine.trial_uniforms(seed, start, m, plan)
        batch = _engine.run_batch(plan, u, engine)
        weights[start:start + m] = batch.weights
        qvals[start:start + m] = batch.query
        skip_sum += batch.skipped.sum(axis=0, dtype=np.int64)

    var = schema.var(qname)
    masses = tuple(float(weights[qvals == k].sum())
                   for k in range(len(var.domain)))
    wsum = float(weights.sum())
    if wsum <= 0.0:
        raise AllZeroWeights(
            f"all {n} trials have weight 0; evidence is impossible "
            "under the model or the run is too small")
    wsq = float((weights ** 2).sum())
    ses = []
    for k in range(len(var.domain)):
        p = masses[k] / wsum
        resid = weights * ((qvals == k).astype(np.float64) - p)
        ses.append(float(np.sqrt((resid ** 2).sum()) / wsum))
    names = schema.slice_names()
    skip_rates = {name: tuple(float(skip_sum[t, i]) / n for t in range(horizon))
                  for i, name in enumerate(names)}
    return SimulationEstimate(
        query=qname, time=qtime, values=var.domain, masses=masses,
        trials=n, weight_sum=wsum, ess=wsum * wsum / wsq,
        std_errors=tuple(ses), skip_rates=skip_rates)


def exact_query(net: BayesNet, evidence: Mapping[str, str], query: str,
                cap: int = DEFAULT_CAP) -> Distribution:
    """P(query | evidence) by full-joint enumeration (size-guarded)."""
    jt = joint_table(net, cap)
    cond = jt.conditional(query, dict(evidence))
    if cond is None:
        raise ZeroEvidenceProbability(
            f"evidence {dict(evidence)!r} has probability 0")
    return Distribution(tuple(cond))


def exact_dpn_query(schema: DpnSchema, evidence: Evidence,
                    query: tuple[str, int], horizon: int,
                    cap: int = DEFAULT_CAP) -> Distribution:
    """Exact posterior on the unrolled schema; the desk-scale ground truth."""
    from .dpn import unroll
    net = unroll(schema, horizon)
    qname, qtime = query
    return exact_query(net, evidence.as_context(), at_time(qname, qtime), cap)
