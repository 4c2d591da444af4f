"""Trial execution engines: a numba-jitted kernel and a vectorized numpy twin.

Both engines consume identical pre-generated uniforms and perform the
same comparisons in the same order, so their outputs are byte-identical;
``TREEBN_FORCE_NUMPY=1`` selects the numpy path (it is also the fallback
when numba is unavailable).  ``benchmarks/bench_engines.py`` compares
their throughput.

The compiled plan is flat arrays.  Variable slots: ``v`` is the variable
at the slice being sampled, ``V + v`` its previous-slice copy.  Sampled
values are small ints; ``-2`` marks a skipped variable, ``-3`` a variable
not yet visited.  Any tree walk that reads a negative value aborts the
batch: reading a skipped variable is a soundness violation, reading a
pending one a schedule bug.

Uniform stream: Philox, keyed by the run seed.  Each trial owns a fixed
block of draws (padded to a multiple of 4 so trial k's block can be
reached with ``advance``), indexed by (slice, variable slot) — never by
visit order.  Trials are therefore independent of execution order,
chunking, and of whether other variables were skipped.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np
from numpy.random import Generator, Philox

from .errors import TreebnError, UnsampledRead

ERR_NONE = 0
ERR_UNSAMPLED_READ = 1
ERR_PENDING_READ = 2

SKIPPED = -2
PENDING = -3


class Plan(NamedTuple):
    """A compiled simulation: two step programs over flat tree pools."""

    n_vars: int
    horizon: int
    max_dom: int
    dom: np.ndarray           # (V,) int32 domain sizes
    is_sensor: np.ndarray     # (V,) uint8
    # Steps, both programs concatenated: slice 0 runs [0, prior_len),
    # slices >= 1 run [prior_len, len).
    prior_len: int
    step_var: np.ndarray      # (S,) int32
    step_root: np.ndarray     # (S,) int32 tree root node
    step_guard: np.ndarray    # (S,) int32 guard id or -1
    # Tree node pool.
    test_slot: np.ndarray     # (N,) int32; -1 for leaves
    leaf_row: np.ndarray      # (N,) int32; row for leaves, -1 otherwise
    child_ptr: np.ndarray     # (N,) int32 into children
    children: np.ndarray      # (C,) int32
    # Leaf distribution pool.
    probs: np.ndarray         # (R, K) float64
    cum: np.ndarray           # (R, K) float64 inclusive prefix sums
    # Guard pool: guard -> disjuncts -> literals.
    guard_ptr: np.ndarray     # (G+1,) int32 into disj_ptr entries
    disj_ptr: np.ndarray      # (D+1,) int32 into literals
    lit_slot: np.ndarray      # (L,) int32
    lit_val: np.ndarray       # (L,) int32
    # Evidence and query.
    evidence: np.ndarray      # (T, V) int32; -1 unobserved
    query_var: int
    query_time: int           # 0-based slice

    @property
    def draws_per_trial(self) -> int:
        raw = self.horizon * self.n_vars
        return ((raw + 3) // 4) * 4


class BatchResult(NamedTuple):
    values: np.ndarray    # (n, T, V) int32
    weights: np.ndarray   # (n,) float64
    skipped: np.ndarray   # (n, T, V) uint8
    query: np.ndarray     # (n,) int32


def trial_uniforms(seed: int, start: int, count: int, plan: Plan) -> np.ndarray:
    """Uniform block for trials [start, start+count), shape (count, T*V).

    Reproduces exactly the rows a single bulk generation would produce,
    regardless of ``start``.
    """
    dpt = plan.draws_per_trial
    bg = Philox(key=seed)
    if start:
        bg = bg.advance(start * dpt // 4)
    u = Generator(bg).random(count * dpt).reshape(count, dpt)
    return u[:, :plan.horizon * plan.n_vars]


def use_numba() -> bool:
    if os.environ.get("TREEBN_FORCE_NUMPY"):
        return False
    try:
        import numba  # noqa: F401
        return True
    except ImportError:
        return False


def run_batch(plan: Plan, uniforms: np.ndarray, engine: str | None = None) -> BatchResult:
    """Execute one trial per uniform row.  ``engine`` overrides selection."""
    n = uniforms.shape[0]
    values = np.full((n, plan.horizon, plan.n_vars), PENDING, dtype=np.int32)
    weights = np.ones(n)
    skipped = np.zeros((n, plan.horizon, plan.n_vars), dtype=np.uint8)
    query = np.full(n, -1, dtype=np.int32)
    err = np.zeros(3, dtype=np.int64)

    if engine is None:
        engine = "numba" if use_numba() else "numpy"
    if engine == "numba":
        _numba_kernel()(plan.n_vars, plan.horizon, plan.dom, plan.is_sensor,
                        plan.prior_len, plan.step_var, plan.step_root,
                        plan.step_guard, plan.test_slot, plan.leaf_row,
                        plan.child_ptr, plan.children, plan.probs, plan.cum,
                        plan.guard_ptr, plan.disj_ptr, plan.lit_slot,
                        plan.lit_val, plan.evidence,
                        plan.query_var, plan.query_time,
                        uniforms, values, weights, skipped, query, err)
    elif engine == "numpy":
        _run_numpy(plan, uniforms, values, weights, skipped, query, err)
    else:
        raise ValueError(f"unknown engine {engine!r}")

    if err[0] != ERR_NONE:
        what = "skipped" if err[0] == ERR_UNSAMPLED_READ else "not-yet-sampled"
        raise UnsampledRead(
            f"trial {err[1]}: CPT evaluation read a {what} variable "
            f"(slot {err[2]}); the sample schedule is unsound")
    return BatchResult(values, weights, skipped, query)


# ---------------------------------------------------------------------------
# numpy engine
# ---------------------------------------------------------------------------

def _read_slot(values: np.ndarray, t: int, slots: np.ndarray,
               rows: np.ndarray, n_vars: int) -> np.ndarray:
    cur = slots < n_vars
    out = np.empty(len(slots), dtype=np.int32)
    if cur.any():
        out[cur] = values[rows[cur], t, slots[cur]]
    if (~cur).any():
        out[~cur] = values[rows[~cur], t - 1, slots[~cur] - n_vars]
    return out


def _walk_vec(plan: Plan, values: np.ndarray, t: int, root: int,
              rows: np.ndarray, err: np.ndarray) -> np.ndarray:
    """Tree descent for the trial indices in ``rows``; returns leaf rows."""
    node = np.full(len(rows), root, dtype=np.int32)
    while True:
        slots = plan.test_slot[node]
        active = slots >= 0
        if not active.any():
            break
        vals = _read_slot(values, t, slots[active], rows[active], plan.n_vars)
        bad = vals < 0
        if bad.any():
            i = int(np.argmax(bad))
            err[0] = ERR_UNSAMPLED_READ if vals[i] == SKIPPED else ERR_PENDING_READ
            err[1] = rows[active][i]
            err[2] = slots[active][i]
            raise _Abort()
        node[active] = plan.children[plan.child_ptr[node[active]] + vals]
    return plan.leaf_row[node]


def _guard_vec(plan: Plan, values: np.ndarray, t: int, guard: int,
               rows: np.ndarray) -> np.ndarray:
    sat = np.zeros(len(rows), dtype=bool)
    for d in range(plan.guard_ptr[guard], plan.guard_ptr[guard + 1]):
        ok = np.ones(len(rows), dtype=bool)
        for li in range(plan.disj_ptr[d], plan.disj_ptr[d + 1]):
            got = _read_slot(values, t,
                             np.full(len(rows), plan.lit_slot[li], dtype=np.int32),
                             rows, plan.n_vars)
            ok &= got == plan.lit_val[li]
        sat |= ok
    return sat


class _Abort(Exception):
    pass


def _run_numpy(plan: Plan, uniforms, values, weights, skipped, query, err):
    n = uniforms.shape[0]
    rows_all = np.arange(n)
    try:
        for t in range(plan.horizon):
            lo, hi = (0, plan.prior_len) if t == 0 else (plan.prior_len,
                                                         len(plan.step_var))
            for s in range(lo, hi):
                v = int(plan.step_var[s])
                root = int(plan.step_root[s])
                if plan.is_sensor[v] and plan.evidence[t, v] >= 0:
                    obs = int(plan.evidence[t, v])
                    values[:, t, v] = obs
                    rows = _walk_vec(plan, values, t, root, rows_all, err)
                    weights[:] = weights * plan.probs[rows, obs]
                    continue
                guard = int(plan.step_guard[s])
                if guard >= 0:
                    skip = _guard_vec(plan, values, t, guard, rows_all)
                else:
                    skip = np.zeros(n, dtype=bool)
                if skip.any():
                    values[skip, t, v] = SKIPPED
                    skipped[skip, t, v] = 1
                keep = ~skip
                if keep.any():
                    krows = rows_all[keep]
                    rows = _walk_vec(plan, values, t, root, krows, err)
                    u = uniforms[keep, t * plan.n_vars + v]
                    nd = int(plan.dom[v])
                    k = (u[:, None] >= plan.cum[rows, :nd - 1]).sum(axis=1)
                    values[krows, t, v] = k.astype(np.int32)
        query[:] = values[:, plan.query_time, plan.query_var]
    except _Abort:
        pass


# ---------------------------------------------------------------------------
# numba engine
# ---------------------------------------------------------------------------

_KERNEL = None


def _numba_kernel():
    global _KERNEL
    if _KERNEL is not None:
        return _KERNEL
    from numba import njit

    @njit(cache=False)
    def kernel(n_vars, horizon, dom, is_sensor, prior_len, step_var, step_root,
               step_guard, test_slot, leaf_row, child_ptr, children, probs,
               cum, guard_ptr, disj_ptr, lit_slot, lit_val, evidence,
               query_var, query_time, uniforms, values, weights, skipped,
               query, err):
        n_steps = len(step_var)
        for i in range(uniforms.shape[0]):
            w = 1.0
            for t in range(horizon):
                lo = 0 if t == 0 else prior_len
                hi = prior_len if t == 0 else n_steps
                for s in range(lo, hi):
                    v = step_var[s]
                    root = step_root[s]
                    if is_sensor[v] == 1 and evidence[t, v] >= 0:
                        obs = evidence[t, v]
                        values[i, t, v] = obs
                        node = root
                        while test_slot[node] >= 0:
                            slot = test_slot[node]
                            if slot < n_vars:
                                got = values[i, t, slot]
                            else:
                                got = values[i, t - 1, slot - n_vars]
                            if got < 0:
                                err[0] = (ERR_UNSAMPLED_READ if got == SKIPPED
                                          else ERR_PENDING_READ)
                                err[1] = i
                                err[2] = slot
                                return
                            node = children[child_ptr[node] + got]
                        w *= probs[leaf_row[node], obs]
                        continue
                    guard = step_guard[s]
                    do_skip = False
                    if guard >= 0:
                        for d in range(guard_ptr[guard], guard_ptr[guard + 1]):
                            ok = True
                            for li in range(disj_ptr[d], disj_ptr[d + 1]):
                                slot = lit_slot[li]
                                if slot < n_vars:
                                    got = values[i, t, slot]
                                else:
                                    got = values[i, t - 1, slot - n_vars]
                                if got != lit_val[li]:
                                    ok = False
                                    break
                            if ok:
                                do_skip = True
                                break
                    if do_skip:
                        values[i, t, v] = SKIPPED
                        skipped[i, t, v] = 1
                        continue
                    node = root
                    while test_slot[node] >= 0:
                        slot = test_slot[node]
                        if slot < n_vars:
                            got = values[i, t, slot]
                        else:
                            got = values[i, t - 1, slot - n_vars]
                        if got < 0:
                            err[0] = (ERR_UNSAMPLED_READ if got == SKIPPED
                                      else ERR_PENDING_READ)
                            err[1] = i
                            err[2] = slot
                            return
                        node = children[child_ptr[node] + got]
                    row = leaf_row[node]
                    u = uniforms[i, t * n_vars + v]
                    k = 0
                    while k < dom[v] - 1 and u >= cum[row, k]:
                        k += 1
                    values[i, t, v] = k
            weights[i] = w
            query[i] = values[i, query_time, query_var]

    _KERNEL = kernel
    return _KERNEL
