"""Two-slice dynamic probabilistic networks.

A schema holds one generic slice: a prior network over slice-1 variables
and a transition network whose CPTs may test previous-slice copies.  The
previous-slice copy of ``X`` is the variable ``X@prev``; the ``@`` keeps
generated names out of the user namespace.  Unrolling instantiates the
schema over a horizon as a flat network with variables ``X@1 .. X@T``.

Evidence integration reverses, within the generic slice, every arc from a
current-slice variable into a sensor, so observations drive the sampling
of the state instead of trailing it.  Thanks to stationarity the reversal
is computed once and applies at every slice.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

from .errors import SchemaError, ValidationError
from .network import BayesNet, validate
from .reversal import ReversalStats, reverse_arc_tree
from .trees import CptTree, Leaf, Node, TabularCpt, Variable, uniform_leaf

PREV_SUFFIX = "@prev"


def prev_name(name: str) -> str:
    return name + PREV_SUFFIX


def is_prev(name: str) -> bool:
    return name.endswith(PREV_SUFFIX)


def base_name(name: str) -> str:
    return name[:-len(PREV_SUFFIX)] if is_prev(name) else name


def at_time(name: str, t: int) -> str:
    return f"{name}@{t}"


@dataclass(frozen=True)
class DpnSchema:
    """A stationary Markov two-slice schema.

    ``transition`` is a flat network over the slice variables plus their
    ``@prev`` copies; the copies are roots (their CPT is a placeholder and
    never enters any computation on the schema).  ``prior`` is a network
    over the plain slice variables.
    """

    variables: tuple[Variable, ...]
    state_vars: tuple[str, ...]
    sensor_vars: tuple[str, ...]
    prior: BayesNet
    transition: BayesNet

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "state_vars", tuple(self.state_vars))
        object.__setattr__(self, "sensor_vars", tuple(self.sensor_vars))

    def var(self, name: str) -> Variable:
        for v in self.variables:
            if v.name == name:
                return v
        raise KeyError(f"no slice variable named {name!r}")

    def slice_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def in_slice_parents(self, child: str) -> tuple[str, ...]:
        return tuple(p for p in self.transition.parents.get(child, ())
                     if not is_prev(p))

    def prev_parents(self, child: str) -> tuple[str, ...]:
        return tuple(base_name(p) for p in self.transition.parents.get(child, ())
                     if is_prev(p))

    def replace_transition(self, transition: BayesNet) -> "DpnSchema":
        return DpnSchema(self.variables, self.state_vars, self.sensor_vars,
                         self.prior, transition)

    def replace_prior(self, prior: BayesNet) -> "DpnSchema":
        return DpnSchema(self.variables, self.state_vars, self.sensor_vars,
                         prior, self.transition)


def make_schema(variables: Iterable[Variable], state: Iterable[str],
                sensors: Iterable[str],
                prior_cpts: Mapping[str, tuple[tuple[str, ...], CptTree]],
                transition_cpts: Mapping[str, tuple[tuple[str, ...], CptTree]],
                ) -> DpnSchema:
    """Assemble and validate a schema.

    Parent names in ``transition_cpts`` use the ``@prev`` suffix for
    previous-slice copies; CPT trees test ``Variable`` objects whose names
    follow the same convention.
    """
    variables = tuple(variables)
    names = [v.name for v in variables]
    prior = BayesNet(variables,
                     {c: ps for c, (ps, _) in prior_cpts.items()},
                     {c: t for c, (_, t) in prior_cpts.items()})
    prev_vars = tuple(Variable(prev_name(v.name), v.domain) for v in variables)
    trans_parents: dict[str, tuple[str, ...]] = {v.name: () for v in prev_vars}
    trans_cpts: dict[str, CptTree | TabularCpt] = {
        v.name: uniform_leaf(v) for v in prev_vars}
    for child, (ps, tree) in transition_cpts.items():
        trans_parents[child] = tuple(ps)
        trans_cpts[child] = tree
    transition = BayesNet(prev_vars + variables, trans_parents, trans_cpts)
    schema = DpnSchema(variables, tuple(state), tuple(sensors), prior, transition)
    problems = validate_schema(schema)
    if problems:
        raise ValidationError("invalid schema", problems)
    assert set(names) >= set(schema.state_vars)
    return schema


def validate_schema(schema: DpnSchema) -> list[str]:
    report: list[str] = []
    names = set(schema.slice_names())
    for s in schema.state_vars + schema.sensor_vars:
        if s not in names:
            report.append(f"role declared for unknown variable {s!r}")
    for name in names:
        if name not in schema.prior.cpts:
            report.append(f"prior has no CPT for {name!r}")
        if name not in schema.transition.cpts:
            report.append(f"transition has no CPT for {name!r}")
    for child, ps in schema.transition.parents.items():
        if is_prev(child):
            continue
        for p in ps:
            if base_name(p) not in names:
                report.append(f"{child!r}: parent {p!r} outside the two slices")
    report.extend(f"prior: {msg}" for msg in validate(schema.prior))
    report.extend(f"transition: {msg}" for msg in validate(schema.transition))
    return report


# ---------------------------------------------------------------------------
# Unrolling
# ---------------------------------------------------------------------------

def _rename_tree(tree: CptTree, mapping: Mapping[str, Variable]) -> CptTree:
    if isinstance(tree, Leaf):
        return tree
    return Node(mapping[tree.test.name],
                tuple(_rename_tree(c, mapping) for c in tree.children),
                tree.marked)


def unroll(schema: DpnSchema, horizon: int) -> BayesNet:
    """Instantiate the schema over ``horizon`` slices as a flat network."""
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    variables: list[Variable] = []
    parents: dict[str, tuple[str, ...]] = {}
    cpts: dict[str, CptTree | TabularCpt] = {}
    for t in range(1, horizon + 1):
        for v in schema.variables:
            variables.append(Variable(at_time(v.name, t), v.domain))
    for v in schema.variables:
        mapping = {u.name: Variable(at_time(u.name, 1), u.domain)
                   for u in schema.variables}
        parents[at_time(v.name, 1)] = tuple(
            at_time(p, 1) for p in schema.prior.parents.get(v.name, ()))
        cpts[at_time(v.name, 1)] = _rename_tree(schema.prior.cpts[v.name], mapping)
    for t in range(2, horizon + 1):
        mapping: dict[str, Variable] = {}
        for u in schema.variables:
            mapping[u.name] = Variable(at_time(u.name, t), u.domain)
            mapping[prev_name(u.name)] = Variable(at_time(u.name, t - 1), u.domain)
        for v in schema.variables:
            ps = schema.transition.parents.get(v.name, ())
            parents[at_time(v.name, t)] = tuple(mapping[p].name for p in ps)
            cpts[at_time(v.name, t)] = _rename_tree(
                schema.transition.cpts[v.name], mapping)
    return BayesNet(tuple(variables), parents, cpts)


# ---------------------------------------------------------------------------
# Evidence integration
# ---------------------------------------------------------------------------

def integrate_evidence(schema: DpnSchema) -> tuple[DpnSchema, list[ReversalStats]]:
    """Reverse every in-slice arc into a sensor, prior and transition both.

    Sensors are processed in declaration order; per sensor, the deepest
    in-slice parent (latest in the slice's topological order) is reversed
    first, which never creates a cycle among the remaining parents.  After
    integration no sensor tests a current-slice variable.
    """
    sensors = [s for s in schema.slice_names() if s in schema.sensor_vars]
    for s in sensors:
        blockers = _sensor_ancestors_in_slice(schema.transition, s,
                                              set(sensors) - {s})
        if blockers:
            raise SchemaError(
                f"sensor {s!r} has sensor in-slice ancestor(s) {sorted(blockers)}; "
                "no reversal order can free both of current-slice parents")
    stats: list[ReversalStats] = []
    prior = _integrate_net(schema.prior, sensors,
                           {v.name for v in schema.variables}, stats)
    transition = _integrate_net(schema.transition, sensors,
                                {v.name for v in schema.variables}, stats)
    return (DpnSchema(schema.variables, schema.state_vars, schema.sensor_vars,
                      prior, transition), stats)


def _sensor_ancestors_in_slice(net: BayesNet, sensor: str,
                               other_sensors: set[str]) -> set[str]:
    seen: set[str] = set()
    frontier = [p for p in net.parents.get(sensor, ()) if not is_prev(p)]
    while frontier:
        n = frontier.pop()
        if n in seen:
            continue
        seen.add(n)
        frontier.extend(p for p in net.parents.get(n, ()) if not is_prev(p))
    return seen & other_sensors


def _integrate_net(net: BayesNet, sensors: list[str], slice_vars: set[str],
                   stats: list[ReversalStats]) -> BayesNet:
    for sensor in sensors:
        guard = 0
        while True:
            in_slice = [p for p in net.parents.get(sensor, ()) if p in slice_vars]
            if not in_slice:
                break
            guard += 1
            if guard > 10_000:
                raise SchemaError(f"integration of {sensor!r} did not terminate")
            order = _slice_topo(net, slice_vars)
            deepest = max(in_slice, key=order.index)
            net, st = reverse_arc_tree(net, deepest, sensor)
            stats.append(st)
    return net


def _slice_topo(net: BayesNet, slice_vars: set[str]) -> list[str]:
    from .network import _topo_sort
    in_slice_parents = {
        v: tuple(p for p in net.parents.get(v, ()) if p in slice_vars)
        for v in (u.name for u in net.variables) if v in slice_vars}
    order = _topo_sort([v.name for v in net.variables if v.name in slice_vars],
                       in_slice_parents)
    if order is None:
        raise SchemaError("in-slice arcs contain a cycle")
    return order


# ---------------------------------------------------------------------------
# Evidence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Evidence:
    """Observed sensor values: (time, sensor name) -> value label."""

    observations: Mapping[tuple[int, str], str]

    def __post_init__(self):
        object.__setattr__(self, "observations", dict(self.observations))

    def validate_against(self, schema: DpnSchema) -> list[str]:
        report = []
        for (t, name), label in self.observations.items():
            if t < 1:
                report.append(f"observation time {t} < 1")
            if name not in schema.sensor_vars:
                report.append(f"{name!r} is not a sensor")
                continue
            if label not in schema.var(name).domain:
                report.append(f"{label!r} is not a value of {name!r}")
        return report

    def at(self, t: int, name: str) -> str | None:
        return self.observations.get((t, name))

    def max_time(self) -> int:
        return max((t for (t, _n) in self.observations), default=0)

    def as_context(self) -> dict[str, str]:
        """Unrolled-network context: ``name@t`` -> value."""
        return {at_time(n, t): val for (t, n), val in self.observations.items()}
