"""Shared fixtures: the two repo fixtures and seeded random model generators."""

import itertools
import pathlib
import random

import pytest

from treebn.dpn import DpnSchema, make_schema, prev_name
from treebn.io import parse_dpn_file, parse_network_file
from treebn.network import BayesNet
from treebn.trees import CptTree, Distribution, Leaf, Node, Variable

FIXTURES = pathlib.Path(__file__).resolve().parent.parent / "fixtures"

BINARY = ("t", "f")


@pytest.fixture(scope="session")
def f1_net() -> BayesNet:
    return parse_network_file(str(FIXTURES / "f1_network.json"))


@pytest.fixture(scope="session")
def f2_schema() -> DpnSchema:
    return parse_dpn_file(str(FIXTURES / "f2_dpn.json"))


# ---------------------------------------------------------------------------
# Random model generators (always explicitly seeded by the caller)
# ---------------------------------------------------------------------------

def random_dist(rng: random.Random, n: int, lo: float = 0.05) -> Distribution:
    cuts = sorted(rng.uniform(lo, 1.0 - lo) for _ in range(n - 1))
    probs = []
    prev = 0.0
    for c in cuts:
        probs.append(c - prev)
        prev = c
    probs.append(1.0 - prev)
    # Clamp away from 0 so random instances stay non-degenerate.
    probs = [max(p, 0.01) for p in probs]
    total = sum(probs)
    probs = [p / total for p in probs]
    probs[-1] = 1.0 - sum(probs[:-1])
    return Distribution(tuple(probs))


def random_tree(rng: random.Random, parents: list[Variable], child: Variable,
                p_leaf: float = 0.35) -> CptTree:
    def build(avail: list[Variable]) -> CptTree:
        if not avail or rng.random() < p_leaf:
            return Leaf(random_dist(rng, len(child.domain)))
        var = rng.choice(avail)
        rest = [p for p in avail if p is not var]
        return Node(var, tuple(build(rest) for _ in var.domain))

    return build(list(parents))


def random_net(rng: random.Random, n_vars: int, p_arc: float = 0.45) -> BayesNet:
    variables = tuple(Variable(f"V{i}", BINARY) for i in range(n_vars))
    parents = {}
    cpts = {}
    for i, v in enumerate(variables):
        ps = tuple(variables[j] for j in range(i) if rng.random() < p_arc)
        parents[v.name] = tuple(p.name for p in ps)
        cpts[v.name] = random_tree(rng, list(ps), v)
    return BayesNet(variables, parents, cpts)


def legal_arcs(net: BayesNet) -> list[tuple[str, str]]:
    """Arcs whose reversal keeps the graph acyclic (no second path a ~> o)."""
    out = []
    for a, o in net.arcs():
        frontier = [c for c in net.children_of(a) if c != o]
        seen = set(frontier)
        ok = True
        while frontier:
            n = frontier.pop()
            if n == o:
                ok = False
                break
            for c in net.children_of(n):
                if c not in seen:
                    seen.add(c)
                    frontier.append(c)
        if ok:
            out.append((a, o))
    return sorted(out)


def random_schema(rng: random.Random, n_state: int, with_sensor: bool = True,
                  p_prev: float = 0.5, p_cur: float = 0.25) -> DpnSchema:
    """A random two-slice schema with an acyclic in-slice graph.

    State variable i may take previous-slice parents freely and
    current-slice parents among earlier state variables; the sensor takes
    a nonempty set of in-slice state parents (so integration has work).
    """
    state_names = [f"S{i}" for i in range(n_state)]
    variables = [Variable(n, BINARY) for n in state_names]
    sensors = []
    prior: dict[str, tuple[tuple[str, ...], CptTree]] = {}
    transition: dict[str, tuple[tuple[str, ...], CptTree]] = {}

    for i, name in enumerate(state_names):
        var = variables[i]
        prev_ps = [p for p in state_names if rng.random() < p_prev]
        cur_ps = [p for p in state_names[:i] if rng.random() < p_cur]
        ps = tuple(prev_name(p) for p in prev_ps) + tuple(cur_ps)
        pvars = ([Variable(prev_name(p), BINARY) for p in prev_ps]
                 + [variables[state_names.index(p)] for p in cur_ps])
        transition[name] = (ps, random_tree(rng, pvars, var))
        prior_ps = tuple(cur_ps)
        prior[name] = (prior_ps,
                       random_tree(rng, [variables[state_names.index(p)]
                                         for p in cur_ps], var))

    if with_sensor:
        svar = Variable("S_obs", BINARY)
        variables.append(svar)
        sensors.append("S_obs")
        k = rng.randint(1, min(3, n_state))
        obs_parents = rng.sample(state_names, k)
        transition["S_obs"] = (
            tuple(obs_parents),
            random_tree(rng, [variables[state_names.index(p)] for p in obs_parents],
                        svar, p_leaf=0.2))
        prior["S_obs"] = (
            tuple(obs_parents),
            random_tree(rng, [variables[state_names.index(p)] for p in obs_parents],
                        svar, p_leaf=0.2))

    return make_schema(variables, state_names, sensors, prior, transition)


def all_contexts(variables) -> list[dict[str, str]]:
    names = [v.name for v in variables]
    domains = [v.domain for v in variables]
    return [dict(zip(names, combo)) for combo in itertools.product(*domains)]
