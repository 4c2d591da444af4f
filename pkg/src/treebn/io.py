"""Model and evidence file formats.

Networks are JSON: ``variables`` (name + values) and ``cpts`` (child,
declared parents, tree).  A tree is ``{"leaf": [p0, p1, ...]}`` with
probabilities in domain order, or ``{"test": var, "children": {value:
subtree, ...}}`` with exactly one child per domain value.  DPN files add
``state``, ``sensors``, ``prior`` and ``transition``; previous-slice
parents and tests are written ``{"prev": "Name"}``.

Evidence is delimited text, header required: ``time,variable,value``.

Writers emit floats with 17 significant digits so written models reload
bit-exactly.
"""

from __future__ import annotations

import csv
import io as _io
import json
from typing import Any

from .dpn import DpnSchema, Evidence, make_schema, prev_name
from .errors import ParseError, ValidationError
from .network import BayesNet, validate
from .trees import NAME_RE, CptTree, Distribution, Leaf, Node, TabularCpt, Variable


# ---------------------------------------------------------------------------
# JSON emission with fixed float formatting
# ---------------------------------------------------------------------------

def format_float(x: float) -> str:
    return format(float(x), ".17g")


def dumps_json(obj: Any, indent: int = 0) -> str:
    out = _io.StringIO()
    _dump(obj, out, indent, 0)
    out.write("\n")
    return out.getvalue()


def _dump(obj: Any, out: _io.StringIO, indent: int, level: int) -> None:
    pad = " " * (indent * (level + 1)) if indent else ""
    end_pad = " " * (indent * level) if indent else ""
    sep = ",\n" if indent else ", "
    if isinstance(obj, dict):
        if not obj:
            out.write("{}")
            return
        out.write("{\n" if indent else "{")
        for i, (k, v) in enumerate(obj.items()):
            out.write(pad + json.dumps(k) + ": ")
            _dump(v, out, indent, level + 1)
            out.write(sep if i < len(obj) - 1 else ("\n" if indent else ""))
        out.write(end_pad + "}")
    elif isinstance(obj, (list, tuple)):
        if not obj:
            out.write("[]")
            return
        out.write("[\n" if indent else "[")
        for i, v in enumerate(obj):
            out.write(pad)
            _dump(v, out, indent, level + 1)
            out.write(sep if i < len(obj) - 1 else ("\n" if indent else ""))
        out.write(end_pad + "]")
    elif isinstance(obj, bool):
        out.write("true" if obj else "false")
    elif isinstance(obj, float):
        out.write(format_float(obj))
    elif isinstance(obj, int):
        out.write(str(obj))
    elif isinstance(obj, str):
        out.write(json.dumps(obj))
    elif obj is None:
        out.write("null")
    else:
        raise TypeError(f"cannot serialize {type(obj)}")


# ---------------------------------------------------------------------------
# Parsing helpers
# ---------------------------------------------------------------------------

def _load_json(path: str) -> Any:
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(e.msg, line=e.lineno, column=e.colno) from None
    except OSError as e:
        raise ParseError(str(e)) from None


def _want(obj: dict, key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise ParseError(f"{where}: missing key {key!r}")
    val = obj[key]
    if not isinstance(val, kind):
        raise ParseError(f"{where}: {key!r} must be {kind.__name__}")
    return val


def _parse_variables(obj: dict) -> tuple[Variable, ...]:
    out = []
    for entry in _want(obj, "variables", list, "model"):
        if not isinstance(entry, dict):
            raise ParseError("variables entries must be objects")
        name = _want(entry, "name", str, "variable")
        if not NAME_RE.match(name):
            raise ParseError(f"illegal variable name {name!r}")
        values = _want(entry, "values", list, f"variable {name!r}")
        if not all(isinstance(v, str) for v in values):
            raise ParseError(f"variable {name!r}: values must be strings")
        try:
            out.append(Variable(name, tuple(values)))
        except ValueError as e:
            raise ParseError(str(e)) from None
    return tuple(out)


def _parse_ref(ref: Any, where: str, allow_prev: bool) -> str:
    """A variable reference: a plain name or {"prev": name}."""
    if isinstance(ref, str):
        return ref
    if isinstance(ref, dict) and set(ref) == {"prev"} and isinstance(ref["prev"], str):
        if not allow_prev:
            raise ParseError(f"{where}: previous-slice reference not allowed here")
        return prev_name(ref["prev"])
    raise ParseError(f"{where}: bad variable reference {ref!r}")


def _parse_tree(obj: Any, child: str, resolve: dict[str, Variable],
                allow_prev: bool) -> CptTree:
    where = f"CPT for {child!r}"
    if not isinstance(obj, dict):
        raise ParseError(f"{where}: tree must be an object")
    if "leaf" in obj:
        probs = obj["leaf"]
        if not isinstance(probs, list):
            raise ParseError(f"{where}: leaf must be a list of probabilities")
        try:
            return Leaf(Distribution(tuple(float(p) for p in probs)))
        except (TypeError, ValueError) as e:
            raise ParseError(f"{where}: {e}") from None
    if "test" not in obj or "children" not in obj:
        raise ParseError(f"{where}: tree node needs 'test' and 'children'")
    name = _parse_ref(obj["test"], where, allow_prev)
    if name not in resolve:
        raise ParseError(f"{where}: test of unknown variable {name!r}")
    var = resolve[name]
    children_obj = obj["children"]
    if not isinstance(children_obj, dict):
        raise ParseError(f"{where}: children must map values to subtrees")
    if set(children_obj) != set(var.domain):
        raise ParseError(
            f"{where}: children of {name!r} must cover exactly {list(var.domain)}, "
            f"got {sorted(children_obj)}")
    kids = tuple(_parse_tree(children_obj[label], child, resolve, allow_prev)
                 for label in var.domain)
    return Node(var, kids)


def _parse_cpts(entries: list, resolve: dict[str, Variable], allow_prev: bool,
                where: str) -> dict[str, tuple[tuple[str, ...], CptTree]]:
    out: dict[str, tuple[tuple[str, ...], CptTree]] = {}
    for entry in entries:
        if not isinstance(entry, dict):
            raise ParseError(f"{where}: cpt entries must be objects")
        child = _want(entry, "child", str, where)
        if child in out:
            raise ParseError(f"{where}: duplicate CPT for {child!r}")
        parents = tuple(_parse_ref(p, f"{where} {child!r}", allow_prev)
                        for p in _want(entry, "parents", list, f"{where} {child!r}"))
        tree = _parse_tree(_want(entry, "tree", dict, f"{where} {child!r}"),
                           child, resolve, allow_prev)
        out[child] = (parents, tree)
    return out


# ---------------------------------------------------------------------------
# Networks
# ---------------------------------------------------------------------------

def parse_network(obj: dict) -> BayesNet:
    variables = _parse_variables(obj)
    resolve = {v.name: v for v in variables}
    cpts = _parse_cpts(_want(obj, "cpts", list, "model"), resolve,
                       allow_prev=False, where="cpts")
    net = BayesNet(variables,
                   {c: ps for c, (ps, _t) in cpts.items()},
                   {c: t for c, (_ps, t) in cpts.items()})
    problems = validate(net)
    if problems:
        raise ValidationError("invalid network", problems)
    return net


def parse_network_file(path: str) -> BayesNet:
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise ParseError("top level must be an object")
    return parse_network(obj)


def tree_to_obj(tree: CptTree) -> dict:
    if isinstance(tree, TabularCpt):
        raise ValueError("tabular CPTs have no file form; convert to a tree")
    if isinstance(tree, Leaf):
        return {"leaf": list(tree.dist.probs)}
    from .dpn import base_name, is_prev
    name = tree.test.name
    test = {"prev": base_name(name)} if is_prev(name) else name
    return {"test": test,
            "children": {label: tree_to_obj(c)
                         for label, c in zip(tree.test.domain, tree.children)}}


def network_to_obj(net: BayesNet) -> dict:
    return {
        "variables": [{"name": v.name, "values": list(v.domain)}
                      for v in net.variables],
        "cpts": [{"child": v.name,
                  "parents": list(net.parents.get(v.name, ())),
                  "tree": tree_to_obj(net.cpts[v.name])}
                 for v in net.variables],
    }


def write_network_file(net: BayesNet, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(network_to_obj(net), indent=2))


# ---------------------------------------------------------------------------
# DPN schemas
# ---------------------------------------------------------------------------

def parse_dpn(obj: dict) -> DpnSchema:
    variables = _parse_variables(obj)
    resolve = {v.name: v for v in variables}
    for v in variables:
        resolve[prev_name(v.name)] = Variable(prev_name(v.name), v.domain)
    state = _want(obj, "state", list, "schema")
    sensors = _want(obj, "sensors", list, "schema")
    prior = _parse_cpts(_want(obj, "prior", list, "schema"), resolve,
                        allow_prev=False, where="prior")
    transition = _parse_cpts(_want(obj, "transition", list, "schema"), resolve,
                             allow_prev=True, where="transition")
    return make_schema(variables, state, sensors, prior, transition)


def parse_dpn_file(path: str) -> DpnSchema:
    obj = _load_json(path)
    if not isinstance(obj, dict):
        raise ParseError("top level must be an object")
    return parse_dpn(obj)


def _ref_to_obj(name: str):
    from .dpn import base_name, is_prev
    return {"prev": base_name(name)} if is_prev(name) else name


def dpn_to_obj(schema: DpnSchema) -> dict:
    return {
        "variables": [{"name": v.name, "values": list(v.domain)}
                      for v in schema.variables],
        "state": list(schema.state_vars),
        "sensors": list(schema.sensor_vars),
        "prior": [{"child": v.name,
                   "parents": list(schema.prior.parents.get(v.name, ())),
                   "tree": tree_to_obj(schema.prior.cpts[v.name])}
                  for v in schema.variables],
        "transition": [{"child": v.name,
                        "parents": [_ref_to_obj(p) for p in
                                    schema.transition.parents.get(v.name, ())],
                        "tree": tree_to_obj(schema.transition.cpts[v.name])}
                       for v in schema.variables],
    }


def write_dpn_file(schema: DpnSchema, path: str) -> None:
    with open(path, "w") as fh:
        fh.write(dumps_json(dpn_to_obj(schema), indent=2))


# ---------------------------------------------------------------------------
# Evidence
# ---------------------------------------------------------------------------

def parse_evidence_file(path: str) -> Evidence:
    observations: dict[tuple[int, str], str] = {}
    try:
        fh = open(path, newline="")
    except OSError as e:
        raise ParseError(str(e)) from None
    with fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty evidence file; header row required") from None
        if [h.strip() for h in header] != ["time", "variable", "value"]:
            raise ParseError(
                f"evidence header must be 'time,variable,value', got {header}",
                line=1)
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise ParseError(f"expected 3 columns, got {len(row)}", line=lineno)
            t_str, name, value = (c.strip() for c in row)
            try:
                t = int(t_str)
            except ValueError:
                raise ParseError(f"bad time {t_str!r}", line=lineno) from None
            if t < 1:
                raise ParseError(f"time {t} < 1", line=lineno)
            if (t, name) in observations:
                raise ParseError(f"duplicate observation for {name!r} at {t}",
                                 line=lineno)
            observations[(t, name)] = value
    return Evidence(observations)


def write_evidence_file(evidence: Evidence, path: str) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "variable", "value"])
        for (t, name), value in sorted(evidence.observations.items()):
            writer.writerow([t, name, value])
