"""Command-line surface.

Subcommands: ``reverse`` (flip one arc, report work stats), ``integrate``
(DPN evidence integration), ``schedule`` (sampling order + guards),
``simulate`` (seeded likelihood weighting), ``exact`` (enumeration
posterior), ``verify`` (joint-preservation and independence audit).

Every report starts with the tool version and the resolved configuration;
nothing time- or host-dependent is ever written, so identical invocations
produce identical bytes.  Exit codes: 1 usage, 2 parse, 3 validation,
4 size guard, 5 internal assertion.  Failures emit a one-line JSON error
record on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .dpn import Evidence, at_time, integrate_evidence, unroll
from .errors import (AllZeroWeights, CyclicSlice, MismatchedVariables,
                     MissingAssignment, NoSuchArc, NotATree, ParseError,
                     SchemaError, TooLarge, TreebnError, UnsampledRead,
                     ValidationError, WouldCreateCycle,
                     ZeroEvidenceProbability)
from .exact import compare_joints
from .io import (dumps_json, format_float, parse_dpn_file, parse_evidence_file,
                 parse_network_file, write_dpn_file, write_network_file)
from .irrelevance import plan_schedule
from .network import tabular_size, validate
from .reversal import ReversalStats, reverse_arc_tree, verify_csi
from .simulate import estimate, exact_query
from .trees import TabularCpt

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_VALIDATION = 3
EXIT_SIZE = 4
EXIT_INTERNAL = 5


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="treebn", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"treebn {__version__}")
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_common(sp):
        sp.add_argument("--out", help="report file (default: stdout)")
        sp.add_argument("--csv", help="also write a delimited stats table here")

    sp = sub.add_parser("reverse", help="reverse one arc of a static network")
    sp.add_argument("--net", required=True)
    sp.add_argument("--arc", required=True, metavar="FROM:TO")
    sp.add_argument("--write-net", help="write the reversed network here")
    add_common(sp)

    sp = sub.add_parser("integrate", help="reverse in-slice arcs into sensors")
    sp.add_argument("--dpn", required=True)
    sp.add_argument("--write-dpn", help="write the integrated schema here")
    add_common(sp)

    sp = sub.add_parser("schedule", help="sampling order and skip guards")
    sp.add_argument("--dpn", required=True)
    sp.add_argument("--query", required=True, metavar="VAR",
                    help="interest variable(s), comma separated")
    add_common(sp)

    sp = sub.add_parser("simulate", help="seeded likelihood-weighting estimate")
    sp.add_argument("--dpn", required=True)
    sp.add_argument("--evidence")
    sp.add_argument("--horizon", required=True, type=int)
    sp.add_argument("--trials", required=True, type=int)
    sp.add_argument("--seed", required=True, type=int)
    sp.add_argument("--query", required=True, metavar="VAR@T")
    sp.add_argument("--chunk-size", type=int,
                    help="execution partition size; never changes results")
    add_common(sp)

    sp = sub.add_parser("exact", help="posterior by exhaustive enumeration")
    src = sp.add_mutually_exclusive_group(required=True)
    src.add_argument("--net")
    src.add_argument("--dpn")
    sp.add_argument("--evidence")
    sp.add_argument("--horizon", type=int)
    sp.add_argument("--query", required=True, metavar="VAR[@T]")
    add_common(sp)

    sp = sub.add_parser("verify", help="joint preservation + independence audit")
    sp.add_argument("--net", required=True)
    sp.add_argument("--arc", metavar="FROM:TO",
                    help="reverse this arc and compare joints before/after")
    add_common(sp)

    return p


def _config_line(args: argparse.Namespace) -> str:
    cfg = {k: v for k, v in sorted(vars(args).items())
           if k != "func" and v is not None}
    return json.dumps(cfg, sort_keys=True)


def _emit(args, lines: list[str], csv_rows: list[list] | None = None) -> None:
    body = "\n".join(
        [f"tool: treebn {__version__}", f"config: {_config_line(args)}"]
        + lines) + "\n"
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(body)
    else:
        sys.stdout.write(body)
    if args.csv and csv_rows is not None:
        import csv as _csv
        with open(args.csv, "w", newline="") as fh:
            _csv.writer(fh).writerows(csv_rows)


def _parse_arc(spec: str) -> tuple[str, str]:
    if spec.count(":") != 1:
        raise _UsageError(f"--arc wants FROM:TO, got {spec!r}")
    a, o = spec.split(":")
    return a, o


def _parse_query(spec: str, need_time: bool) -> tuple[str, int | None]:
    if "@" in spec:
        name, _, t = spec.rpartition("@")
        try:
            return name, int(t)
        except ValueError:
            raise _UsageError(f"bad query time in {spec!r}") from None
    if need_time:
        raise _UsageError(f"query {spec!r} needs a time: VAR@T")
    return spec, None


def _stats_lines(stats: ReversalStats, prefix: str = "") -> list[str]:
    lines = [
        f"{prefix}eq1_evals: {stats.eq1_evals}",
        f"{prefix}eq2_evals: {stats.eq2_evals}",
        f"{prefix}o_leaves_retained: {stats.o_leaves_retained}",
        f"{prefix}o_leaves: {stats.o_leaves}",
        f"{prefix}a_leaves: {stats.a_leaves}",
    ]
    if stats.unreachable_leaves:
        lines.append(f"{prefix}unreachable_leaves: {stats.unreachable_leaves}")
    return lines


def _cmd_reverse(args) -> int:
    net = parse_network_file(args.net)
    a, o = _parse_arc(args.arc)
    reversed_net, stats = reverse_arc_tree(net, a, o)
    lines = [f"arc: {a} -> {o}"] + _stats_lines(stats)
    lines.append(f"o_tabular_rows: {tabular_size(reversed_net, o)}")
    lines.append(f"a_tabular_rows: {tabular_size(reversed_net, a)}")
    explicit = stats.eq1_evals + stats.eq2_evals
    total_rows = tabular_size(reversed_net, o) + tabular_size(reversed_net, a)
    lines.append(f"explicit_computations: {explicit}")
    lines.append(f"tabular_equivalent_rows: {total_rows}")
    if args.write_net:
        write_network_file(reversed_net, args.write_net)
        lines.append(f"reversed_network: {args.write_net}")
    csv_rows = [["metric", "value"],
                ["eq1_evals", stats.eq1_evals], ["eq2_evals", stats.eq2_evals],
                ["o_leaves_retained", stats.o_leaves_retained],
                ["o_leaves", stats.o_leaves], ["a_leaves", stats.a_leaves]]
    _emit(args, lines, csv_rows)
    return EXIT_OK


def _cmd_integrate(args) -> int:
    schema = parse_dpn_file(args.dpn)
    integrated, stats = integrate_evidence(schema)
    lines = [f"reversals: {len(stats)}"]
    csv_rows = [["arc_from", "arc_to", "eq1_evals", "eq2_evals",
                 "o_leaves", "a_leaves", "o_leaves_retained"]]
    total_leaves = total_explicit = total_rows = 0
    for st in stats:
        a, o = st.arc
        lines.append(f"reversed: {a} -> {o}  o_leaves={st.o_leaves} "
                     f"a_leaves={st.a_leaves} eq1={st.eq1_evals} eq2={st.eq2_evals}")
        csv_rows.append([a, o, st.eq1_evals, st.eq2_evals,
                         st.o_leaves, st.a_leaves, st.o_leaves_retained])
        total_leaves += st.o_leaves + st.a_leaves
        total_explicit += st.eq1_evals + st.eq2_evals
    for name in integrated.slice_names():
        total_rows += tabular_size(integrated.transition, name)
    lines.append(f"total_tree_entries: {total_leaves}")
    lines.append(f"total_explicit_computations: {total_explicit}")
    lines.append(f"total_tabular_rows_after: {total_rows}")
    if args.write_dpn:
        write_dpn_file(integrated, args.write_dpn)
        lines.append(f"integrated_schema: {args.write_dpn}")
    _emit(args, lines, csv_rows)
    return EXIT_OK


def _cmd_schedule(args) -> int:
    schema = parse_dpn_file(args.dpn)
    interest = [q.strip() for q in args.query.split(",") if q.strip()]
    integrated, _stats = integrate_evidence(schema)
    schedule = plan_schedule(integrated, interest)
    lines = [f"interest: {','.join(interest)}",
             f"order: {' '.join(schedule.order())}"]
    csv_rows = [["position", "variable", "skip_when"]]
    for i, (name, guard) in enumerate(schedule.entries):
        lines.append(f"guard {name}: skip when {guard}")
        csv_rows.append([i, name, str(guard)])
    for note in schedule.notes:
        lines.append(f"note: {note}")
    _emit(args, lines, csv_rows)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    schema = parse_dpn_file(args.dpn)
    evidence = (parse_evidence_file(args.evidence) if args.evidence
                else Evidence({}))
    problems = evidence.validate_against(schema)
    if problems:
        raise ValidationError("invalid evidence", problems)
    qname, qtime = _parse_query(args.query, need_time=True)
    integrated, _stats = integrate_evidence(schema)
    schedule = plan_schedule(integrated, [qname])
    est = estimate(integrated, schedule, evidence, (qname, qtime),
                   horizon=args.horizon, trials=args.trials, seed=args.seed,
                   chunk_size=args.chunk_size)
    lines = [
        f"query: {qname}@{qtime}",
        f"trials: {est.trials}",
        f"weight_sum: {format_float(est.weight_sum)}",
        f"ess: {format_float(est.ess)}",
    ]
    for label, p, se in zip(est.values, est.probabilities, est.std_errors):
        lines.append(f"P({qname}={label}): {format_float(p)} "
                     f"(se {format_float(se)})")
    csv_rows = [["variable", "slice", "skip_rate"]]
    for name, rates in est.skip_rates.items():
        if not any(r > 0 for r in rates):
            continue
        for t, r in enumerate(rates, start=1):
            csv_rows.append([name, t, format_float(r)])
        lines.append(f"skip_rate {name}: " +
                     " ".join(format_float(r) for r in rates))
    _emit(args, lines, csv_rows)
    return EXIT_OK


def _cmd_exact(args) -> int:
    if args.dpn:
        if args.horizon is None:
            raise _UsageError("--dpn needs --horizon")
        schema = parse_dpn_file(args.dpn)
        qname, qtime = _parse_query(args.query, need_time=True)
        evidence = (parse_evidence_file(args.evidence) if args.evidence
                    else Evidence({}))
        problems = evidence.validate_against(schema)
        if problems:
            raise ValidationError("invalid evidence", problems)
        net = unroll(schema, args.horizon)
        ctx = evidence.as_context()
        query_name = at_time(qname, qtime)
        label = f"{qname}@{qtime}"
        domain = schema.var(qname).domain
    else:
        net = parse_network_file(args.net)
        qname, _ = _parse_query(args.query, need_time=False)
        ctx = {}
        if args.evidence:
            ev = parse_evidence_file(args.evidence)
            for (t, name), value in ev.observations.items():
                if t != 1:
                    raise ValidationError(
                        f"static network evidence must use time 1, got {t}")
                ctx[name] = value
        query_name = qname
        label = qname
        domain = net.var(qname).domain
    dist = exact_query(net, ctx, query_name)
    lines = [f"query: {label}"]
    csv_rows = [["value", "probability"]]
    for value, p in zip(domain, dist.probs):
        lines.append(f"P({label}={value}): {format_float(p)}")
        csv_rows.append([value, format_float(p)])
    _emit(args, lines, csv_rows)
    return EXIT_OK


def _cmd_verify(args) -> int:
    net = parse_network_file(args.net)
    lines: list[str] = []
    csv_rows = [["check", "result"]]
    problems = validate(net)
    lines.append(f"validation: {'ok' if not problems else 'failed'}")
    for msg in problems:
        lines.append(f"violation: {msg}")
    status = EXIT_OK if not problems else EXIT_VALIDATION
    subject = net
    if args.arc and not problems:
        a, o = _parse_arc(args.arc)
        reversed_net, stats = reverse_arc_tree(net, a, o)
        report = compare_joints(net, reversed_net)
        lines.append(f"joint_max_deviation: {format_float(report.max_abs_deviation)}")
        lines.append(f"joint_preserved: {'yes' if report.ok else 'NO'}")
        csv_rows.append(["joint_max_deviation",
                         format_float(report.max_abs_deviation)])
        lines.extend(_stats_lines(stats, prefix="reversal_"))
        if not report.ok:
            status = EXIT_VALIDATION
        subject = reversed_net
    if not problems:
        for v in subject.variables:
            if isinstance(subject.cpts[v.name], TabularCpt):
                continue
            rep = verify_csi(subject, v.name)
            ok = "ok" if rep.ok else f"{len(rep.violations)} violations"
            lines.append(f"csi {v.name}: {ok} ({rep.branches_checked} branches)")
            csv_rows.append([f"csi_{v.name}", ok])
            if not rep.ok:
                status = EXIT_VALIDATION
    _emit(args, lines, csv_rows)
    return status


_COMMANDS = {
    "reverse": _cmd_reverse,
    "integrate": _cmd_integrate,
    "schedule": _cmd_schedule,
    "simulate": _cmd_simulate,
    "exact": _cmd_exact,
    "verify": _cmd_verify,
}

_VALIDATION_ERRORS = (ValidationError, SchemaError, NoSuchArc, WouldCreateCycle,
                      NotATree, CyclicSlice, MissingAssignment,
                      MismatchedVariables, ZeroEvidenceProbability,
                      AllZeroWeights, KeyError, ValueError)


def _error_record(code: int, exc: BaseException) -> int:
    record = {"error": type(exc).__name__, "message": str(exc), "exit": code}
    sys.stderr.write(json.dumps(record) + "\n")
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as e:
        return _error_record(EXIT_USAGE, e)
    try:
        return _COMMANDS[args.subcommand](args)
    except _UsageError as e:
        return _error_record(EXIT_USAGE, e)
    except ParseError as e:
        return _error_record(EXIT_PARSE, e)
    except _VALIDATION_ERRORS as e:
        return _error_record(EXIT_VALIDATION, e)
    except TooLarge as e:
        return _error_record(EXIT_SIZE, e)
    except (UnsampledRead, TreebnError, AssertionError) as e:
        return _error_record(EXIT_INTERNAL, e)


if __name__ == "__main__":
    sys.exit(main())
