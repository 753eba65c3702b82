"""Command-line front end.

Subcommands: classify, expand, rewrite, eval, sql, oracle, diff, bench,
selftest.  Exit codes: 0 success, 2 parse error, 3 class-guard failure,
4 inconsistent instance, 5 oracle cap exceeded, 6 rewriter/oracle mismatch.
"""

from __future__ import annotations

import argparse
import random
import sys
import time
from importlib import resources
from pathlib import Path

from .classify import classify
from .errors import GuardError, InconsistentInstanceError, OracleCapError
from .evaluator import CQEInstance, answer, load_abox
from .model import UCQ, format_formula, signature
from .oracle import Oracle
from .randgen import GenParams, random_instance, random_query
from .rewriter import RewriteOptions, iga_rewrite
from .sqlgen import Schema, fo_to_sql
from .syntax import (
    ParseError, parse_policy, parse_query, parse_tbox, serialize_fact,
    serialize_policy, serialize_query, serialize_tbox,
)
from .tgd import policy_expand

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_GUARD = 3
EXIT_INCONSISTENT = 4
EXIT_CAP = 5
EXIT_MISMATCH = 6


def _read(path: str) -> str:
    return Path(path).read_text()


def _load_artifacts(args, need_query: bool = True, need_abox: bool = True):
    """Parse the artifacts named by the common CLI flags; the policy, query
    and ABox supply arity hints for bare names in the TBox."""
    policy = parse_policy(_read(args.policy), source=args.policy)
    query = parse_query(_read(args.query), source=args.query) if need_query and args.query else None
    facts = load_abox(args.abox) if need_abox and getattr(args, "abox", None) else None
    hints = dict(policy.predicates())
    if query is not None:
        for cq in query:
            for a in cq.atoms:
                hints[a.pred] = a.arity
    if facts is not None:
        for pred in facts.relations:
            hints[pred] = facts.arity(pred)
    tbox = parse_tbox(_read(args.tbox), hints, source=args.tbox) if args.tbox else None
    if tbox is None:
        from .model import TBox
        tbox = TBox(())
    if query is not None:
        signature(tbox, policy, query)
    return tbox, policy, query, facts


def _options(args) -> RewriteOptions:
    return RewriteOptions(opt1=not args.no_opt1, opt2=not args.no_opt2,
                          opt3=not args.no_opt3)


def _add_opt_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--no-opt1", action="store_true",
                   help="disable candidate-set pruning by rule-body matching")
    p.add_argument("--no-opt2", action="store_true",
                   help="disable factoring of the shared atom-rewriting part")
    p.add_argument("--no-opt3", action="store_true",
                   help="disable the most-generic-mapping filter")


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def cmd_classify(args) -> int:
    tbox, policy, _, _ = _load_artifacts(args, need_query=False, need_abox=False)
    cls = classify(policy, tbox)
    print(f"rules={len(policy.eds)} full={str(cls.full).lower()} "
          f"linear={str(cls.linear).lower()} binary={str(cls.binary).lower()} "
          f"acyclic={str(cls.acyclic_for_tbox).lower()} "
          f"expandable={str(cls.expandable).lower()}")
    print("summary:", cls.summary())
    if cls.cycle:
        print("cycle:", " -> ".join(cls.cycle))
    return EXIT_OK


def cmd_expand(args) -> int:
    tbox, policy, _, _ = _load_artifacts(args, need_query=False, need_abox=False)
    expanded = policy_expand(tbox, policy, route=args.route)
    text = serialize_policy(expanded)
    if args.output:
        Path(args.output).write_text(text)
        print(f"wrote {len(expanded.eds)} rules to {args.output}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_rewrite(args) -> int:
    tbox, policy, query, _ = _load_artifacts(args, need_abox=False)
    compiled = iga_rewrite(query, tbox, policy, options=_options(args))
    if args.emit == "fo":
        text = format_formula(compiled.formula) + "\n"
    else:
        schema = Schema.build(tbox, policy, query)
        frees = query.disjuncts[0].free_vars
        text = fo_to_sql(compiled.formula, schema, frees if frees else None) + "\n"
    if args.output:
        Path(args.output).write_text(text)
    else:
        sys.stdout.write(text)
    if args.report:
        r = compiled.report
        print(f"report: k={r.k} expanded_rules={r.expanded_rules} "
              f"z_candidates={r.z_sets_total} clash_guards={r.z_sets_used} "
              f"disjuncts={r.disjuncts} formula_nodes={r.formula_nodes}",
              file=sys.stderr)
    return EXIT_OK


def cmd_eval(args) -> int:
    tbox, policy, query, facts = _load_artifacts(args)
    CQEInstance(tbox, policy, facts).validated()
    sql_out = Path(args.sql_out) if args.sql_out else None
    res = answer(query, tbox, policy, facts, backend=args.backend,
                 options=_options(args), sql_out=sql_out)
    for w in res.warnings:
        print("warning:", w, file=sys.stderr)
    if res.boolean is not None:
        print("ENTAILED" if res.boolean else "NOT ENTAILED")
    else:
        for row in sorted(res.tuples):
            print("\t".join(row))
    print(f"count={res.count} t_r={res.t_rewrite_ms:.1f}ms t_e={res.t_eval_ms:.1f}ms",
          file=sys.stderr)
    return EXIT_OK


def cmd_sql(args) -> int:
    tbox, policy, query, facts = _load_artifacts(args, need_abox=False)
    compiled = iga_rewrite(query, tbox, policy, options=_options(args))
    schema = Schema.build(tbox, policy, query, facts)
    frees = query.disjuncts[0].free_vars
    sql = fo_to_sql(compiled.formula, schema, frees if frees else None)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "query.sql").write_text(sql + "\n")
    (out / "schema.sql").write_text(schema.ddl())
    print(f"wrote {out / 'query.sql'} and {out / 'schema.sql'}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    tbox, policy, query, facts = _load_artifacts(args, need_query=False)
    CQEInstance(tbox, policy, facts).validated()
    oracle = Oracle(CQEInstance(tbox, policy, facts), cap=args.cap)
    censors = oracle.censors()
    print(f"closure: {len(oracle.closure_atoms)} facts")
    for i, c in enumerate(censors, start=1):
        print(f"censor {i}: " + ", ".join(str(a) for a in sorted(c)))
    inter = oracle.intersection()
    print("intersection: " + (", ".join(str(a) for a in sorted(inter)) or "(empty)"))
    if args.query:
        q = parse_query(_read(args.query), source=args.query)
        iga = oracle.iga(q)
        skept = oracle.skeptical(q)
        if q.is_boolean:
            print(f"intersection verdict: {'ENTAILED' if iga else 'NOT ENTAILED'}")
            print(f"skeptical verdict:    {'ENTAILED' if skept else 'NOT ENTAILED'}")
        else:
            print("intersection answers:", sorted(iga))
            print("skeptical answers:   ", sorted(skept))
    return EXIT_OK


def _dump_instance(inst: CQEInstance, q: UCQ, directory: Path) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    (directory / "instance.tbox").write_text(serialize_tbox(inst.tbox))
    (directory / "instance.policy").write_text(serialize_policy(inst.policy))
    (directory / "instance.facts").write_text(
        "".join(serialize_fact(a) + "\n" for a in inst.abox.atoms()))
    (directory / "instance.query").write_text(serialize_query(q))


def cmd_diff(args) -> int:
    rng = random.Random(args.seed)
    params = GenParams(policy_mode=args.mode, closure_cap=args.cap)
    deadline = time.monotonic() + args.timeout_ms / 1000.0 if args.timeout_ms else None
    mismatches = 0
    checked = 0
    for i in range(args.count):
        if deadline and time.monotonic() > deadline:
            print(f"stopping early at instance {i}: time budget reached", file=sys.stderr)
            break
        inst = random_instance(rng, params)
        q = random_query(rng, params)
        try:
            expected = Oracle(inst, cap=args.cap).iga(q)
        except OracleCapError:
            continue
        checked += 1
        res = answer(q, inst.tbox, inst.policy, inst.abox)
        got = res.boolean if res.boolean is not None else res.tuples
        if got != expected:
            mismatches += 1
            print(f"mismatch at instance {i} (seed {args.seed}, {params.describe()}):")
            print(f"  oracle:   {expected}")
            print(f"  rewriter: {got}")
            if args.dump_dir:
                d = Path(args.dump_dir) / f"mismatch_{i}"
                _dump_instance(inst, q, d)
                print(f"  dumped to {d}")
    print(f"{checked} instances compared, {mismatches} mismatches")
    return EXIT_MISMATCH if mismatches else EXIT_OK


def cmd_bench(args) -> int:
    from .report import write_bench_csv, write_bench_figure

    rows = []
    for policy_path in args.policy:
        for query_path in args.query:
            ns = argparse.Namespace(tbox=args.tbox, policy=policy_path,
                                    query=query_path, abox=args.abox)
            tbox, policy, query, facts = _load_artifacts(ns)
            res = answer(query, tbox, policy, facts, options=_options(args))
            rows.append({
                "query": Path(query_path).stem,
                "policy": Path(policy_path).stem,
                "t_r": f"{res.t_rewrite_ms:.2f}",
                "t_e": f"{res.t_eval_ms:.2f}",
                "count": res.count,
            })
            print(f"{Path(query_path).stem} [{Path(policy_path).stem}]: "
                  f"t_r={res.t_rewrite_ms:.1f}ms t_e={res.t_eval_ms:.1f}ms count={res.count}")
    out = Path(args.out)
    csv_path = write_bench_csv(rows, out)
    print(f"wrote {csv_path}")
    if not args.no_figure:
        fig_path = write_bench_figure(rows, out)
        print(f"wrote {fig_path}")
    return EXIT_OK


def _fixture(name: str) -> str:
    return resources.files("cqekit.fixtures").joinpath(name).read_text()


def cmd_selftest(args) -> int:
    """Run the bundled reference scenarios end to end."""
    failures = []

    def check(label: str, ok: bool) -> None:
        print(f"{'PASS' if ok else 'FAIL'}  {label}")
        if not ok:
            failures.append(label)

    from .evaluator import load_abox_text

    # Company scenario: two censors, one protected query, one answerable query.
    policy = parse_policy(_fixture("ex1.policy"))
    tbox = parse_tbox(_fixture("ex1.tbox"), policy.predicates() | {"salary": 2, "consRel": 2})
    facts = load_abox_text(_fixture("ex1.facts"))
    inst = CQEInstance(tbox, policy, facts).validated()
    oracle = Oracle(inst)
    censors = {frozenset(str(a) for a in c) for c in oracle.censors()}
    expected = {
        frozenset({"managerOf(lucy,tom)", "manager(lucy)", "salary(lucy,150k)"}),
        frozenset({"consRel(lucy,tom)", "manager(lucy)", "salary(lucy,150k)"}),
    }
    check("company scenario: exactly the two expected censors", censors == expected)
    q1 = parse_query(_fixture("ex1_q1.query"))
    q2 = parse_query(_fixture("ex1_q2.query"))
    check("company scenario: relationship query refused",
          answer(q1, tbox, policy, facts).boolean is False)
    check("company scenario: manager-salary query answered",
          answer(q2, tbox, policy, facts).boolean is True)

    # Unsafe-intersection scenario: the intersection is not itself compliant.
    policy3 = parse_policy(_fixture("ex3.policy"))
    tbox3 = parse_tbox(_fixture("ex3.tbox"), policy3.predicates())
    facts3 = load_abox_text(_fixture("ex3.facts"))
    oracle3 = Oracle(CQEInstance(tbox3, policy3, facts3))
    inter = {str(a) for a in oracle3.intersection()}
    check("unsafe intersection: intersection is {C(0)}", inter == {"C(0)"})
    from .oracle import eql_satisfies
    check("unsafe intersection: intersection violates the policy",
          not eql_satisfies(tbox3, oracle3.intersection(), policy3))
    try:
        iga_rewrite(parse_query(_fixture("ex3.query")), tbox3, policy3)
        check("unsafe intersection: rewriter guard rejects the policy", False)
    except GuardError:
        check("unsafe intersection: rewriter guard rejects the policy", True)

    # Bundled university policies classify as documented.
    pa = parse_policy(_fixture("pa.policy"))
    pb = parse_policy(_fixture("pb.policy"))
    hints = dict(pa.predicates())
    hints.update(pb.predicates())
    univ = parse_tbox(_fixture("univ.tbox"), hints)
    ca = classify(pa, univ)
    cb = classify(pb, univ)
    check("university policy A: 6 rules, full and acyclic",
          len(pa.eds) == 6 and ca.full and ca.acyclic_for_tbox and ca.expandable)
    check("university policy B: 11 rules, full, linear and binary",
          len(pb.eds) == 11 and cb.full and cb.linear and cb.binary)

    print(f"{len(failures)} failure(s)")
    return EXIT_OK if not failures else 1


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cqe",
        description="Policy-aware query answering over DL-Lite ontologies")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tbox=True, policy=True, query=False, abox=False):
        if tbox:
            p.add_argument("--tbox", required=False, help="TBox file")
        if policy:
            p.add_argument("--policy", required=True, help="policy file")
        if query:
            p.add_argument("--query", required=True, help="query file")
        if abox:
            p.add_argument("--abox", required=True, help="ABox file or CSV directory")

    p = sub.add_parser("classify", help="report the policy's class flags")
    common(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("expand", help="close the policy bodies under the rewriting rules")
    common(p)
    p.add_argument("--route", choices=["generic", "dllite"], default="generic")
    p.add_argument("-o", "--output", help="write the expanded policy here")
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("rewrite", help="compile a query into a formula or SQL")
    common(p, query=True)
    _add_opt_flags(p)
    p.add_argument("--emit", choices=["fo", "sql"], default="fo")
    p.add_argument("--report", action="store_true", help="print compilation statistics")
    p.add_argument("-o", "--output", help="write the rewriting here")
    p.set_defaults(func=cmd_rewrite)

    p = sub.add_parser("eval", help="answer a query over an ABox")
    common(p, query=True, abox=True)
    _add_opt_flags(p)
    p.add_argument("--backend", choices=["memory", "sql-emit"], default="memory")
    p.add_argument("--sql-out", help="directory for emitted SQL when using sql-emit")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sql", help="emit SQL text and schema DDL")
    common(p, query=True)
    _add_opt_flags(p)
    p.add_argument("--abox", help="optional ABox used to complete the schema")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_sql)

    p = sub.add_parser("oracle", help="brute-force censors, intersection and verdicts")
    common(p, abox=True)
    p.add_argument("--query", help="optional query file")
    p.add_argument("--cap", type=int, default=16, help="closure size cap")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("diff", help="differential test: rewriter vs oracle on random instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--count", type=int, default=100)
    p.add_argument("--cap", type=int, default=12)
    p.add_argument("--mode", default="full-expandable",
                   choices=["full", "linear", "full-expandable", "binary-full"])
    p.add_argument("--timeout-ms", type=int, default=0, help="soft time budget")
    p.add_argument("--dump-dir", help="write mismatching instances here")
    p.set_defaults(func=cmd_diff)

    p = sub.add_parser("bench", help="answer queries and report timings (CSV + figure)")
    p.add_argument("--tbox", required=True)
    p.add_argument("--abox", required=True)
    p.add_argument("--policy", nargs="+", required=True)
    p.add_argument("--query", nargs="+", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--no-figure", action="store_true")
    _add_opt_flags(p)
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("selftest", help="run the bundled reference scenarios")
    p.set_defaults(func=cmd_selftest)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except GuardError as exc:
        print(f"policy class guard: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except InconsistentInstanceError as exc:
        print(f"inconsistent instance: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except OracleCapError as exc:
        print(f"oracle cap: {exc}", file=sys.stderr)
        return EXIT_CAP
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
