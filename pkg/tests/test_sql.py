import random

from cqekit.evaluator import FactSet, eval_fo
from cqekit.model import (
    Atom, CQ, Policy, TBox, UCQ, conj, const, disj, exists, f_atom, f_eq,
    neg, var,
)
from cqekit.randgen import GenParams, random_instance, random_query
from cqekit.rewriter import iga_rewrite
from cqekit.sqlgen import Schema, fo_to_sql, run_sql
from cqekit.syntax import parse_query

x, y = var("x"), var("y")
a, b = const("a"), const("b")


def _schema(facts: FactSet, extra=None) -> Schema:
    sch = Schema.build(facts=facts)
    if extra:
        for pred, arity in extra.items():
            sch.arity.setdefault(pred, arity)
            sch.table.setdefault(pred, pred)
    return sch


def test_single_atom_select_shape():
    facts = FactSet.from_atoms([Atom("A", (a,))])
    sql = fo_to_sql(f_atom(Atom("A", (x,))), _schema(facts), (x,))
    assert sql.startswith("SELECT DISTINCT")
    assert "FROM" in sql and "A" in sql
    assert run_sql(sql, _schema(facts), facts) == frozenset({("a",)})


def test_negation_becomes_not_exists():
    facts = FactSet.from_atoms([Atom("r", (a, b)), Atom("B", (a,))])
    phi = exists((y,), conj([f_atom(Atom("r", (x, y))), neg(f_atom(Atom("B", (x,))))]))
    sql = fo_to_sql(phi, _schema(facts), (x,))
    assert "NOT (EXISTS" in sql or "NOT EXISTS" in sql.replace("NOT (EXISTS", "NOT EXISTS")
    assert run_sql(sql, _schema(facts), facts) == frozenset()
    facts2 = FactSet.from_atoms([Atom("r", (b, a))])
    sch2 = _schema(facts2, {"B": 1})
    sql2 = fo_to_sql(phi, sch2, (x,))
    assert run_sql(sql2, sch2, facts2) == frozenset({("b",)})


def test_union_and_equality_translation():
    facts = FactSet.from_atoms([Atom("A", (a,)), Atom("B", (b,))])
    phi = disj([f_atom(Atom("A", (x,))), f_atom(Atom("B", (x,)))])
    sch = _schema(facts)
    assert run_sql(fo_to_sql(phi, sch, (x,)), sch, facts) == frozenset({("a",), ("b",)})
    guarded = conj([f_atom(Atom("A", (x,))), f_eq(x, a)])
    assert run_sql(fo_to_sql(exists((x,), guarded), sch), sch, facts) is True


def test_boolean_result_shape():
    facts = FactSet.from_atoms([Atom("A", (a,))])
    sch = _schema(facts)
    sql = fo_to_sql(exists((x,), f_atom(Atom("A", (x,)))), sch)
    assert "CASE WHEN" in sql
    assert run_sql(sql, sch, facts) is True


def test_schema_sanitizes_awkward_names():
    used = Schema.build(facts=FactSet.from_atoms(
        [Atom("select", (a,)), Atom("has-rank", (a, b))]))
    assert used.table["select"] != "select"
    assert "-" not in used.table["has-rank"]
    ddl = used.ddl()
    assert "CREATE TABLE" in ddl and "--" in ddl


def test_full_pipeline_sql_equals_memory_on_company(company):
    tbox, policy, facts, q1, q2 = company
    for q in (q1, q2):
        compiled = iga_rewrite(q, tbox, policy)
        sch = Schema.build(tbox, policy, q, facts)
        sql = fo_to_sql(compiled.formula, sch)
        assert run_sql(sql, sch, facts) == eval_fo(compiled.formula, facts)


def test_backend_agreement_on_random_instances():
    rng = random.Random(41)
    params = GenParams()
    agreements = 0
    for _ in range(25):
        inst = random_instance(rng, params)
        q = random_query(rng, params)
        compiled = iga_rewrite(q, inst.tbox, inst.policy)
        frees = q.disjuncts[0].free_vars
        sch = Schema.build(inst.tbox, inst.policy, q, inst.abox)
        sql = fo_to_sql(compiled.formula, sch, frees if frees else None)
        mem = eval_fo(compiled.formula, inst.abox, frees if frees else None)
        via_sql = run_sql(sql, sch, inst.abox)
        assert via_sql == mem
        agreements += 1
    assert agreements == 25
