import pytest

from cqekit.model import Atom, ConceptExpr, RoleExpr, const, var
from cqekit.syntax import (
    ParseError, parse_fact_line, parse_policy, parse_query, parse_tbox,
    parse_term, serialize_policy, serialize_query, serialize_tbox,
)
from conftest import fixture_text


def test_term_lexical_convention():
    assert parse_term("x").is_var
    assert parse_term("?ans").is_var
    assert parse_term("_w0").is_var
    assert parse_term("Lucy").is_const
    assert parse_term("150k").is_const
    assert parse_term("'lucy'") == const("lucy")
    assert parse_term('"two words"') == const("two words")


def test_company_policy_parses_to_two_rules():
    policy = parse_policy(fixture_text("ex1.policy"))
    assert len(policy.eds) == 2
    first, second = policy.eds
    assert not first.is_denial
    assert first.body.free_vars == (var("x"), var("y"))
    assert second.is_denial
    assert second.body.free_vars == ()          # fully existential denial body
    assert len(second.body.atoms) == 2


def test_empty_policy():
    assert len(parse_policy("# nothing here\n").eds) == 0


def test_head_variable_missing_from_body_is_an_error():
    with pytest.raises(ParseError, match="does not occur in the body"):
        parse_policy("FORALL x,y: BODY p(x) HEAD q(y)\n")


def test_unlisted_shared_variable_is_an_error():
    with pytest.raises(ParseError, match="not listed in FORALL"):
        parse_policy("FORALL x: BODY r(x,y) HEAD q(y)\n")


def test_head_existentials_allowed_without_forall_entry():
    policy = parse_policy("FORALL x: BODY C(x) HEAD B(y)\n")
    (ed,) = policy.eds
    assert ed.body.free_vars == (var("x"),)
    assert ed.head.free_vars == ()
    assert len(ed.head.all_vars) == 1  # the existential y


def test_rules_standardized_apart():
    policy = parse_policy("BODY p(x) HEAD BOT\nBODY q(x) HEAD BOT\n")
    v1 = next(iter(policy.eds[0].body.all_vars))
    v2 = next(iter(policy.eds[1].body.all_vars))
    assert v1 != v2


def test_tbox_parses_all_axiom_shapes():
    tbox = parse_tbox(
        "EX managerOf ISA manager\n"
        "manager ISA EX respDept\n"
        "A DISJ B\n"
        "r- ISA s\n", {"s": 2})
    kinds = [(type(ax.lhs).__name__, type(ax.rhs).__name__, ax.negative) for ax in tbox]
    assert ("ConceptExpr", "ConceptExpr", False) in kinds
    assert ("ConceptExpr", "ConceptExpr", True) in kinds
    assert ("RoleExpr", "RoleExpr", False) in kinds
    assert tbox.axioms[0].lhs == ConceptExpr("managerOf", exists=True)
    assert tbox.axioms[3].lhs == RoleExpr("r", inverse=True)


def test_tbox_bare_names_default_to_concepts():
    tbox = parse_tbox("A ISA B\n")
    assert not tbox.axioms[0].is_role_axiom


def test_tbox_arity_hints_resolve_roles():
    tbox = parse_tbox("knows ISA likes\n", {"knows": 2, "likes": 2})
    assert tbox.axioms[0].is_role_axiom


def test_tbox_arity_conflict_is_an_error():
    with pytest.raises(ParseError):
        parse_tbox("EX p ISA q\n", {"p": 1})


def test_query_boolean_and_open():
    q = parse_query("Q() :- consRel(x,y)\n")
    assert q.is_boolean and len(q.disjuncts) == 1
    q2 = parse_query("Q(x) :- manager(x) | respDept(x,y)\n")
    assert q2.arity == 1 and len(q2.disjuncts) == 2


def test_query_answer_var_must_occur_in_every_disjunct():
    with pytest.raises(ParseError):
        parse_query("Q(x) :- p(x) | q(y)\n")


def test_fact_line_everything_is_a_constant():
    atom = parse_fact_line("managerOf(lucy,tom).")
    assert atom == Atom("managerOf", (const("lucy"), const("tom")))
    with pytest.raises(ParseError):
        parse_fact_line("oops(")


def test_parse_serialize_roundtrip_on_fixtures():
    for name in ("ex1.policy", "ex3.policy", "pa.policy", "pb.policy"):
        policy = parse_policy(fixture_text(name))
        text = serialize_policy(policy)
        assert serialize_policy(parse_policy(text)) == text
    for name in ("ex1.tbox", "univ.tbox"):
        hints = {"salary": 2, "consRel": 2, "hasMasterDegreeFrom": 2,
                 "hasDegreeFrom": 2, "knows": 2}
        tbox = parse_tbox(fixture_text(name), hints)
        text = serialize_tbox(tbox)
        assert serialize_tbox(parse_tbox(text, hints)) == text
    for name in ("ex1_q1.query", "ex1_q2.query", "univ_q1.query"):
        q = parse_query(fixture_text(name))
        text = serialize_query(q)
        assert serialize_query(parse_query(text)) == text


def test_syntax_error_carries_position():
    with pytest.raises(ParseError) as err:
        parse_policy("BODY p(x HEAD BOT\n")
    assert ":1" in str(err.value)
