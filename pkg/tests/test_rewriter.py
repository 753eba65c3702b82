import random

import pytest

from cqekit.errors import GuardError
from cqekit.evaluator import CQEInstance, FactSet, eval_fo
from cqekit.model import (
    Atom, CQ, FreshVars, Policy, TBox, UCQ, const, format_formula,
    subst_formula, var,
)
from cqekit.oracle import Oracle, cq_entails, ground_closure
from cqekit.randgen import GenParams, random_instance, random_query
from cqekit.rewriter import (
    RewriteOptions, atoms_template, clash, iga_rewrite, is_discl, map_substs,
)
from cqekit.syntax import parse_policy, parse_query, parse_tbox
from cqekit.tgd import policy_expand

x, y = var("x"), var("y")


def test_atoms_template_counts():
    t = atoms_template({"manager": 1, "salary": 2}, 2)
    assert len(t.atoms) == 4
    assert len({v for a in t.atoms for v in a.vars}) == 6  # all fresh, disjoint
    t1 = atoms_template({"A": 1}, 1)
    assert len(t1.atoms) == 1
    assert atoms_template({}, 3).atoms == ()


def test_map_substs_reference_example():
    # Z = {R(x,y), R(z,w)}, q(v,u) = exists t. R(v,1) and R(u,t)
    zx, zy, zz, zw = var("zx"), var("zy"), var("zz"), var("zw")
    zatoms = (Atom("R", (zx, zy)), Atom("R", (zz, zw)))
    v, u, t = var("v"), var("u"), var("t")
    q = CQ((v, u), (Atom("R", (v, const("1"))), Atom("R", (u, t))))
    mus = map_substs(q, zatoms, most_generic_only=False)
    as_sets = [frozenset((k.name, str(val)) for k, val in mu.items()) for mu in mus]
    assert frozenset({("v", "zx"), ("zy", "1"), ("u", "zz")}) in as_sets
    assert frozenset({("v", "zz"), ("zw", "1"), ("u", "zx")}) in as_sets


def test_map_substs_most_generic_filter():
    # A mapping that only adds a gratuitous merge of candidate-set variables
    # on top of another mapping is an instance of it and gets dropped.
    z1, z3 = var("z1"), var("z3")
    v = var("v")
    zatoms = (Atom("A", (z1,)), Atom("A", (z3,)))
    q = CQ((v,), (Atom("A", (v,)), Atom("A", (v,))))
    unfiltered = map_substs(q, zatoms, most_generic_only=False)
    filtered = map_substs(q, zatoms, most_generic_only=True)
    assert {frozenset((k.name, t.name) for k, t in mu.items()) for mu in filtered} == {
        frozenset({("v", "z1")}), frozenset({("v", "z3")})}
    assert len(unfiltered) > len(filtered)


def test_map_substs_no_matching_predicate():
    q = CQ((x,), (Atom("p", (x,)),))
    assert map_substs(q, (Atom("q", (var("z1"),)),)) == []


def test_map_substs_single_unifier():
    z1 = var("z1")
    q = CQ((var("v"),), (Atom("A", (var("v"),)),))
    (mu,) = map_substs(q, (Atom("A", (z1,)),))
    assert mu == {var("v"): z1}


def test_is_discl_empty_set_is_true(company):
    tbox, policy, _, _, _ = company
    pexp = policy_expand(tbox, policy).eds
    phi = is_discl((), tbox, policy, pexp)
    assert format_formula(phi) == "true"


def test_is_discl_unmatched_set_is_atom_rewriting_only(company):
    tbox, policy, _, _, _ = company
    pexp = policy_expand(tbox, policy).eds
    z = (Atom("managerOf", (var("_z0"), var("_z1"))),)
    phi = is_discl(z, tbox, policy, pexp)
    assert format_formula(phi) == "managerOf(_z0,_z1)"


def test_is_discl_denial_match_emits_negated_equalities(company):
    tbox, policy, _, facts, _ = company
    pexp = policy_expand(tbox, policy).eds
    z = (Atom("managerOf", (var("_z0"), var("_z1"))),
         Atom("consRel", (var("_z2"), var("_z3"))))
    phi = is_discl(z, tbox, policy, pexp)
    text = format_formula(phi)
    assert "~(" in text and "_z2" in text and "_z3" in text


def test_is_discl_agrees_with_disclosability_on_company(company):
    tbox, policy, facts, _, _ = company
    oracle = Oracle(CQEInstance(tbox, policy, facts))
    pexp = policy_expand(tbox, policy).eds
    z = (Atom("managerOf", (var("_z0"), var("_z1"))),)
    phi = is_discl(z, tbox, policy, pexp)
    lucy, tom = const("lucy"), const("tom")
    sigma_true = {var("_z0"): lucy, var("_z1"): tom}
    assert eval_fo(subst_formula(phi, sigma_true), facts) is True
    assert oracle.disclosable({Atom("managerOf", (lucy, tom))})
    sigma_false = {var("_z0"): tom, var("_z1"): lucy}
    assert eval_fo(subst_formula(phi, sigma_false), facts) is False


def test_clash_reference_scenario(company):
    # With the managed-pair candidate set, the relationship query clashes
    # under the instantiation that maps everything to the known pair.
    tbox, policy, facts, q1, _ = company
    pexp = policy_expand(tbox, policy).eds
    z = (Atom("managerOf", (var("_z0"), var("_z1"))),)
    gamma = (Atom("consRel", (var("qx"), var("qy"))),)
    phi = clash(z, gamma, tbox, policy, pexp)
    assert set(phi.fv) == {var("qx"), var("qy")}
    sigma = {var("qx"): const("lucy"), var("qy"): const("tom")}
    assert eval_fo(subst_formula(phi, sigma), facts) is True


def test_clash_empty_candidate_set_reduces_to_negated_disclosability(company):
    tbox, policy, facts, _, _ = company
    pexp = policy_expand(tbox, policy).eds
    gamma = (Atom("salary", (var("qx"), var("qy"))),)
    opts = RewriteOptions(opt2=False)
    phi = clash((), gamma, tbox, policy, pexp, opts)
    inner = is_discl(gamma, tbox, policy, pexp, opts)
    sigma = {var("qx"): const("tom"), var("qy"): const("75k")}
    assert eval_fo(subst_formula(phi, sigma), facts) is (
        not eval_fo(subst_formula(inner, sigma), facts))


def test_clash_false_for_unprotected_ground_match(company):
    tbox, policy, facts, _, _ = company
    pexp = policy_expand(tbox, policy).eds
    gamma = (Atom("managerOf", (var("qx"), var("qy"))),)
    phi = clash((), gamma, tbox, policy, pexp)
    sigma = {var("qx"): const("lucy"), var("qy"): const("tom")}
    assert eval_fo(subst_formula(phi, sigma), facts) is False


def test_iga_rewrite_company_verdicts(company):
    tbox, policy, facts, q1, q2 = company
    c1 = iga_rewrite(q1, tbox, policy)
    c2 = iga_rewrite(q2, tbox, policy)
    assert eval_fo(c1.formula, facts) is False
    assert eval_fo(c2.formula, facts) is True
    assert c1.report.k == 2


def test_iga_rewrite_k1_policy_only_uses_empty_set():
    policy = parse_policy("FORALL x: BODY A(x) HEAD B(x)\n")
    q = parse_query("Q() :- A(x)\n")
    compiled = iga_rewrite(q, TBox(()), policy)
    assert compiled.report.k == 1
    assert compiled.report.z_sets_total == 1  # just the empty candidate set
    facts = FactSet.from_atoms([Atom("A", (const("a"),)), Atom("B", (const("a"),))])
    assert eval_fo(compiled.formula, facts) is True
    facts2 = FactSet.from_atoms([Atom("A", (const("a"),))])
    assert eval_fo(compiled.formula, facts2) is False  # A(a) alone is not disclosable


def test_iga_rewrite_guards(unsafe_intersection):
    tbox, policy, _ = unsafe_intersection
    q = parse_query("Q() :- B(v)\n")
    with pytest.raises(GuardError, match="full"):
        iga_rewrite(q, tbox, policy)
    cyclic = parse_policy("FORALL x,y: BODY r(x,y), s(x,y) HEAD r(y,x)\n")
    with pytest.raises(GuardError, match="cycle"):
        iga_rewrite(parse_query("Q() :- r(u,v)\n"), TBox(()), cyclic)


def test_iga_rewrite_deterministic_output(company):
    tbox, policy, _, _, q2 = company
    first = format_formula(iga_rewrite(q2, tbox, policy).formula)
    second = format_formula(iga_rewrite(q2, tbox, policy).formula)
    assert first == second


def test_monotone_safety_entailed_implies_certain():
    # Whatever the rewriting says is entailed must hold from the closure
    # (censors only ever remove facts).
    rng = random.Random(31)
    params = GenParams()
    for _ in range(30):
        inst = random_instance(rng, params)
        q = random_query(rng, params)
        if not q.is_boolean:
            continue
        compiled = iga_rewrite(q, inst.tbox, inst.policy)
        if eval_fo(compiled.formula, inst.abox):
            assert any(cq_entails(inst.tbox, inst.abox, cq) for cq in q)


def test_invented_values_do_not_fire_rule_universals():
    # Regression: r0 subjects gain an invented incoming r1-edge through the
    # TBox, and the rule propagates r1-facts along their object position.
    # The rule only fires on ground pairs, so the invented edge must not
    # force r1(c0,c0); {r0(c0,c0)} stays disclosable and the query holds.
    tbox = parse_tbox("EX r1 ISA P0\nEX r0 ISA EX r1-\nP2 ISA EX r0-\n",
                      {"r0": 2, "r1": 2})
    policy = parse_policy(
        "FORALL x0,x1: BODY r1(x0,x1) HEAD r1(x1,x1)\n"
        "FORALL u: BODY P2(u) HEAD BOT\n")
    facts = FactSet.from_atoms([
        Atom("P0", (const("c1"),)),
        Atom("r0", (const("c0"), const("c0"))),
        Atom("r0", (const("c2"), const("c0"))),
        Atom("r1", (const("c2"), const("c0"))),
    ])
    q = parse_query("Q() :- r0(e,e)\n")
    inst = CQEInstance(tbox, policy, facts)
    assert Oracle(inst).iga(q) is True
    compiled = iga_rewrite(q, tbox, policy)
    assert eval_fo(compiled.formula, facts) is True
    # The expanded policy must not contain a rule firing on bare r0-facts.
    for ed in policy_expand(tbox, policy).eds:
        body_preds = {a.pred for a in ed.body.atoms}
        assert body_preds != {"r0"}


def test_invented_values_blocked_on_both_expansion_routes():
    # Same phenomenon for a restricted-shape policy: an invented r-successor
    # must not trigger the role-propagation rule, whichever engine expands.
    tbox = parse_tbox("A ISA EX r\n", {"r": 2, "s": 2})
    policy = parse_policy(
        "FORALL x,y: BODY r(x,y) HEAD s(x,y)\n"
        "FORALL u: BODY s(u,w) HEAD C(u)\n")
    facts = FactSet.from_atoms([Atom("A", (const("a"),))])
    q = parse_query("Q() :- A(v)\n")
    inst = CQEInstance(tbox, policy, facts)
    expected = Oracle(inst).iga(q)
    assert expected is True   # A(a) alone satisfies the policy vacuously
    for route in ("generic", "dllite"):
        compiled = iga_rewrite(q, tbox, policy, expansion_route=route)
        assert eval_fo(compiled.formula, facts) is True, route


def test_optimization_toggles_never_change_verdicts():
    rng = random.Random(32)
    params = GenParams()
    configs = [RewriteOptions(),
               RewriteOptions(opt1=False),
               RewriteOptions(opt2=False),
               RewriteOptions(opt3=False),
               RewriteOptions(opt1=False, opt2=False, opt3=False)]
    for _ in range(12):
        inst = random_instance(rng, params)
        q = random_query(rng, params)
        frees = q.disjuncts[0].free_vars
        results = []
        for opts in configs:
            compiled = iga_rewrite(q, inst.tbox, inst.policy, options=opts)
            results.append(eval_fo(compiled.formula, inst.abox,
                                   frees if frees else None))
        assert len(set(map(repr, results))) == 1
