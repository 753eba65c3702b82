"""Seedable random instances for the differential test harness.

Draws small TBoxes, policies of a requested class, consistent ABoxes, and
queries.  Rejection sampling enforces the class flags, consistency, and
the oracle's closure cap, so every emitted instance is usable by both the
rewriter and the brute-force oracle.  All artifacts serialize through the
standard text formats, which makes failures reproducible from dumps.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .classify import classify
from .dllite import check_consistency
from .errors import GuardError
from .evaluator import CQEInstance, FactSet
from .model import (
    CQ, UCQ, Atom, Axiom, BOTTOM, ConceptExpr, Dependency, Policy, RoleExpr,
    TBox, Term, const, var,
)
from .oracle import ground_closure


@dataclass
class GenParams:
    """Knobs for the generator; printed alongside failures."""

    n_unary: int = 3
    n_binary: int = 2
    n_constants: int = 4
    n_tbox: int = 3
    n_eds: int = 3
    n_facts: int = 5
    max_body_atoms: int = 2
    closure_cap: int = 12
    negative_axiom_prob: float = 0.15
    denial_prob: float = 0.3
    policy_mode: str = "full-expandable"  # full | linear | full-expandable | binary-full
    query_disjuncts: int = 2
    query_atoms: int = 3
    max_answer_vars: int = 2

    def describe(self) -> str:
        return (f"mode={self.policy_mode} unary={self.n_unary} binary={self.n_binary} "
                f"consts={self.n_constants} tbox={self.n_tbox} eds={self.n_eds} "
                f"facts={self.n_facts} cap={self.closure_cap}")


def _preds(params: GenParams) -> tuple[list[str], list[str]]:
    unary = [f"P{i}" for i in range(params.n_unary)]
    binary = [f"r{i}" for i in range(params.n_binary)]
    return unary, binary


def _consts(params: GenParams) -> list[Term]:
    return [const(f"c{i}") for i in range(params.n_constants)]


def _random_basic_concept(rng: random.Random, unary, binary) -> ConceptExpr:
    if binary and rng.random() < 0.4:
        return ConceptExpr(rng.choice(binary), True, rng.random() < 0.5)
    return ConceptExpr(rng.choice(unary))


def random_tbox(rng: random.Random, params: GenParams) -> TBox:
    unary, binary = _preds(params)
    axioms: dict[Axiom, None] = {}
    while len(axioms) < params.n_tbox:
        if binary and rng.random() < 0.3:
            lhs = RoleExpr(rng.choice(binary), rng.random() < 0.3)
            rhs = RoleExpr(rng.choice(binary), rng.random() < 0.3)
            if lhs.name == rhs.name:
                continue
            negative = rng.random() < params.negative_axiom_prob
            axioms.setdefault(Axiom(lhs, rhs, negative))
        else:
            lhs = _random_basic_concept(rng, unary, binary)
            rhs = _random_basic_concept(rng, unary, binary)
            if lhs == rhs:
                continue
            negative = rng.random() < params.negative_axiom_prob
            if negative and (lhs.exists or rhs.exists) and rng.random() < 0.5:
                continue
            axioms.setdefault(Axiom(lhs, rhs, negative))
    return TBox(tuple(axioms))


def _random_atom(rng: random.Random, unary, binary, pool: list[Term]) -> Atom:
    if binary and rng.random() < 0.55:
        return Atom(rng.choice(binary), (rng.choice(pool), rng.choice(pool)))
    return Atom(rng.choice(unary), (rng.choice(pool),))


def _random_ed(rng: random.Random, params: GenParams, idx: int) -> Dependency:
    unary, binary = _preds(params)
    vs = [var(f"x{idx}_{j}") for j in range(4)]
    consts = _consts(params)
    linearish = params.policy_mode in ("linear", "binary-full")

    if params.policy_mode == "binary-full":
        if rng.random() < params.denial_prob:
            body = CQ((), (_random_atom(rng, unary, binary, vs[:2]),))
            return Dependency(body, BOTTOM)
        x, y = vs[0], vs[1]
        if binary and rng.random() < 0.4:
            b = Atom(rng.choice(binary), (x, y) if rng.random() < 0.5 else (y, x))
            h = Atom(rng.choice(binary), (x, y) if rng.random() < 0.5 else (y, x))
            return Dependency(CQ((x, y), (b,)), CQ((x, y), (h,)))

        def side(existential: Term) -> Atom:
            if binary and rng.random() < 0.5:
                pair = (x, existential) if rng.random() < 0.5 else (existential, x)
                return Atom(rng.choice(binary), pair)
            return Atom(rng.choice(unary), (x,))

        b = side(vs[2])
        h = side(vs[3])
        return Dependency(CQ((x,), (b,)), CQ((x,) if x in h.vars else (), (h,)))

    n_body = 1 if linearish else rng.randint(1, params.max_body_atoms)
    pool = vs[:3] + ([rng.choice(consts)] if rng.random() < 0.25 else [])
    body_atoms = tuple(_random_atom(rng, unary, binary, pool) for _ in range(n_body))
    body_vars = [t for a in body_atoms for t in a.vars]
    if not body_vars:
        return Dependency(CQ((), body_atoms), BOTTOM)
    seen = list(dict.fromkeys(body_vars))
    universals = tuple(t for t in seen if rng.random() < 0.7) or (seen[0],)

    if rng.random() < params.denial_prob:
        return Dependency(CQ(universals if rng.random() < 0.5 else (), body_atoms), BOTTOM)

    head_pool: list[Term] = list(universals)
    if params.policy_mode == "linear" and rng.random() < 0.4:
        head_pool.append(var(f"y{idx}"))  # existential head variable (non-full)
    if rng.random() < 0.2:
        head_pool.append(rng.choice(consts))
    head_atom = _random_atom(rng, unary, binary, head_pool)
    head_frees = tuple(t for t in universals if t in head_atom.vars)
    body = CQ(universals, body_atoms)
    return Dependency(body, CQ(head_frees, (head_atom,)))


def random_policy(rng: random.Random, params: GenParams) -> Policy:
    return Policy(tuple(_random_ed(rng, params, i) for i in range(params.n_eds)))


def random_abox(rng: random.Random, params: GenParams) -> FactSet:
    unary, binary = _preds(params)
    consts = _consts(params)
    atoms = {_random_atom(rng, unary, binary, consts) for _ in range(params.n_facts)}
    return FactSet.from_atoms(atoms)


def random_query(rng: random.Random, params: GenParams) -> UCQ:
    unary, binary = _preds(params)
    n_free = rng.randint(0, params.max_answer_vars)
    frees = tuple(var(f"q{i}") for i in range(n_free))
    extra = [var("e0"), var("e1")]
    consts = _consts(params)
    disjuncts = []
    for _ in range(rng.randint(1, params.query_disjuncts)):
        pool = list(frees) + extra + ([rng.choice(consts)] if rng.random() < 0.3 else [])
        while True:
            atoms = [_random_atom(rng, unary, binary, pool)
                     for _ in range(rng.randint(1, params.query_atoms))]
            have = {t for a in atoms for t in a.vars}
            if set(frees) <= have:
                break
            # Force missing answer variables into an extra atom.
            missing = [t for t in frees if t not in have]
            atoms.append(Atom(rng.choice(binary) if len(missing) > 1 and binary
                              else rng.choice(unary),
                              tuple(missing[:2]) if len(missing) > 1 and binary
                              else (missing[0],)))
            have = {t for a in atoms for t in a.vars}
            if set(frees) <= have:
                break
        disjuncts.append(CQ(frees, tuple(dict.fromkeys(atoms))))
    return UCQ(tuple(disjuncts))


def random_instance(rng: random.Random, params: GenParams,
                    max_tries: int = 200) -> CQEInstance:
    """A consistent instance whose policy matches the requested mode and
    whose ground closure respects the oracle cap."""
    for _ in range(max_tries):
        tbox = random_tbox(rng, params)
        policy = random_policy(rng, params)
        cls = classify(policy, tbox)
        if params.policy_mode == "full" and not cls.full:
            continue
        if params.policy_mode == "linear" and not cls.linear:
            continue
        if params.policy_mode == "full-expandable" and not (cls.full and cls.expandable):
            continue
        if params.policy_mode == "binary-full" and not (cls.full and cls.binary):
            continue
        abox = random_abox(rng, params)
        if not check_consistency(tbox, abox).consistent:
            continue
        instance = CQEInstance(tbox, policy, abox)
        try:
            if len(ground_closure(tbox, abox)) > params.closure_cap:
                continue
        except Exception:
            continue
        return instance
    raise GuardError(f"could not draw an instance after {max_tries} tries "
                     f"({params.describe()})")
