"""DL-Lite reasoning kernel.

Query rewriting w.r.t. a TBox (backward application of positive inclusions
to single atoms plus a unification step merging atom pairs, iterated to
fixpoint), per-atom formula rewriting, ground closure, consistency
checking, translation of axioms to rules, and the axiom translation of
binary disclosure rules.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional

from .classify import binary_shape as _binary_shape
from .errors import GuardError
from .model import (
    CQ, FALSE, UCQ, Atom, Axiom, ConceptExpr, Dependency, Formula, FreshVars,
    Policy, RoleExpr, Subst, TBox, Term, canonicalize, concept_atom, conj,
    disj, exists, f_atom, f_eq, ground_marked_vars, implies, neg,
    prune_subsumed, role_atom, subst_atom, subst_cq, var,
)
from .model import FAnd, FAtom, FEq, FExists, FFalse, FImplies, FNot, FOr, FTrue


@dataclass(frozen=True)
class TGD:
    """A rule `body -> head` between CQs.

    All body variables are universally quantified (the body's answer tuple
    lists them); the head's free variables are the frontier and must occur
    in the body, while its remaining variables are existential.
    """

    body: CQ
    head: CQ

    def __post_init__(self) -> None:
        if not set(self.head.free_vars) <= set(self.body.free_vars):
            raise ValueError("head frontier must occur in the rule body")

    def __str__(self) -> str:
        return f"{self.body} -> {self.head}"


def _all_vars_cq(atoms: tuple[Atom, ...]) -> tuple[Term, ...]:
    seen: dict[Term, None] = {}
    for a in atoms:
        for t in a.vars:
            seen.setdefault(t)
    return tuple(seen)


def ed_to_tgd(ed: Dependency) -> TGD:
    """Strip the modal reading of a non-denial rule into a plain rule.

    The body keeps its universal-variable tuple; its remaining variables
    stay existential, which rewriting relies on: universal positions must
    be witnessed by ground facts, existential positions may be witnessed by
    invented values.
    """
    if ed.is_denial:
        raise ValueError("denials have no rule form")
    return TGD(ed.body, ed.head)


def tbox_to_tgds(tbox: TBox) -> list[TGD]:
    """The rules naturally corresponding to the positive inclusions."""
    x, y, z = var("x"), var("y"), var("z")
    out = []
    for ax in tbox.positive:
        if ax.is_role_axiom:
            body_atom = role_atom(ax.lhs, x, y)
            head_atom = role_atom(ax.rhs, x, y)
            out.append(TGD(CQ((x, y), (body_atom,)), CQ((x, y), (head_atom,))))
        else:
            lhs, rhs = ax.lhs, ax.rhs
            body_atom = concept_atom(lhs, x, y if lhs.exists else None)
            body_vars = (x, y) if lhs.exists else (x,)
            if rhs.exists:
                head_atom = concept_atom(rhs, x, z)
                head = CQ((x,), (head_atom,))
            else:
                head = CQ((x,), (concept_atom(rhs, x),))
            out.append(TGD(CQ(body_vars, (body_atom,)), head))
    return out


# --------------------------------------------------------------------------
# TBox saturation: all entailed basic inclusions
# --------------------------------------------------------------------------

def saturate(tbox: TBox) -> tuple[set[tuple[ConceptExpr, ConceptExpr]],
                                  set[tuple[RoleExpr, RoleExpr]]]:
    """Transitive closure of the positive inclusions over basic concepts and
    roles, including the existential concepts induced by role inclusions."""
    c_edges: set[tuple[ConceptExpr, ConceptExpr]] = set()
    r_edges: set[tuple[RoleExpr, RoleExpr]] = set()
    for ax in tbox.positive:
        if ax.is_role_axiom:
            r, s = ax.lhs, ax.rhs
            r_edges.add((r, s))
            r_edges.add((r.inv(), s.inv()))
            c_edges.add((ConceptExpr(r.name, True, r.inverse),
                         ConceptExpr(s.name, True, s.inverse)))
            c_edges.add((ConceptExpr(r.name, True, not r.inverse),
                         ConceptExpr(s.name, True, not s.inverse)))
        else:
            c_edges.add((ax.lhs, ax.rhs))

    def close(edges):
        closed = set(edges)
        changed = True
        while changed:
            changed = False
            for (a, b), (c, d) in itertools.product(tuple(closed), tuple(closed)):
                if b == c and (a, d) not in closed:
                    closed.add((a, d))
                    changed = True
        return closed

    return close(c_edges), close(r_edges)


def closure(tbox: TBox, facts: "FactSet") -> "FactSet":
    """All ground atoms entailed by the TBox and the facts.

    Least fixpoint of the ground-producing entailed inclusions; inclusions
    with an existential right-hand side add no ground atom.
    """
    from .evaluator import FactSet

    c_pairs, r_pairs = saturate(tbox)
    atoms = set(facts.atoms())
    changed = True
    while changed:
        changed = False
        new: set[Atom] = set()
        for a in atoms:
            if a.arity == 1:
                holders = [(ConceptExpr(a.pred), a.args[0])]
            else:
                holders = [(ConceptExpr(a.pred, True), a.args[0]),
                           (ConceptExpr(a.pred, True, True), a.args[1])]
                for r1, r2 in r_pairs:
                    if r1.name == a.pred:
                        src = (a.args[1], a.args[0]) if r1.inverse else (a.args[0], a.args[1])
                        new.add(role_atom(r2, *src))
            for b1, t in holders:
                for c1, c2 in c_pairs:
                    if c1 == b1 and not c2.exists:
                        new.add(Atom(c2.name, (t,)))
        if not new <= atoms:
            atoms |= new
            changed = True
    return FactSet.from_atoms(atoms)


# --------------------------------------------------------------------------
# Perfect rewriting of UCQs w.r.t. a TBox
# --------------------------------------------------------------------------

def _bound_terms(q: CQ) -> set[Term]:
    """Terms that backward application must preserve: constants, answer
    variables, and variables occurring more than once."""
    bound: set[Term] = {t for t in q.head if t.is_var}
    counts: dict[Term, int] = {}
    for a in q.atoms:
        for t in a.args:
            if t.is_var:
                counts[t] = counts.get(t, 0) + 1
    bound |= {t for t, n in counts.items() if n > 1}
    return bound


def _is_ground_marked(t: Term) -> bool:
    return t.is_var and t.name.startswith("_g")


def _apply_axiom(atom: Atom, ax: Axiom, bound: set[Term], fresh: FreshVars,
                 from_policy: bool) -> Optional[tuple[Atom, tuple[Term, ...]]]:
    """Backward-apply one positive inclusion to one atom, if applicable.

    Returns the replacement atom plus the terms that stood for the axiom's
    universally quantified variables when the axiom encodes a disclosure
    rule: those must end up with ground witnesses (`_g` marking).  An
    existential right-hand side never consumes a ground-marked variable.
    """
    if ax.negative:
        return None
    if atom.arity == 1:
        if isinstance(ax.rhs, ConceptExpr) and not ax.rhs.exists and ax.rhs.name == atom.pred:
            lhs = ax.lhs
            repl = concept_atom(lhs, atom.args[0], fresh.next() if lhs.exists else None)
            return repl, (atom.args[0],) if from_policy else ()
        return None
    t1, t2 = atom.args
    if ax.is_role_axiom:
        if ax.rhs.name != atom.pred:
            return None
        repl = role_atom(ax.lhs, t2, t1) if ax.rhs.inverse else role_atom(ax.lhs, t1, t2)
        return repl, (t1, t2) if from_policy else ()
    rhs = ax.rhs
    if not (isinstance(rhs, ConceptExpr) and rhs.exists and rhs.name == atom.pred):
        return None
    if not rhs.inverse and t2.is_var and t2 not in bound and not _is_ground_marked(t2):
        repl = concept_atom(ax.lhs, t1, fresh.next() if ax.lhs.exists else None)
        return repl, (t1,) if from_policy else ()
    if rhs.inverse and t1.is_var and t1 not in bound and not _is_ground_marked(t1):
        repl = concept_atom(ax.lhs, t2, fresh.next() if ax.lhs.exists else None)
        return repl, (t2,) if from_policy else ()
    return None


def _unify_atoms(a1: Atom, a2: Atom, q: CQ) -> Optional[Subst]:
    """Most general unifier of two same-predicate atoms of `q`, biased to
    keep constants, answer variables, then ground-marked variables as
    representatives (the last so the marking survives merges)."""
    if a1.pred != a2.pred or a1.arity != a2.arity:
        return None
    parent: dict[Term, Term] = {}

    def find(t: Term) -> Term:
        while parent.get(t, t) != t:
            t = parent[t]
        return t

    def union(u: Term, v: Term) -> bool:
        ru, rv = find(u), find(v)
        if ru == rv:
            return True
        if ru.is_const and rv.is_const:
            return False
        head_vars = set(q.free_vars)

        def rank(t: Term):
            if t.is_const:
                cls = 0
            elif t in head_vars:
                cls = 1
            elif _is_ground_marked(t):
                cls = 2
            else:
                cls = 3
            return (cls, t)

        keep, drop = sorted((ru, rv), key=rank)
        parent[drop] = keep
        return True

    for u, v in zip(a1.args, a2.args):
        if not union(u, v):
            return None
    out: Subst = {}
    for t in set(a1.args) | set(a2.args):
        if t.is_var:
            r = find(t)
            if r != t:
                out[t] = r
    return out


def rewrite_disjuncts(q: CQ, tbox: TBox, prune: bool = True,
                      policy_axioms: tuple[Axiom, ...] = ()) -> list[CQ]:
    """All canonical CQs of the perfect rewriting of one CQ.

    Answer tuples are preserved position-wise; the unification step may
    specialize an answer position to a constant or merge two answer
    positions, which the returned heads reflect.  `policy_axioms` are
    applied like TBox inclusions but mark the variables standing for their
    universally quantified positions as requiring ground witnesses.
    """
    avoid = q.all_vars | set(q.free_vars)
    fresh = FreshVars("_p", avoid=avoid)
    fresh_g = FreshVars("_g", avoid=avoid)
    start = canonicalize(q, ground_marked_vars(q))
    seen: dict[CQ, None] = {start: None}
    frontier = [start]
    tagged = [(ax, False) for ax in tbox.positive]
    tagged += [(ax, True) for ax in policy_axioms if not ax.negative]

    def add(cand: CQ) -> None:
        cand = canonicalize(cand, ground_marked_vars(cand))
        if cand not in seen:
            seen[cand] = None
            frontier.append(cand)

    while frontier:
        cq = frontier.pop()
        bound = _bound_terms(cq)
        answer_vars = set(cq.free_vars)
        for i, atom in enumerate(cq.atoms):
            for ax, from_policy in tagged:
                hit = _apply_axiom(atom, ax, bound, fresh, from_policy)
                if hit is None:
                    continue
                repl, to_mark = hit
                atoms = cq.atoms[:i] + (repl,) + cq.atoms[i + 1:]
                cand = CQ(cq.head, atoms)
                marking: Subst = {}
                for t in to_mark:
                    if t.is_var and t not in answer_vars and not _is_ground_marked(t):
                        marking[t] = fresh_g.next()
                if marking:
                    cand = subst_cq(cand, marking)
                add(cand)
        for a1, a2 in itertools.combinations(cq.atoms, 2):
            sigma = _unify_atoms(a1, a2, cq)
            if sigma is None:
                continue
            merged = subst_cq(cq, sigma)
            add(CQ(merged.head, tuple(dict.fromkeys(merged.atoms))))
    out = sorted(seen)
    if prune:
        out = sorted(prune_subsumed(out))
    return out


def ucq_rewrite(q: UCQ | CQ, tbox: TBox, prune: bool = True) -> UCQ:
    """Perfect rewriting of a UCQ w.r.t. the positive part of a TBox."""
    disjuncts = (q,) if isinstance(q, CQ) else q.disjuncts
    out: dict[CQ, None] = {}
    for cq in disjuncts:
        for r in rewrite_disjuncts(cq, tbox, prune=False):
            out.setdefault(r)
    result = sorted(out)
    if prune:
        result = sorted(prune_subsumed(result))
    return UCQ(tuple(result))


def disjunct_formula(d: CQ, reference_head: tuple[Term, ...],
                     fresh: FreshVars) -> Formula:
    """Render one rewriting disjunct as a formula over the reference answer
    terms.  Specialized answer positions become equalities; existential
    variables are renamed fresh and quantified locally."""
    renaming: Subst = {t: fresh.next() for t in sorted(d.existential_vars)}
    atoms = [subst_atom(a, renaming) for a in d.atoms]
    eqs = []
    for ref, got in zip(reference_head, d.head):
        if ref != got:
            eqs.append(f_eq(ref, got))
    matrix = conj([f_atom(a) for a in atoms] + eqs)
    return exists(tuple(renaming.values()), matrix)


def ucq_formula(q: CQ, tbox: TBox, fresh: FreshVars) -> Formula:
    """Formula equivalent of the perfect rewriting of `q`, with the original
    answer variables free.  The falsum query renders as false."""
    if q.is_bottom:
        return FALSE
    parts = [disjunct_formula(d, q.head, fresh) for d in rewrite_disjuncts(q, tbox)]
    return disj(parts)


def atom_rewrite(phi: Formula, tbox: TBox, fresh: FreshVars | None = None) -> Formula:
    """Replace each atom of `phi` by the disjunction of its single-atom
    rewritings, quantifying introduced variables locally.  Evaluating the
    result over raw facts simulates evaluating `phi` over their closure."""
    if fresh is None:
        fresh = FreshVars("_w", avoid=phi.fv)

    def walk(f: Formula) -> Formula:
        if isinstance(f, (FTrue, FFalse, FEq)):
            return f
        if isinstance(f, FAtom):
            a = f.atom
            head = tuple(dict.fromkeys(a.vars))
            parts = [disjunct_formula(d, head, fresh)
                     for d in rewrite_disjuncts(CQ(head, (a,)), tbox)]
            return disj(parts)
        if isinstance(f, FNot):
            return neg(walk(f.sub))
        if isinstance(f, FAnd):
            return conj([walk(p) for p in f.parts])
        if isinstance(f, FOr):
            return disj([walk(p) for p in f.parts])
        if isinstance(f, FImplies):
            return implies(walk(f.lhs), walk(f.rhs))
        if isinstance(f, FExists):
            return exists(f.vars, walk(f.body))
        raise TypeError(f"unknown formula node: {f!r}")

    return walk(phi)


# --------------------------------------------------------------------------
# Consistency
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ConsistencyReport:
    consistent: bool
    violations: tuple[str, ...]


def _violation_query(ax: Axiom, fresh: FreshVars) -> CQ:
    """The Boolean query whose satisfaction witnesses a disjointness clash."""
    if ax.is_role_axiom:
        x, y = fresh.next(), fresh.next()
        return CQ((), (role_atom(ax.lhs, x, y), role_atom(ax.rhs, x, y)))
    x = fresh.next()
    atoms = []
    for side in (ax.lhs, ax.rhs):
        atoms.append(concept_atom(side, x, fresh.next() if side.exists else None))
    return CQ((), tuple(atoms))


def check_consistency(tbox: TBox, facts: "FactSet") -> ConsistencyReport:
    """Rewrite each disjointness axiom's clash query and evaluate it over
    the raw facts."""
    violations = []
    fresh = FreshVars("_k")
    for ax in tbox.negative:
        q = _violation_query(ax, fresh)
        for d in rewrite_disjuncts(q, tbox):
            image = facts.first_image(d)
            if image is not None:
                witness = ", ".join(str(a) for a in sorted(image))
                violations.append(f"{ax} via {witness}")
                break
    return ConsistencyReport(not violations, tuple(violations))


# --------------------------------------------------------------------------
# Binary rules as DL axioms
# --------------------------------------------------------------------------

def dl_translate(ed: Dependency) -> Axiom:
    """The DL-Lite inclusion corresponding to one binary rule."""
    shape = _binary_shape(ed)
    if shape is None:
        raise GuardError(f"rule is not binary: {ed}")
    _, lhs, rhs = shape
    return Axiom(lhs, rhs)


def policy_dl(policy: Policy) -> TBox:
    """The TBox collecting the axiom translations of a binary policy's
    denial-free rules (denials have no axiom counterpart)."""
    return TBox(tuple(dl_translate(ed) for ed in policy.positive))

