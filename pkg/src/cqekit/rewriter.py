"""The core compiler: first-order rewriting of queries under the
intersection semantics.

Given a query, a TBox, and a full expandable policy, the compiler emits a
formula whose evaluation over the raw facts decides entailment from the
TBox plus the intersection of all maximal disclosable fact sets.  The
construction guards every query match by the absence of a "clash": a small
disclosable fact pattern that would stop being disclosable if the match
were revealed too.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable

from .classify import classify
from .dllite import atom_rewrite, rewrite_disjuncts, ucq_formula
from .errors import GuardError
from .model import (
    CQ, UCQ, Atom, Dependency, Formula, FreshVars, Policy, Subst, TBox, Term,
    conj, disj, exists, f_atom, f_eq, formula_size, implies, neg, signature,
    subst_atom, subst_cq, var,
)
from .tgd import policy_expand


@dataclass(frozen=True)
class RewriteOptions:
    """Toggles for the three intensional optimizations (all on by default).

    opt1: enumerate only candidate atom sets that can match some expanded
          rule body together with the query disjunct.
    opt2: drop the query atoms from the second disclosability check inside a
          clash and factor the shared atom-rewriting part out of both.
    opt3: keep only the most generic mapping substitutions.
    """

    opt1: bool = True
    opt2: bool = True
    opt3: bool = True


@dataclass
class RewriteReport:
    """Compilation statistics surfaced by the CLI report flag."""

    k: int
    expanded_rules: int
    z_sets_total: int
    z_sets_used: int
    disjuncts: int
    formula_nodes: int


@dataclass
class CompiledQuery:
    formula: Formula
    report: RewriteReport


@dataclass(frozen=True)
class AtomTemplate:
    """Fresh-variable atoms: k variable-disjoint copies per predicate."""

    atoms: tuple[Atom, ...]


def atoms_template(predicates: dict[str, int], k: int,
                   fresh: FreshVars | None = None) -> AtomTemplate:
    """k fresh-variable atoms for each predicate in the signature."""
    if k < 1:
        raise ValueError("template multiplicity must be at least 1")
    fresh = fresh or FreshVars("_z")
    out = []
    for pred in sorted(predicates):
        arity = predicates[pred]
        for _ in range(k):
            out.append(Atom(pred, tuple(fresh.next() for _ in range(arity))))
    return AtomTemplate(tuple(out))


# --------------------------------------------------------------------------
# Mapping substitutions
# --------------------------------------------------------------------------

def _atom_set_vars(atoms: Iterable[Atom]) -> frozenset[Term]:
    return frozenset(t for a in atoms for t in a.vars)


def _atom_set_terms(atoms: Iterable[Atom]) -> frozenset[Term]:
    return frozenset(t for a in atoms for t in a.args)


def map_substs(q: CQ, zatoms: tuple[Atom, ...],
               most_generic_only: bool = True) -> list[Subst]:
    """All ways the body `q` can be mapped into the atom set `zatoms`.

    Each result substitutes the free variables of `q` and some variables of
    the atom set with terms of the atom set (or constants of `q`), such
    that the query atoms embed into the substituted set once existential
    variables are instantiated.  With `most_generic_only`, substitutions
    that are instances of another returned one are dropped.
    """
    if not q.atoms:
        return []
    zvars = _atom_set_vars(zatoms)
    free = set(q.free_vars)
    candidates = []
    for a in q.atoms:
        cands = [z for z in zatoms if z.pred == a.pred and z.arity == a.arity]
        if not cands:
            return []
        candidates.append(cands)

    results: dict[tuple, Subst] = {}
    for assignment in itertools.product(*candidates):
        parent: dict[Term, Term] = {}

        def find(t: Term) -> Term:
            while parent.get(t, t) != t:
                t = parent[t]
            return t

        ok = True
        for a, z in zip(q.atoms, assignment):
            for qa, za in zip(a.args, z.args):
                ra, rz = find(qa), find(za)
                if ra == rz:
                    continue
                if ra.is_const and rz.is_const:
                    ok = False
                    break
                # Constants become class representatives immediately.
                if ra.is_const:
                    parent[rz] = ra
                else:
                    parent[ra] = rz
            if not ok:
                break
        if not ok:
            continue
        # Choose representatives: a constant if present, else the smallest
        # variable of the atom set in the class.
        members: dict[Term, list[Term]] = {}
        for t in set(parent) | set(parent.values()):
            members.setdefault(find(t), []).append(t)
        rep_of: dict[Term, Term] = {}
        valid = True
        for root, cls in members.items():
            cls.append(root)
            consts = sorted({t for t in cls if t.is_const})
            if len(consts) > 1:
                valid = False
                break
            zs = sorted(t for t in cls if t in zvars)
            if consts:
                rep = consts[0]
            elif zs:
                rep = zs[0]
            else:
                valid = False  # a class must touch the atom set
                break
            for t in cls:
                rep_of[t] = rep
        if not valid:
            continue
        mu: Subst = {}
        for v in free:
            mu[v] = rep_of.get(v, find(v))
        for zv in sorted(zvars):
            image = rep_of.get(zv, zv)
            if image != zv:
                mu[zv] = image
        key = tuple(sorted((d.name, i.kind, i.name) for d, i in mu.items()))
        results.setdefault(key, mu)

    mus = [results[k] for k in sorted(results)]
    if most_generic_only and len(mus) > 1:
        mus = _filter_generic(mus, sorted(free | zvars))
    return mus


def _instance_of(mu: Subst, nu: Subst, domain: list[Term]) -> bool:
    """True when `mu` equals some substitution composed after `nu`."""
    rho: Subst = {}
    for d in domain:
        a = nu.get(d, d)
        b = mu.get(d, d)
        if a.is_const:
            if a != b:
                return False
        else:
            if rho.setdefault(a, b) != b:
                return False
    return True


def _filter_generic(mus: list[Subst], domain: list[Term]) -> list[Subst]:
    kept = []
    for i, mu in enumerate(mus):
        drop = False
        for j, nu in enumerate(mus):
            if i == j:
                continue
            if _instance_of(mu, nu, domain):
                if _instance_of(nu, mu, domain):
                    # Equivalent up to renaming: keep the first in canonical order.
                    if j < i:
                        drop = True
                        break
                else:
                    drop = True
                    break
        if not drop:
            kept.append(mu)
    return kept


# --------------------------------------------------------------------------
# Disclosability and clash formulas
# --------------------------------------------------------------------------

def _free_dependency(ed: Dependency, avoid: set[str], index: int) -> Dependency:
    """Rename a rule's variables into a reserved per-rule name space,
    stepping over any colliding query variable names."""
    mapping: Subst = {}
    n = 0
    for t in sorted(ed.all_vars):
        while f"_e{index}_{n}" in avoid:
            n += 1
        mapping[t] = var(f"_e{index}_{n}")
        n += 1
    return Dependency(subst_cq(ed.body, mapping), subst_cq(ed.head, mapping))


def _implication_part(zatoms: tuple[Atom, ...], tbox: TBox,
                      pexp: tuple[Dependency, ...], options: RewriteOptions,
                      fresh: FreshVars) -> Formula:
    """The guarded implications of the disclosability formula for one atom
    set: whenever a rule body maps into the set, the head must follow."""
    zvars = _atom_set_vars(zatoms)
    parts = []
    for ed in pexp:
        for mu in map_substs(ed.body, zatoms, most_generic_only=options.opt3):
            eq = conj([f_eq(x, mu[x]) for x in sorted(zvars) if x in mu])
            head_image = subst_cq(ed.head, mu)
            consequent = ucq_formula(head_image, tbox, fresh)
            parts.append(implies(eq, consequent))
    return conj(parts)


def is_discl(zatoms: tuple[Atom, ...], tbox: TBox, policy: Policy,
             pexp: tuple[Dependency, ...],
             options: RewriteOptions | None = None,
             fresh: FreshVars | None = None) -> Formula:
    """Disclosability of an atom set as a formula over its variables.

    A ground instance of the set is disclosable exactly when the formula
    holds over the facts: every atom's rewriting must hold, and every rule
    body mapping into the set forces its head to be derivable.
    """
    options = options or RewriteOptions()
    fresh = fresh or FreshVars("_w", avoid=_atom_set_vars(zatoms))
    rewr = atom_rewrite(conj([f_atom(a) for a in zatoms]), tbox, fresh)
    return conj([rewr, _implication_part(zatoms, tbox, pexp, options, fresh)])


def clash(zatoms: tuple[Atom, ...], gamma: tuple[Atom, ...], tbox: TBox,
          policy: Policy, pexp: tuple[Dependency, ...],
          options: RewriteOptions | None = None,
          fresh: FreshVars | None = None) -> Formula:
    """A clash: the atom set is disclosable but stops being disclosable
    when the query match is added.  Free variables are those of `gamma`;
    the set's variables are closed existentially."""
    options = options or RewriteOptions()
    fresh = fresh or FreshVars("_w", avoid=_atom_set_vars(zatoms + gamma))
    zvars = sorted(_atom_set_vars(zatoms))
    combined = zatoms + tuple(a for a in gamma if a not in zatoms)
    if options.opt2:
        shared_rewr = atom_rewrite(conj([f_atom(a) for a in zatoms]), tbox, fresh)
        first = _implication_part(zatoms, tbox, pexp, options, fresh)
        second = _implication_part(combined, tbox, pexp, options, fresh)
        matrix = conj([shared_rewr, first, neg(second)])
    else:
        first = is_discl(zatoms, tbox, policy, pexp, options, fresh)
        second = is_discl(combined, tbox, policy, pexp, options, fresh)
        matrix = conj([first, neg(second)])
    return exists(zvars, matrix)


# --------------------------------------------------------------------------
# The full rewriting
# --------------------------------------------------------------------------

def _z_sets(predicates: dict[str, int], k: int, fresh: FreshVars) -> list[tuple[Atom, ...]]:
    """Candidate atom sets of size < k over the signature, one per
    isomorphism class (fresh variables everywhere)."""
    preds = sorted(predicates)
    out: list[tuple[Atom, ...]] = [()]
    for size in range(1, k):
        for combo in itertools.combinations_with_replacement(preds, size):
            atoms = tuple(Atom(p, tuple(fresh.next() for _ in range(predicates[p])))
                          for p in combo)
            out.append(atoms)
    return out


def iga_rewrite(query: UCQ, tbox: TBox, policy: Policy,
                options: RewriteOptions | None = None,
                expansion_route: str = "generic") -> CompiledQuery:
    """Compile a query against a TBox and a full expandable policy into a
    formula evaluable directly over the facts.

    The formula is a disjunction over the disjuncts of the query's perfect
    rewriting; each disjunct is guarded by the negation of every possible
    clash with a small candidate atom set.
    """
    options = options or RewriteOptions()
    cls = classify(policy, tbox)
    if not cls.full:
        raise GuardError("rewriting requires a full policy (no existential "
                         "head variables); classification: " + cls.summary())
    if not cls.expandable:
        raise GuardError("rewriting requires an expandable policy; dependency "
                         "cycle: " + " -> ".join(cls.cycle))

    expanded = policy_expand(tbox, policy, route=expansion_route)
    query_vars = {t.name for cq in query for t in cq.all_vars | set(cq.free_vars)}
    pexp = tuple(_free_dependency(ed, query_vars, i)
                 for i, ed in enumerate(expanded.eds))
    k = max((len(ed.body.atoms) for ed in pexp), default=1)

    sig = signature(tbox, policy)
    fresh_z = FreshVars("_z")
    z_candidates = _z_sets(sig, k, fresh_z) if sig else [()]

    fresh = FreshVars("_w", avoid={var(n) for n in query_vars})
    answer_vars = query.disjuncts[0].free_vars
    disjunct_formulas = []
    used_z = 0
    for cq in query:
        for d in rewrite_disjuncts(cq, tbox):
            # The disjunct's existential variables get private names so the
            # clash guards can treat every variable of the match as free.
            renaming: Subst = {t: fresh.next() for t in sorted(d.existential_vars)}
            gamma = tuple(subst_atom(a, renaming) for a in d.atoms)
            head = tuple(renaming.get(t, t) for t in d.head)
            head_eqs = [f_eq(ref, got)
                        for ref, got in zip(cq.head, head) if ref != got]
            gamma_rewr = atom_rewrite(conj([f_atom(a) for a in gamma]), tbox, fresh)
            guards = []
            for zatoms in z_candidates:
                if options.opt1:
                    combined = zatoms + tuple(a for a in gamma if a not in zatoms)
                    if not any(map_substs(ed.body, combined,
                                          most_generic_only=options.opt3)
                               for ed in pexp):
                        continue
                used_z += 1
                guards.append(neg(clash(zatoms, gamma, tbox, policy, pexp,
                                        options, fresh)))
            close_vars = sorted((_atom_set_vars(gamma) | {t for t in head if t.is_var})
                                - set(answer_vars))
            matrix = conj([gamma_rewr] + head_eqs + guards)
            disjunct_formulas.append(exists(close_vars, matrix))

    formula = disj(disjunct_formulas)
    report = RewriteReport(
        k=k,
        expanded_rules=len(pexp),
        z_sets_total=len(z_candidates),
        z_sets_used=used_z,
        disjuncts=len(disjunct_formulas),
        formula_nodes=formula_size(formula),
    )
    return CompiledQuery(formula, report)
