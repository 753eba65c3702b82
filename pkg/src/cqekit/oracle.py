"""Brute-force reference semantics for differential testing.

Everything here is independent of the rewriting pipeline: entailment is
decided by a forward chase plus homomorphism search, and the intersection
semantics is computed by enumerating all maximal policy-satisfying subsets
of the ground closure.  It only scales to small instances and exists to
verify the compiler.
"""

from __future__ import annotations

import itertools
from typing import Iterable, Optional

from .errors import OracleCapError
from .model import (
    CQ, UCQ, Atom, ConceptExpr, Dependency, Policy, RoleExpr, Subst, TBox,
    Term, const, role_atom, subst_cq,
)
from .evaluator import CQEInstance, FactSet

NULL_PREFIX = "~n"


def _is_null(name: str) -> bool:
    return name.startswith(NULL_PREFIX)


# --------------------------------------------------------------------------
# Axiom-level helpers (deliberately separate from the rewriter's machinery)
# --------------------------------------------------------------------------

def _role_supers(tbox: TBox) -> dict[RoleExpr, frozenset[RoleExpr]]:
    """Reflexive-transitive super-roles for both orientations."""
    edges: dict[RoleExpr, set[RoleExpr]] = {}
    for ax in tbox.positive:
        if ax.is_role_axiom:
            edges.setdefault(ax.lhs, set()).add(ax.rhs)
            edges.setdefault(ax.lhs.inv(), set()).add(ax.rhs.inv())
    names = {r for pair in edges.items() for r in (pair[0], *pair[1])}
    out: dict[RoleExpr, frozenset[RoleExpr]] = {}
    for r in names:
        reach = {r}
        frontier = [r]
        while frontier:
            cur = frontier.pop()
            for nxt in edges.get(cur, ()):
                if nxt not in reach:
                    reach.add(nxt)
                    frontier.append(nxt)
        out[r] = frozenset(reach)
    return out


class _TBoxIndex:
    """Concept saturation and successor generation for chase construction."""

    def __init__(self, tbox: TBox) -> None:
        self.tbox = tbox
        self.role_supers = _role_supers(tbox)
        self._csupers_cache: dict[frozenset[ConceptExpr], frozenset[ConceptExpr]] = {}

    def supers_of_role(self, r: RoleExpr) -> frozenset[RoleExpr]:
        return self.role_supers.get(r, frozenset({r}))

    def csupers(self, seeds: Iterable[ConceptExpr]) -> frozenset[ConceptExpr]:
        key = frozenset(seeds)
        cached = self._csupers_cache.get(key)
        if cached is not None:
            return cached
        out = set(key)
        # Existential concepts implied by role inclusions.
        for e in list(out):
            if e.exists:
                for r in self.supers_of_role(RoleExpr(e.name, e.inverse)):
                    out.add(ConceptExpr(r.name, True, r.inverse))
        changed = True
        while changed:
            changed = False
            for ax in self.tbox.positive:
                if ax.is_role_axiom:
                    continue
                if ax.lhs in out and ax.rhs not in out:
                    out.add(ax.rhs)
                    if ax.rhs.exists:
                        for r in self.supers_of_role(RoleExpr(ax.rhs.name, ax.rhs.inverse)):
                            new = ConceptExpr(r.name, True, r.inverse)
                            if new not in out:
                                out.add(new)
                    changed = True
        result = frozenset(out)
        self._csupers_cache[key] = result
        return result


# --------------------------------------------------------------------------
# Chase
# --------------------------------------------------------------------------

def bounded_chase(tbox: TBox, facts: FactSet, depth: int) -> FactSet:
    """Restricted forward chase up to the given null-generation depth.

    Existential axioms introduce labeled nulls (constants named `~n<i>`)
    only when the successor is not already present; non-generating axioms
    are applied to a fixpoint.
    """
    if depth < 0:
        raise ValueError("chase depth must be non-negative")
    atoms: set[Atom] = set(facts.atoms())
    null_depth: dict[str, int] = {}
    counter = itertools.count()

    def term_depth(t: Term) -> int:
        return null_depth.get(t.name, 0)

    def has_successor(t: Term, role: RoleExpr, pool: set[Atom]) -> bool:
        for a in pool:
            if a.pred == role.name and a.arity == 2:
                subject = a.args[1] if role.inverse else a.args[0]
                if subject == t:
                    return True
        return False

    changed = True
    while changed:
        changed = False
        # Non-generating rules first, to their own fixpoint.
        inner = True
        while inner:
            inner = False
            new: set[Atom] = set()
            for a in sorted(atoms):
                for ax in tbox.positive:
                    if ax.is_role_axiom:
                        if a.arity == 2 and ax.lhs.name == a.pred:
                            pair = (a.args[1], a.args[0]) if ax.lhs.inverse else (a.args[0], a.args[1])
                            new.add(role_atom(ax.rhs, *pair))
                    else:
                        holders = []
                        if not ax.lhs.exists and a.arity == 1 and ax.lhs.name == a.pred:
                            holders.append(a.args[0])
                        elif ax.lhs.exists and a.arity == 2 and ax.lhs.name == a.pred:
                            holders.append(a.args[1] if ax.lhs.inverse else a.args[0])
                        if not ax.rhs.exists:
                            for t in holders:
                                new.add(Atom(ax.rhs.name, (t,)))
            if not new <= atoms:
                atoms |= new
                inner = True
        # One round of null generation.
        generated: list[Atom] = []
        for a in sorted(atoms):
            for ax in tbox.positive:
                if ax.is_role_axiom or not ax.rhs.exists:
                    continue
                holder: Optional[Term] = None
                if not ax.lhs.exists and a.arity == 1 and ax.lhs.name == a.pred:
                    holder = a.args[0]
                elif ax.lhs.exists and a.arity == 2 and ax.lhs.name == a.pred:
                    holder = a.args[1] if ax.lhs.inverse else a.args[0]
                if holder is None:
                    continue
                target = RoleExpr(ax.rhs.name, ax.rhs.inverse)
                if term_depth(holder) >= depth:
                    continue
                if has_successor(holder, target, atoms) or any(
                        has_successor(holder, target, {g}) for g in generated):
                    continue
                null = const(f"{NULL_PREFIX}{next(counter)}")
                null_depth[null.name] = term_depth(holder) + 1
                generated.append(role_atom(target, holder, null))
        if generated:
            atoms |= set(generated)
            changed = True
    return FactSet.from_atoms(atoms)


def ground_closure(tbox: TBox, facts: FactSet) -> frozenset[Atom]:
    """All entailed ground atoms over the original constants.

    One level of nulls suffices: atoms over constants can only be produced
    by saturation over constant facts and their immediate anonymous
    successors.
    """
    chased = bounded_chase(tbox, facts, 1)
    return frozenset(a for a in chased.atoms()
                     if all(not _is_null(t.name) for t in a.args))


def _reachable_types(idx: _TBoxIndex, ground: frozenset[Atom]) -> list[RoleExpr]:
    """Creation directions of anonymous successors realized anywhere in the
    canonical model, ignoring reuse of existing successors (sound: the
    oblivious chase is a universal model too)."""
    concepts_by_const: dict[str, set[ConceptExpr]] = {}
    for a in ground:
        if a.arity == 1:
            concepts_by_const.setdefault(a.args[0].name, set()).add(ConceptExpr(a.pred))
        else:
            concepts_by_const.setdefault(a.args[0].name, set()).add(ConceptExpr(a.pred, True))
            concepts_by_const.setdefault(a.args[1].name, set()).add(ConceptExpr(a.pred, True, True))

    def generated(concepts: frozenset[ConceptExpr]) -> set[RoleExpr]:
        return {RoleExpr(e.name, e.inverse) for e in concepts if e.exists}

    reachable: set[RoleExpr] = set()
    frontier: list[RoleExpr] = []
    for c in sorted(concepts_by_const):
        for r in generated(idx.csupers(concepts_by_const[c])):
            if r not in reachable:
                reachable.add(r)
                frontier.append(r)
    while frontier:
        r = frontier.pop()
        child_seed = ConceptExpr(r.name, True, not r.inverse)
        for nxt in generated(idx.csupers({child_seed})):
            if nxt not in reachable:
                reachable.add(nxt)
                frontier.append(nxt)
    return sorted(reachable)


def _entailment_structure(tbox: TBox, facts: FactSet, depth: int) -> dict[str, set[tuple[str, ...]]]:
    """A finite substructure of the canonical model sufficient for deciding
    entailment of queries with at most `depth` atoms: the depth-bounded
    chase plus a chase tree of the same depth rooted at every realized
    anonymous successor type."""
    idx = _TBoxIndex(tbox)
    atoms: set[Atom] = set(bounded_chase(tbox, facts, depth).atoms())
    counter = itertools.count()

    def grow(node: Term, concepts: frozenset[ConceptExpr], remaining: int) -> None:
        for e in sorted(concepts):
            if not e.exists:
                atoms.add(Atom(e.name, (node,)))
        if remaining == 0:
            return
        targets = sorted({RoleExpr(e.name, e.inverse) for e in concepts if e.exists})
        for r in targets:
            child = const(f"{NULL_PREFIX}t{next(counter)}")
            for sup in sorted(idx.supers_of_role(r)):
                atoms.add(role_atom(sup, node, child))
            grow(child, idx.csupers({ConceptExpr(r.name, True, not r.inverse)}), remaining - 1)

    ground = ground_closure(tbox, facts)
    for r in _reachable_types(idx, ground):
        root = const(f"{NULL_PREFIX}r{next(counter)}")
        grow(root, idx.csupers({ConceptExpr(r.name, True, not r.inverse)}), depth)

    index: dict[str, set[tuple[str, ...]]] = {}
    for a in atoms:
        index.setdefault(a.pred, set()).add(tuple(t.name for t in a.args))
    return index


def _hom_exists(atoms: tuple[Atom, ...], index: dict[str, set[tuple[str, ...]]],
                env: dict[Term, str]) -> bool:
    """Backtracking homomorphism of query atoms into the structure;
    constants map to themselves, variables map to anything."""
    if not atoms:
        return True
    a, rest = atoms[0], atoms[1:]
    for row in index.get(a.pred, ()):
        if len(row) != a.arity:
            continue
        new_env = dict(env)
        ok = True
        for t, value in zip(a.args, row):
            if t.is_const:
                if t.name != value:
                    ok = False
                    break
            elif new_env.get(t, value) != value:
                ok = False
                break
            else:
                new_env[t] = value
        if ok and _hom_exists(rest, index, new_env):
            return True
    return False


def cq_entails(tbox: TBox, facts: FactSet, q: CQ) -> bool:
    """Does the TBox plus the facts entail the (Boolean) query?  Free
    variables, if any, are read existentially."""
    if q.is_bottom:
        return False
    index = _entailment_structure(tbox, facts, max(1, len(q.atoms)))
    return _hom_exists(q.atoms, index, {})


# --------------------------------------------------------------------------
# Policy satisfaction and censors
# --------------------------------------------------------------------------

def _as_factset(facts) -> FactSet:
    if isinstance(facts, FactSet):
        return facts
    return FactSet.from_atoms(facts)


def _ground_range(facts: FactSet, policy: Policy) -> list[str]:
    dom = set(facts.active_domain)
    dom |= {t.name for t in policy.constants}
    return sorted(dom)


def eql_satisfies(tbox: TBox, facts, policy: Policy) -> bool:
    """Modal satisfaction: for every rule and every grounding of its
    universal variables, an entailed body forces an entailed head (denial
    bodies must never be entailed)."""
    fs = _as_factset(facts)
    domain = _ground_range(fs, policy)
    for ed in policy.eds:
        frees = ed.body.free_vars
        for values in itertools.product(domain, repeat=len(frees)):
            sigma: Subst = {v: const(val) for v, val in zip(frees, values)}
            if not cq_entails(tbox, fs, subst_cq(ed.body, sigma)):
                continue
            if ed.is_denial:
                return False
            if not cq_entails(tbox, fs, subst_cq(ed.head, sigma)):
                return False
    return True


class Oracle:
    """Cached brute-force semantics for one instance."""

    def __init__(self, instance: CQEInstance, cap: int = 16) -> None:
        self.instance = instance
        self.cap = cap
        self._closure: Optional[frozenset[Atom]] = None
        self._censors: Optional[tuple[frozenset[Atom], ...]] = None
        self._entail_cache: dict[tuple[frozenset[Atom], CQ], bool] = {}
        self._structures: dict[tuple[frozenset[Atom], int], dict] = {}
        self._candidates: Optional[list[tuple[Dependency, CQ, CQ]]] = None

    # -- base facts -----------------------------------------------------------

    @property
    def closure_atoms(self) -> frozenset[Atom]:
        if self._closure is None:
            self._closure = ground_closure(self.instance.tbox, self.instance.abox)
            if len(self._closure) > self.cap:
                raise OracleCapError(
                    f"ground closure has {len(self._closure)} facts, cap is {self.cap}")
        return self._closure

    def _entails(self, subset: frozenset[Atom], q: CQ) -> bool:
        key = (subset, q)
        cached = self._entail_cache.get(key)
        if cached is None:
            depth = max(1, len(q.atoms))
            skey = (subset, depth)
            index = self._structures.get(skey)
            if index is None:
                index = _entailment_structure(self.instance.tbox,
                                              FactSet.from_atoms(subset), depth)
                self._structures[skey] = index
            cached = not q.is_bottom and _hom_exists(q.atoms, index, {})
            self._entail_cache[key] = cached
        return cached

    # -- censors ---------------------------------------------------------------

    def _candidate_groundings(self) -> list[tuple[Dependency, CQ, CQ]]:
        """(rule, ground body, ground head) triples that can fire inside the
        closure; any subset check only needs these."""
        if self._candidates is not None:
            return self._candidates
        cl = self.closure_atoms
        domain = _ground_range(FactSet.from_atoms(cl), self.instance.policy)
        out = []
        for ed in self.instance.policy.eds:
            frees = ed.body.free_vars
            for values in itertools.product(domain, repeat=len(frees)):
                sigma: Subst = {v: const(val) for v, val in zip(frees, values)}
                body = subst_cq(ed.body, sigma)
                if not self._entails(cl, body):
                    continue
                out.append((ed, body, subst_cq(ed.head, sigma)))
        self._candidates = out
        return out

    def satisfies_policy(self, subset: frozenset[Atom]) -> bool:
        for ed, body, head in self._candidate_groundings():
            if not self._entails(subset, body):
                continue
            if ed.is_denial or not self._entails(subset, head):
                return False
        return True

    def censors(self) -> tuple[frozenset[Atom], ...]:
        """All maximal subsets of the ground closure satisfying the policy,
        by decreasing-cardinality lattice enumeration with pruning."""
        if self._censors is not None:
            return self._censors
        cl = sorted(self.closure_atoms)
        found: list[frozenset[Atom]] = []
        for size in range(len(cl), -1, -1):
            for combo in itertools.combinations(cl, size):
                cand = frozenset(combo)
                if any(cand <= c for c in found):
                    continue
                if self.satisfies_policy(cand):
                    found.append(cand)
        self._censors = tuple(found)
        return self._censors

    def intersection(self) -> frozenset[Atom]:
        censors = self.censors()
        if not censors:
            return frozenset()
        out = censors[0]
        for c in censors[1:]:
            out &= c
        return out

    # -- verdicts ---------------------------------------------------------------

    def _bucq_holds(self, subset: frozenset[Atom], q: UCQ) -> bool:
        return any(self._entails(subset, cq) for cq in q)

    def iga(self, q: UCQ):
        """Entailment from the intersection of all censors; open queries
        yield the set of grounding tuples entailed this way."""
        inter = self.intersection()
        if q.is_boolean:
            return self._bucq_holds(inter, q)
        return self._answers(lambda ground: self._bucq_holds(inter, ground), q)

    def skeptical(self, q: UCQ):
        """Entailment from every censor separately."""
        censors = self.censors()
        if q.is_boolean:
            return all(self._bucq_holds(c, q) for c in censors)
        return self._answers(
            lambda ground: all(self._bucq_holds(c, ground) for c in censors), q)

    def _answers(self, holds, q: UCQ) -> frozenset[tuple[str, ...]]:
        domain = sorted(FactSet.from_atoms(self.closure_atoms).active_domain)
        frees = q.disjuncts[0].free_vars
        out = set()
        for values in itertools.product(domain, repeat=len(frees)):
            sigma: Subst = {v: const(val) for v, val in zip(frees, values)}
            ground = UCQ(tuple(CQ((), subst_cq(cq, sigma).atoms) for cq in q))
            if holds(ground):
                out.add(values)
        return frozenset(out)

    def disclosable(self, fact_atoms: Iterable[Atom]) -> bool:
        """Can the fact set be extended, inside the closure, to a set that
        satisfies the policy?  Equivalent, by maximality, to being contained
        in some censor."""
        fs = frozenset(fact_atoms)
        return any(fs <= c for c in self.censors())


# Convenience wrappers matching the operation-level API.

def optimal_censors(instance: CQEInstance, cap: int = 16) -> tuple[frozenset[Atom], ...]:
    return Oracle(instance, cap).censors()


def iga_oracle(instance: CQEInstance, q: UCQ, cap: int = 16):
    return Oracle(instance, cap).iga(q)


def skeptical_oracle(instance: CQEInstance, q: UCQ, cap: int = 16):
    return Oracle(instance, cap).skeptical(q)


def disclosable_oracle(instance: CQEInstance, facts: Iterable[Atom], cap: int = 16) -> bool:
    return Oracle(instance, cap).disclosable(facts)
