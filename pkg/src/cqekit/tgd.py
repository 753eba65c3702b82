"""Backward rewriting over mixed rule sets and policy expansion.

The rewriting engine performs piece unification: a subset of query atoms is
unified with a subset of a rule's head atoms and replaced by the rule's
body.  Existential head variables may only be unified with query variables
that occur nowhere else, which keeps every step sound for rules whose heads
invent values.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator

from . import dllite
from .classify import binary_shape, classify
from .dllite import TGD, ed_to_tgd, policy_dl, tbox_to_tgds
from .errors import DepthCapError, GuardError
from .model import (
    CQ, UCQ, Atom, Dependency, FreshVars, Policy, Subst, TBox, Term,
    canonicalize, ground_marked_vars, prune_subsumed, subst_cq,
)

FROM_POLICY = "policy"
FROM_TBOX = "tbox"


@dataclass(frozen=True)
class TGDSet:
    """Rules with a provenance tag each (from the policy or from the TBox)."""

    items: tuple[tuple[TGD, str], ...]

    @property
    def tgds(self) -> tuple[TGD, ...]:
        return tuple(t for t, _ in self.items)

    def tagged(self, tag: str) -> tuple[TGD, ...]:
        return tuple(t for t, p in self.items if p == tag)

    def __iter__(self) -> Iterator[tuple[TGD, str]]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)


def policy_to_tgds(policy: Policy) -> TGDSet:
    """Rules of the denial-free part of the policy, modal operators stripped."""
    return TGDSet(tuple((ed_to_tgd(ed), FROM_POLICY) for ed in policy.positive))


def build_sigma(policy: Policy, tbox: TBox) -> TGDSet:
    """The combined rule set driving policy expansion."""
    items = list(policy_to_tgds(policy).items)
    items.extend((t, FROM_TBOX) for t in tbox_to_tgds(tbox))
    return TGDSet(tuple(items))


# --------------------------------------------------------------------------
# Piece unification
# --------------------------------------------------------------------------

class _UnionFind:
    def __init__(self) -> None:
        self.parent: dict[Term, Term] = {}

    def find(self, t: Term) -> Term:
        while self.parent.get(t, t) != t:
            t = self.parent[t]
        return t

    def union(self, a: Term, b: Term) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[ra] = rb

    def classes(self, terms: Iterable[Term]) -> dict[Term, list[Term]]:
        out: dict[Term, list[Term]] = {}
        for t in terms:
            out.setdefault(self.find(t), []).append(t)
        return out


def _tainted(t: Term) -> bool:
    return t.is_var and t.name.startswith("_g")


def _piece_step(q: CQ, tgd: TGD, from_policy: bool, fresh: FreshVars,
                fresh_g: FreshVars) -> Iterator[CQ]:
    """All one-step rewritings of `q` through `tgd`.

    Rules from the policy fire only on ground instances of their universal
    variables; query variables that end up standing for such a position are
    renamed into the `_g` name space, and later steps never resolve a `_g`
    variable against a rule's invented (existential head) value.
    """
    renaming: Subst = {}
    for t in sorted(tgd.body.free_vars):
        renaming[t] = fresh_g.next() if from_policy else fresh.next()
    for t in sorted((tgd.body.all_vars | tgd.head.all_vars) - set(renaming)):
        renaming[t] = fresh.next()
    body = subst_cq(tgd.body, renaming)
    head = subst_cq(tgd.head, renaming)
    frontier = set(head.free_vars)
    head_exists = head.all_vars - frontier
    answer_vars = {t for t in q.head if t.is_var}

    n = len(q.atoms)
    occurrences: dict[Term, set[int]] = {}
    for i, a in enumerate(q.atoms):
        for t in a.vars:
            occurrences.setdefault(t, set()).add(i)

    for size in range(1, n + 1):
        for subset in itertools.combinations(range(n), size):
            chosen = [q.atoms[i] for i in subset]
            candidate_lists = []
            feasible = True
            for a in chosen:
                cands = [h for h in head.atoms if h.pred == a.pred and h.arity == a.arity]
                if not cands:
                    feasible = False
                    break
                candidate_lists.append(cands)
            if not feasible:
                continue
            outside = set(range(n)) - set(subset)
            for assignment in itertools.product(*candidate_lists):
                uf = _UnionFind()
                terms: set[Term] = set()
                for a, h in zip(chosen, assignment):
                    for qa, ha in zip(a.args, h.args):
                        uf.union(qa, ha)
                        terms.add(qa)
                        terms.add(ha)
                classes = uf.classes(terms)
                subst: Subst = {}
                valid = True
                for members in classes.values():
                    consts = sorted({t for t in members if t.is_const})
                    if len(consts) > 1:
                        valid = False
                        break
                    exist_members = [t for t in members if t in head_exists]
                    if exist_members:
                        if len(exist_members) > 1 or consts:
                            valid = False
                            break
                        if any(t in frontier for t in members):
                            valid = False
                            break
                        # Remaining members must be query variables occurring
                        # only inside the rewritten piece, and not marked as
                        # requiring a ground witness.
                        others = [t for t in members if t not in head_exists]
                        ok = all(
                            t.is_var and t not in answer_vars and not _tainted(t)
                            and occurrences.get(t, set()) <= set(subset)
                            for t in others)
                        if not ok:
                            valid = False
                            break
                        rep = exist_members[0]
                    else:
                        must_ground = (any(_tainted(t) for t in members)
                                       or (from_policy
                                           and any(t in frontier for t in members)))
                        if consts:
                            rep = consts[0]
                        else:
                            shared = sorted(t for t in members
                                            if t in answer_vars
                                            or not occurrences.get(t, set()) <= set(subset))
                            q_vars = sorted(t for t in members
                                            if t.is_var and t not in frontier
                                            and t not in head_exists and t in occurrences)
                            pool = shared or q_vars or sorted(members)
                            rep = pool[0]
                        if (must_ground and rep.is_var and rep not in answer_vars
                                and not _tainted(rep)):
                            rep = fresh_g.next()
                    for t in members:
                        if t != rep and t.is_var:
                            subst[t] = rep
                if not valid:
                    continue
                new_atom_list = []
                for a in body.atoms:
                    new_atom_list.append(Atom(a.pred, tuple(subst.get(t, t) if t.is_var else t
                                                            for t in a.args)))
                for i in sorted(outside):
                    a = q.atoms[i]
                    new_atom_list.append(Atom(a.pred, tuple(subst.get(t, t) if t.is_var else t
                                                            for t in a.args)))
                new_head = tuple(subst.get(t, t) if t.is_var else t for t in q.head)
                yield CQ(new_head, tuple(dict.fromkeys(new_atom_list)))


def rewrite_disjuncts_tgds(q: CQ, sigma: TGDSet, max_depth: int = 32,
                           prune: bool = True) -> list[CQ]:
    """The rewriting set of one CQ w.r.t. a rule set, canonical and
    deduplicated.  Raises DepthCapError when `max_depth` breadth-first
    levels do not reach a fixpoint."""
    avoid = q.all_vars | set(q.free_vars)
    fresh = FreshVars("_t", avoid=avoid)
    fresh_g = FreshVars("_g", avoid=avoid)
    start = canonicalize(q, ground_marked_vars(q))
    seen: dict[CQ, None] = {start: None}
    level = [start]
    for _ in range(max_depth):
        if not level:
            break
        nxt = []
        for cq in level:
            for tgd, tag in sigma:
                for cand in _piece_step(cq, tgd, tag == FROM_POLICY, fresh, fresh_g):
                    cand = canonicalize(cand, ground_marked_vars(cand))
                    if cand not in seen:
                        seen[cand] = None
                        nxt.append(cand)
        level = nxt
    if level:
        preds = [a.pred for cq in level for a in cq.atoms]
        raise DepthCapError(max_depth, preds)
    out = sorted(seen)
    if prune:
        out = sorted(prune_subsumed(out))
    return out


def ucq_rewrite_tgds(q: CQ, sigma: TGDSet, max_depth: int = 32,
                     prune: bool = True) -> UCQ:
    """Sound and complete backward rewriting of a CQ w.r.t. a rule set."""
    return UCQ(tuple(rewrite_disjuncts_tgds(q, sigma, max_depth, prune)))


# --------------------------------------------------------------------------
# Policy expansion
# --------------------------------------------------------------------------

def _theta(original: tuple[Term, ...], specialized: tuple[Term, ...]) -> Subst:
    """Positional substitution from an original answer tuple to its
    specialized image."""
    out: Subst = {}
    for o, s in zip(original, specialized):
        if o.is_var and o != s:
            out[o] = s
    return out


def policy_expand(tbox: TBox, policy: Policy, route: str = "generic",
                  max_depth: int = 32) -> Policy:
    """Close every rule body under the combined rewriting rules so that a
    plain evaluation of the expanded bodies accounts for all derivations.

    Requires a full, expandable policy.  `route="dllite"` rewrites bodies
    against the axiom translation of the binary denial-free rules joined
    with the TBox instead of the generic rule engine.
    """
    cls = classify(policy, tbox)
    if not cls.full:
        offenders = [str(ed) for ed in policy.eds
                     if not ed.is_denial and (ed.head.all_vars - set(ed.head.free_vars))]
        raise GuardError("policy is not full; offending rule(s): " + "; ".join(offenders))
    if not cls.expandable:
        raise GuardError("policy is not expandable: dependency cycle "
                         + " -> ".join(cls.cycle))

    if route == "generic":
        sigma = build_sigma(policy, tbox)

        def rewrite(body: CQ) -> list[CQ]:
            return rewrite_disjuncts_tgds(body, sigma, max_depth=max_depth)
    elif route == "dllite":
        for ed in policy.positive:
            if binary_shape(ed) is None:
                raise GuardError(f"dllite route needs a binary policy; not binary: {ed}")
        rule_axioms = policy_dl(policy).axioms

        def rewrite(body: CQ) -> list[CQ]:
            return dllite.rewrite_disjuncts(body, tbox, policy_axioms=rule_axioms)
    else:
        raise ValueError(f"unknown expansion route: {route}")

    out: dict[tuple[CQ, CQ], Dependency] = {}
    for ed in policy.eds:
        original = ed.body.head
        for d in rewrite(ed.body):
            theta = _theta(original, d.head)
            new_head = subst_cq(ed.head, theta)
            new_ed = Dependency(d, new_head)
            key = (canonicalize(d), canonicalize(new_head))
            out.setdefault(key, new_ed)
    return Policy(tuple(out.values()))
