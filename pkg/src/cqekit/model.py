"""Core data model shared by every stage of the engine.

Terms, atoms, conjunctive queries (CQs) and unions thereof (UCQs),
disclosure rules (dependencies), DL-Lite TBoxes, and a small first-order
formula AST that the rewriter emits.  All values are immutable after
construction and safe to share across threads.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional, Union

VAR = "var"
CONST = "const"


@dataclass(frozen=True, order=True)
class Term:
    """A variable or a constant.

    The two kinds live in disjoint name spaces: the text formats decide the
    kind lexically (variables start with a lowercase letter, '_' or '?';
    constants are quoted or start with a digit or an uppercase letter).
    """

    kind: str
    name: str

    def __post_init__(self) -> None:
        if self.kind not in (VAR, CONST):
            raise ValueError(f"bad term kind: {self.kind!r}")
        if not self.name:
            raise ValueError("term name must be non-empty")

    @property
    def is_var(self) -> bool:
        return self.kind == VAR

    @property
    def is_const(self) -> bool:
        return self.kind == CONST

    def __str__(self) -> str:
        return self.name


def var(name: str) -> Term:
    return Term(VAR, name)


def const(name: str) -> Term:
    return Term(CONST, name)


@dataclass(frozen=True, order=True)
class Atom:
    """A unary or binary atom, e.g. manager(x) or salary(x, '150k')."""

    pred: str
    args: tuple[Term, ...]

    def __post_init__(self) -> None:
        if len(self.args) not in (1, 2):
            raise ValueError(f"{self.pred}: arity must be 1 or 2, got {len(self.args)}")

    @property
    def arity(self) -> int:
        return len(self.args)

    @property
    def vars(self) -> tuple[Term, ...]:
        return tuple(t for t in self.args if t.is_var)

    @property
    def consts(self) -> tuple[Term, ...]:
        return tuple(t for t in self.args if t.is_const)

    @property
    def is_ground(self) -> bool:
        return all(t.is_const for t in self.args)

    def __str__(self) -> str:
        return f"{self.pred}({','.join(str(t) for t in self.args)})"


# A substitution maps variables to terms.  Ground substitutions map every
# variable in their domain to a constant.
Subst = dict


def subst_term(t: Term, s: Subst) -> Term:
    return s.get(t, t) if t.is_var else t


def subst_atom(a: Atom, s: Subst) -> Atom:
    return Atom(a.pred, tuple(subst_term(t, s) for t in a.args))


def compose(first: Subst, second: Subst) -> Subst:
    """The substitution equivalent to applying `first`, then `second`."""
    out = {v: subst_term(t, second) for v, t in first.items()}
    for v, t in second.items():
        out.setdefault(v, t)
    return out


@dataclass(frozen=True, order=True)
class CQ:
    """A conjunctive query.

    `head` is the tuple of answer terms.  In hand-written queries these are
    distinct variables occurring in `atoms`; rewriting may specialize an
    entry to a constant or repeat a variable (two answer positions forced
    equal), which is why the head is a term tuple rather than a variable
    list.  Variables of `atoms` not occurring in `head` are existentially
    quantified.  The empty query (no atoms, no head) is the falsum value
    used as the head of a denial rule.
    """

    head: tuple[Term, ...]
    atoms: tuple[Atom, ...]

    def __post_init__(self) -> None:
        if not self.atoms:
            if self.head:
                raise ValueError("a query without atoms cannot have answer terms")
            return
        atom_vars = {t for a in self.atoms for t in a.vars}
        for t in self.head:
            if t.is_var and t not in atom_vars:
                raise ValueError(f"answer variable {t} does not occur in the query body")

    @property
    def is_bottom(self) -> bool:
        return not self.atoms

    @property
    def arity(self) -> int:
        return len(self.head)

    @property
    def free_vars(self) -> tuple[Term, ...]:
        """Distinct answer variables, in first-occurrence order."""
        seen: dict[Term, None] = {}
        for t in self.head:
            if t.is_var:
                seen.setdefault(t)
        return tuple(seen)

    @property
    def all_vars(self) -> frozenset[Term]:
        return frozenset(t for a in self.atoms for t in a.vars)

    @property
    def existential_vars(self) -> frozenset[Term]:
        return self.all_vars - set(self.free_vars)

    @property
    def constants(self) -> frozenset[Term]:
        head_consts = {t for t in self.head if t.is_const}
        return frozenset(head_consts | {t for a in self.atoms for t in a.consts})

    @property
    def is_boolean(self) -> bool:
        return not self.head

    def __str__(self) -> str:
        if self.is_bottom:
            return "BOT"
        body = ", ".join(str(a) for a in self.atoms)
        head = ",".join(str(t) for t in self.head)
        return f"({head}) :- {body}" if self.head else body


BOTTOM = CQ((), ())


def subst_cq(q: CQ, s: Subst) -> CQ:
    """Apply a substitution to every occurrence in head and atoms."""
    if q.is_bottom:
        return q
    return CQ(tuple(subst_term(t, s) for t in q.head),
              tuple(subst_atom(a, s) for a in q.atoms))


@dataclass(frozen=True)
class UCQ:
    """A union of conjunctive queries; all disjuncts share the answer arity."""

    disjuncts: tuple[CQ, ...]

    def __post_init__(self) -> None:
        if not self.disjuncts:
            raise ValueError("a union must have at least one disjunct")
        arities = {q.arity for q in self.disjuncts}
        if len(arities) != 1:
            raise ValueError(f"disjuncts disagree on answer arity: {sorted(arities)}")

    @property
    def arity(self) -> int:
        return self.disjuncts[0].arity

    @property
    def is_boolean(self) -> bool:
        return self.arity == 0

    def __iter__(self) -> Iterator[CQ]:
        return iter(self.disjuncts)

    def __len__(self) -> int:
        return len(self.disjuncts)

    def __str__(self) -> str:
        return " | ".join(str(q) for q in self.disjuncts)


@dataclass(frozen=True, order=True)
class Dependency:
    """A disclosure rule: the body may be revealed only if the head is.

    Both sides are CQs; the head's free variables are a subset of the
    body's.  A head equal to BOTTOM makes the rule a denial (the body must
    never be revealed).  The body's answer tuple lists its universally
    quantified variables; remaining body variables are existential.
    """

    body: CQ
    head: CQ

    def __post_init__(self) -> None:
        if self.body.is_bottom:
            raise ValueError("a dependency body cannot be empty")
        if not set(self.head.free_vars) <= set(self.body.free_vars):
            missing = set(self.head.free_vars) - set(self.body.free_vars)
            raise ValueError(
                "head variables must be universally quantified in the body: "
                + ", ".join(sorted(t.name for t in missing)))

    @property
    def is_denial(self) -> bool:
        return self.head.is_bottom

    @property
    def all_vars(self) -> frozenset[Term]:
        return self.body.all_vars | self.head.all_vars

    def __str__(self) -> str:
        return f"{self.body} => {self.head}"


@dataclass(frozen=True)
class Policy:
    """A finite set of disclosure rules."""

    eds: tuple[Dependency, ...]

    @property
    def positive(self) -> tuple[Dependency, ...]:
        """The denial-free part of the policy."""
        return tuple(ed for ed in self.eds if not ed.is_denial)

    @property
    def constants(self) -> frozenset[Term]:
        out: set[Term] = set()
        for ed in self.eds:
            out |= ed.body.constants | ed.head.constants
        return frozenset(out)

    def predicates(self) -> dict[str, int]:
        sig: dict[str, int] = {}
        for ed in self.eds:
            for a in itertools.chain(ed.body.atoms, ed.head.atoms):
                sig[a.pred] = a.arity
        return sig

    def __iter__(self) -> Iterator[Dependency]:
        return iter(self.eds)

    def __len__(self) -> int:
        return len(self.eds)


# --------------------------------------------------------------------------
# DL-Lite TBoxes
# --------------------------------------------------------------------------

@dataclass(frozen=True, order=True)
class ConceptExpr:
    """A basic concept: an atomic concept A, or an unqualified existential
    over a role (exists=True), possibly on the inverse role (inverse=True)."""

    name: str
    exists: bool = False
    inverse: bool = False

    def __post_init__(self) -> None:
        if self.inverse and not self.exists:
            raise ValueError("only existential concepts can be inverted")

    def __str__(self) -> str:
        if not self.exists:
            return self.name
        return f"EX {self.name}-" if self.inverse else f"EX {self.name}"


@dataclass(frozen=True, order=True)
class RoleExpr:
    """A basic role: a role name or its inverse."""

    name: str
    inverse: bool = False

    def inv(self) -> "RoleExpr":
        return RoleExpr(self.name, not self.inverse)

    def __str__(self) -> str:
        return f"{self.name}-" if self.inverse else self.name


Basic = Union[ConceptExpr, RoleExpr]


@dataclass(frozen=True, order=True)
class Axiom:
    """A DL-Lite inclusion: lhs included in rhs (negative=True for
    disjointness, i.e. rhs is negated)."""

    lhs: Basic
    rhs: Basic
    negative: bool = False

    def __post_init__(self) -> None:
        if type(self.lhs) is not type(self.rhs):
            raise ValueError("an inclusion cannot mix a concept with a role")

    @property
    def is_role_axiom(self) -> bool:
        return isinstance(self.lhs, RoleExpr)

    def __str__(self) -> str:
        op = "DISJ" if self.negative else "ISA"
        return f"{self.lhs} {op} {self.rhs}"


@dataclass(frozen=True)
class TBox:
    """A set of DL-Lite inclusion axioms."""

    axioms: tuple[Axiom, ...]

    @property
    def positive(self) -> tuple[Axiom, ...]:
        return tuple(ax for ax in self.axioms if not ax.negative)

    @property
    def negative(self) -> tuple[Axiom, ...]:
        return tuple(ax for ax in self.axioms if ax.negative)

    def predicates(self) -> dict[str, int]:
        sig: dict[str, int] = {}
        for ax in self.axioms:
            for side in (ax.lhs, ax.rhs):
                if isinstance(side, RoleExpr):
                    sig[side.name] = 2
                elif side.exists:
                    sig[side.name] = 2
                else:
                    sig[side.name] = 1
        return sig

    def __iter__(self) -> Iterator[Axiom]:
        return iter(self.axioms)

    def __len__(self) -> int:
        return len(self.axioms)


def concept_atom(b: ConceptExpr, t: Term, fresh: Term | None = None) -> Atom:
    """The atom stating that `t` belongs to basic concept `b`.

    Existential concepts need a second term (`fresh`) for the role position
    that is not constrained.
    """
    if not b.exists:
        return Atom(b.name, (t,))
    if fresh is None:
        raise ValueError("existential concept atom needs a filler term")
    return Atom(b.name, (fresh, t) if b.inverse else (t, fresh))


def role_atom(r: RoleExpr, t1: Term, t2: Term) -> Atom:
    """The atom stating that (t1, t2) belongs to basic role `r`."""
    return Atom(r.name, (t2, t1) if r.inverse else (t1, t2))


# --------------------------------------------------------------------------
# First-order formulas (the rewriter's output language)
# --------------------------------------------------------------------------

class Formula:
    """Base class; nodes are immutable and hashed by identity."""

    fv: frozenset[Term]

    __slots__ = ()


@dataclass(frozen=True, eq=False)
class FTrue(Formula):
    fv: frozenset[Term] = frozenset()


@dataclass(frozen=True, eq=False)
class FFalse(Formula):
    fv: frozenset[Term] = frozenset()


TRUE = FTrue()
FALSE = FFalse()


@dataclass(frozen=True, eq=False)
class FAtom(Formula):
    atom: Atom
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fv", frozenset(self.atom.vars))


@dataclass(frozen=True, eq=False)
class FEq(Formula):
    left: Term
    right: Term
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "fv",
            frozenset(t for t in (self.left, self.right) if t.is_var))


@dataclass(frozen=True, eq=False)
class FNot(Formula):
    sub: Formula
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fv", self.sub.fv)


@dataclass(frozen=True, eq=False)
class FAnd(Formula):
    parts: tuple[Formula, ...]
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fv", frozenset().union(*(p.fv for p in self.parts)))


@dataclass(frozen=True, eq=False)
class FOr(Formula):
    parts: tuple[Formula, ...]
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fv", frozenset().union(*(p.fv for p in self.parts)))


@dataclass(frozen=True, eq=False)
class FImplies(Formula):
    lhs: Formula
    rhs: Formula
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fv", self.lhs.fv | self.rhs.fv)


@dataclass(frozen=True, eq=False)
class FExists(Formula):
    vars: tuple[Term, ...]
    body: Formula
    fv: frozenset[Term] = None  # type: ignore[assignment]

    def __post_init__(self) -> None:
        object.__setattr__(self, "fv", self.body.fv - set(self.vars))


def f_atom(a: Atom) -> Formula:
    return FAtom(a)


def f_eq(left: Term, right: Term) -> Formula:
    # Equalities between two constants fold at build time.
    if left.is_const and right.is_const:
        return TRUE if left == right else FALSE
    if left == right:
        return TRUE
    return FEq(left, right)


def conj(parts: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, FFalse):
            return FALSE
        if isinstance(p, FTrue):
            continue
        if isinstance(p, FAnd):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return TRUE
    if len(flat) == 1:
        return flat[0]
    return FAnd(tuple(flat))


def disj(parts: Iterable[Formula]) -> Formula:
    flat: list[Formula] = []
    for p in parts:
        if isinstance(p, FTrue):
            return TRUE
        if isinstance(p, FFalse):
            continue
        if isinstance(p, FOr):
            flat.extend(p.parts)
        else:
            flat.append(p)
    if not flat:
        return FALSE
    if len(flat) == 1:
        return flat[0]
    return FOr(tuple(flat))


def neg(f: Formula) -> Formula:
    if isinstance(f, FTrue):
        return FALSE
    if isinstance(f, FFalse):
        return TRUE
    if isinstance(f, FNot):
        return f.sub
    return FNot(f)


def implies(lhs: Formula, rhs: Formula) -> Formula:
    if isinstance(lhs, FTrue):
        return rhs
    if isinstance(lhs, FFalse) or isinstance(rhs, FTrue):
        return TRUE
    if isinstance(rhs, FFalse):
        return neg(lhs)
    return FImplies(lhs, rhs)


def exists(vs: Iterable[Term], body: Formula) -> Formula:
    vs = tuple(v for v in vs if v in body.fv)
    if not vs:
        return body
    if isinstance(body, FExists):
        return FExists(vs + body.vars, body.body)
    return FExists(vs, body)


def subst_formula(f: Formula, s: Subst) -> Formula:
    """Apply a substitution to the free occurrences in a formula.

    Quantified variables are never in the domain of the substitutions this
    engine builds (fresh name spaces), so no capture handling is needed;
    the rare clash is rejected defensively.
    """
    if isinstance(f, (FTrue, FFalse)):
        return f
    if isinstance(f, FAtom):
        return f_atom(subst_atom(f.atom, s))
    if isinstance(f, FEq):
        return f_eq(subst_term(f.left, s), subst_term(f.right, s))
    if isinstance(f, FNot):
        return neg(subst_formula(f.sub, s))
    if isinstance(f, FAnd):
        return conj([subst_formula(p, s) for p in f.parts])
    if isinstance(f, FOr):
        return disj([subst_formula(p, s) for p in f.parts])
    if isinstance(f, FImplies):
        return implies(subst_formula(f.lhs, s), subst_formula(f.rhs, s))
    if isinstance(f, FExists):
        if any(v in s for v in f.vars):
            raise ValueError("substitution touches a quantified variable")
        return exists(f.vars, subst_formula(f.body, s))
    raise TypeError(f"unknown formula node: {f!r}")


def formula_size(f: Formula) -> int:
    """Number of AST nodes, used in rewriting reports."""
    if isinstance(f, (FTrue, FFalse, FAtom, FEq)):
        return 1
    if isinstance(f, FNot):
        return 1 + formula_size(f.sub)
    if isinstance(f, (FAnd, FOr)):
        return 1 + sum(formula_size(p) for p in f.parts)
    if isinstance(f, FImplies):
        return 1 + formula_size(f.lhs) + formula_size(f.rhs)
    if isinstance(f, FExists):
        return 1 + formula_size(f.body)
    raise TypeError(f"unknown formula node: {f!r}")


def format_formula(f: Formula) -> str:
    """Deterministic plain-text rendering of a formula."""
    if isinstance(f, FTrue):
        return "true"
    if isinstance(f, FFalse):
        return "false"
    if isinstance(f, FAtom):
        return str(f.atom)
    if isinstance(f, FEq):
        return f"{f.left} = {f.right}"
    if isinstance(f, FNot):
        return f"~({format_formula(f.sub)})"
    if isinstance(f, FAnd):
        return "(" + " & ".join(format_formula(p) for p in f.parts) + ")"
    if isinstance(f, FOr):
        return "(" + " | ".join(format_formula(p) for p in f.parts) + ")"
    if isinstance(f, FImplies):
        return f"({format_formula(f.lhs)} -> {format_formula(f.rhs)})"
    if isinstance(f, FExists):
        vs = ",".join(str(v) for v in f.vars)
        return f"exists {vs}. ({format_formula(f.body)})"
    raise TypeError(f"unknown formula node: {f!r}")


# --------------------------------------------------------------------------
# Canonical forms and variable hygiene
# --------------------------------------------------------------------------

class FreshVars:
    """Deterministic source of fresh variables from a reserved name space."""

    def __init__(self, prefix: str = "_v", avoid: Iterable[Term] = ()) -> None:
        self._prefix = prefix
        self._n = 0
        self._avoid = {t.name for t in avoid}

    def next(self) -> Term:
        while True:
            name = f"{self._prefix}{self._n}"
            self._n += 1
            if name not in self._avoid:
                return var(name)


def _arg_sort_key(t: Term, frees: frozenset[Term], grounds: frozenset[Term]) -> tuple:
    # Existential variables compare equal at the coarse level; their names
    # are about to be rewritten.  Ground-marked existentials form their own
    # class because renaming must preserve the marking.
    if t.is_const:
        return (0, t.name)
    if t in frees:
        return (1, t.name)
    if t in grounds:
        return (2,)
    return (3,)


def canonicalize(q: CQ, ground_vars: frozenset[Term] = frozenset()) -> CQ:
    """Canonical form of a CQ.

    Atoms are deduplicated and sorted under (predicate, arity, argument
    forms); existential variables are renamed to a canonical `_c<i>`
    sequence by first occurrence (`_g<i>` for variables in `ground_vars`,
    which rewriting marks as requiring ground witnesses).  Two CQs equal up
    to existential renaming and atom reordering canonicalize identically.
    Answer terms are left untouched.
    """
    if q.is_bottom:
        return q
    frees = frozenset(t for t in q.head if t.is_var)
    grounds = frozenset(ground_vars) - frees
    atoms = sorted(set(q.atoms),
                   key=lambda a: (a.pred, a.arity,
                                  tuple(_arg_sort_key(t, frees, grounds) for t in a.args)))

    # Group atoms whose coarse keys tie; only those can swap positions.
    groups: list[list[Atom]] = []
    keys: list[tuple] = []
    for a in atoms:
        k = (a.pred, a.arity, tuple(_arg_sort_key(t, frees, grounds) for t in a.args))
        if keys and keys[-1] == k:
            groups[-1].append(a)
        else:
            groups.append([a])
            keys.append(k)

    taken = {t.name for t in frees} | {t.name for a in q.atoms for t in a.consts}

    def rename(order: tuple[Atom, ...]) -> tuple[Atom, ...]:
        mapping: Subst = {}
        counters = {"_c": 0, "_g": 0}
        out = []
        for a in order:
            new_args = []
            for t in a.args:
                if t.is_var and t not in frees:
                    if t not in mapping:
                        prefix = "_g" if t in grounds else "_c"
                        n = counters[prefix]
                        while f"{prefix}{n}" in taken:
                            n += 1
                        mapping[t] = var(f"{prefix}{n}")
                        counters[prefix] = n + 1
                    t = mapping[t]
                new_args.append(t)
            out.append(Atom(a.pred, tuple(new_args)))
        return tuple(out)

    best: Optional[tuple[Atom, ...]] = None
    for combo in itertools.product(*(itertools.permutations(g) for g in groups)):
        order = tuple(a for g in combo for a in g)
        cand = rename(order)
        if best is None or cand < best:
            best = cand
    assert best is not None
    return CQ(q.head, best)


def ground_marked_vars(q: CQ) -> frozenset[Term]:
    """Existential variables carrying the must-be-ground marking."""
    return frozenset(t for t in q.all_vars
                     if t.name.startswith("_g") and t not in set(q.free_vars))


def rename_apart(q: CQ, taken: Iterable[Term], prefix: str = "_r") -> tuple[CQ, Subst]:
    """Rename variables of `q` that collide with `taken`; returns the new CQ
    and the renaming applied."""
    taken_names = {t.name for t in taken}
    mapping: Subst = {}
    counter = 0
    for t in sorted(q.all_vars | set(q.free_vars)):
        if t.name in taken_names:
            while True:
                cand = f"{prefix}{counter}"
                counter += 1
                if cand not in taken_names:
                    break
            mapping[t] = var(cand)
            taken_names.add(cand)
    if not mapping:
        return q, {}
    return subst_cq(q, mapping), mapping


def cq_homomorphism(source: CQ, target: CQ) -> Optional[Subst]:
    """A homomorphism from `source` onto `target` preserving answer terms
    position-wise, or None.  Used for subsumption pruning: if it exists,
    every answer of `target` is an answer of `source`."""
    if source.arity != len(target.head):
        return None
    binding: Subst = {}
    for s_t, t_t in zip(source.head, target.head):
        if s_t.is_const:
            if s_t != t_t:
                return None
        else:
            if s_t in binding and binding[s_t] != t_t:
                return None
            binding[s_t] = t_t

    target_atoms = list(target.atoms)

    def extend(i: int, b: Subst) -> Optional[Subst]:
        if i == len(source.atoms):
            return b
        a = source.atoms[i]
        for cand in target_atoms:
            if cand.pred != a.pred or cand.arity != a.arity:
                continue
            nb = dict(b)
            ok = True
            for s_arg, c_arg in zip(a.args, cand.args):
                if s_arg.is_const:
                    if s_arg != c_arg:
                        ok = False
                        break
                else:
                    if s_arg in nb and nb[s_arg] != c_arg:
                        ok = False
                        break
                    nb[s_arg] = c_arg
            if ok:
                res = extend(i + 1, nb)
                if res is not None:
                    return res
        return None

    return extend(0, binding)


def prune_subsumed(disjuncts: Iterable[CQ]) -> list[CQ]:
    """Drop disjuncts homomorphically subsumed by another disjunct."""
    items = list(disjuncts)
    kept: list[CQ] = []
    for i, q in enumerate(items):
        subsumed = False
        for j, other in enumerate(items):
            if i == j:
                continue
            if cq_homomorphism(other, q) is not None:
                # Mutual subsumption keeps the canonically smaller query.
                if cq_homomorphism(q, other) is not None and (q, i) < (other, j):
                    continue
                subsumed = True
                break
        if not subsumed:
            kept.append(q)
    return kept


def signature(tbox: TBox, policy: Policy, *queries: UCQ) -> dict[str, int]:
    """Predicate-to-arity map over the given artifacts; raises on conflicts."""
    sig: dict[str, int] = {}

    def put(pred: str, arity: int, where: str) -> None:
        if sig.get(pred, arity) != arity:
            raise ValueError(f"predicate {pred} used with arities {sig[pred]} and {arity} ({where})")
        sig[pred] = arity

    for pred, arity in tbox.predicates().items():
        put(pred, arity, "tbox")
    for pred, arity in policy.predicates().items():
        put(pred, arity, "policy")
    for q in queries:
        for cq in q:
            for a in cq.atoms:
                put(a.pred, a.arity, "query")
    return sig
