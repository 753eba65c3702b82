"""ABox storage and in-memory evaluation of the rewriter's formulas.

Evaluation is plan-based: conjunctions are ordered so that positive parts
bind variables before equalities extend them and negated parts filter them.
The same planner doubles as the safe-range checker, so a formula that
cannot be evaluated in a domain-independent way is rejected up front.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, Optional

from .errors import InconsistentInstanceError, SafeRangeError
from .model import (
    CQ, UCQ, Atom, Formula, Policy, Subst, TBox, Term, const,
)
from .model import FAnd, FAtom, FEq, FExists, FFalse, FImplies, FNot, FOr, FTrue
from .syntax import ParseError, parse_fact_line


@dataclass(frozen=True)
class FactSet:
    """Per-predicate relations of constant tuples, with set semantics."""

    relations: dict[str, frozenset[tuple[str, ...]]]

    @staticmethod
    def from_atoms(atoms: Iterable[Atom]) -> "FactSet":
        rels: dict[str, set[tuple[str, ...]]] = {}
        for a in atoms:
            if not a.is_ground:
                raise ValueError(f"fact must be ground: {a}")
            row = tuple(t.name for t in a.args)
            existing = rels.setdefault(a.pred, set())
            for other in existing:
                if len(other) != len(row):
                    raise ValueError(f"predicate {a.pred} used with mixed arities")
                break
            existing.add(row)
        return FactSet({p: frozenset(rows) for p, rows in rels.items()})

    def atoms(self) -> Iterator[Atom]:
        for pred in sorted(self.relations):
            for row in sorted(self.relations[pred]):
                yield Atom(pred, tuple(const(c) for c in row))

    def rows(self, pred: str) -> frozenset[tuple[str, ...]]:
        return self.relations.get(pred, frozenset())

    def arity(self, pred: str) -> Optional[int]:
        rows = self.relations.get(pred)
        if not rows:
            return None
        return len(next(iter(rows)))

    @property
    def active_domain(self) -> frozenset[str]:
        return frozenset(c for rows in self.relations.values() for row in rows for c in row)

    def counts(self) -> dict[str, int]:
        return {p: len(rows) for p, rows in sorted(self.relations.items())}

    def __len__(self) -> int:
        return sum(len(rows) for rows in self.relations.values())

    def __contains__(self, a: Atom) -> bool:
        return tuple(t.name for t in a.args) in self.relations.get(a.pred, frozenset())

    # -- conjunctive matching ------------------------------------------------

    def _match_atoms(self, atoms: tuple[Atom, ...], env: dict[Term, str]
                     ) -> Iterator[dict[Term, str]]:
        if not atoms:
            yield env
            return
        # Most-bound atom first keeps the search narrow.
        def boundness(a: Atom) -> int:
            return sum(1 for t in a.args if t.is_const or t in env)

        ordered = sorted(range(len(atoms)), key=lambda i: (-boundness(atoms[i]), i))
        first = atoms[ordered[0]]
        rest = tuple(atoms[i] for i in ordered[1:])
        for row in sorted(self.rows(first.pred)):
            if len(row) != first.arity:
                continue
            new_env = dict(env)
            ok = True
            for t, value in zip(first.args, row):
                if t.is_const:
                    if t.name != value:
                        ok = False
                        break
                elif new_env.get(t, value) != value:
                    ok = False
                    break
                else:
                    new_env[t] = value
            if ok:
                yield from self._match_atoms(rest, new_env)

    def cq_answers(self, q: CQ) -> frozenset[tuple[str, ...]] | bool:
        """Answer tuples of a CQ under image semantics; a truth value for
        Boolean queries."""
        if q.is_bottom:
            return False
        if q.is_boolean:
            return next(iter(self._match_atoms(q.atoms, {})), None) is not None
        out = set()
        for env in self._match_atoms(q.atoms, {}):
            out.add(tuple(env[t] if t.is_var else t.name for t in q.head))
        return frozenset(out)

    def first_image(self, q: CQ) -> Optional[frozenset[Atom]]:
        """One image of `q` in this fact set, or None."""
        for env in self._match_atoms(q.atoms, {}):
            sub: Subst = {t: const(v) for t, v in env.items()}
            from .model import subst_atom
            return frozenset(subst_atom(a, sub) for a in q.atoms)
        return None


@dataclass(frozen=True)
class CQEInstance:
    """The triple a query is answered against: TBox, policy, fact store."""

    tbox: TBox
    policy: Policy
    abox: FactSet

    def validated(self) -> "CQEInstance":
        from .dllite import check_consistency
        report = check_consistency(self.tbox, self.abox)
        if not report.consistent:
            raise InconsistentInstanceError(report.violations)
        return self


def load_abox(source: str | Path) -> FactSet:
    """Load facts from a directory of per-predicate CSV files or from a
    single text file of `p(a,b).` lines."""
    path = Path(source)
    atoms: list[Atom] = []
    if path.is_dir():
        for child in sorted(path.iterdir()):
            if child.suffix.lower() != ".csv":
                continue
            pred = child.stem
            with open(child, newline="") as fh:
                for i, row in enumerate(csv.reader(fh), start=1):
                    if not row or all(not cell.strip() for cell in row):
                        continue
                    cells = [cell.strip() for cell in row]
                    if len(cells) not in (1, 2):
                        raise ParseError(f"{pred}: expected 1 or 2 columns, got {len(cells)}",
                                         i, 1, str(child))
                    if any(not cell for cell in cells):
                        raise ParseError(f"{pred}: empty cell", i, 1, str(child))
                    atoms.append(Atom(pred, tuple(const(c) for c in cells)))
    elif path.is_file():
        with open(path) as fh:
            for i, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if line:
                    atoms.append(parse_fact_line(line, i, str(path)))
    else:
        raise FileNotFoundError(f"no such ABox source: {source}")
    try:
        return FactSet.from_atoms(atoms)
    except ValueError as exc:
        raise ParseError(str(exc), source=str(source)) from exc


def load_abox_text(text: str) -> FactSet:
    atoms = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            atoms.append(parse_fact_line(line, i, "abox"))
    return FactSet.from_atoms(atoms)


# --------------------------------------------------------------------------
# Formula evaluation
# --------------------------------------------------------------------------

def _plan_and(parts: tuple[Formula, ...], bound: frozenset[Term]) -> list[Formula]:
    """Order conjunction parts so every part is evaluable when reached.

    Raises SafeRangeError when no ordering works.
    """
    remaining = list(parts)
    ordered: list[Formula] = []
    known = set(bound)
    while remaining:
        pick = None
        for p in remaining:
            if isinstance(p, FEq):
                det = sum(1 for t in (p.left, p.right) if t.is_const or t in known)
                if det >= 1:
                    pick = p
                    break
            elif isinstance(p, (FNot, FImplies)):
                if p.fv <= known:
                    pick = p
                    break
        if pick is None:
            generators = [p for p in remaining
                          if isinstance(p, (FAtom, FTrue, FFalse, FAnd, FOr, FExists))]
            # Among generators prefer atoms with most bound arguments.
            def gen_key(p: Formula):
                if isinstance(p, FAtom):
                    return (0, -sum(1 for t in p.atom.args if t.is_const or t in known))
                return (1, 0)

            for p in sorted(generators, key=gen_key):
                if isinstance(p, FOr):
                    need = p.fv - known
                    if all(need <= branch.fv for branch in p.parts):
                        pick = p
                        break
                else:
                    pick = p
                    break
        if pick is None:
            missing = sorted({t.name for p in remaining for t in p.fv if t not in known})
            raise SafeRangeError(f"cannot bind variables {', '.join(missing)}")
        remaining.remove(pick)
        ordered.append(pick)
        known |= pick.fv
    return ordered


def check_safe_range(phi: Formula, bound: frozenset[Term] = frozenset()) -> None:
    """Reject formulas that cannot be evaluated under active-domain
    semantics; every variable must be bound by a positive part in scope."""
    if isinstance(phi, (FTrue, FFalse, FAtom)):
        return
    if isinstance(phi, FEq):
        if not any(t.is_const or t in bound for t in (phi.left, phi.right)):
            raise SafeRangeError(f"free-floating equality {phi.left} = {phi.right}")
        return
    if isinstance(phi, FNot):
        if not phi.fv <= bound:
            missing = sorted(t.name for t in phi.fv - bound)
            raise SafeRangeError(f"negation over unbound variables {', '.join(missing)}")
        check_safe_range(phi.sub, bound)
        return
    if isinstance(phi, FImplies):
        if not phi.fv <= bound:
            missing = sorted(t.name for t in phi.fv - bound)
            raise SafeRangeError(f"implication over unbound variables {', '.join(missing)}")
        check_safe_range(phi.lhs, bound)
        check_safe_range(phi.rhs, bound)
        return
    if isinstance(phi, FAnd):
        for p in _plan_and(phi.parts, bound):
            check_safe_range(p, bound)
            bound = bound | p.fv
        return
    if isinstance(phi, FOr):
        for p in phi.parts:
            check_safe_range(p, bound)
        return
    if isinstance(phi, FExists):
        clash = set(phi.vars) & bound
        if clash:
            names = ", ".join(sorted(t.name for t in clash))
            raise SafeRangeError(f"quantified variables shadow outer ones: {names}")
        inner = check_safe_range(phi.body, bound)
        # The quantified variables must be bound somewhere inside.
        plan_bound = _bound_by(phi.body, bound)
        missing = set(phi.vars) - plan_bound
        if missing:
            names = ", ".join(sorted(t.name for t in missing))
            raise SafeRangeError(f"existential variables never bound: {names}")
        return inner
    raise TypeError(f"unknown formula node: {phi!r}")


def _bound_by(phi: Formula, bound: frozenset[Term]) -> frozenset[Term]:
    """Variables guaranteed bound after evaluating `phi` as a generator."""
    if isinstance(phi, FAtom):
        return bound | phi.fv
    if isinstance(phi, FEq):
        det = [t for t in (phi.left, phi.right) if t.is_const or t in bound]
        if det:
            return bound | phi.fv
        return bound
    if isinstance(phi, FAnd):
        out = bound
        for p in _plan_and(phi.parts, bound):
            out = _bound_by(p, out)
        return out
    if isinstance(phi, FOr):
        branches = [_bound_by(p, bound) for p in phi.parts]
        return frozenset.intersection(*branches) if branches else bound
    if isinstance(phi, FExists):
        return _bound_by(phi.body, bound) - set(phi.vars)
    return bound


class Evaluator:
    """Evaluates safe-range formulas over one fact set, with memoization of
    closed subformula checks, per-predicate indexes, and plan caching."""

    def __init__(self, facts: FactSet) -> None:
        self.facts = facts
        self._memo: dict[tuple[int, tuple[tuple[str, str], ...]], bool] = {}
        self._rows: dict[str, tuple[tuple[str, ...], ...]] = {}
        self._index: dict[tuple[str, int, str], tuple[tuple[str, ...], ...]] = {}
        self._plans: dict[tuple[int, frozenset[Term]], list[Formula]] = {}

    def _sorted_rows(self, pred: str) -> tuple[tuple[str, ...], ...]:
        rows = self._rows.get(pred)
        if rows is None:
            rows = tuple(sorted(self.facts.rows(pred)))
            self._rows[pred] = rows
        return rows

    def _rows_matching(self, pred: str, pos: int, value: str) -> tuple[tuple[str, ...], ...]:
        key = (pred, pos, value)
        rows = self._index.get(key)
        if rows is None:
            if len(self._index) > 200_000:
                self._index.clear()
            rows = tuple(r for r in self._sorted_rows(pred)
                         if len(r) > pos and r[pos] == value)
            self._index[key] = rows
        return rows

    def _plan(self, phi: FAnd, env: dict[Term, str]) -> list[Formula]:
        bound = frozenset(t for t in phi.fv if t in env)
        key = (id(phi), bound)
        plan = self._plans.get(key)
        if plan is None:
            plan = _plan_and(phi.parts, bound)
            self._plans[key] = plan
        return plan

    def truth(self, phi: Formula) -> bool:
        if phi.fv:
            raise SafeRangeError("truth() expects a sentence")
        check_safe_range(phi)
        return self._holds(phi, {})

    def answers(self, phi: Formula, free_order: tuple[Term, ...]) -> frozenset[tuple[str, ...]]:
        if phi.fv - set(free_order):
            raise SafeRangeError("answer order does not cover all free variables")
        # Constant folding can eliminate answer variables entirely; that is
        # only sound when the formula is unsatisfiable.
        missing = set(free_order) - phi.fv
        check_safe_range(phi)
        out = set()
        for env in self._solve(phi, {}):
            if missing:
                raise SafeRangeError("formula does not constrain all answer variables")
            out.add(tuple(env[t] for t in free_order))
        return frozenset(out)

    # -- internals -----------------------------------------------------------

    def _holds(self, phi: Formula, env: dict[Term, str]) -> bool:
        key = (id(phi), tuple(sorted((t.name, env[t]) for t in phi.fv)))
        cached = self._memo.get(key)
        if cached is not None:
            return cached
        result = next(iter(self._solve(phi, {t: env[t] for t in phi.fv})), None) is not None
        self._memo[key] = result
        return result

    def _solve(self, phi: Formula, env: dict[Term, str]) -> Iterator[dict[Term, str]]:
        if isinstance(phi, FTrue):
            yield env
            return
        if isinstance(phi, FFalse):
            return
        if isinstance(phi, FAtom):
            a = phi.atom
            rows = None
            for pos, t in enumerate(a.args):
                value = t.name if t.is_const else env.get(t)
                if value is not None:
                    rows = self._rows_matching(a.pred, pos, value)
                    break
            if rows is None:
                rows = self._sorted_rows(a.pred)
            for row in rows:
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
                if ok:
                    yield new_env
            return
        if isinstance(phi, FEq):
            lval = phi.left.name if phi.left.is_const else env.get(phi.left)
            rval = phi.right.name if phi.right.is_const else env.get(phi.right)
            if lval is not None and rval is not None:
                if lval == rval:
                    yield env
            elif lval is not None:
                yield {**env, phi.right: lval}
            elif rval is not None:
                yield {**env, phi.left: rval}
            else:
                raise SafeRangeError(f"free-floating equality {phi.left} = {phi.right}")
            return
        if isinstance(phi, FNot):
            if not self._holds(phi.sub, env):
                yield env
            return
        if isinstance(phi, FImplies):
            if not self._holds(phi.lhs, env) or self._holds(phi.rhs, env):
                yield env
            return
        if isinstance(phi, FAnd):
            plan = self._plan(phi, env)
            def fold(i: int, e: dict[Term, str]) -> Iterator[dict[Term, str]]:
                if i == len(plan):
                    yield e
                    return
                for e2 in self._solve(plan[i], e):
                    yield from fold(i + 1, e2)
            yield from fold(0, env)
            return
        if isinstance(phi, FOr):
            seen: set[tuple] = set()
            new_vars = sorted(phi.fv - set(env))
            for branch in phi.parts:
                for e in self._solve(branch, env):
                    key = tuple(e.get(v) for v in new_vars)
                    if key not in seen:
                        seen.add(key)
                        yield e
            return
        if isinstance(phi, FExists):
            seen = set()
            keep = [t for t in phi.fv]
            for e in self._solve(phi.body, env):
                projected = {t: v for t, v in e.items() if t not in phi.vars}
                key = tuple(sorted((t.name, v) for t, v in projected.items()))
                if key not in seen:
                    seen.add(key)
                    yield projected
            return
        raise TypeError(f"unknown formula node: {phi!r}")


def eval_fo(phi: Formula, facts: FactSet,
            free_order: tuple[Term, ...] | None = None):
    """Evaluate a safe-range formula over a fact set.

    Sentences yield a truth value; open formulas yield the set of
    active-domain tuples for `free_order` (which must cover the free
    variables).  Negation is absence over the facts; equality compares
    constants syntactically.
    """
    ev = Evaluator(facts)
    if free_order is not None:
        return ev.answers(phi, free_order)
    if phi.fv:
        raise SafeRangeError("open formula needs an explicit answer-variable order")
    return ev.truth(phi)


# --------------------------------------------------------------------------
# End-to-end answering
# --------------------------------------------------------------------------

@dataclass
class AnswerResult:
    """Outcome of the classify/expand/rewrite/evaluate pipeline."""

    boolean: Optional[bool]
    tuples: Optional[frozenset[tuple[str, ...]]]
    count: int
    t_rewrite_ms: float
    t_eval_ms: float
    rewrite_report: "object"
    warnings: tuple[str, ...] = ()

    @property
    def verdict(self) -> str:
        if self.boolean is not None:
            return "ENTAILED" if self.boolean else "NOT ENTAILED"
        return f"{self.count} tuple(s)"


def answer(query: UCQ, tbox: TBox, policy: Policy, facts: FactSet,
           backend: str = "memory", options=None,
           sql_out: Optional[Path] = None) -> AnswerResult:
    """Answer a query against a consistent instance under the intersection
    semantics, via the first-order rewriting."""
    from .rewriter import iga_rewrite

    warnings = []
    known = set()
    for p in (tbox.predicates(), policy.predicates()):
        known |= set(p)
    known |= set(facts.relations)
    for cq in query:
        for a in cq.atoms:
            if a.pred not in known:
                warnings.append(f"unknown predicate {a.pred}: empty extension assumed")

    t0 = time.perf_counter()
    compiled = iga_rewrite(query, tbox, policy, options=options)
    t_rewrite = (time.perf_counter() - t0) * 1000.0

    free_order = query.disjuncts[0].free_vars
    t1 = time.perf_counter()
    if backend == "memory":
        result = eval_fo(compiled.formula, facts,
                         free_order if free_order else None)
    elif backend == "sql-emit":
        from .sqlgen import Schema, fo_to_sql, run_sql
        schema = Schema.build(tbox, policy, query, facts)
        sql = fo_to_sql(compiled.formula, schema,
                        free_order if free_order else None)
        if sql_out is not None:
            sql_out.mkdir(parents=True, exist_ok=True)
            (sql_out / "query.sql").write_text(sql + "\n")
            (sql_out / "schema.sql").write_text(schema.ddl())
        result = run_sql(sql, schema, facts)
    else:
        raise ValueError(f"unknown backend: {backend}")
    t_eval = (time.perf_counter() - t1) * 1000.0

    if isinstance(result, bool):
        return AnswerResult(result, None, 1 if result else 0,
                            t_rewrite, t_eval, compiled.report, tuple(warnings))
    return AnswerResult(None, result, len(result),
                        t_rewrite, t_eval, compiled.report, tuple(warnings))
