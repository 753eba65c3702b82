"""Translation of safe-range formulas to plain SQL.

One table per predicate (`c1` or `c1, c2` text columns); conjunction
becomes a join, disjunction a UNION, negation a NOT EXISTS subquery, and
existential quantification a projection.  The emitted text sticks to
widely supported SQL so it can be handed to an external engine; tests
execute it on the bundled sqlite3.
"""

from __future__ import annotations

import re
import sqlite3
from dataclasses import dataclass
from typing import Optional

from .errors import SafeRangeError
from .evaluator import FactSet, _plan_and
from .model import Formula, Policy, TBox, Term, UCQ, signature
from .model import FAnd, FAtom, FEq, FExists, FFalse, FImplies, FNot, FOr, FTrue

_RESERVED = {
    "select", "from", "where", "table", "order", "group", "union", "join",
    "and", "or", "not", "in", "as", "on", "by", "values", "insert", "create",
}


def _sanitize(name: str, used: set[str]) -> str:
    out = re.sub(r"\W", "_", name)
    if not out or not (out[0].isalpha() or out[0] == "_"):
        out = "t_" + out
    if out.lower() in _RESERVED:
        out += "_t"
    base, n = out, 2
    while out.lower() in used:
        out = f"{base}_{n}"
        n += 1
    used.add(out.lower())
    return out


@dataclass
class Schema:
    """Predicate arities plus the sanitized table-name map."""

    arity: dict[str, int]
    table: dict[str, str]

    @staticmethod
    def build(tbox: Optional[TBox] = None, policy: Optional[Policy] = None,
              query: Optional[UCQ] = None, facts: Optional[FactSet] = None) -> "Schema":
        arity: dict[str, int] = {}

        def put(pred: str, a: int) -> None:
            if arity.get(pred, a) != a:
                raise ValueError(f"predicate {pred} used with two arities")
            arity[pred] = a

        if tbox is not None or policy is not None:
            queries = (query,) if query is not None else ()
            from .model import Policy as P, TBox as T
            sig = signature(tbox if tbox is not None else T(()),
                            policy if policy is not None else P(()), *queries)
            for pred, a in sig.items():
                put(pred, a)
        elif query is not None:
            for cq in query:
                for atom in cq.atoms:
                    put(atom.pred, atom.arity)
        if facts is not None:
            for pred, rows in facts.relations.items():
                for row in rows:
                    put(pred, len(row))
                    break
        used: set[str] = set()
        table = {pred: _sanitize(pred, used) for pred in sorted(arity)}
        return Schema(arity, table)

    def ddl(self) -> str:
        lines = []
        for pred in sorted(self.arity):
            tbl = self.table[pred]
            if tbl != pred:
                lines.append(f"-- predicate {pred} -> table {tbl}")
            cols = ", ".join(f"c{i + 1} TEXT NOT NULL" for i in range(self.arity[pred]))
            lines.append(f"CREATE TABLE {tbl} ({cols});")
        return "\n".join(lines) + "\n"


def _lit(value: str) -> str:
    return "'" + value.replace("'", "''") + "'"


class _Builder:
    def __init__(self, schema: Schema) -> None:
        self.schema = schema
        self.n = 0

    def alias(self, prefix: str = "t") -> str:
        self.n += 1
        return f"{prefix}{self.n}"

    # -- helpers ---------------------------------------------------------------

    def _table(self, pred: str) -> str:
        return self.schema.table.get(pred, _sanitize(pred, set(self.schema.table.values())))

    def _atom_parts(self, f: FAtom, scope: dict[Term, str]):
        """FROM item, new bindings, and conditions for one atom."""
        alias = self.alias()
        tbl = self._table(f.atom.pred)
        binds: dict[Term, str] = {}
        conds: list[str] = []
        for i, t in enumerate(f.atom.args):
            col = f"{alias}.c{i + 1}"
            if t.is_const:
                conds.append(f"{col} = {_lit(t.name)}")
            elif t in scope:
                conds.append(f"{col} = {scope[t]}")
            elif t in binds:
                conds.append(f"{col} = {binds[t]}")
            else:
                binds[t] = col
        return f"{tbl} {alias}", binds, conds

    # -- condition rendering (all free variables bound in scope) ---------------

    def condition(self, f: Formula, scope: dict[Term, str]) -> str:
        if isinstance(f, FTrue):
            return "1 = 1"
        if isinstance(f, FFalse):
            return "1 = 0"
        if isinstance(f, FEq):
            def expr(t: Term) -> str:
                return _lit(t.name) if t.is_const else scope[t]
            return f"{expr(f.left)} = {expr(f.right)}"
        if isinstance(f, FNot):
            return f"NOT ({self.condition(f.sub, scope)})"
        if isinstance(f, FImplies):
            return (f"(NOT ({self.condition(f.lhs, scope)}) "
                    f"OR ({self.condition(f.rhs, scope)}))")
        if isinstance(f, FAnd):
            return "(" + " AND ".join(self.condition(p, scope) for p in f.parts) + ")"
        if isinstance(f, FOr):
            return "(" + " OR ".join(self.condition(p, scope) for p in f.parts) + ")"
        if isinstance(f, FAtom):
            item, binds, conds = self._atom_parts(f, scope)
            where = f" WHERE {' AND '.join(conds)}" if conds else ""
            return f"EXISTS (SELECT 1 FROM {item}{where})"
        if isinstance(f, FExists):
            sql, cols = self.render(f.body, scope)
            return f"EXISTS ({sql})"
        raise TypeError(f"unknown formula node: {f!r}")

    # -- select rendering -------------------------------------------------------

    def render(self, f: Formula, outer: dict[Term, str]) -> tuple[str, dict[Term, str]]:
        """A SELECT producing one column `v_<name>` per free variable of `f`
        not bound in `outer`; bound variables become correlations."""
        new_vars = sorted(f.fv - set(outer), key=lambda t: t.name)

        if isinstance(f, FAtom):
            item, binds, conds = self._atom_parts(f, outer)
            cols = {v: f"v_{v.name}" for v in new_vars}
            select = ", ".join(f"{binds[v]} AS {cols[v]}" for v in new_vars) or "1"
            where = f" WHERE {' AND '.join(conds)}" if conds else ""
            return f"SELECT {select} FROM {item}{where}", cols

        if isinstance(f, FAnd):
            scope = dict(outer)
            from_items: list[str] = []
            wheres: list[str] = []
            for part in _plan_and(f.parts, frozenset(scope)):
                if isinstance(part, FTrue):
                    continue
                if isinstance(part, FFalse):
                    wheres.append("1 = 0")
                elif isinstance(part, FAtom):
                    item, binds, conds = self._atom_parts(part, scope)
                    from_items.append(item)
                    scope.update(binds)
                    wheres.extend(conds)
                elif isinstance(part, FEq):
                    def resolve(t: Term) -> Optional[str]:
                        if t.is_const:
                            return _lit(t.name)
                        return scope.get(t)
                    l, r = resolve(part.left), resolve(part.right)
                    if l is not None and r is not None:
                        wheres.append(f"{l} = {r}")
                    elif l is not None:
                        scope[part.right] = l
                    elif r is not None:
                        scope[part.left] = r
                    else:
                        raise SafeRangeError("equality with no bound side")
                elif isinstance(part, (FNot, FImplies)):
                    wheres.append(self.condition(part, scope))
                else:
                    need = part.fv - set(scope)
                    if need:
                        # FROM subqueries must not correlate with siblings or
                        # the enclosing scope: render them self-contained and
                        # join on all shared variables instead.
                        sub_sql, sub_cols = self.render(part, {})
                        alias = self.alias("s")
                        from_items.append(f"({sub_sql}) {alias}")
                        for v, col in sub_cols.items():
                            expr = f"{alias}.{col}"
                            if v in scope:
                                wheres.append(f"{expr} = {scope[v]}")
                            else:
                                scope[v] = expr
                    else:
                        wheres.append(self.condition(part, scope))
            cols = {v: f"v_{v.name}" for v in new_vars}
            select = ", ".join(f"{scope[v]} AS {cols[v]}" for v in new_vars) or "1"
            if not from_items:
                # Every part became a filter (all scans are inside EXISTS
                # conditions); a synthetic one-row table keeps the SQL standard.
                from_items.append("(SELECT 1 AS one) one_row")
            where = f" WHERE {' AND '.join(wheres)}" if wheres else ""
            return f"SELECT {select} FROM {', '.join(from_items)}{where}", cols

        if isinstance(f, FOr):
            cols = {v: f"v_{v.name}" for v in new_vars}
            branches = []
            for branch in f.parts:
                if not (set(new_vars) <= branch.fv):
                    raise SafeRangeError("union branch does not bind all answer columns")
                sql, sub_cols = self.render(branch, outer)
                ordered = ", ".join(sub_cols[v] for v in new_vars) or "1"
                alias = self.alias("u")
                branches.append(f"SELECT {ordered} FROM ({sql}) {alias}")
            return " UNION ".join(branches), cols

        if isinstance(f, FExists):
            sql, sub_cols = self.render(f.body, outer)
            cols = {v: sub_cols[v] for v in new_vars}
            keep = ", ".join(cols[v] for v in new_vars) or "1"
            alias = self.alias("e")
            return f"SELECT DISTINCT {keep} FROM ({sql}) {alias}", cols

        if isinstance(f, (FNot, FImplies, FEq, FTrue, FFalse)):
            raise SafeRangeError(f"{type(f).__name__} cannot generate bindings")
        raise TypeError(f"unknown formula node: {f!r}")


def fo_to_sql(phi: Formula, schema: Schema,
              free_order: tuple[Term, ...] | None = None) -> str:
    """Standard SQL equivalent of a safe-range formula.

    Sentences yield a one-row, one-column result (1 or 0); open formulas
    yield the distinct answer tuples with columns named after the answer
    variables."""
    from .evaluator import check_safe_range
    check_safe_range(phi)
    b = _Builder(schema)
    if free_order:
        if phi.fv - set(free_order):
            raise SafeRangeError("answer order does not cover all free variables")
        if isinstance(phi, FFalse):
            cols = ", ".join(f"'' AS {v.name}" for v in free_order)
            return f"SELECT {cols} FROM (SELECT 1 AS one) d WHERE 1 = 0"
        if set(free_order) - phi.fv:
            raise SafeRangeError("formula does not constrain all answer variables")
        sql, cols = b.render(phi, {})
        outer = ", ".join(f"q.{cols[v]} AS {v.name}" for v in free_order)
        return f"SELECT DISTINCT {outer} FROM ({sql}) q"
    if phi.fv:
        raise SafeRangeError("open formula needs the answer-variable order")
    return f"SELECT CASE WHEN {b.condition(phi, {})} THEN 1 ELSE 0 END AS result"


def run_sql(sql: str, schema: Schema, facts: FactSet):
    """Execute emitted SQL on an in-memory sqlite database loaded with the
    facts; returns a truth value or the set of answer tuples."""
    con = sqlite3.connect(":memory:")
    try:
        for stmt in schema.ddl().splitlines():
            if stmt and not stmt.startswith("--"):
                con.execute(stmt)
        for pred, rows in sorted(facts.relations.items()):
            tbl = schema.table.get(pred)
            if tbl is None:
                continue
            width = schema.arity[pred]
            marks = ", ".join("?" * width) if width == 1 else ", ".join(["?"] * width)
            con.executemany(f"INSERT INTO {tbl} VALUES ({marks})", sorted(rows))
        cur = con.execute(sql)
        rows = cur.fetchall()
        names = [d[0] for d in cur.description]
        if names == ["result"]:
            return bool(rows[0][0])
        return frozenset(tuple(str(v) for v in row) for row in rows)
    finally:
        con.close()
