"""Text formats for the four input artifacts and their serializers.

TBox file   one axiom per line:  `EX managerOf ISA manager`,
            `manager ISA EX respDept`, `A DISJ B`, `R- ISA S`.
Policy file one rule per line:   `[FORALL x,y:] BODY p(x,y), q(y) HEAD r(x) | BOT`.
Query file  one query:           `Q(x) :- p(x,y), q(y) | r(x)`.
ABox        either a directory of per-predicate CSV files (1 or 2 columns)
            or a single text file of `p(a,b).` lines.

Lexical convention: variables start with a lowercase letter, '_' or '?';
constants are quoted ('...' or "...") or start with a digit or an uppercase
letter.  Comments start with '#'.
"""

from __future__ import annotations

import re

from .model import (
    CQ, UCQ, Atom, Axiom, BOTTOM, ConceptExpr, Dependency, Policy, RoleExpr,
    Subst, TBox, Term, const, subst_cq, var,
)


class ParseError(ValueError):
    """Syntax or well-formedness error, with position information."""

    def __init__(self, message: str, line: int = 0, col: int = 0, source: str = "") -> None:
        where = f"{source or 'input'}:{line}" + (f":{col}" if col else "")
        super().__init__(f"{where}: {message}")
        self.line = line
        self.col = col
        self.source = source


_QUOTED_RE = re.compile(r"""^(?:'([^']*)'|"([^"]*)")$""")
_ATOM_RE = re.compile(r"\s*([A-Za-z_][\w]*)\s*\(([^()]*)\)\s*")


def parse_term(token: str, line: int = 0, col: int = 0, source: str = "") -> Term:
    token = token.strip()
    if not token:
        raise ParseError("empty term", line, col, source)
    m = _QUOTED_RE.match(token)
    if m:
        name = m.group(1) if m.group(1) is not None else m.group(2)
        if not name:
            raise ParseError("empty quoted constant", line, col, source)
        return const(name)
    head = token[0]
    if head.isdigit() or head.isupper():
        return const(token)
    if head.islower() or head in "_?":
        name = token[1:] if head == "?" else token
        if not re.fullmatch(r"[\w]+", name):
            raise ParseError(f"bad variable name {token!r}", line, col, source)
        return Term("var", name)
    raise ParseError(f"cannot classify term {token!r}", line, col, source)


def format_term(t: Term) -> str:
    if t.is_var:
        return t.name
    if re.fullmatch(r"[0-9A-Z][\w]*", t.name):
        return t.name
    return "'" + t.name + "'"


def format_atom(a: Atom) -> str:
    return f"{a.pred}({','.join(format_term(t) for t in a.args)})"


def parse_atoms(text: str, line: int = 0, source: str = "") -> list[Atom]:
    """Parse a comma-separated atom list like `p(x,y), q(y)`."""
    atoms: list[Atom] = []
    pos = 0
    while pos < len(text):
        m = _ATOM_RE.match(text, pos)
        if not m:
            raise ParseError(f"expected an atom at {text[pos:].strip()!r}", line, pos + 1, source)
        pred, argtext = m.group(1), m.group(2)
        args = [parse_term(tok, line, m.start(2) + 1, source) for tok in argtext.split(",")]
        try:
            atoms.append(Atom(pred, tuple(args)))
        except ValueError as exc:
            raise ParseError(str(exc), line, m.start(1) + 1, source) from exc
        pos = m.end()
        if pos < len(text):
            if text[pos] != ",":
                raise ParseError(f"expected ',' at {text[pos:].strip()!r}", line, pos + 1, source)
            pos += 1
    if not atoms:
        raise ParseError("empty atom list", line, 1, source)
    return atoms


def _content_lines(text: str) -> list[tuple[int, str]]:
    out = []
    for i, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append((i, line))
    return out


# --------------------------------------------------------------------------
# TBox
# --------------------------------------------------------------------------

_SIDE_RE = re.compile(r"^(EX\s+)?([A-Za-z_][\w]*)(-)?$")


def _parse_side(text: str, line: int, source: str):
    m = _SIDE_RE.match(text.strip())
    if not m:
        raise ParseError(f"bad axiom side {text.strip()!r}", line, 1, source)
    is_exists, name, is_inv = bool(m.group(1)), m.group(2), bool(m.group(3))
    if is_exists:
        return ConceptExpr(name, exists=True, inverse=is_inv)
    if is_inv:
        return RoleExpr(name, inverse=True)
    return name  # bare name: concept or role, resolved later


def parse_tbox(text: str, arity_hints: dict[str, int] | None = None,
               source: str = "tbox") -> TBox:
    """Parse a TBox file.

    Bare names on both sides of an inclusion are read as concepts unless the
    predicate is known to be binary, either from an `EX p` / `p-` occurrence
    elsewhere in the file or from the supplied arity hints (collected from
    the policy, query and ABox when artifacts are parsed together).
    """
    hints = dict(arity_hints or {})
    lines = _content_lines(text)

    # First pass: every EX/e inverse occurrence marks its name as a role.
    for line_no, line in lines:
        for m in re.finditer(r"EX\s+([A-Za-z_][\w]*)|([A-Za-z_][\w]*)-(?:\s|$)", line):
            name = m.group(1) or m.group(2)
            if hints.get(name, 2) != 2:
                raise ParseError(f"{name} used both as concept and role", line_no, 1, source)
            hints[name] = 2

    axioms = []
    for line_no, line in lines:
        m = re.match(r"^(.*?)\s+(ISA|DISJ)\s+(.*)$", line)
        if not m:
            raise ParseError("expected `<side> ISA|DISJ <side>`", line_no, 1, source)
        lhs = _parse_side(m.group(1), line_no, source)
        rhs = _parse_side(m.group(3), line_no, source)
        negative = m.group(2) == "DISJ"

        def resolve(side, other):
            if not isinstance(side, str):
                return side
            arity = hints.get(side)
            if arity == 2 or isinstance(other, RoleExpr):
                return RoleExpr(side)
            return ConceptExpr(side)

        lhs_r = resolve(lhs, rhs)
        rhs_r = resolve(rhs, lhs_r)
        lhs_r = resolve(lhs, rhs_r)
        try:
            axioms.append(Axiom(lhs_r, rhs_r, negative=negative))
        except ValueError as exc:
            raise ParseError(str(exc), line_no, 1, source) from exc

    tbox = TBox(tuple(axioms))
    for pred, arity in tbox.predicates().items():
        if hints.get(pred, arity) != arity:
            raise ParseError(
                f"predicate {pred} has arity {hints[pred]} elsewhere but {arity} in the TBox",
                source=source)
    return tbox


def serialize_tbox(tbox: TBox) -> str:
    return "".join(str(ax) + "\n" for ax in tbox.axioms)


# --------------------------------------------------------------------------
# Policy
# --------------------------------------------------------------------------

_ED_RE = re.compile(r"^(?:FORALL\s+(?P<forall>[^:]*):\s*)?BODY\s+(?P<body>.*?)\s+HEAD\s+(?P<head>.*)$")


def _parse_ed(line: str, line_no: int, source: str) -> Dependency:
    m = _ED_RE.match(line)
    if not m:
        raise ParseError("expected `[FORALL vars:] BODY <atoms> HEAD <atoms|BOT>`",
                         line_no, 1, source)
    body_atoms = parse_atoms(m.group("body"), line_no, source)
    head_text = m.group("head").strip()
    head_atoms = None if head_text == "BOT" else parse_atoms(head_text, line_no, source)

    body_vars = {t for a in body_atoms for t in a.vars}
    head_vars = set() if head_atoms is None else {t for a in head_atoms for t in a.vars}

    if m.group("forall") is not None:
        universals: list[Term] = []
        for tok in m.group("forall").split(","):
            t = parse_term(tok, line_no, 1, source)
            if not t.is_var:
                raise ParseError(f"FORALL expects variables, got {tok.strip()!r}", line_no, 1, source)
            if t not in body_vars:
                if t in head_vars:
                    raise ParseError(f"head variable {t} does not occur in the body",
                                     line_no, 1, source)
                raise ParseError(f"FORALL variable {t} does not occur in the body",
                                 line_no, 1, source)
            if t not in universals:
                universals.append(t)
        shared = body_vars & head_vars
        missing = shared - set(universals)
        if missing:
            names = ", ".join(sorted(t.name for t in missing))
            raise ParseError(
                f"variables {names} are shared between body and head but not listed in FORALL",
                line_no, 1, source)
    else:
        universals = [t for t in _first_occurrence(body_atoms) if t in head_vars]

    body = CQ(tuple(universals), tuple(body_atoms))
    if head_atoms is None:
        head = BOTTOM
    else:
        head_frees = tuple(t for t in universals if t in head_vars)
        # Head existentials live in their own scope; keep them apart from
        # body variable names so the printed form parses back unchanged.
        head = CQ(head_frees, tuple(head_atoms))
        clash = (head.all_vars - set(head_frees)) & body_vars
        if clash:
            renaming: Subst = {}
            taken = {t.name for t in body_vars | head.all_vars}
            n = 0
            for t in sorted(clash):
                while f"{t.name}_{n}" in taken:
                    n += 1
                renaming[t] = var(f"{t.name}_{n}")
                taken.add(f"{t.name}_{n}")
            head = subst_cq(head, renaming)
    try:
        return Dependency(body, head)
    except ValueError as exc:
        raise ParseError(str(exc), line_no, 1, source) from exc


def _first_occurrence(atoms: list[Atom]) -> list[Term]:
    seen: dict[Term, None] = {}
    for a in atoms:
        for t in a.vars:
            seen.setdefault(t)
    return list(seen)


def parse_policy(text: str, source: str = "policy") -> Policy:
    """Parse a policy file; rules are standardized apart (no shared variables
    across distinct rules)."""
    eds = []
    taken: set[str] = set()
    for line_no, line in _content_lines(text):
        ed = _parse_ed(line, line_no, source)
        overlap = sorted(t for t in ed.all_vars if t.name in taken)
        if overlap:
            renaming: Subst = {}
            for t in overlap:
                n = 0
                while f"{t.name}_{n}" in taken:
                    n += 1
                renaming[t] = var(f"{t.name}_{n}")
                taken.add(f"{t.name}_{n}")
            ed = Dependency(subst_cq(ed.body, renaming), subst_cq(ed.head, renaming))
        taken |= {t.name for t in ed.all_vars}
        eds.append(ed)
    return Policy(tuple(eds))


def serialize_ed(ed: Dependency) -> str:
    body = ", ".join(format_atom(a) for a in ed.body.atoms)
    head = "BOT" if ed.is_denial else ", ".join(format_atom(a) for a in ed.head.atoms)
    universals = ed.body.free_vars
    prefix = f"FORALL {','.join(t.name for t in universals)}: " if universals else ""
    return f"{prefix}BODY {body} HEAD {head}"


def serialize_policy(policy: Policy) -> str:
    return "".join(serialize_ed(ed) + "\n" for ed in policy.eds)


# --------------------------------------------------------------------------
# Queries
# --------------------------------------------------------------------------

_QUERY_RE = re.compile(r"^([A-Za-z_][\w]*)\s*\(([^()]*)\)\s*:-\s*(.*)$")


def parse_query(text: str, source: str = "query") -> UCQ:
    lines = _content_lines(text)
    if len(lines) != 1:
        raise ParseError(f"expected exactly one query, found {len(lines)} lines", source=source)
    line_no, line = lines[0]
    m = _QUERY_RE.match(line)
    if not m:
        raise ParseError("expected `Q(<vars>) :- <atoms> | <atoms> | ...`", line_no, 1, source)
    head_text = m.group(2).strip()
    answer_vars: list[Term] = []
    if head_text:
        for tok in head_text.split(","):
            t = parse_term(tok, line_no, 1, source)
            if not t.is_var:
                raise ParseError("answer positions must be variables", line_no, 1, source)
            if t in answer_vars:
                raise ParseError(f"duplicate answer variable {t}", line_no, 1, source)
            answer_vars.append(t)
    disjuncts = []
    for part in m.group(3).split("|"):
        atoms = parse_atoms(part.strip(), line_no, source)
        try:
            disjuncts.append(CQ(tuple(answer_vars), tuple(atoms)))
        except ValueError as exc:
            raise ParseError(str(exc), line_no, 1, source) from exc
    return UCQ(tuple(disjuncts))


def serialize_query(q: UCQ, name: str = "Q") -> str:
    first = q.disjuncts[0]
    head = ",".join(format_term(t) for t in first.head)
    parts = [", ".join(format_atom(a) for a in cq.atoms) for cq in q.disjuncts]
    return f"{name}({head}) :- " + " | ".join(parts) + "\n"


# --------------------------------------------------------------------------
# Facts
# --------------------------------------------------------------------------

_FACT_RE = re.compile(r"^([A-Za-z_][\w]*)\s*\(([^()]*)\)\s*\.?$")


def parse_fact_line(line: str, line_no: int = 0, source: str = "abox") -> Atom:
    """Parse one `p(a,b).` line; every argument is a constant."""
    m = _FACT_RE.match(line.strip())
    if not m:
        raise ParseError(f"bad fact {line.strip()!r}", line_no, 1, source)
    args = []
    for tok in m.group(2).split(","):
        tok = tok.strip()
        qm = _QUOTED_RE.match(tok)
        if qm:
            name = qm.group(1) if qm.group(1) is not None else qm.group(2)
        else:
            name = tok
        if not name:
            raise ParseError("empty constant in fact", line_no, 1, source)
        args.append(const(name))
    try:
        return Atom(m.group(1), tuple(args))
    except ValueError as exc:
        raise ParseError(str(exc), line_no, 1, source) from exc


def serialize_fact(a: Atom) -> str:
    return f"{a.pred}({','.join(format_term(t) for t in a.args)})."
