"""Policy-aware query answering over DL-Lite ontologies.

The package compiles queries, protected by disclosure policies, into
first-order formulas (or SQL) evaluable directly over the fact store, and
ships a brute-force oracle implementing the same semantics by enumeration
for differential testing.
"""

from .classify import PolicyClass, classify
from .dllite import (
    TGD, atom_rewrite, check_consistency, closure, dl_translate, policy_dl,
    tbox_to_tgds, ucq_rewrite,
)
from .errors import (
    DepthCapError, GuardError, InconsistentInstanceError, OracleCapError,
    SafeRangeError,
)
from .evaluator import AnswerResult, CQEInstance, FactSet, answer, eval_fo, load_abox
from .model import (
    CQ, UCQ, Atom, Axiom, BOTTOM, ConceptExpr, Dependency, Formula, Policy,
    RoleExpr, TBox, Term, canonicalize, const, signature, subst_formula, var,
)
from .oracle import (
    Oracle, bounded_chase, cq_entails, disclosable_oracle, eql_satisfies,
    ground_closure, iga_oracle, optimal_censors, skeptical_oracle,
)
from .rewriter import (
    CompiledQuery, RewriteOptions, RewriteReport, atoms_template, clash,
    iga_rewrite, is_discl, map_substs,
)
from .sqlgen import Schema, fo_to_sql, run_sql
from .syntax import (
    ParseError, parse_policy, parse_query, parse_tbox, serialize_policy,
    serialize_query, serialize_tbox,
)
from .tgd import TGDSet, build_sigma, policy_expand, policy_to_tgds, ucq_rewrite_tgds

__version__ = "0.1.0"


def parse_artifacts(tbox_text: str, policy_text: str, query_text: str,
                    abox_source):
    """Parse the four input artifacts together.

    The policy, query and ABox are parsed first so their predicate arities
    disambiguate bare names in the TBox; the combined signature is checked
    for arity clashes.
    """
    from .evaluator import load_abox as _load
    from .model import signature
    from pathlib import Path

    policy = parse_policy(policy_text)
    query = parse_query(query_text)
    if isinstance(abox_source, FactSet):
        facts = abox_source
    else:
        facts = _load(Path(abox_source))
    hints: dict[str, int] = {}
    for pred, arity in policy.predicates().items():
        hints[pred] = arity
    for cq in query:
        for a in cq.atoms:
            hints[a.pred] = a.arity
    for pred in facts.relations:
        hints[pred] = facts.arity(pred)
    tbox = parse_tbox(tbox_text, hints)
    signature(tbox, policy, query)  # raises on arity clashes
    return tbox, policy, query, facts
