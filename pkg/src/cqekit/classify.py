"""Policy classification: class flags and the dependency-graph acyclicity test.

The linear/binary flags quantify over the denial-free part of the policy:
denials never contribute rewriting rules, so they do not affect the shapes
these flags guard (and the reference fixtures mix denials into otherwise
linear policies).  Fullness is checked on every rule; a denial head has no
variables and passes trivially.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import Atom, ConceptExpr, Dependency, Policy, RoleExpr, TBox


@dataclass(frozen=True)
class PolicyClass:
    """Class flags for a policy relative to a TBox."""

    full: bool
    linear: bool
    binary: bool
    acyclic_for_tbox: bool
    expandable: bool
    cycle: tuple[str, ...] = ()

    def summary(self) -> str:
        flags = [name for name, on in [
            ("full", self.full), ("linear", self.linear), ("binary", self.binary),
            ("acyclic", self.acyclic_for_tbox), ("expandable", self.expandable)] if on]
        return ", ".join(flags) if flags else "(none)"


def binary_shape(ed: Dependency) -> Optional[tuple]:
    """Decompose a rule into its binary shape, if it has one.

    Returns ("concept", body_expr, head_expr) or ("role", body_role,
    head_role) with the usual basic concept/role expressions, or None when
    the rule is not of the restricted binary form.  Denials have no binary
    shape.
    """
    if ed.is_denial:
        return None
    if len(ed.body.atoms) != 1 or len(ed.head.atoms) != 1:
        return None
    b, h = ed.body.atoms[0], ed.head.atoms[0]
    if b.consts or h.consts:
        return None
    frees = ed.body.free_vars

    if len(frees) == 1:
        x = frees[0]

        def as_concept(a: Atom, existentials) -> Optional[ConceptExpr]:
            if a.arity == 1:
                return ConceptExpr(a.pred) if a.args[0] == x else None
            s, t = a.args
            if s == x and t != x and t in existentials:
                return ConceptExpr(a.pred, exists=True)
            if t == x and s != x and s in existentials:
                return ConceptExpr(a.pred, exists=True, inverse=True)
            return None

        bc = as_concept(b, ed.body.existential_vars)
        hc = as_concept(h, ed.head.all_vars - set(ed.head.free_vars))
        if bc is not None and hc is not None:
            return ("concept", bc, hc)
        return None

    if len(frees) == 2:
        x, y = frees
        if b.arity != 2 or h.arity != 2:
            return None
        if set(b.args) != {x, y} or set(h.args) != {x, y}:
            return None
        if b.args[0] == b.args[1] or h.args[0] == h.args[1]:
            return None
        # Orient the frame on the body atom's argument order.
        body_role = RoleExpr(b.pred)
        head_role = RoleExpr(h.pred, inverse=(h.args != b.args))
        return ("role", body_role, head_role)

    return None


def _dependency_graph(policy: Policy, tbox: TBox):
    """Edges of the predicate graph: TBox inclusions and body-to-head rule
    edges; returns (tbox_edges, policy_edges) as sets of name pairs."""

    def side_pred(side) -> str:
        return side.name

    t_edges = set()
    for ax in tbox.positive:
        t_edges.add((side_pred(ax.lhs), side_pred(ax.rhs)))
    p_edges = set()
    for ed in policy.positive:
        body_preds = {a.pred for a in ed.body.atoms}
        head_preds = {a.pred for a in ed.head.atoms}
        for u in body_preds:
            for v in head_preds:
                p_edges.add((u, v))
    return t_edges, p_edges


def _find_cycle_through(p_edge, edges) -> Optional[tuple[str, ...]]:
    """A path closing p_edge into a cycle, as a predicate tuple, or None."""
    u, v = p_edge
    # BFS from v back to u over all edges.
    parents = {v: None}
    queue = [v]
    while queue:
        node = queue.pop(0)
        if node == u:
            path = []
            while node is not None:
                path.append(node)
                node = parents[node]
            return tuple(reversed(path))
        for (a, b) in edges:
            if a == node and b not in parents:
                parents[b] = node
                queue.append(b)
    return None


def classify(policy: Policy, tbox: TBox) -> PolicyClass:
    """Compute the class flags of a policy w.r.t. a TBox.

    full: no rule head has an existential variable.  linear: every
    denial-free rule has a single-atom body.  binary: every denial-free rule
    has one of the two restricted shapes translatable to a DL-Lite axiom.
    acyclic: the TBox-edge/policy-edge predicate graph has no cycle through
    a policy edge.  expandable: linear or acyclic.
    """
    full = all(not (ed.head.all_vars - set(ed.head.free_vars)) or ed.is_denial
               for ed in policy.eds)
    positive = policy.positive
    linear = all(len(ed.body.atoms) == 1 for ed in positive)
    binary = all(binary_shape(ed) is not None for ed in positive)

    t_edges, p_edges = _dependency_graph(policy, tbox)
    all_edges = t_edges | p_edges
    cycle: tuple[str, ...] = ()
    for pe in sorted(p_edges):
        found = _find_cycle_through(pe, all_edges)
        if found is not None:
            # Render the full loop: the policy edge followed by the path back.
            cycle = (pe[0],) + found
            break
    acyclic = not cycle
    return PolicyClass(full=full, linear=linear, binary=binary,
                       acyclic_for_tbox=acyclic,
                       expandable=linear or acyclic,
                       cycle=cycle)
