"""Exception types shared across the engine, mapped to CLI exit codes."""

from __future__ import annotations


class GuardError(Exception):
    """A precondition on the policy class failed (not full / not expandable)."""


class DepthCapError(GuardError):
    """Backward rewriting exceeded its step cap; names the offending predicates."""

    def __init__(self, depth: int, predicates: list[str]) -> None:
        preds = ", ".join(sorted(set(predicates)))
        super().__init__(f"rewriting did not reach a fixpoint within {depth} steps "
                         f"(predicates still active: {preds})")
        self.predicates = sorted(set(predicates))


class InconsistentInstanceError(Exception):
    """The TBox plus ABox is contradictory; carries the violation witnesses."""

    def __init__(self, violations) -> None:
        super().__init__("TBox and ABox are inconsistent: "
                         + "; ".join(str(v) for v in violations))
        self.violations = violations


class OracleCapError(Exception):
    """The brute-force oracle would exceed its configured size cap."""


class SafeRangeError(Exception):
    """A formula is not range-restricted and cannot be evaluated."""
