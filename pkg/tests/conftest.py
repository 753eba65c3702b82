import pytest

from cqekit import parse_policy, parse_query, parse_tbox
from cqekit.evaluator import load_abox_text
from importlib import resources


def fixture_text(name: str) -> str:
    return resources.files("cqekit.fixtures").joinpath(name).read_text()


@pytest.fixture(scope="session")
def company():
    """The two-censor company scenario: TBox, policy, facts, q1, q2."""
    policy = parse_policy(fixture_text("ex1.policy"))
    tbox = parse_tbox(fixture_text("ex1.tbox"),
                      policy.predicates() | {"salary": 2, "consRel": 2})
    facts = load_abox_text(fixture_text("ex1.facts"))
    q1 = parse_query(fixture_text("ex1_q1.query"))
    q2 = parse_query(fixture_text("ex1_q2.query"))
    return tbox, policy, facts, q1, q2


@pytest.fixture(scope="session")
def unsafe_intersection():
    """The three-fact scenario whose censor intersection is not compliant."""
    policy = parse_policy(fixture_text("ex3.policy"))
    tbox = parse_tbox(fixture_text("ex3.tbox"), policy.predicates())
    facts = load_abox_text(fixture_text("ex3.facts"))
    return tbox, policy, facts


@pytest.fixture(scope="session")
def university():
    """The bundled university TBox with both reference policies."""
    pa = parse_policy(fixture_text("pa.policy"))
    pb = parse_policy(fixture_text("pb.policy"))
    hints = dict(pa.predicates())
    hints.update(pb.predicates())
    tbox = parse_tbox(fixture_text("univ.tbox"), hints)
    facts = load_abox_text(fixture_text("univ.facts"))
    return tbox, pa, pb, facts
