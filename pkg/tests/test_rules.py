import json
import random
from pathlib import Path

import networkx as nx
import pytest

from linediag.catalog import CONTROL, OBSERVATION, VariableCatalog, VariableInfo
from linediag.errors import UnknownVariable, ValidationError
from linediag.rules import (
    SAME,
    STRICTLY_LATER,
    EdgeQuery,
    Rule,
    RuleSet,
    admissible_pairs,
    default_ruleset,
    forbidden_edges,
    is_admissible,
    load_rules,
    stage_order,
)

# Hand-derived truth table for the four-variable grinding layout: an ordered
# pair is admissible iff control->observation at the same or a later stage,
# or observation->observation strictly later.
FIG3_ADMISSIBLE = {("C4", "O4"), ("C4", "O10"), ("O4", "O10"), ("C10", "O10")}


def test_default_ruleset_contents(rules):
    allowed = {(r.src_type, r.dst_type, r.stage_relation) for r in rules.rules if r.allowed}
    assert allowed == {
        (CONTROL, OBSERVATION, SAME),
        (CONTROL, OBSERVATION, STRICTLY_LATER),
        (OBSERVATION, OBSERVATION, STRICTLY_LATER),
    }
    assert rules.default_allowed is False


def test_fig3_truth_table(fig3_catalog, rules):
    names = fig3_catalog.names()
    verdicts = {
        (u, v): is_admissible(EdgeQuery(u, v), fig3_catalog, rules) for u in names for v in names
    }
    admissible = {p for p, ok in verdicts.items() if ok}
    assert admissible == FIG3_ADMISSIBLE
    assert len(verdicts) - len(admissible) == 12  # includes the four self-loops


def test_specific_fig3_edges(fig3_catalog, rules):
    assert is_admissible(EdgeQuery("C4", "O4"), fig3_catalog, rules)  # same stage
    assert is_admissible(EdgeQuery("C4", "O10"), fig3_catalog, rules)  # later stage
    assert not is_admissible(EdgeQuery("O10", "O4"), fig3_catalog, rules)  # backwards
    assert not is_admissible(EdgeQuery("C4", "C10"), fig3_catalog, rules)  # control->control
    assert not is_admissible(EdgeQuery("O4", "C10"), fig3_catalog, rules)  # into a control
    assert not is_admissible(EdgeQuery("C4", "C4"), fig3_catalog, rules)  # self-loop


def test_unknown_variable_raises(fig3_catalog, rules):
    with pytest.raises(UnknownVariable):
        is_admissible(EdgeQuery("ghost", "O4"), fig3_catalog, rules)


def test_forbidden_edges_single_variable(rules):
    cat = VariableCatalog({"only": VariableInfo(var_type=CONTROL, stage=1)})
    assert forbidden_edges(cat, rules) == {("only", "only")}


def test_forbidden_edges_empty_catalog(rules):
    assert forbidden_edges(VariableCatalog({}), rules) == set()


def test_forbidden_edges_fig3(fig3_catalog, rules):
    forbidden = forbidden_edges(fig3_catalog, rules)
    assert FIG3_ADMISSIBLE.isdisjoint(forbidden)
    assert len(forbidden) == 16 - len(FIG3_ADMISSIBLE)
    for pair in [("C4", "C10"), ("C10", "C4"), ("C10", "O4"), ("O10", "O4"), ("O4", "C10"), ("O4", "O4")]:
        assert pair in forbidden


def test_stage_order_examples(fig3_catalog):
    assert stage_order(fig3_catalog) == ["C4", "O4", "C10", "O10"]
    single = VariableCatalog({"v": VariableInfo(var_type=CONTROL, stage=1)})
    assert stage_order(single) == ["v"]
    ties = VariableCatalog(
        {
            "B_obs_2": VariableInfo(var_type=OBSERVATION, stage=1),
            "A_obs_2": VariableInfo(var_type=OBSERVATION, stage=1),
        }
    )
    assert stage_order(ties) == ["A_obs_2", "B_obs_2"]


def test_duplicate_rule_rejected():
    r = Rule(CONTROL, OBSERVATION, SAME, True)
    with pytest.raises(ValidationError):
        RuleSet([r, r])


def test_shipped_default_rules_file_matches():
    path = Path(__file__).parent.parent / "src" / "linediag" / "data" / "default_rules.json"
    assert load_rules(json.loads(path.read_text())) == default_ruleset()


def _random_staged_catalog(rng: random.Random, max_nodes: int = 12) -> VariableCatalog:
    n = rng.randint(2, max_nodes)
    n_stages = rng.randint(1, max(1, n // 2))
    entries = {}
    for i in range(n):
        entries[f"v{i}"] = VariableInfo(
            var_type=rng.choice([CONTROL, OBSERVATION]),
            stage=rng.randint(1, n_stages),
        )
    return VariableCatalog(entries)


def test_acyclicity_of_admissible_edge_sets(rules):
    """Any subset of the admissible pairs is a DAG (networkx as the oracle)."""
    rng = random.Random(7)
    for _ in range(1000):
        cat = _random_staged_catalog(rng)
        pairs = sorted(admissible_pairs(cat, rules))
        if not pairs:
            continue
        k = rng.randint(1, len(pairs))
        edges = rng.sample(pairs, k)
        g = nx.DiGraph(edges)
        assert nx.is_directed_acyclic_graph(g), (cat.to_dict(), edges)


def test_admissibility_antisymmetry(rules):
    rng = random.Random(13)
    for _ in range(200):
        cat = _random_staged_catalog(rng)
        for u, v in admissible_pairs(cat, rules):
            assert not is_admissible(EdgeQuery(v, u), cat, rules), (u, v)


def test_is_admissible_pure(fig3_catalog, rules):
    q = EdgeQuery("C4", "O10")
    first = is_admissible(q, fig3_catalog, rules)
    assert all(is_admissible(q, fig3_catalog, rules) == first for _ in range(10_000))


def test_unstaged_relaxes_temporal_but_not_type_rules(rules):
    cat = VariableCatalog(
        {
            "c": VariableInfo(var_type=CONTROL, stage=0),
            "o1": VariableInfo(var_type=OBSERVATION, stage=0),
            "o2": VariableInfo(var_type=OBSERVATION, stage=0),
        }
    )
    assert is_admissible(EdgeQuery("c", "o1"), cat, rules)
    assert is_admissible(EdgeQuery("o1", "o2"), cat, rules)
    assert is_admissible(EdgeQuery("o2", "o1"), cat, rules)  # order unknown, both allowed
    assert not is_admissible(EdgeQuery("o1", "c"), cat, rules)  # type rule still applies
