import random

import pytest

from cfx import (
    BudgetExceeded,
    SearchConfig,
    TabulatedClassifier,
    answer_query,
    compare_classifiers,
    enumerate_counterfactuals,
    load_decision_tree,
    max_responsibility_counterfactuals,
    minimal_counterfactuals,
    parse_formula,
    xresp_score,
)
from cfx.engine import ClassMismatch, InvalidTarget
from cfx.speclang import Changed, Not

from brute import brute_admissible, brute_cardinality_minimal, brute_subset_minimal
from gen import random_entity, random_formula, random_schema, random_tabulated

CLASSES = ("accept", "reject")


def changes(ms):
    return [m.intervention.as_dict() for m in ms.models]


# -- enumeration -------------------------------------------------------------


def test_enumerate_single_change_layer(loan_schema, e0, loan_tree):
    cfg = SearchConfig(max_changes=1, minimality="none")
    ms = enumerate_counterfactuals(loan_schema, e0, loan_tree, cfg)
    # oracle: six single changes hand-checked against the tree
    assert changes(ms) == [{"City": "queens"}, {"Salary": "high"}]
    assert ms.exhausted and ms.original_label == "reject"


def test_enumerate_with_immutable_city(loan_schema, e0, loan_tree):
    cfg = SearchConfig(
        max_changes=1, minimality="none", constraints=(Not(Changed("City")),)
    )
    ms = enumerate_counterfactuals(loan_schema, e0, loan_tree, cfg)
    assert changes(ms) == [{"Salary": "high"}]


def test_enumerate_matches_brute_force(loan_schema, e0, loan_tree):
    ms = enumerate_counterfactuals(loan_schema, e0, loan_tree, SearchConfig(minimality="none"))
    assert list(ms.models) == brute_admissible(loan_schema, e0, loan_tree)


def test_target_handling(loan_schema, e0, loan_tree):
    with pytest.raises(InvalidTarget):
        enumerate_counterfactuals(
            loan_schema, e0, loan_tree, SearchConfig(target="reject")
        )
    with pytest.raises(InvalidTarget):
        enumerate_counterfactuals(
            loan_schema, e0, loan_tree, SearchConfig(target="maybe")
        )
    ms = minimal_counterfactuals(
        loan_schema, e0, loan_tree, SearchConfig(target="accept")
    )
    assert changes(ms) == [{"City": "queens"}, {"Salary": "high"}]


def test_budget_truncation_and_strict(loan_schema, e0, loan_tree):
    cfg = SearchConfig(minimality="none", budget=3)
    ms = enumerate_counterfactuals(loan_schema, e0, loan_tree, cfg)
    assert not ms.exhausted
    with pytest.raises(BudgetExceeded):
        enumerate_counterfactuals(
            loan_schema, e0, loan_tree, SearchConfig(minimality="none", budget=3, strict=True)
        )


# -- minimality --------------------------------------------------------------


def test_cardinality_minimal_loan(loan_schema, e0, loan_tree):
    ms = minimal_counterfactuals(loan_schema, e0, loan_tree, SearchConfig())
    assert changes(ms) == [{"City": "queens"}, {"Salary": "high"}]
    assert ms.minimality == "cardinality"
    assert all(len(m.changed) == 1 for m in ms.models)


def test_and_fixture_needs_two_changes(and_schema, and_e00, and_classifier):
    # oracle: brute force over the three nonempty change subsets
    ms = minimal_counterfactuals(
        and_schema, and_e00, and_classifier, SearchConfig(target="1")
    )
    assert changes(ms) == [{"F1": "1", "F2": "1"}]
    brute = brute_cardinality_minimal(
        brute_admissible(and_schema, and_e00, and_classifier, target="1")
    )
    assert list(ms.models) == brute


def test_constant_classifier_has_no_models(loan_schema, e0):
    const = TabulatedClassifier.from_function(
        loan_schema, lambda e: "reject", classes=CLASSES
    )
    ms = minimal_counterfactuals(loan_schema, e0, const, SearchConfig())
    assert len(ms) == 0 and ms.exhausted


def test_max_responsibility_models_reach_xresp_bound(
    loan_schema, e0, loan_tree, and_schema, and_e00, and_classifier
):
    ms = max_responsibility_counterfactuals(loan_schema, e0, loan_tree, SearchConfig())
    for m in ms.models:
        s = len(m.changed)
        for f in m.changed:
            assert xresp_score(loan_schema, e0, loan_tree, f, k=s - 1).value >= 1 / s
    ms2 = max_responsibility_counterfactuals(
        and_schema, and_e00, and_classifier, SearchConfig(target="1")
    )
    assert changes(ms2) == [{"F1": "1", "F2": "1"}]
    for f in ("F1", "F2"):
        rec = xresp_score(and_schema, and_e00, and_classifier, f, k=1)
        assert rec.value >= 0.5


def test_minimal_matches_brute_force_randomized():
    rng = random.Random(42)
    for trial in range(120):
        schema = random_schema(rng, max_features=4, max_domain=3)
        clf = random_tabulated(rng, schema)
        e = random_entity(rng, schema)
        all_models = brute_admissible(schema, e, clf)
        cfg = SearchConfig(minimality="none")
        got = enumerate_counterfactuals(schema, e, clf, cfg)
        assert list(got.models) == all_models, f"trial {trial}: full enumeration differs"
        card = minimal_counterfactuals(schema, e, clf, SearchConfig())
        assert list(card.models) == brute_cardinality_minimal(all_models)
        sub = minimal_counterfactuals(schema, e, clf, SearchConfig(minimality="subset"))
        assert list(sub.models) == brute_subset_minimal(all_models)


def test_cardinality_minimal_is_subset_minimal():
    rng = random.Random(4242)
    for _ in range(60):
        schema = random_schema(rng, max_features=4, max_domain=3)
        clf = random_tabulated(rng, schema)
        e = random_entity(rng, schema)
        card = minimal_counterfactuals(schema, e, clf, SearchConfig())
        sub = minimal_counterfactuals(schema, e, clf, SearchConfig(minimality="subset"))
        assert set(card.models) <= set(sub.models)


def test_constraint_filtering_is_monotone():
    rng = random.Random(77)
    for _ in range(60):
        schema = random_schema(rng, max_features=3, max_domain=3)
        clf = random_tabulated(rng, schema)
        e = random_entity(rng, schema)
        base_cs = tuple(
            random_formula(rng, schema, clf.classes, depth=2)
            for _ in range(rng.randint(0, 2))
        )
        extra = random_formula(rng, schema, clf.classes, depth=2)
        before = enumerate_counterfactuals(
            schema, e, clf, SearchConfig(minimality="none", constraints=base_cs)
        )
        after = enumerate_counterfactuals(
            schema, e, clf, SearchConfig(minimality="none", constraints=base_cs + (extra,))
        )
        assert set(after.models) <= set(before.models)


# -- queries -----------------------------------------------------------------


def test_query_brave_and_cautious_loan(loan_schema, e0, loan_tree):
    ms = minimal_counterfactuals(loan_schema, e0, loan_tree, SearchConfig())
    both = parse_formula("changed(City) and changed(Salary)", loan_schema, CLASSES)
    assert answer_query(ms, both, "brave").status == "false"
    label = parse_formula("label = accept", loan_schema, CLASSES)
    assert answer_query(ms, label, "cautious").status == "true"
    city = parse_formula("changed(City)", loan_schema, CLASSES)
    brave = answer_query(ms, city, "brave")
    assert brave.status == "true"
    assert [m.intervention.as_dict() for m in brave.witnesses] == [{"City": "queens"}]
    cautious = answer_query(ms, city, "cautious")
    assert cautious.status == "false"
    assert [m.intervention.as_dict() for m in cautious.witnesses] == [{"Salary": "high"}]


def test_query_with_immutable_city(loan_schema, e0, loan_tree):
    cfg = SearchConfig(constraints=(Not(Changed("City")),))
    ms = minimal_counterfactuals(loan_schema, e0, loan_tree, cfg)
    q = parse_formula("changed(Salary)", loan_schema, CLASSES)
    assert answer_query(ms, q, "cautious").status == "true"


def test_query_no_models(loan_schema, e0):
    const = TabulatedClassifier.from_function(
        loan_schema, lambda e: "reject", classes=CLASSES
    )
    ms = minimal_counterfactuals(loan_schema, e0, const, SearchConfig())
    q = parse_formula("changed(City)", loan_schema, CLASSES)
    for mode in ("brave", "cautious"):
        assert answer_query(ms, q, mode).status == "no-models"


def test_query_rejects_bad_mode(loan_schema, e0, loan_tree):
    ms = minimal_counterfactuals(loan_schema, e0, loan_tree, SearchConfig())
    q = parse_formula("changed(City)", loan_schema, CLASSES)
    with pytest.raises(ValueError):
        answer_query(ms, q, "hopeful")


def test_cautious_true_implies_brave_true():
    rng = random.Random(2024)
    checked = 0
    while checked < 80:
        schema = random_schema(rng, max_features=3, max_domain=3)
        clf = random_tabulated(rng, schema)
        e = random_entity(rng, schema)
        ms = minimal_counterfactuals(schema, e, clf, SearchConfig())
        if not ms.models:
            continue
        for _ in range(10):
            q = random_formula(rng, schema, clf.classes, depth=3)
            if answer_query(ms, q, "cautious").status == "true":
                assert answer_query(ms, q, "brave").status == "true"
        checked += 1


# -- determinism -------------------------------------------------------------


def test_results_independent_of_parallelism(loan_schema, e0, loan_tree):
    cfgs = [SearchConfig(parallelism=p, minimality="none") for p in (1, 2, 8)]
    results = [enumerate_counterfactuals(loan_schema, e0, loan_tree, c) for c in cfgs]
    assert results[0].models == results[1].models == results[2].models


# -- comparison --------------------------------------------------------------


def test_compare_identity(loan_schema, e0, loan_tree):
    report = compare_classifiers(
        loan_schema, e0, loan_tree, loan_tree, SearchConfig()
    )
    assert report.label_a == report.label_b == "reject"
    assert report.changed_only_a == () and report.changed_only_b == ()
    assert report.xresp_delta == {n: 0.0 for n in loan_schema.names}
    assert report.notes == ()


def test_compare_with_constant(loan_schema, e0, loan_tree):
    const = TabulatedClassifier.from_function(
        loan_schema, lambda e: "reject", classes=CLASSES
    )
    report = compare_classifiers(loan_schema, e0, loan_tree, const, SearchConfig())
    assert len(report.models_b) == 0
    assert "b admits no counterfactual" in report.notes


def test_compare_tree_without_city_test(loan_schema, e0, loan_tree):
    # same tree but the city check is removed: mid/low salary always reject
    blind = load_decision_tree(
        {
            "classes": ["accept", "reject"],
            "root": {
                "feature": "Salary",
                "branches": {
                    "low": {"leaf": "reject"},
                    "mid": {"leaf": "reject"},
                    "high": {"leaf": "accept"},
                },
            },
        },
        loan_schema,
    )
    report = compare_classifiers(loan_schema, e0, loan_tree, blind, SearchConfig())
    assert report.changed_only_a == (("City",),)
    assert report.changed_only_b == ()
    assert report.xresp_a["City"] == 1.0 and report.xresp_b["City"] == 0.0
    assert report.xresp_delta["City"] == -1.0


def test_compare_rejects_class_mismatch(loan_schema, e0, loan_tree):
    other = TabulatedClassifier.from_function(
        loan_schema, lambda e: "no", classes=("yes", "no")
    )
    with pytest.raises(ClassMismatch):
        compare_classifiers(loan_schema, e0, loan_tree, other, SearchConfig())
