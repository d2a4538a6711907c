import copy
import io
import json
import random

import pytest

from cfx import (
    Entity,
    FeatureDef,
    FeatureSchema,
    NaiveBayesClassifier,
    TabulatedClassifier,
    iter_entities,
    load_decision_tree,
    load_naive_bayes,
    load_tabulated,
)
from cfx.classifiers import (
    ClassifierError,
    DegenerateLikelihood,
    DuplicateEntity,
    IncompleteBranches,
    MissingEntity,
    ModelDocumentError,
    UnknownClassAtLeaf,
    UnknownFeature,
    UnknownValue,
)

from conftest import DATA


def tree_doc():
    return json.loads((DATA / "loan_tree.json").read_text())


def nb_doc():
    return json.loads((DATA / "loan_nb.json").read_text())


def test_tree_loads_and_classifies(loan_schema, loan_tree, e0):
    assert loan_tree.classes == ("accept", "reject")
    # hand-walk: Salary=mid -> City=bronx -> reject
    assert loan_tree.classify(e0) == "reject"
    assert loan_tree.classify(e0.with_changes({"City": "queens"})) == "accept"
    assert loan_tree.classify(e0.with_changes({"Salary": "high"})) == "accept"


def test_tree_missing_branch(loan_schema):
    doc = tree_doc()
    del doc["root"]["branches"]["mid"]["branches"]["queens"]
    with pytest.raises(IncompleteBranches) as exc:
        load_decision_tree(doc, loan_schema)
    assert exc.value.feature == "City" and exc.value.missing == ["queens"]


def test_tree_unknown_label(loan_schema):
    doc = tree_doc()
    doc["root"]["branches"]["high"] = {"leaf": "maybe"}
    with pytest.raises(UnknownClassAtLeaf):
        load_decision_tree(doc, loan_schema)


def test_tree_unknown_feature_and_value(loan_schema):
    doc = tree_doc()
    doc["root"]["feature"] = "Zip"
    with pytest.raises(UnknownFeature):
        load_decision_tree(doc, loan_schema)
    doc = tree_doc()
    doc["root"]["branches"]["huge"] = {"leaf": "accept"}
    with pytest.raises(UnknownValue):
        load_decision_tree(doc, loan_schema)


def test_tree_agrees_with_its_tabulation(loan_schema, loan_tree):
    tab = TabulatedClassifier.from_function(
        loan_schema, loan_tree.classify, classes=loan_tree.classes
    )
    for e in iter_entities(loan_schema):
        assert tab.classify(e) == loan_tree.classify(e)


def test_nb_loads_and_classifies(loan_schema, e0):
    nb = load_naive_bayes(nb_doc(), loan_schema)
    # accept: .5*.2*.3*.3 = .009 ; reject: .5*.5*.3*.4 = .03
    assert nb.classify(e0) == "reject"
    assert nb.scores(e0)["reject"] == pytest.approx(0.03)
    # queens/high/old leans accept: .5*.5*.6*.4=.06 vs .5*.2*.1*.3=.003
    rich = Entity(loan_schema, ("queens", "high", "old"))
    assert nb.classify(rich) == "accept"


def test_nb_prior_sum_violation(loan_schema):
    doc = nb_doc()
    doc["priors"] = {"accept": 0.6, "reject": 0.6}
    with pytest.raises(ModelDocumentError, match="sum"):
        load_naive_bayes(doc, loan_schema)


def test_nb_missing_cpt_row_and_value(loan_schema):
    doc = nb_doc()
    del doc["cpt"]["City"]["reject"]
    with pytest.raises(ModelDocumentError, match="missing row"):
        load_naive_bayes(doc, loan_schema)
    doc = nb_doc()
    del doc["cpt"]["City"]["accept"]["queens"]
    with pytest.raises(ModelDocumentError, match="cover"):
        load_naive_bayes(doc, loan_schema)


def test_nb_degenerate_prior_always_wins(loan_schema):
    doc = nb_doc()
    doc["priors"] = {"accept": 1.0, "reject": 0.0}
    nb = load_naive_bayes(doc, loan_schema)
    for e in iter_entities(loan_schema):
        assert nb.classify(e) == "accept"


def test_nb_tie_breaks_by_declaration_order():
    schema = FeatureSchema((FeatureDef("F", ("x", "y")),))
    nb = NaiveBayesClassifier(
        schema,
        ("b", "a"),
        priors={"a": 0.5, "b": 0.5},
        cpt={"F": {"a": {"x": 0.5, "y": 0.5}, "b": {"x": 0.5, "y": 0.5}}},
    ).validate()
    assert nb.classify(Entity(schema, ("x",))) == "b"


def test_nb_degenerate_likelihood():
    schema = FeatureSchema((FeatureDef("F", ("x", "y", "z")),))
    nb = NaiveBayesClassifier(
        schema,
        ("a", "b"),
        priors={"a": 0.5, "b": 0.5},
        cpt={"F": {"a": {"x": 0.0, "y": 1.0, "z": 0.0}, "b": {"x": 0.0, "y": 0.0, "z": 1.0}}},
    ).validate()
    with pytest.raises(DegenerateLikelihood):
        nb.classify(Entity(schema, ("x",)))


def test_nb_argmax_scale_invariant(loan_schema):
    # multiplying all class scores by c>0 never changes the argmax
    rng = random.Random(3)
    base = load_naive_bayes(nb_doc(), loan_schema)
    for c in (0.25, 4.0, 17.5):
        scaled = NaiveBayesClassifier(
            loan_schema,
            base.classes,
            priors={k: v * c for k, v in base.priors.items()},
            cpt=copy.deepcopy(base.cpt),
        )  # deliberately unvalidated: priors no longer sum to 1
        for _ in range(30):
            e = Entity(
                loan_schema,
                tuple(rng.choice(f.domain) for f in loan_schema.features),
            )
            assert scaled.classify(e) == base.classify(e)


def test_tabulated_load_and_lookup(loan_schema, loan_tree, e0):
    tab = load_tabulated(str(DATA / "loan_tab.csv"), loan_schema)
    assert tab.classify(e0) == "reject"
    for e in iter_entities(loan_schema):
        assert tab.classify(e) == loan_tree.classify(e)


def test_tabulated_missing_entity():
    schema = FeatureSchema((FeatureDef("A", ("0", "1")), FeatureDef("B", ("0", "1"))))
    text = "A,B,label\n0,0,x\n0,1,x\n1,0,y\n"
    with pytest.raises(MissingEntity) as exc:
        load_tabulated(io.StringIO(text), schema)
    assert exc.value.example.values == ("1", "1")


def test_tabulated_duplicate_entity():
    schema = FeatureSchema((FeatureDef("A", ("0", "1")), FeatureDef("B", ("0", "1"))))
    text = "A,B,label\n0,0,x\n0,1,x\n1,0,y\n1,1,y\n0,0,y\n"
    with pytest.raises(DuplicateEntity):
        load_tabulated(io.StringIO(text), schema)


def test_tabulated_full_cover_ok():
    schema = FeatureSchema((FeatureDef("A", ("0", "1")), FeatureDef("B", ("0", "1"))))
    text = "A,B,label\n0,0,x\n0,1,x\n1,0,y\n1,1,y\n"
    tab = load_tabulated(io.StringIO(text), schema)
    assert tab.classes == ("x", "y")


def test_classify_batch_matches_pointwise(loan_schema, loan_tree):
    es = list(iter_entities(loan_schema))
    assert loan_tree.classify_batch(es) == [loan_tree.classify(e) for e in es]
    assert loan_tree.classify_batch([]) == []


def test_classify_batch_error_carries_index(loan_schema, e0):
    tab = TabulatedClassifier(loan_schema, {e0.key(): "reject"}, classes=("reject",))
    other = e0.with_changes({"City": "queens"})
    with pytest.raises(ClassifierError) as exc:
        tab.classify_batch([e0, other])
    assert exc.value.batch_index == 1


def test_cache_indistinguishable(loan_schema, e0):
    doc = tree_doc()
    plain = load_decision_tree(doc, loan_schema)
    cached = load_decision_tree(doc, loan_schema, cache=True)
    assert not plain.cache_enabled and cached.cache_enabled
    for e in iter_entities(loan_schema):
        assert plain.classify(e) == cached.classify(e)
        assert cached.classify(e) == cached.classify(e)
