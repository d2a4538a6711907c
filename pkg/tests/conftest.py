import sys
from pathlib import Path

import pytest

from cfx import (
    Entity,
    FeatureDef,
    FeatureSchema,
    TabulatedClassifier,
    load_decision_tree,
    parse_spec,
)

DATA = Path(__file__).parent / "data"
STUB = Path(__file__).parent / "stub_classifier.py"


def stub_command(*extra: str) -> str:
    parts = [sys.executable, str(STUB), str(DATA / "loan_tab.csv"), *extra]
    return " ".join(parts)


@pytest.fixture(scope="session")
def loan_doc():
    return parse_spec((DATA / "loan.cfx").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def loan_schema(loan_doc):
    return loan_doc.schema


@pytest.fixture(scope="session")
def e0(loan_doc):
    return loan_doc.entities["e0"]


@pytest.fixture(scope="session")
def loan_tree(loan_schema):
    return load_decision_tree(str(DATA / "loan_tree.json"), loan_schema)


@pytest.fixture(scope="session")
def and_schema():
    return FeatureSchema(
        (FeatureDef("F1", ("0", "1")), FeatureDef("F2", ("0", "1")))
    )


@pytest.fixture(scope="session")
def and_classifier(and_schema):
    # label "1" iff both features are "1"
    return TabulatedClassifier.from_function(
        and_schema,
        lambda e: "1" if e["F1"] == "1" and e["F2"] == "1" else "0",
        classes=("0", "1"),
    )


@pytest.fixture(scope="session")
def and_e00(and_schema):
    return Entity(and_schema, ("0", "0"))
