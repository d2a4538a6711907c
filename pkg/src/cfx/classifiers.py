"""Uniform classification interface over internal models.

Internal classifiers (decision tree, naive-Bayes, tabulated) are pure
functions of the entity; the external process-backed classifier lives in
:mod:`cfx.external` and shares the same base class.
"""

from __future__ import annotations

import json
import os
from typing import IO, Iterable, Mapping, Sequence, Union

from .errors import CfxError
from .model import (
    Entity,
    FeatureSchema,
    PROB_TOL,
    iter_entities,
    read_entity_rows,
)


class ClassifierError(CfxError):
    """Base for classification and model-loading failures."""


class ModelDocumentError(ClassifierError):
    """A classifier document is structurally or semantically invalid."""


class UnknownFeature(ModelDocumentError):
    pass


class UnknownValue(ModelDocumentError):
    pass


class IncompleteBranches(ModelDocumentError):
    def __init__(self, feature: str, missing: Sequence[str]):
        self.feature = feature
        self.missing = list(missing)
        super().__init__(f"{feature}: missing branches for {self.missing}")


class UnknownClassAtLeaf(ModelDocumentError):
    pass


class MissingEntity(ModelDocumentError):
    def __init__(self, example: Entity):
        self.example = example
        super().__init__(f"table does not cover {example}")


class DuplicateEntity(ModelDocumentError):
    def __init__(self, example: Entity):
        self.example = example
        super().__init__(f"table covers {example} more than once")


class DegenerateLikelihood(ClassifierError):
    """All class scores vanished; naive-Bayes cannot pick a label."""


class Classifier:
    """Label-producing handle shared by every classifier kind.

    ``classify`` must be pure: equal entities get equal labels, with or
    without the memo cache. The cache is keyed by the canonical entity
    serialization and defaults to off for internal classifiers.
    """

    kind = "abstract"

    def __init__(self, classes: Sequence[str], cache: bool = False):
        classes = tuple(classes)
        if not classes:
            raise ModelDocumentError("classifier declares no classes")
        if len(set(classes)) != len(classes):
            raise ModelDocumentError(f"duplicate class tokens: {classes}")
        self.classes = classes
        self._cache: dict[tuple[str, ...], str] | None = {} if cache else None

    @property
    def cache_enabled(self) -> bool:
        return self._cache is not None

    def classify(self, e: Entity) -> str:
        if self._cache is not None:
            hit = self._cache.get(e.key())
            if hit is not None:
                return hit
        label = self._classify(e)
        if self._cache is not None:
            self._cache[e.key()] = label
        return label

    def classify_batch(self, es: Sequence[Entity]) -> list[str]:
        """Order-preserving batch classification; the first failure aborts
        with the offending index attached as ``batch_index``."""
        out = []
        for i, e in enumerate(es):
            try:
                out.append(self.classify(e))
            except ClassifierError as err:
                err.batch_index = i
                raise
        return out

    def close(self) -> None:
        """Release external resources; a no-op for internal classifiers."""

    def _classify(self, e: Entity) -> str:
        raise NotImplementedError


class Leaf:
    __slots__ = ("label",)

    def __init__(self, label: str):
        self.label = label


class Split:
    __slots__ = ("feature", "branches")

    def __init__(self, feature: str, branches: Mapping[str, object]):
        self.feature = feature
        self.branches = dict(branches)


class DecisionTreeClassifier(Classifier):
    """Branch-complete decision tree over the schema's categorical values."""

    kind = "tree"

    def __init__(self, schema: FeatureSchema, classes: Sequence[str], root, cache: bool = False):
        super().__init__(classes, cache=cache)
        self.schema = schema
        self.root = root
        self._validate(root)

    def _validate(self, node) -> None:
        if isinstance(node, Leaf):
            if node.label not in self.classes:
                raise UnknownClassAtLeaf(f"leaf label {node.label!r} not in classes")
            return
        if node.feature not in self.schema:
            raise UnknownFeature(f"unknown feature {node.feature!r}")
        domain = self.schema.domain(node.feature)
        unknown = sorted(set(node.branches) - set(domain))
        if unknown:
            raise UnknownValue(f"{node.feature}: values {unknown} not in domain")
        missing = [v for v in domain if v not in node.branches]
        if missing:
            raise IncompleteBranches(node.feature, missing)
        for child in node.branches.values():
            self._validate(child)

    def _classify(self, e: Entity) -> str:
        node = self.root
        while not isinstance(node, Leaf):
            node = node.branches[e[node.feature]]
        return node.label


class NaiveBayesClassifier(Classifier):
    """argmax over classes of prior(c) * prod_F cpt[F][c][e[F]]; ties go to
    the earlier class in declaration order."""

    kind = "naive-bayes"

    def __init__(
        self,
        schema: FeatureSchema,
        classes: Sequence[str],
        priors: Mapping[str, float],
        cpt: Mapping[str, Mapping[str, Mapping[str, float]]],
        cache: bool = False,
    ):
        super().__init__(classes, cache=cache)
        self.schema = schema
        self.priors = dict(priors)
        self.cpt = {f: {c: dict(row) for c, row in by_class.items()} for f, by_class in cpt.items()}

    def validate(self) -> "NaiveBayesClassifier":
        if set(self.priors) != set(self.classes):
            raise ModelDocumentError("priors must cover exactly the declared classes")
        if any(p < 0 for p in self.priors.values()):
            raise ModelDocumentError("negative prior probability")
        s = sum(self.priors.values())
        if abs(s - 1.0) > PROB_TOL:
            raise ModelDocumentError(f"priors sum to {s}, not 1")
        unknown = set(self.cpt) - set(self.schema.names)
        if unknown:
            raise UnknownFeature(f"cpt features not in schema: {sorted(unknown)}")
        for f in self.schema.features:
            by_class = self.cpt.get(f.name)
            if by_class is None:
                raise ModelDocumentError(f"cpt missing feature {f.name!r}")
            for c in self.classes:
                row = by_class.get(c)
                if row is None:
                    raise ModelDocumentError(f"cpt missing row ({f.name!r}, {c!r})")
                if set(row) != set(f.domain):
                    raise ModelDocumentError(
                        f"cpt row ({f.name!r}, {c!r}) must cover exactly the domain"
                    )
                if any(p < 0 for p in row.values()):
                    raise ModelDocumentError(f"cpt row ({f.name!r}, {c!r}) has a negative probability")
                s = sum(row.values())
                if abs(s - 1.0) > PROB_TOL:
                    raise ModelDocumentError(f"cpt row ({f.name!r}, {c!r}) sums to {s}, not 1")
        return self

    def scores(self, e: Entity) -> dict[str, float]:
        out = {}
        for c in self.classes:
            p = self.priors[c]
            for f in self.schema.names:
                p *= self.cpt[f][c][e[f]]
            out[c] = p
        return out

    def _classify(self, e: Entity) -> str:
        best = None
        best_score = 0.0
        for c, score in self.scores(e).items():
            if score > best_score:
                best, best_score = c, score
        if best is None:
            raise DegenerateLikelihood(f"all class scores are zero for {e}")
        return best


class TabulatedClassifier(Classifier):
    """Explicit entity -> label table covering the whole product space.

    Mostly useful as a ground-truth oracle in tests and as the payload of
    stub external classifiers.
    """

    kind = "tabulated"

    def __init__(
        self,
        schema: FeatureSchema,
        table: Mapping[tuple[str, ...], str],
        classes: Sequence[str] | None = None,
        cache: bool = False,
    ):
        if classes is None:
            seen: list[str] = []
            for label in table.values():
                if label not in seen:
                    seen.append(label)
            classes = seen
        super().__init__(classes, cache=cache)
        self.schema = schema
        self.table = dict(table)

    @classmethod
    def from_function(cls, schema: FeatureSchema, fn, classes: Sequence[str] | None = None) -> "TabulatedClassifier":
        """Tabulate ``fn`` over the entire product space."""
        table = {e.key(): fn(e) for e in iter_entities(schema)}
        return cls(schema, table, classes=classes)

    def check_coverage(self) -> "TabulatedClassifier":
        for e in iter_entities(self.schema):
            if e.key() not in self.table:
                raise MissingEntity(e)
        if len(self.table) != self.schema.product_space_size():
            raise ModelDocumentError("table contains rows outside the product space")
        return self

    def _classify(self, e: Entity) -> str:
        try:
            return self.table[e.key()]
        except KeyError:
            raise ClassifierError(f"table has no row for {e}") from None


def _load_json(source: Union[Mapping, str, os.PathLike, IO[str]]) -> Mapping:
    if isinstance(source, Mapping):
        return source
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = str(source)
        if not text.lstrip().startswith("{"):
            with open(text, "r", encoding="utf-8") as fh:
                text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ModelDocumentError(f"invalid JSON: {err}") from None
    if not isinstance(doc, dict):
        raise ModelDocumentError("document must be a JSON object")
    return doc


def _document_classes(doc: Mapping) -> list[str]:
    classes = doc.get("classes")
    if not isinstance(classes, list) or not all(isinstance(c, str) for c in classes):
        raise ModelDocumentError('"classes" must be a list of strings')
    return classes


def _parse_tree_node(node, path: str):
    if not isinstance(node, Mapping):
        raise ModelDocumentError(f"{path}: node must be an object")
    if "leaf" in node:
        label = node["leaf"]
        if not isinstance(label, str):
            raise ModelDocumentError(f"{path}: leaf label must be a string")
        return Leaf(label)
    if "feature" in node:
        feature = node["feature"]
        branches = node.get("branches")
        if not isinstance(feature, str) or not isinstance(branches, Mapping):
            raise ModelDocumentError(f'{path}: internal node needs "feature" and "branches"')
        return Split(
            feature,
            {v: _parse_tree_node(child, f"{path}.{v}") for v, child in branches.items()},
        )
    raise ModelDocumentError(f'{path}: node needs "leaf" or "feature"')


def load_decision_tree(
    source: Union[Mapping, str, os.PathLike, IO[str]], schema: FeatureSchema, cache: bool = False
) -> DecisionTreeClassifier:
    """Load and validate a decision-tree document:
    ``{"classes": [...], "root": node}`` with
    ``node = {"leaf": label} | {"feature": name, "branches": {value: node}}``.
    """
    doc = _load_json(source)
    classes = _document_classes(doc)
    if "root" not in doc:
        raise ModelDocumentError('document needs a "root" node')
    root = _parse_tree_node(doc["root"], "root")
    return DecisionTreeClassifier(schema, classes, root, cache=cache)


def load_naive_bayes(
    source: Union[Mapping, str, os.PathLike, IO[str]], schema: FeatureSchema, cache: bool = False
) -> NaiveBayesClassifier:
    """Load and validate a naive-Bayes document:
    ``{"classes": [...], "priors": {...}, "cpt": {feature: {class: {value: prob}}}}``.
    """
    doc = _load_json(source)
    classes = _document_classes(doc)
    priors = doc.get("priors")
    cpt = doc.get("cpt")
    if not isinstance(priors, Mapping) or not isinstance(cpt, Mapping):
        raise ModelDocumentError('document needs "priors" and "cpt" objects')
    return NaiveBayesClassifier(schema, classes, priors, cpt, cache=cache).validate()


def load_tabulated(
    source: Union[str, os.PathLike, IO[str]], schema: FeatureSchema, cache: bool = False
) -> TabulatedClassifier:
    """Load a full-coverage table: CSV with the feature columns plus a
    ``label`` column, one row per entity of the product space."""
    rows = read_entity_rows(schema, source, extra_columns=("label",))
    table: dict[tuple[str, ...], str] = {}
    for entity, extras in rows:
        if entity.key() in table:
            raise DuplicateEntity(entity)
        table[entity.key()] = extras["label"]
    clf = TabulatedClassifier(schema, table, cache=cache)
    clf.check_coverage()
    return clf
