"""Counterfactual search and reasoning.

Admissible counterfactuals are enumerated directly over the intervention
space, size layer by size layer. Cardinality minimality (stop at the first
layer containing an admissible model) is exactly the "prefer fewer changes"
optimum; subset minimality keeps models whose changed-set has no admissible
proper nonempty subset. Queries over the resulting model set come in two
modes: ``brave`` (some model satisfies the formula) and ``cautious`` (all
models do).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Iterable, Iterator

from .classifiers import Classifier
from .errors import BudgetExceeded, CfxError
from .model import (
    CounterfactualModel,
    Entity,
    FeatureSchema,
    Intervention,
    apply_intervention,
    enumerate_interventions,
)
from .speclang import EvalContext, Formula, eval_formula

MINIMALITIES = ("none", "subset", "cardinality")


class InvalidTarget(CfxError):
    """The requested target class cannot define any counterfactual."""


class ClassMismatch(CfxError):
    """Two classifiers under comparison disagree on the class set."""


@dataclass(frozen=True)
class SearchConfig:
    """Knobs of the counterfactual search.

    ``max_changes`` defaults to the number of features; ``budget`` caps the
    number of candidate interventions visited. With ``strict`` set, hitting
    the budget raises :class:`BudgetExceeded` instead of returning a
    truncated result.
    """

    target: str | None = None
    max_changes: int | None = None
    minimality: str = "cardinality"
    constraints: tuple[Formula, ...] = ()
    budget: int = 1_000_000
    parallelism: int = 1
    strict: bool = False

    def __post_init__(self) -> None:
        if self.max_changes is not None and self.max_changes < 1:
            raise ValueError("max_changes must be >= 1")
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.minimality not in MINIMALITIES:
            raise ValueError(f"minimality must be one of {MINIMALITIES}")
        if self.parallelism < 1:
            raise ValueError("parallelism must be >= 1")
        object.__setattr__(self, "constraints", tuple(self.constraints))


@dataclass(frozen=True)
class ModelSet:
    """Counterfactual models of one entity, canonically ordered by
    (size, changed feature names, value tokens)."""

    original: Entity
    original_label: str
    models: tuple[CounterfactualModel, ...]
    exhausted: bool
    minimality: str

    def __len__(self) -> int:
        return len(self.models)

    def __iter__(self) -> Iterator[CounterfactualModel]:
        return iter(self.models)

    def changed_sets(self) -> list[frozenset[str]]:
        seen: list[frozenset[str]] = []
        for m in self.models:
            if m.changed not in seen:
                seen.append(m.changed)
        return seen


@dataclass(frozen=True)
class QueryAnswer:
    """Outcome of a brave/cautious query. ``status`` is ``"true"``,
    ``"false"`` or ``"no-models"`` (an empty model set is never vacuously
    true). Witnesses are the satisfying models for a brave ``true`` and the
    counterexamples for a cautious ``false``."""

    status: str
    witnesses: tuple[CounterfactualModel, ...] = ()


def _context(original: Entity, m: CounterfactualModel) -> EvalContext:
    return EvalContext(
        original=original,
        counterfactual=m.result,
        changed=m.changed,
        label=m.label,
    )


def _label_admissible(label: str, original_label: str, target: str | None) -> bool:
    if target is not None:
        return label == target
    return label != original_label


def _classify_layer(clf: Classifier, entities: list[Entity], parallelism: int) -> list[str]:
    if parallelism <= 1 or len(entities) < 2:
        return clf.classify_batch(entities)
    chunk = (len(entities) + parallelism - 1) // parallelism
    slices = [entities[i : i + chunk] for i in range(0, len(entities), chunk)]

    def run(args):
        offset, part = args
        try:
            return clf.classify_batch(part)
        except CfxError as err:
            if hasattr(err, "batch_index"):
                err.batch_index += offset
            raise

    offsets = [i * chunk for i in range(len(slices))]
    with ThreadPoolExecutor(max_workers=parallelism) as ex:
        parts = list(ex.map(run, zip(offsets, slices)))
    return [label for part in parts for label in part]


class _Search:
    def __init__(self, schema: FeatureSchema, e: Entity, clf: Classifier, cfg: SearchConfig):
        self.schema = schema
        self.e = e
        self.clf = clf
        self.cfg = cfg
        self.original_label = clf.classify(e)
        if cfg.target is not None:
            if cfg.target not in clf.classes:
                raise InvalidTarget(f"target {cfg.target!r} is not a class")
            if cfg.target == self.original_label:
                raise InvalidTarget(
                    f"target {cfg.target!r} equals the original label; no change needed"
                )
        self.max_changes = min(
            cfg.max_changes if cfg.max_changes is not None else len(schema),
            len(schema),
        )
        self.visited = 0
        self.truncated = False

    def layer_candidates(self, size: int) -> Iterator[Intervention]:
        """Candidates of one size layer: feature subsets in lexicographic
        order, interventions per subset in (name, domain position) order."""
        for names in combinations(sorted(self.schema.names), size):
            yield from enumerate_interventions(self.schema, self.e, names)

    def take_layer(self, size: int) -> list[Intervention]:
        out = []
        for iv in self.layer_candidates(size):
            if self.visited >= self.cfg.budget:
                self.truncated = True
                break
            self.visited += 1
            out.append(iv)
        return out

    def evaluate(self, candidates: list[Intervention]) -> list[CounterfactualModel]:
        entities = [apply_intervention(self.e, iv) for iv in candidates]
        labels = _classify_layer(self.clf, entities, self.cfg.parallelism)
        models = []
        for iv, result, label in zip(candidates, entities, labels):
            if not _label_admissible(label, self.original_label, self.cfg.target):
                continue
            m = CounterfactualModel(iv, result, label)
            ctx = _context(self.e, m)
            if all(eval_formula(c, ctx) for c in self.cfg.constraints):
                models.append(m)
        return models

    def finish(self, models: Iterable[CounterfactualModel], minimality: str) -> ModelSet:
        if self.truncated and self.cfg.strict:
            raise BudgetExceeded(
                f"search visited {self.visited} candidates, budget is {self.cfg.budget}"
            )
        ordered = tuple(sorted(models, key=CounterfactualModel.sort_key))
        return ModelSet(
            original=self.e,
            original_label=self.original_label,
            models=ordered,
            exhausted=not self.truncated,
            minimality=minimality,
        )


def enumerate_counterfactuals(
    schema: FeatureSchema, e: Entity, classifier: Classifier, cfg: SearchConfig
) -> ModelSet:
    """Every admissible counterfactual with 1 <= size <= max_changes:
    label flipped (or equal to the target class) and all constraints
    satisfied. Truncated results carry ``exhausted=False``."""
    search = _Search(schema, e, classifier, cfg)
    models: list[CounterfactualModel] = []
    for size in range(1, search.max_changes + 1):
        models.extend(search.evaluate(search.take_layer(size)))
        if search.truncated:
            break
    return search.finish(models, "none")


def minimal_counterfactuals(
    schema: FeatureSchema, e: Entity, classifier: Classifier, cfg: SearchConfig
) -> ModelSet:
    """Minimum-change counterfactuals under ``cfg.minimality``.

    cardinality: all admissible models of globally minimum size (layered
    search, stop at the first nonempty layer). subset: admissible models
    whose changed-set has no proper nonempty subset supporting an
    admissible model. none: everything admissible.
    """
    if cfg.minimality == "none":
        return enumerate_counterfactuals(schema, e, classifier, cfg)
    if cfg.minimality == "subset":
        full = enumerate_counterfactuals(schema, e, classifier, cfg)
        supported = {m.changed for m in full.models}
        kept = [
            m
            for m in full.models
            if not any(s < m.changed for s in supported)
        ]
        return ModelSet(
            original=full.original,
            original_label=full.original_label,
            models=tuple(kept),
            exhausted=full.exhausted,
            minimality="subset",
        )
    search = _Search(schema, e, classifier, cfg)
    models: list[CounterfactualModel] = []
    for size in range(1, search.max_changes + 1):
        models = search.evaluate(search.take_layer(size))
        if models or search.truncated:
            break
    return search.finish(models, "cardinality")


def max_responsibility_counterfactuals(
    schema: FeatureSchema, e: Entity, classifier: Classifier, cfg: SearchConfig
) -> ModelSet:
    """Counterfactuals of minimum size; every changed feature in a returned
    model of size s reaches responsibility at least 1/s, witnessed by the
    other changed features."""
    return minimal_counterfactuals(
        schema, e, classifier, replace(cfg, minimality="cardinality")
    )


def answer_query(modelset: ModelSet, q: Formula, mode: str) -> QueryAnswer:
    """Evaluate a formula over a model set under brave or cautious semantics."""
    if mode not in ("brave", "cautious"):
        raise ValueError(f"mode must be 'brave' or 'cautious', got {mode!r}")
    if not modelset.models:
        return QueryAnswer("no-models")
    sat = []
    unsat = []
    for m in modelset.models:
        (sat if eval_formula(q, _context(modelset.original, m)) else unsat).append(m)
    if mode == "brave":
        if sat:
            return QueryAnswer("true", tuple(sat))
        return QueryAnswer("false")
    if unsat:
        return QueryAnswer("false", tuple(unsat))
    return QueryAnswer("true")


@dataclass(frozen=True)
class ComparisonReport:
    """Side-by-side view of two classifiers on the same entity."""

    label_a: str
    label_b: str
    models_a: ModelSet
    models_b: ModelSet
    changed_only_a: tuple[tuple[str, ...], ...]
    changed_only_b: tuple[tuple[str, ...], ...]
    xresp_a: dict[str, float]
    xresp_b: dict[str, float]
    xresp_delta: dict[str, float]
    notes: tuple[str, ...] = ()


def compare_classifiers(
    schema: FeatureSchema,
    e: Entity,
    a: Classifier,
    b: Classifier,
    cfg: SearchConfig,
    k: int = 2,
) -> ComparisonReport:
    """Labels, minimal model sets, changed-set differences and per-feature
    responsibility deltas for two classifiers over the same schema."""
    from .scores import xresp_score

    if set(a.classes) != set(b.classes):
        raise ClassMismatch(f"class sets differ: {a.classes} vs {b.classes}")
    label_a = a.classify(e)
    label_b = b.classify(e)
    models_a = minimal_counterfactuals(schema, e, a, cfg)
    models_b = minimal_counterfactuals(schema, e, b, cfg)
    sets_a = {m.changed for m in models_a.models}
    sets_b = {m.changed for m in models_b.models}

    def ordered(sets: set[frozenset[str]]) -> tuple[tuple[str, ...], ...]:
        return tuple(
            tuple(sorted(s)) for s in sorted(sets, key=lambda s: (len(s), tuple(sorted(s))))
        )

    xresp_a = {}
    xresp_b = {}
    for name in schema.names:
        xresp_a[name] = xresp_score(
            schema, e, a, name, k=k, constraints=cfg.constraints
        ).value
        xresp_b[name] = xresp_score(
            schema, e, b, name, k=k, constraints=cfg.constraints
        ).value
    notes = []
    if not models_a.models:
        notes.append("a admits no counterfactual")
    if not models_b.models:
        notes.append("b admits no counterfactual")
    return ComparisonReport(
        label_a=label_a,
        label_b=label_b,
        models_a=models_a,
        models_b=models_b,
        changed_only_a=ordered(sets_a - sets_b),
        changed_only_b=ordered(sets_b - sets_a),
        xresp_a=xresp_a,
        xresp_b=xresp_b,
        xresp_delta={n: xresp_b[n] - xresp_a[n] for n in schema.names},
        notes=tuple(notes),
    )
