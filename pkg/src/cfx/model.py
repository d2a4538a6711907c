"""Core vocabulary: feature schemas, entities, interventions and population
distributions.

Everything here is immutable after construction and safe to share across
threads. Features are finite categorical; continuous features must be
discretized before they reach this layer.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from itertools import product
from typing import IO, Iterable, Iterator, Mapping, Sequence, Union

from .errors import BudgetExceeded, CfxError

#: Largest product-space size a schema may describe (fits a signed 64-bit int).
MAX_SPACE = 2**63 - 1

#: Tolerance for probability sums throughout the package.
PROB_TOL = 1e-9


class SchemaError(CfxError):
    """A feature schema or a reference into it is invalid."""


class EntityValidationError(CfxError):
    """A raw value mapping does not form a valid entity.

    ``violations`` lists every problem found, each prefixed with the
    offending feature name.
    """

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("; ".join(self.violations))


class InvalidIntervention(CfxError):
    """An intervention repeats a feature, is a no-op, or leaves the domain."""


class DatasetError(CfxError):
    """A tabular dataset does not match the schema."""


class EmptyDataset(DatasetError):
    """The dataset contains no data rows."""


class DistributionError(CfxError):
    """A population distribution violates its invariants."""


@dataclass(frozen=True)
class FeatureDef:
    """One categorical feature: a name and a finite ordered list of values.

    ``ordered`` marks the domain order as meaningful (enables directional
    actionability constraints such as ``only_increase``).
    """

    name: str
    domain: tuple[str, ...]
    ordered: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "domain", tuple(self.domain))

    def index_of(self, value: str) -> int:
        try:
            return self.domain.index(value)
        except ValueError:
            raise SchemaError(f"{self.name}: value {value!r} not in domain") from None


@dataclass(frozen=True)
class FeatureSchema:
    """An ordered collection of features defining the entity space."""

    features: tuple[FeatureDef, ...]
    _by_name: dict = field(repr=False, compare=False, hash=False, default=None)

    def __post_init__(self) -> None:
        feats = tuple(self.features)
        object.__setattr__(self, "features", feats)
        seen: dict[str, tuple[int, FeatureDef]] = {}
        size = 1
        for i, f in enumerate(feats):
            if not f.name:
                raise SchemaError("feature names must be nonempty")
            if f.name in seen:
                raise SchemaError(f"duplicate feature name {f.name!r}")
            if not f.domain:
                raise SchemaError(f"{f.name}: domain must be nonempty")
            if len(set(f.domain)) != len(f.domain):
                raise SchemaError(f"{f.name}: domain values must be distinct")
            seen[f.name] = (i, f)
            size *= len(f.domain)
            if size > MAX_SPACE:
                raise SchemaError(
                    f"product space exceeds {MAX_SPACE} (2^63-1); refusing schema"
                )
        object.__setattr__(self, "_by_name", seen)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.features)

    def __len__(self) -> int:
        return len(self.features)

    def __contains__(self, name: str) -> bool:
        return name in self._by_name

    def feature(self, name: str) -> FeatureDef:
        try:
            return self._by_name[name][1]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def domain(self, name: str) -> tuple[str, ...]:
        return self.feature(name).domain

    def index(self, name: str) -> int:
        try:
            return self._by_name[name][0]
        except KeyError:
            raise SchemaError(f"unknown feature {name!r}") from None

    def product_space_size(self) -> int:
        return math.prod(len(f.domain) for f in self.features)


@dataclass(frozen=True)
class Entity:
    """A full assignment of one value per schema feature.

    ``values`` is aligned with the schema's feature order; that tuple is
    also the canonical serialization used for hashing and memoization.
    """

    schema: FeatureSchema
    values: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", tuple(self.values))

    def __getitem__(self, name: str) -> str:
        return self.values[self.schema.index(name)]

    def key(self) -> tuple[str, ...]:
        return self.values

    def as_dict(self) -> dict[str, str]:
        return dict(zip(self.schema.names, self.values))

    def with_changes(self, changes: Mapping[str, str]) -> "Entity":
        """Return a copy with the given feature values replaced (unchecked)."""
        vals = list(self.values)
        for name, value in changes.items():
            vals[self.schema.index(name)] = value
        return Entity(self.schema, tuple(vals))

    def __str__(self) -> str:
        parts = ", ".join(f"{n}={v}" for n, v in zip(self.schema.names, self.values))
        return "{" + parts + "}"


def validate_entity(schema: FeatureSchema, raw: Mapping[str, str]) -> Entity:
    """Check a raw name->value mapping against the schema.

    Returns the entity when everything lines up; otherwise raises
    :class:`EntityValidationError` carrying every violation (missing
    feature, extra feature, out-of-domain value) rather than just the first.
    """
    violations = []
    values = []
    for f in schema.features:
        if f.name not in raw:
            violations.append(f"{f.name}: missing")
            continue
        v = raw[f.name]
        if v not in f.domain:
            violations.append(f"{f.name}: value {v!r} not in domain")
        values.append(v)
    for name in sorted(set(raw) - set(schema.names)):
        violations.append(f"{name}: unknown feature")
    if violations:
        raise EntityValidationError(violations)
    return Entity(schema, tuple(values))


@dataclass(frozen=True)
class Intervention:
    """A set of feature changes; each entry must be a true change on the
    entity it gets applied to. ``changes`` is kept sorted by feature name."""

    changes: tuple[tuple[str, str], ...]

    def __post_init__(self) -> None:
        entries = tuple(sorted(tuple(self.changes)))
        names = [n for n, _ in entries]
        if len(set(names)) != len(names):
            raise InvalidIntervention(f"intervention repeats a feature: {names}")
        object.__setattr__(self, "changes", entries)

    @classmethod
    def of(cls, changes: Union[Mapping[str, str], Iterable[tuple[str, str]]]) -> "Intervention":
        if isinstance(changes, Mapping):
            return cls(tuple(changes.items()))
        return cls(tuple(changes))

    @property
    def features(self) -> frozenset[str]:
        return frozenset(n for n, _ in self.changes)

    def as_dict(self) -> dict[str, str]:
        return dict(self.changes)

    def __len__(self) -> int:
        return len(self.changes)

    def __str__(self) -> str:
        if not self.changes:
            return "{}"
        return "{" + ", ".join(f"{n}->{v}" for n, v in self.changes) + "}"


def apply_intervention(e: Entity, iv: Intervention) -> Entity:
    """Apply a change set to an entity, checking it is a valid intervention:
    distinct features, in-domain values, and every entry a true change."""
    for name, value in iv.changes:
        if name not in e.schema:
            raise InvalidIntervention(f"unknown feature {name!r}")
        if value not in e.schema.domain(name):
            raise InvalidIntervention(f"{name}: value {value!r} not in domain")
        if e[name] == value:
            raise InvalidIntervention(f"{name}: {value!r} is not a change")
    return e.with_changes(iv.as_dict())


@dataclass(frozen=True)
class CounterfactualModel:
    """A counterfactual version of some base entity: the intervention that
    produced it, the resulting entity, and its (new) label."""

    intervention: Intervention
    result: Entity
    label: str

    @property
    def changed(self) -> frozenset[str]:
        return self.intervention.features

    def sort_key(self) -> tuple:
        names = tuple(n for n, _ in self.intervention.changes)
        vals = tuple(v for _, v in self.intervention.changes)
        return (len(names), names, vals)

    def __str__(self) -> str:
        return f"{self.intervention} => {self.label}"


def enumerate_interventions(
    schema: FeatureSchema,
    e: Entity,
    subset: Iterable[str],
    budget: int | None = None,
) -> Iterator[Intervention]:
    """Yield every intervention that changes exactly the features in
    ``subset``: all combinations of non-original values, ordered by
    (feature name, domain position).

    The total count is the product of (|domain|-1) over the subset; if it
    would exceed ``budget`` the call raises :class:`BudgetExceeded` before
    yielding anything.
    """
    names = sorted(set(subset))
    for n in names:
        schema.feature(n)
    alternatives = [
        [v for v in schema.domain(n) if v != e[n]] for n in names
    ]
    total = math.prod(len(a) for a in alternatives)
    if budget is not None and total > budget:
        raise BudgetExceeded(
            f"subset {names} yields {total} interventions, budget is {budget}"
        )

    def gen() -> Iterator[Intervention]:
        for combo in product(*alternatives):
            yield Intervention(tuple(zip(names, combo)))

    return gen()


def iter_entities(schema: FeatureSchema) -> Iterator[Entity]:
    """Iterate the full product space in feature order, domain order."""
    domains = [f.domain for f in schema.features]
    for combo in product(*domains):
        yield Entity(schema, combo)


class PopulationDistribution:
    """Supplies per-feature value probabilities for resp and Shap."""

    kind: str = "abstract"

    def __init__(self, schema: FeatureSchema):
        self.schema = schema

    def marginal(self, feature: str, value: str) -> float:
        raise NotImplementedError


class ProductDistribution(PopulationDistribution):
    """Independent per-feature marginals over the whole schema."""

    kind = "product"

    def __init__(self, schema: FeatureSchema, marginals: Mapping[str, Mapping[str, float]]):
        super().__init__(schema)
        table: dict[str, dict[str, float]] = {}
        for f in schema.features:
            if f.name not in marginals:
                raise DistributionError(f"{f.name}: marginal missing")
            row = dict(marginals[f.name])
            if set(row) != set(f.domain):
                raise DistributionError(
                    f"{f.name}: marginal must cover exactly the domain"
                )
            if any(p < 0 for p in row.values()):
                raise DistributionError(f"{f.name}: negative probability")
            s = sum(row.values())
            if abs(s - 1.0) > PROB_TOL:
                raise DistributionError(f"{f.name}: probabilities sum to {s}, not 1")
            table[f.name] = row
        extra = set(marginals) - set(schema.names)
        if extra:
            raise DistributionError(f"marginals for unknown features: {sorted(extra)}")
        self.marginals = table

    def marginal(self, feature: str, value: str) -> float:
        self.schema.feature(feature).index_of(value)
        return self.marginals[feature][value]


class EmpiricalDistribution(PopulationDistribution):
    """A weighted sample of entities; marginals are raw weighted frequencies
    with no smoothing (zero probabilities are allowed)."""

    kind = "empirical"

    def __init__(
        self,
        schema: FeatureSchema,
        rows: Sequence[Entity],
        weights: Sequence[float] | None = None,
    ):
        super().__init__(schema)
        self.rows = tuple(rows)
        if weights is None:
            weights = [1.0] * len(self.rows)
        self.weights = tuple(float(w) for w in weights)
        if len(self.weights) != len(self.rows):
            raise DistributionError("weights and rows differ in length")
        if any(w < 0 for w in self.weights):
            raise DistributionError("weights must be nonnegative")
        self.total_weight = sum(self.weights)
        if self.total_weight <= 0:
            raise DistributionError("total weight must be positive")
        for r in self.rows:
            if r.schema is not schema and r.schema != schema:
                raise DistributionError("row does not belong to the schema")

    def marginal(self, feature: str, value: str) -> float:
        self.schema.feature(feature).index_of(value)
        hit = sum(w for r, w in zip(self.rows, self.weights) if r[feature] == value)
        return hit / self.total_weight


def uniform_distribution(schema: FeatureSchema) -> ProductDistribution:
    """The default population: every feature uniform over its domain."""
    return ProductDistribution(
        schema,
        {f.name: {v: 1.0 / len(f.domain) for v in f.domain} for f in schema.features},
    )


def marginal_probability(dist: PopulationDistribution, feature: str, value: str) -> float:
    """Probability of ``feature = value`` under the distribution."""
    return dist.marginal(feature, value)


def _open_source(source: Union[str, os.PathLike, IO[str]]):
    if hasattr(source, "read"):
        return source, False
    return open(source, "r", encoding="utf-8", newline=""), True


def read_entity_rows(
    schema: FeatureSchema,
    source: Union[str, os.PathLike, IO[str]],
    extra_columns: Sequence[str] = (),
) -> list[tuple[Entity, dict[str, str]]]:
    """Read a comma-separated dataset: header of feature names (any order,
    no extras beyond ``extra_columns``), one entity per row.

    Returns (entity, extras) pairs; errors carry the offending line number.
    """
    fh, close = _open_source(source)
    try:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyDataset("dataset has no header") from None
        header = [h.strip() for h in header]
        expected = set(schema.names) | set(extra_columns)
        if len(set(header)) != len(header):
            raise DatasetError("duplicate column in header")
        unknown = [h for h in header if h not in expected]
        if unknown:
            raise DatasetError(f"unknown columns: {unknown}")
        missing = [n for n in expected if n not in header]
        if missing:
            raise DatasetError(f"missing columns: {sorted(missing)}")
        out = []
        for row in reader:
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != len(header):
                raise DatasetError(
                    f"row {reader.line_num}: expected {len(header)} cells, got {len(row)}"
                )
            cells = dict(zip(header, (c.strip() for c in row)))
            extras = {c: cells.pop(c) for c in extra_columns}
            try:
                entity = validate_entity(schema, cells)
            except EntityValidationError as err:
                raise DatasetError(f"row {reader.line_num}: {err}") from None
            out.append((entity, extras))
        if not out:
            raise EmptyDataset("dataset has no rows")
        return out
    finally:
        if close:
            fh.close()


def load_empirical_distribution(
    schema: FeatureSchema, source: Union[str, os.PathLike, IO[str]]
) -> EmpiricalDistribution:
    """Load a CSV dataset into an empirical distribution with unit weights."""
    rows = [e for e, _ in read_entity_rows(schema, source)]
    return EmpiricalDistribution(schema, rows)
