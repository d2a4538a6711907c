"""Attribution scores for feature values: x-resp, resp and exact Shap.

x-resp is the actual-causality responsibility 1/(1+s): the explained
feature flips the label after changing a smallest label-preserving
contingency set of s other features. resp generalizes it by weighting the
flip by the probability of resampled values of the explained feature at
the minimal contingency size. Shap is the exact Shapley value of the game
whose characteristic function is the expected payoff (indicator of the
original label) when a feature subset is pinned to the entity's values.

``oracle_xresp`` recomputes x-resp by exhaustive enumeration with no
pruning; it exists so the main implementation can be checked against an
independent path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations, product
from typing import Mapping, Sequence

from .classifiers import Classifier
from .errors import BudgetExceeded, CfxError
from .model import (
    Entity,
    FeatureSchema,
    PopulationDistribution,
    marginal_probability,
    uniform_distribution,
)
from .speclang import EvalContext, Formula, eval_formula


class FeatureCapExceeded(CfxError):
    """Too many features for exact subset enumeration."""


class ExpectationBudgetExceeded(CfxError):
    """The complement space of a characteristic-value sum is too large."""


class OracleSpaceTooLarge(CfxError):
    """The product space is too large for the brute-force oracle."""


class NoScoreSelected(CfxError):
    """A score report was requested without any score."""


@dataclass(frozen=True)
class Witness:
    """Re-verifiable certificate for a responsibility score: changing the
    contingency values keeps the original label, then changing the explained
    feature to ``flip_value`` flips it (and satisfies all constraints)."""

    contingency: tuple[tuple[str, str], ...]
    flip_value: str

    def contingency_dict(self) -> dict[str, str]:
        return dict(self.contingency)


@dataclass(frozen=True)
class ScoreRecord:
    feature: str
    value: float
    witness: Witness | None = None
    contingency_size: int | None = None


def _constraints_hold(
    constraints: Sequence[Formula], original: Entity, star: Entity, label: str
) -> bool:
    changed = frozenset(
        n for n in original.schema.names if original[n] != star[n]
    )
    ctx = EvalContext(original=original, counterfactual=star, changed=changed, label=label)
    return all(eval_formula(c, ctx) for c in constraints)


def _contingency_space(schema: FeatureSchema, e: Entity, others: Sequence[str], size: int):
    """(names, values) pairs for all label-preserving candidate contingencies
    of one size, in canonical order: name combinations lexicographically,
    values by domain position."""
    for names in combinations(others, size):
        alternatives = [
            [v for v in schema.domain(n) if v != e[n]] for n in names
        ]
        for values in product(*alternatives):
            yield names, values


def xresp_score(
    schema: FeatureSchema,
    e: Entity,
    classifier: Classifier,
    feature: str,
    k: int = 2,
    constraints: Sequence[Formula] = (),
    budget: int | None = None,
    strict: bool = False,
) -> ScoreRecord:
    """Responsibility of ``feature``'s value: 1/(1+s) for the smallest
    contingency size s <= k admitting a label flip, else 0.

    Contingency sizes are searched ascending and the search stops at the
    first qualifying size; the witness is the canonically least qualifying
    (contingency, values, flip value) triple. Constraints apply to the final
    flipped entity; contingency changes only need to preserve the label.
    """
    schema.feature(feature)
    if k < 0:
        raise ValueError("k must be >= 0")
    original_label = classifier.classify(e)
    others = [n for n in sorted(schema.names) if n != feature]
    flips = [v for v in schema.domain(feature) if v != e[feature]]
    evaluated = 0
    for s in range(0, min(k, len(others)) + 1):
        for names, values in _contingency_space(schema, e, others, s):
            evaluated += 1
            if budget is not None and evaluated > budget:
                if strict:
                    raise BudgetExceeded(
                        f"contingency search exceeded budget {budget}"
                    )
                return ScoreRecord(feature, 0.0)
            contingent = e.with_changes(dict(zip(names, values)))
            if classifier.classify(contingent) != original_label:
                continue
            for v in flips:
                star = contingent.with_changes({feature: v})
                label = classifier.classify(star)
                if label == original_label:
                    continue
                if not _constraints_hold(constraints, e, star, label):
                    continue
                witness = Witness(tuple(zip(names, values)), v)
                return ScoreRecord(feature, 1.0 / (1 + s), witness, s)
    return ScoreRecord(feature, 0.0)


def resp_score(
    schema: FeatureSchema,
    e: Entity,
    classifier: Classifier,
    feature: str,
    k: int = 2,
    dist: PopulationDistribution | None = None,
    constraints: Sequence[Formula] = (),
    budget: int | None = None,
    strict: bool = False,
) -> ScoreRecord:
    """Distribution-aware responsibility: at the least contingency size s*
    where some label-preserving contingency gives positive flip mass,
    the score is max over contingencies of
    sum over values v' of P(feature=v') * [flip and constraints hold],
    divided by 1+s*. Zero if no size <= k qualifies.
    """
    schema.feature(feature)
    if k < 0:
        raise ValueError("k must be >= 0")
    if dist is None:
        dist = uniform_distribution(schema)
    original_label = classifier.classify(e)
    others = [n for n in sorted(schema.names) if n != feature]
    evaluated = 0
    for s in range(0, min(k, len(others)) + 1):
        best: tuple[float, Witness] | None = None
        for names, values in _contingency_space(schema, e, others, s):
            evaluated += 1
            if budget is not None and evaluated > budget:
                if strict:
                    raise BudgetExceeded(
                        f"contingency search exceeded budget {budget}"
                    )
                return ScoreRecord(feature, 0.0)
            contingent = e.with_changes(dict(zip(names, values)))
            if classifier.classify(contingent) != original_label:
                continue
            mass = 0.0
            first_flip: str | None = None
            for v in schema.domain(feature):
                if v == e[feature]:
                    continue
                star = contingent.with_changes({feature: v})
                label = classifier.classify(star)
                if label == original_label:
                    continue
                if not _constraints_hold(constraints, e, star, label):
                    continue
                mass += marginal_probability(dist, feature, v)
                if first_flip is None:
                    first_flip = v
            if first_flip is not None and (best is None or mass > best[0]):
                best = (mass, Witness(tuple(zip(names, values)), first_flip))
        if best is not None and best[0] > 0.0:
            return ScoreRecord(feature, best[0] / (1 + s), best[1], s)
    return ScoreRecord(feature, 0.0)


@dataclass(frozen=True)
class ShapConfig:
    """Setup for the Shapley game: the population distribution, the payoff
    label (defaults to the entity's own label), the exact-enumeration
    feature cap and the complement-space budget for one expectation."""

    distribution: PopulationDistribution
    payoff_label: str | None = None
    feature_cap: int = 16
    expectation_budget: int | None = 1_000_000

    def __post_init__(self) -> None:
        if self.feature_cap < 1:
            raise ValueError("feature_cap must be >= 1")


def characteristic_value(
    schema: FeatureSchema,
    e: Entity,
    classifier: Classifier,
    subset: Sequence[str],
    cfg: ShapConfig,
) -> float:
    """Expected payoff when the features in ``subset`` are pinned to the
    entity's values and the rest follow the population distribution."""
    pinned = set(subset)
    for name in pinned:
        schema.feature(name)
    payoff_label = cfg.payoff_label or classifier.classify(e)
    dist = cfg.distribution
    if dist.kind == "empirical":
        overwrite = {n: e[n] for n in schema.names if n in pinned}
        total = 0.0
        for row, w in zip(dist.rows, dist.weights):
            if w == 0.0:
                continue
            sample = row.with_changes(overwrite)
            total += w * (classifier.classify(sample) == payoff_label)
        return total / dist.total_weight
    free = [n for n in schema.names if n not in pinned]
    space = math.prod(len(schema.domain(n)) for n in free)
    if cfg.expectation_budget is not None and space > cfg.expectation_budget:
        raise ExpectationBudgetExceeded(
            f"complement space has {space} assignments, budget is {cfg.expectation_budget}"
        )
    total = 0.0
    domains = [schema.domain(n) for n in free]
    for combo in product(*domains):
        weight = 1.0
        for n, v in zip(free, combo):
            weight *= dist.marginal(n, v)
            if weight == 0.0:
                break
        if weight == 0.0:
            continue
        sample = e.with_changes(dict(zip(free, combo)))
        total += weight * (classifier.classify(sample) == payoff_label)
    return total


def shap_exact(
    schema: FeatureSchema, e: Entity, classifier: Classifier, cfg: ShapConfig
) -> list[ScoreRecord]:
    """Exact Shapley values by full subset enumeration (2^n characteristic
    evaluations), one record per feature in schema order."""
    names = schema.names
    n = len(names)
    if n > cfg.feature_cap:
        raise FeatureCapExceeded(f"{n} features exceed the cap {cfg.feature_cap}")
    payoff_label = cfg.payoff_label or classifier.classify(e)
    cfg = ShapConfig(
        distribution=cfg.distribution,
        payoff_label=payoff_label,
        feature_cap=cfg.feature_cap,
        expectation_budget=cfg.expectation_budget,
    )
    values: dict[frozenset[str], float] = {}
    for size in range(0, n + 1):
        for subset in combinations(names, size):
            values[frozenset(subset)] = characteristic_value(
                schema, e, classifier, subset, cfg
            )
    fact = math.factorial
    records = []
    for name in names:
        rest = [x for x in names if x != name]
        phi = 0.0
        for size in range(0, n):
            coeff = fact(size) * fact(n - size - 1) / fact(n)
            for subset in combinations(rest, size):
                s = frozenset(subset)
                phi += coeff * (values[s | {name}] - values[s])
        records.append(ScoreRecord(name, phi))
    return records


@dataclass(frozen=True)
class ReportOptions:
    """Which scores to compute and with what inputs."""

    scores: tuple[str, ...]
    k: int = 2
    distribution: PopulationDistribution | None = None
    constraints: tuple[Formula, ...] = ()
    feature_cap: int = 16
    expectation_budget: int | None = 1_000_000


@dataclass(frozen=True)
class ReportRow:
    feature: str
    xresp: ScoreRecord | None = None
    resp: ScoreRecord | None = None
    shap: ScoreRecord | None = None


@dataclass(frozen=True)
class ScoreReport:
    original_label: str
    minimal_count: int
    minimal_size: int | None
    rows: tuple[ReportRow, ...]


KNOWN_SCORES = ("xresp", "resp", "shap")


def score_report(
    schema: FeatureSchema,
    e: Entity,
    classifier: Classifier,
    options: ReportOptions,
) -> ScoreReport:
    """One row per feature (schema order) with every requested score, plus
    the original label and the counterfactual count at minimal size."""
    from .engine import SearchConfig, minimal_counterfactuals

    if not options.scores:
        raise NoScoreSelected("no score selected")
    unknown = [s for s in options.scores if s not in KNOWN_SCORES]
    if unknown:
        raise NoScoreSelected(f"unknown scores {unknown}; known: {list(KNOWN_SCORES)}")
    dist = options.distribution or uniform_distribution(schema)
    minimal = minimal_counterfactuals(
        schema,
        e,
        classifier,
        SearchConfig(constraints=options.constraints),
    )
    shap_records: dict[str, ScoreRecord] = {}
    if "shap" in options.scores:
        cfg = ShapConfig(
            distribution=dist,
            feature_cap=options.feature_cap,
            expectation_budget=options.expectation_budget,
        )
        shap_records = {r.feature: r for r in shap_exact(schema, e, classifier, cfg)}
    rows = []
    for name in schema.names:
        xr = (
            xresp_score(schema, e, classifier, name, k=options.k, constraints=options.constraints)
            if "xresp" in options.scores
            else None
        )
        rp = (
            resp_score(
                schema, e, classifier, name,
                k=options.k, dist=dist, constraints=options.constraints,
            )
            if "resp" in options.scores
            else None
        )
        rows.append(ReportRow(name, xresp=xr, resp=rp, shap=shap_records.get(name)))
    sizes = {len(m.changed) for m in minimal.models}
    return ScoreReport(
        original_label=minimal.original_label,
        minimal_count=len(minimal.models),
        minimal_size=min(sizes) if sizes else None,
        rows=tuple(rows),
    )


def oracle_xresp(
    schema: FeatureSchema,
    e: Entity,
    classifier: Classifier,
    feature: str,
    k: int = 2,
    constraints: Sequence[Formula] = (),
) -> ScoreRecord:
    """Same contract as :func:`xresp_score`, but computed by exhaustively
    collecting every qualifying (contingency, values, flip value) triple
    with no pruning or early stopping, then taking the minimum size."""
    if schema.product_space_size() > 10**6:
        raise OracleSpaceTooLarge(
            f"product space {schema.product_space_size()} exceeds 10^6"
        )
    schema.feature(feature)
    original_label = classifier.classify(e)
    others = [n for n in sorted(schema.names) if n != feature]
    qualifying: list[tuple[int, tuple, tuple, int, str]] = []
    for s in range(0, min(k, len(others)) + 1):
        for names, values in _contingency_space(schema, e, others, s):
            contingent = e.with_changes(dict(zip(names, values)))
            if classifier.classify(contingent) != original_label:
                continue
            for v in schema.domain(feature):
                if v == e[feature]:
                    continue
                star = contingent.with_changes({feature: v})
                label = classifier.classify(star)
                if label == original_label:
                    continue
                if not _constraints_hold(constraints, e, star, label):
                    continue
                value_positions = tuple(
                    schema.feature(n).index_of(x) for n, x in zip(names, values)
                )
                flip_pos = schema.feature(feature).index_of(v)
                qualifying.append((s, names, value_positions, flip_pos, v))
    if not qualifying:
        return ScoreRecord(feature, 0.0)
    s_min, names, value_positions, _, v = min(qualifying)
    values = tuple(
        schema.domain(n)[p] for n, p in zip(names, value_positions)
    )
    return ScoreRecord(
        feature,
        1.0 / (1 + s_min),
        Witness(tuple(zip(names, values)), v),
        s_min,
    )
