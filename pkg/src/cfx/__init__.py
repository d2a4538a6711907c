"""Counterfactual explanations for classifiers over finite categorical
features: minimum-change search, brave/cautious query answering, and
responsibility/Shapley attribution scores."""

from .errors import BudgetExceeded, CfxError
from .model import (
    CounterfactualModel,
    EmpiricalDistribution,
    Entity,
    EntityValidationError,
    FeatureDef,
    FeatureSchema,
    Intervention,
    InvalidIntervention,
    PopulationDistribution,
    ProductDistribution,
    SchemaError,
    apply_intervention,
    enumerate_interventions,
    iter_entities,
    load_empirical_distribution,
    marginal_probability,
    uniform_distribution,
    validate_entity,
)
from .classifiers import (
    Classifier,
    DecisionTreeClassifier,
    NaiveBayesClassifier,
    TabulatedClassifier,
    load_decision_tree,
    load_naive_bayes,
    load_tabulated,
)
from .external import HttpClassifier, SubprocessClassifier
from .speclang import (
    EvalContext,
    Formula,
    SpecDocument,
    check_formula,
    eval_formula,
    format_formula,
    format_spec,
    parse_formula,
    parse_spec,
)
from .engine import (
    ComparisonReport,
    ModelSet,
    QueryAnswer,
    SearchConfig,
    answer_query,
    compare_classifiers,
    enumerate_counterfactuals,
    max_responsibility_counterfactuals,
    minimal_counterfactuals,
)
from .scores import (
    ReportOptions,
    ScoreRecord,
    ScoreReport,
    ShapConfig,
    Witness,
    characteristic_value,
    oracle_xresp,
    resp_score,
    score_report,
    shap_exact,
    xresp_score,
)

__version__ = "0.1.0"
