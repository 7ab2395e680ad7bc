"""treewatt: interpretable inference-energy prediction over model trees."""

from .featurization import (
    FEATURE_NAMES,
    MODEL_FEATURES,
    RESOURCE_FEATURES,
    FeatureSubset,
    FeatureVector,
    Normalizer,
    apply_normalizer,
    fit_normalizer,
)
from .model_tree import (
    ModelTree,
    Node,
    NodeKind,
    TreeFormatError,
    load_tree,
    nodes_at_level,
    parse_tree,
    render_annotated,
    save_tree,
    serialize_tree,
    tree_key,
    validate,
)
from .synthetic import (
    OracleParams,
    SyntheticSpec,
    generate_dataset,
    generate_scenario,
    oracle_energy,
    SUPPORTED_PRIMITIVES,
)
from .leaf_regressors import (
    PrimitiveRegressorSet,
    UnknownPrimitiveError,
    predict_leaf,
    predict_leaves,
    train_leaf_regressors,
)
from .tree_regressors import (
    PredictionMap,
    TrainingConfig,
    TrainingError,
    TreeRegressorParams,
    UnstructuredParams,
    alpha,
    end2end_predict,
    predict_sum,
    stepwise_predict,
    train_end2end,
    train_stepwise,
    train_unstructured,
    tree_loss,
    unstructured_predict,
)
from .baseline import BaselineConfig, TraceSample, utilization_energy
from .evaluation import (
    EvalReport,
    ablate_features,
    ablate_regressors,
    error_cdf,
    error_pct,
    loo_splits,
    run_eval,
)
from .analysis import (
    PowerSample,
    TradeoffCandidate,
    bottleneck_breakdown,
    cost_of_queries,
    integrate_power,
    pareto_front,
    tradeoff_select,
)

__version__ = "0.1.0"
