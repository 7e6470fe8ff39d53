"""promptlf: prompted weak supervision for multilingual meme classification.

Questions posed to a vision-language model act as labeling functions; their
integer-coded answers form feature vectors for a from-scratch random forest,
which is then refined by error-driven question expansion and two pruning
strategies.
"""

from .dataset import (DatasetManifest, MemeRecord, SplitAssignment,
                      load_manifest, stratified_split)
from .extraction import (AnswerCache, CellResult, FeatureMatrix, extract_cell,
                         extract_matrix, load_features_csv, save_features_csv)
from .forest import (DecisionTree, ForestConfig, ForestModel, fit, importances,
                     load_model, predict, save_model)
from .gateway import (BackendConfig, HttpBackend, MockBackend, ScriptedBackend,
                      VlmRequest, VlmResponse, baseline_system_prompt,
                      build_backend, feature_system_prompt)
from .metrics import (EvaluationReport, PruneResult, error_report, f1_prune,
                      imp_prune, jaccard, jaccard_matrix, macro_f1)
from .registry import (AnswerSchema, LabelingFunction, LFRegistry,
                       builtin_schema, load_registry, normalize_answer,
                       save_registry)

__version__ = "0.1.0"

__all__ = [
    "AnswerCache", "AnswerSchema", "BackendConfig", "CellResult",
    "DatasetManifest", "DecisionTree", "EvaluationReport", "FeatureMatrix",
    "ForestConfig", "ForestModel", "HttpBackend", "LFRegistry",
    "LabelingFunction", "MemeRecord", "MockBackend", "PruneResult",
    "ScriptedBackend", "SplitAssignment", "VlmRequest", "VlmResponse",
    "baseline_system_prompt", "builtin_schema", "error_report", "extract_cell",
    "extract_matrix", "f1_prune", "feature_system_prompt", "fit", "imp_prune",
    "importances", "jaccard", "jaccard_matrix", "load_features_csv",
    "load_manifest", "load_model", "load_registry", "macro_f1",
    "normalize_answer", "predict", "save_features_csv", "save_model",
    "save_registry", "stratified_split",
]
