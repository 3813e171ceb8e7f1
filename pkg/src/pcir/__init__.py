"""Invariant anomaly detection under distribution shift.

Detectors train on normal-only, environment-labeled data with a composite
loss `task + weight * penalty`, where the penalty sums Gaussian-kernel
squared MMD between every pair of per-environment representation batches.
The package bundles the numerics (reverse-mode autodiff, Adam/SGD), the
MMD estimators, causal-graph independence checks, a synthetic
multi-environment data generator, scoring rules, evaluation metrics, and
a CLI (`pcir`) that drives experiments end to end.
"""

from .autodiff import NonFiniteError, ShapeError, Tensor
from .causal import (CausalGraph, IndependenceQuery, build_ad_graph, d_separated,
                     d_separated_by_paths, enumerate_paths, graph_from_text,
                     verify_anomaly_graph_independences)
from .datagen import (ConfigError, Dataset, EnvSpec, ScmConfig, covariate_shift_suite,
                      intervene_covariate, intervene_domain, observational,
                      read_dataset, sample_test, sample_train, write_dataset)
from .metrics import (EvalReport, SeedRun, auroc, binned_mi, build_report,
                      invariance_gap, read_report, write_report)
from .mmd import (EnvBatch, KernelConfig, median_heuristic, mmd2_biased,
                  mmd2_unbiased, pcir_penalty, rbf_kernel)
from .models import (EncoderConfig, FitResult, TrainConfig, compactness_loss,
                     composite_loss, fit, load_checkpoint, reconstruction_loss,
                     save_checkpoint)
from .rng import Rng
from .scoring import (ScorerConfig, cosine_norm_score, knn_score,
                      reconstruction_score, score_dataset, write_scores)

__version__ = "0.1.0"

__all__ = [
    "CausalGraph", "ConfigError", "Dataset", "EncoderConfig", "EnvBatch", "EnvSpec",
    "EvalReport", "FitResult", "IndependenceQuery", "KernelConfig", "NonFiniteError",
    "Rng", "ScmConfig", "ScorerConfig", "SeedRun", "ShapeError", "Tensor",
    "TrainConfig", "auroc", "binned_mi", "build_ad_graph", "build_report",
    "compactness_loss", "composite_loss", "cosine_norm_score", "covariate_shift_suite",
    "d_separated", "d_separated_by_paths", "enumerate_paths", "fit", "graph_from_text",
    "intervene_covariate", "intervene_domain", "invariance_gap", "knn_score",
    "load_checkpoint", "median_heuristic", "mmd2_biased", "mmd2_unbiased",
    "observational", "pcir_penalty", "rbf_kernel", "read_dataset", "read_report",
    "reconstruction_loss", "reconstruction_score", "sample_test", "sample_train",
    "save_checkpoint", "score_dataset", "verify_anomaly_graph_independences",
    "write_dataset", "write_report", "write_scores",
]
