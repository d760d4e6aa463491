"""Cross-validatory predictive model selection for normal linear models."""

__version__ = "0.1.0"

from .criterion import (
    KNOWN,
    UNKNOWN,
    CriterionValue,
    SelectionReport,
    cv_score,
    gamma1_unknown,
    gamma_known,
    gamma_unknown,
    log_cv_predictive_known_sigma,
    log_cv_predictive_unknown_sigma,
    predict_future,
    prepare_model,
    select_model,
)
from .diagnostics import ConditionReport, condition_report
from .errors import CVSelectError
from .models import ModelAlpha, ModelSpace, enumerate_models, is_correct_model, submatrix
from .oracle import TruthSpec, delta_n, loss, loss_profile, oracle_model, parsimonious_correct, risk
from .schemes import TrainingScheme, disjoint_scheme, rotation_scheme, validate_scheme
from .simulation import ExperimentConfig, ExperimentReport, run_experiment

__all__ = [
    "KNOWN",
    "UNKNOWN",
    "CVSelectError",
    "ConditionReport",
    "CriterionValue",
    "ExperimentConfig",
    "ExperimentReport",
    "ModelAlpha",
    "ModelSpace",
    "SelectionReport",
    "TrainingScheme",
    "TruthSpec",
    "condition_report",
    "cv_score",
    "delta_n",
    "disjoint_scheme",
    "enumerate_models",
    "gamma1_unknown",
    "gamma_known",
    "gamma_unknown",
    "is_correct_model",
    "log_cv_predictive_known_sigma",
    "log_cv_predictive_unknown_sigma",
    "loss",
    "loss_profile",
    "oracle_model",
    "parsimonious_correct",
    "predict_future",
    "prepare_model",
    "risk",
    "rotation_scheme",
    "run_experiment",
    "select_model",
    "submatrix",
    "validate_scheme",
]
