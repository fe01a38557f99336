"""Calibrated prediction sets for ordinal classifiers.

Wraps any model that emits class-probability vectors over ordered labels
(e.g. disease severity grades) and turns them into prediction sets with a
distribution-free marginal coverage guarantee, plus the evaluation and
case-flagging machinery to study them.
"""

from .core import (
    FULL,
    GradingRecord,
    LabelInterval,
    LabelSubset,
    argmax_label,
    as_score_vector,
    is_full,
)
from .methods import (
    CALIBRATABLE_METHODS,
    GreedyTrace,
    Method,
    aps_score,
    cdf_interval,
    cdf_label_scores,
    cdf_score,
    exact_interval,
    greedy_interval,
    greedy_trace,
    label_scores,
    label_scores_batch,
    lac_score,
    lac_set,
    prediction_set,
)
from .calibrate import (
    CalibratedPredictor,
    calibrate,
    check_alpha,
    conformal_quantile,
    load_predictor,
    predictor_from_text,
    predictor_to_text,
    quantile_rank,
    save_predictor,
)
from .data import (
    Dataset,
    SyntheticSpec,
    generate_synthetic,
    load_records,
    records_to_csv,
    save_records,
    save_truths,
    split_by_patient,
    temperature_scale,
    truth_sidecar_path,
)
from .evaluation import (
    PatientUncertainty,
    StratumStats,
    StratumSummary,
    TrialReport,
    empirical_coverage,
    fisher_exact_2x2,
    flag_top_k,
    mean_set_size,
    patient_uncertainty,
    report_csv,
    report_table,
    run_trials,
    stratified_report,
)

__version__ = "0.1.0"

__all__ = [
    "FULL",
    "GradingRecord",
    "LabelInterval",
    "LabelSubset",
    "argmax_label",
    "as_score_vector",
    "is_full",
    "CALIBRATABLE_METHODS",
    "GreedyTrace",
    "Method",
    "aps_score",
    "cdf_interval",
    "cdf_label_scores",
    "cdf_score",
    "exact_interval",
    "greedy_interval",
    "greedy_trace",
    "label_scores",
    "label_scores_batch",
    "lac_score",
    "lac_set",
    "prediction_set",
    "CalibratedPredictor",
    "calibrate",
    "check_alpha",
    "conformal_quantile",
    "load_predictor",
    "predictor_from_text",
    "predictor_to_text",
    "quantile_rank",
    "save_predictor",
    "Dataset",
    "SyntheticSpec",
    "generate_synthetic",
    "load_records",
    "records_to_csv",
    "save_records",
    "save_truths",
    "split_by_patient",
    "temperature_scale",
    "truth_sidecar_path",
    "PatientUncertainty",
    "StratumStats",
    "StratumSummary",
    "TrialReport",
    "empirical_coverage",
    "fisher_exact_2x2",
    "flag_top_k",
    "mean_set_size",
    "patient_uncertainty",
    "report_csv",
    "report_table",
    "run_trials",
    "stratified_report",
]
