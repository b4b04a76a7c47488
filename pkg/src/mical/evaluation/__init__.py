from .ablation import (
    VARIANTS,
    AblationSettings,
    MetricReport,
    PatientData,
    SYNTH_MI_CONFIG,
    prepare_patient,
    synthetic_cohort,
    fit_model,
    run_ablation,
    transition_model,
    write_report_csv,
    write_report_json,
)
from .folds import FoldPlan, make_folds
from .metrics import auc_pr, auc_roc, f1, precision_recall_f1
from .synth import SynthSpec, generate_synthetic

__all__ = [
    "VARIANTS",
    "AblationSettings",
    "MetricReport",
    "PatientData",
    "SYNTH_MI_CONFIG",
    "prepare_patient",
    "synthetic_cohort",
    "fit_model",
    "run_ablation",
    "transition_model",
    "write_report_csv",
    "write_report_json",
    "FoldPlan",
    "make_folds",
    "auc_pr",
    "auc_roc",
    "f1",
    "precision_recall_f1",
    "SynthSpec",
    "generate_synthetic",
]
