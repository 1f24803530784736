"""Ensembles of phalanxes: rare-class ranking by averaging forests fitted to
data-driven groups of variables."""

__version__ = "0.1.0"

from .cv import balanced_folds, cross_validate, diversity_map, win_count
from .dataset import Dataset, GroupingPlan, SynthSpec, group_by_names, load_csv, synth_generate
from .ensemble import EpxModel, fit_epx, load_model, predict_epx, save_model
from .forest import ForestConfig, fit, oob_probabilities, predict_proba
from .formation import FormationConfig, form_phalanxes, run_formation
from .grouping import cluster_groups, jaccard_distance, ward_cluster
from .metrics import ave_p, hit_curve, initial_enhancement, null_calibration

__all__ = [
    "Dataset",
    "EpxModel",
    "ForestConfig",
    "FormationConfig",
    "GroupingPlan",
    "SynthSpec",
    "ave_p",
    "balanced_folds",
    "cluster_groups",
    "cross_validate",
    "diversity_map",
    "fit",
    "fit_epx",
    "form_phalanxes",
    "group_by_names",
    "hit_curve",
    "initial_enhancement",
    "jaccard_distance",
    "load_csv",
    "load_model",
    "null_calibration",
    "oob_probabilities",
    "predict_epx",
    "predict_proba",
    "run_formation",
    "save_model",
    "synth_generate",
    "ward_cluster",
    "win_count",
]
