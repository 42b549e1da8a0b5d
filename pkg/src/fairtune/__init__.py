"""Post-hoc debiasing of small feedforward binary classifiers.

The library trains tabular classifiers, measures group-parity disparities,
and removes them after training: by pruning the hidden units most responsible
for the disparity, by fine-tuning directly on a differentiable bias proxy, or
by the classic post-processing baselines. An experiment harness reproduces the
synthetic-data benchmarks end to end.
"""

from .data import (CsvFormatError, CsvSchema, Dataset, SplitSpec, append_protected_feature,
                   load_csv, one_hot_encode, save_csv, split, standardize)
from .gda import GdaConfig, run_gda
from .metrics import (BiasSpec, GroupCounts, GroupError, balanced_accuracy, cov_hat,
                      cov_hat_conditional, eod, proxy_eod, proxy_spd, spd,
                      verify_eod_cov_identity, verify_spd_cov_identity)
from .network import LayerSpec, MlpModel, fc_classifier
from .outcome import DebiasOutcome, read_trajectory
from .postprocess import (EqOddsRule, RandomPerturbConfig, RocRule, eqodds_apply,
                          eqodds_fit, random_perturb, roc_apply, roc_fit)
from .pruning import PruneConfig, influence, prune_step, run_pruning
from .synth import LohConfig, ZafarConfig, gen_loh, gen_zafar
from .training import TrainConfig, grad_params, grad_preactivations, select_threshold, train
from .experiment import ExperimentConfig, ResultRow, run_experiment, sweep

__version__ = "0.1.0"

__all__ = [
    "BiasSpec", "CsvFormatError", "CsvSchema", "Dataset", "DebiasOutcome",
    "EqOddsRule", "ExperimentConfig", "GdaConfig", "GroupCounts", "GroupError",
    "LayerSpec", "LohConfig", "MlpModel", "PruneConfig", "RandomPerturbConfig",
    "ResultRow", "RocRule", "SplitSpec", "TrainConfig", "ZafarConfig",
    "append_protected_feature", "balanced_accuracy", "cov_hat", "cov_hat_conditional",
    "eod", "eqodds_apply", "eqodds_fit", "fc_classifier", "gen_loh", "gen_zafar",
    "grad_params", "grad_preactivations", "influence", "load_csv", "one_hot_encode",
    "proxy_eod", "proxy_spd", "prune_step", "random_perturb", "read_trajectory",
    "roc_apply", "roc_fit", "run_experiment", "run_gda", "run_pruning", "save_csv",
    "select_threshold", "spd", "split", "standardize", "sweep", "train",
    "verify_eod_cov_identity", "verify_spd_cov_identity",
]
