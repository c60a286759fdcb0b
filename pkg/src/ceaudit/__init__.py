"""Audit counterfactual explanations against a ground-truth structural causal model."""

from .ce_search import Counterfactual, CeRequest, dice_generate, wachter_generate
from .classifier import LogisticModel, TrainConfig, fit
from .harness import ExperimentConfig, ExperimentReport, conflict_summary, run_experiment
from .pcm import Verdict, abduct, mutilate, predict_full, validate_ce
from .sampler import Dataset, Unit, sample_dataset
from .scm import Scm, StructureKind, preset

__version__ = "0.1.0"
