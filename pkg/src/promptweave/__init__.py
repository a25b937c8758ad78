"""Prompt learning for multimodal models with missing modalities.

A numpy-only stack: an autodiff tensor library (:mod:`promptweave.numerics`),
a crossmodal transformer backbone, generative / missing-signal /
missing-type prompts, synthetic data, training, evaluation and sweeps.
"""

from .backbone import ConfigError, ModelConfig
from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .data import ALL_MASKS, INCOMPLETE_MASKS, Dataset, MissingMask, SyntheticSpec, generate_splits
from .evaluation import MetricsReport, compute_metrics, count_params, evaluate_cases
from .model import PromptSwitches, forward, init_model
from .training import TrainConfig, pretrain, prompt_tune

__version__ = "0.1.0"

__all__ = [
    "ALL_MASKS",
    "INCOMPLETE_MASKS",
    "Checkpoint",
    "ConfigError",
    "Dataset",
    "MetricsReport",
    "MissingMask",
    "ModelConfig",
    "PromptSwitches",
    "SyntheticSpec",
    "TrainConfig",
    "compute_metrics",
    "count_params",
    "evaluate_cases",
    "forward",
    "generate_splits",
    "init_model",
    "load_checkpoint",
    "pretrain",
    "prompt_tune",
    "save_checkpoint",
]
