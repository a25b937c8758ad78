"""
Missing-rate and prompt-length sweeps
=====================================

A tiny model keeps this quick; the trends need the default sizes (see
``promptweave sweep``).
"""

from promptweave.backbone import ModelConfig
from promptweave.data import SyntheticSpec, generate_splits
from promptweave.model import init_model
from promptweave.sweeps import SweepBase, run_sweep
from promptweave.training import TrainConfig, pretrain

cfg = ModelConfig(d_model=16, prompt_len=4, n_heads=2, n_cross_layers=1, raw_dims=(8, 8, 8), seq_lens=(8, 8, 8))
spec = SyntheticSpec(raw_dim=(8, 8, 8), seq_len=(8, 8, 8), n_train=300, n_val=100, n_test=200)
pre_data, tune_data = generate_splits(spec, "pretrain"), generate_splits(spec, "tune")
pre = pretrain(init_model(cfg, 0), cfg, pre_data["train"], TrainConfig(stage="pretrain", epochs=5), pre_data["val"])

base = SweepBase(pre, tune_data["train"], tune_data["val"], tune_data["test"], TrainConfig(epochs=5))
test_eta = run_sweep("test-eta", [0.0, 0.3, 0.7, 1.0], base)
print("ACC vs test missing rate:", [round(a, 1) for a in test_eta.summary()])

lengths = run_sweep("prompt-len", [1, 2, 4], base)
print("IACC over modality dropout:", [round(g, 2) for g in lengths.iacc])
print("xi = IACC / length:", [round(x, 3) for x in lengths.xi])
