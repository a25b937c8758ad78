"""
Prompts and missing-modality generation
=======================================

A missing stream is generated from the available ones, every stream is
tagged with a missing-signal prompt, and shared missing-type prompts are
projected by a mask-dependent matrix before entering the crossmodal layers.
"""

import numpy as np

from promptweave.backbone import ModelConfig
from promptweave.data import INCOMPLETE_MASKS
from promptweave.evaluation import count_params
from promptweave.model import PromptSwitches, forward, init_model
from promptweave.numerics import Tensor
from promptweave.prompts import build_missing_type_matrix, mmgm_generate

cfg = ModelConfig()
params = init_model(cfg, seed=0)
rng = np.random.default_rng(0)
feats = {m: Tensor(rng.normal(size=(2, L, d)).astype(np.float32)) for m, L, d in zip("avt", cfg.seq_lens, cfg.raw_dims)}

# Only the text stream is available: audio and video are generated from it.
masks = np.array([[True, True, False]] * 2)
filled = mmgm_generate(feats, masks, params, cfg)
print("generated audio shape:", filled["a"].shape, "text untouched:", filled["t"] is feats["t"])

# One projection matrix per missing pattern; they all differ.
mats = [build_missing_type_matrix(np.array([m]), params).data[0] for m in INCOMPLETE_MASKS]
print("distinct projection matrices:", len({m.tobytes() for m in mats}))

for label, sw in (("full method", PromptSwitches()), ("no prompts", PromptSwitches.none())):
    print(label, "prediction:", forward(params, cfg, feats, masks, sw).data.ravel())

params.set_trainable(("prompts.", "mmgm.", "backbone.input.", "backbone.head."))
counts = count_params(params)
print(f"trainable share {counts['trainable_ratio']:.3f}, prompt share {counts['prompt_ratio']:.3f}")
