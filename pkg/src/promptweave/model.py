"""Full forward pipeline: generation, input projection, prompts, backbone, head."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .backbone import ModelConfig, crossmodal_forward, init_backbone, predict, project_inputs
from .data import MODALITIES, Dataset
from .numerics import Rng, Tensor
from .params import ParamStore
from .prompts import (
    apply_missing_signal,
    build_missing_type_matrix,
    init_mmgm,
    init_prompts,
    mmgm_generate,
    project_missing_type,
    split_type_prompts,
)


@dataclass(frozen=True)
class PromptSwitches:
    """Which prompt mechanisms take part in the forward pass."""

    generative: bool = True
    signal: bool = True
    missing_type: bool = True

    @property
    def any(self) -> bool:
        return self.generative or self.signal or self.missing_type

    @classmethod
    def none(cls) -> PromptSwitches:
        return cls(False, False, False)

    @classmethod
    def parse(cls, text: str) -> PromptSwitches:
        """Parse e.g. ``"gen,ms,mt"``, ``"gen"`` or ``"none"``."""
        parts = {s.strip() for s in text.split(",") if s.strip()}
        if parts in ({"none"}, set()):
            return cls.none()
        bad = parts - {"gen", "ms", "mt"}
        if bad:
            raise ValueError(f"unknown prompt kinds {sorted(bad)}; use gen, ms, mt or none")
        return cls("gen" in parts, "ms" in parts, "mt" in parts)

    def label(self) -> str:
        on = [k for k, flag in (("gen", self.generative), ("ms", self.signal), ("mt", self.missing_type)) if flag]
        return ",".join(on) or "none"


def init_model(cfg: ModelConfig, seed: int) -> ParamStore:
    rng = Rng(seed, "init")
    store = init_backbone(cfg, rng.fork("backbone"))
    init_mmgm(cfg, rng.fork("mmgm"), store)
    init_prompts(cfg, rng.fork("prompts"), store)
    return store


def batch_tensors(ds: Dataset, idx=None, dtype=np.float32) -> tuple[dict[str, Tensor], np.ndarray]:
    if idx is None:
        idx = slice(None)
    feats = {m: Tensor(np.asarray(ds.feature(m)[idx], dtype=dtype)) for m in MODALITIES}
    return feats, np.asarray(ds.masks[idx], dtype=bool)


def forward(
    p: ParamStore,
    cfg: ModelConfig,
    feats: dict[str, Tensor],
    masks: np.ndarray,
    switches: PromptSwitches = PromptSwitches(),
    rng: Rng | None = None,
) -> Tensor:
    """Predictions for one batch.

    With all switches off this is the plain backbone on zero-filled inputs.
    ``rng`` enables attention dropout (pretraining only).
    """
    masks = np.asarray(masks, dtype=bool).reshape(-1, 3)
    if switches.generative and masks.any():
        feats = mmgm_generate(feats, masks, p, cfg)
    h = project_inputs(feats, p, cfg)
    if switches.signal:
        h = apply_missing_signal(h, masks, p)
    type_prompts = None
    if switches.missing_type:
        projected = project_missing_type(p["prompts.mt"], build_missing_type_matrix(masks, p))
        type_prompts = split_type_prompts(projected)
    fused = crossmodal_forward(h, p, cfg, type_prompts, rng)
    return predict(fused, p, cfg)
