"""Losses, Adam, and the pretrain / prompt-tune pipeline with baseline modes."""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, replace

import numpy as np

from . import numerics as nx
from .backbone import HEAD_AND_INPUT_PREFIXES, ModelConfig, init_backbone
from .checkpoint import Checkpoint
from .data import Dataset, MissingMask, apply_missingness
from .model import PromptSwitches, batch_tensors, forward
from .numerics import ContractError, Rng, Tensor
from .params import ParamStore
from .prompts import init_mmgm, init_prompts

log = logging.getLogger(__name__)

BASELINES = ("none", "lower_bound", "substitution", "modality_dropout")
BASELINE_ALIASES = {"lb": "lower_bound", "ms": "substitution", "md": "modality_dropout", "none": "none"}


class DivergenceError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    stage: str = "prompt_tune"
    baseline: str = "none"
    eta: float = 0.7
    epochs: int = 30
    batch_size: int = 64
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    clip_norm: float = 1.0
    max_steps: int = 0  # 0 = no cap beyond epochs
    resample_masks: bool = False
    prompts: str = "gen,ms,mt"
    lb_case: str = ""
    select_on_val: bool = True
    backbone_init: str = "checkpoint"  # baselines only: "checkpoint" or "scratch"

    def __post_init__(self):
        self.baseline = BASELINE_ALIASES.get(self.baseline, self.baseline)

    def validate(self) -> None:
        if self.stage not in ("pretrain", "prompt_tune"):
            raise ValueError(f"stage must be pretrain or prompt_tune, got {self.stage!r}")
        if self.baseline not in BASELINES:
            raise ValueError(f"unknown baseline {self.baseline!r}")
        if not 0.0 <= self.eta <= 1.0:
            raise ValueError(f"eta must lie in [0, 1], got {self.eta}")
        if self.epochs <= 0 or self.batch_size <= 0 or self.lr <= 0:
            raise ValueError("epochs, batch_size and lr must be positive")
        if self.baseline == "lower_bound":
            mask = MissingMask.from_name(self.lb_case)
            if all(mask):
                raise ValueError("lb_case must keep at least one modality")
        if self.backbone_init not in ("checkpoint", "scratch"):
            raise ValueError(f"backbone_init must be checkpoint or scratch, got {self.backbone_init!r}")
        if self.backbone_init == "scratch" and self.baseline == "none":
            raise ValueError("backbone_init='scratch' applies to baseline modes only")
        PromptSwitches.parse(self.prompts)

    @property
    def switches(self) -> PromptSwitches:
        if self.stage == "pretrain" or self.baseline != "none":
            return PromptSwitches.none()
        return PromptSwitches.parse(self.prompts)

    def to_dict(self) -> dict:
        return asdict(self)


# -- losses ---------------------------------------------------------------------------


def compute_loss(pred: Tensor, labels: np.ndarray, task: str) -> Tensor:
    """Batch-mean L1 (regression) or cross-entropy over softmaxed logits (classification)."""
    labels = np.asarray(labels)
    if task == "regression":
        if pred.ndim == 2 and pred.shape[1] != 1:
            raise ContractError(f"regression expects (B, 1) predictions, got {pred.shape}")
        y = pred.reshape(-1)
        if y.shape[0] != labels.shape[0]:
            raise ContractError(f"{y.shape[0]} predictions vs {labels.shape[0]} labels")
        return nx.abs_(y - labels.astype(pred.dtype)).mean()
    if task == "classification":
        if pred.ndim != 2 or not np.issubdtype(labels.dtype, np.integer):
            raise ContractError("classification expects (B, C) logits and integer labels")
        onehot = np.zeros(pred.shape, dtype=pred.dtype)
        onehot[np.arange(len(labels)), labels] = 1.0
        return -(nx.log_softmax(pred, axis=-1) * onehot).sum(axis=-1).mean()
    raise ContractError(f"unknown task {task!r}")


# -- optimiser --------------------------------------------------------------------------


class Adam:
    """Bias-corrected Adam over the trainable subset of a ParamStore."""

    def __init__(self, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step_count = 0

    def step(self, params: ParamStore, lr: float | None = None) -> None:
        lr = self.lr if lr is None else lr
        names = sorted(params.trainable)
        for n in names:
            if params[n].grad is None:
                raise ContractError(f"trainable parameter {n!r} has no gradient")
        self.step_count += 1
        t = self.step_count
        b1, b2 = self.beta1, self.beta2
        for n in names:
            p = params[n]
            g = p.grad
            m = self.m.get(n)
            if m is None:
                m = np.zeros_like(p.data)
                self.v[n] = np.zeros_like(p.data)
            m = b1 * m + (1 - b1) * g
            v = b2 * self.v[n] + (1 - b2) * g * g
            self.m[n], self.v[n] = m.astype(p.dtype), v.astype(p.dtype)
            m_hat = m / (1 - b1**t)
            v_hat = v / (1 - b2**t)
            p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)).astype(p.dtype)

    def state(self) -> dict:
        return {"m": dict(self.m), "v": dict(self.v), "step": self.step_count}

    def load_state(self, state: dict) -> None:
        self.m = {k: np.array(v) for k, v in state["m"].items()}
        self.v = {k: np.array(v) for k, v in state["v"].items()}
        self.step_count = int(state["step"])


def clip_grad_norm(params: ParamStore, max_norm: float) -> float:
    grads = [params[n].grad for n in sorted(params.trainable) if params[n].grad is not None]
    total = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))
    if total > max_norm > 0:
        scale = max_norm / (total + 1e-6)
        for n in params.trainable:
            if params[n].grad is not None:
                params[n].grad = (params[n].grad * scale).astype(params[n].dtype)
    return total


# -- trainable sets ---------------------------------------------------------------------------


def trainable_prefixes(tcfg: TrainConfig) -> tuple[str, ...]:
    if tcfg.stage == "pretrain":
        return ("backbone.",)
    if tcfg.baseline == "none":
        return ("prompts.", "mmgm.") + HEAD_AND_INPUT_PREFIXES
    if tcfg.baseline == "substitution" and tcfg.backbone_init == "checkpoint":
        return HEAD_AND_INPUT_PREFIXES
    return ("backbone.",)  # the other baselines train the whole backbone


def training_masks(ds: Dataset, tcfg: TrainConfig, rng: Rng) -> Dataset:
    """Apply the stage/baseline-specific missingness to a complete split."""
    if tcfg.stage == "pretrain" or tcfg.baseline == "substitution":
        return ds
    if tcfg.baseline == "lower_bound":
        return ds.force_mask(MissingMask.from_name(tcfg.lb_case))
    return apply_missingness(ds, tcfg.eta, rng)


# -- the trainer ------------------------------------------------------------------------------


class Trainer:
    """Owns parameters, optimiser state and the batch schedule for one run.

    Batch order for global step ``s`` depends only on (seed, epoch of s), so a
    run restored from a checkpoint continues with the same batches.
    """

    def __init__(self, params: ParamStore, cfg: ModelConfig, tcfg: TrainConfig, train: Dataset, val: Dataset | None = None):
        tcfg.validate()
        self.params = params
        self.cfg = cfg
        self.tcfg = tcfg
        self.rng = Rng(tcfg.seed, "train", tcfg.stage, tcfg.baseline)
        if tcfg.stage == "pretrain" and not train.complete:
            raise ContractError("pretraining needs complete samples")
        self.source = train
        self.train = training_masks(train, tcfg, self.rng.fork("masks", 0))
        self.val = None if val is None else training_masks(val, tcfg, self.rng.fork("val-masks"))
        self.switches = tcfg.switches
        params.set_trainable(trainable_prefixes(tcfg))
        self.opt = Adam(tcfg.lr, tcfg.beta1, tcfg.beta2, tcfg.eps)
        self.step = 0
        self.losses: list[float] = []
        self.best_val = np.inf
        self.best: ParamStore | None = None

    @property
    def steps_per_epoch(self) -> int:
        return int(np.ceil(len(self.train) / self.tcfg.batch_size))

    @property
    def total_steps(self) -> int:
        n = self.tcfg.epochs * self.steps_per_epoch
        return min(n, self.tcfg.max_steps) if self.tcfg.max_steps else n

    def batch_indices(self, step: int) -> np.ndarray:
        epoch, k = divmod(step, self.steps_per_epoch)
        order = self.rng.fork("shuffle", epoch).permutation(len(self.train))
        bs = self.tcfg.batch_size
        return order[k * bs : (k + 1) * bs]

    def _epoch_data(self, step: int) -> Dataset:
        epoch = step // self.steps_per_epoch
        if self.tcfg.resample_masks and epoch > 0:
            return training_masks(self.source, self.tcfg, self.rng.fork("masks", epoch))
        return self.train

    def batch_loss(self, idx: np.ndarray, ds: Dataset | None = None, rng: Rng | None = None) -> Tensor:
        ds = self.train if ds is None else ds
        feats, masks = batch_tensors(ds, idx)
        pred = forward(self.params, self.cfg, feats, masks, self.switches, rng)
        return compute_loss(pred, ds.labels[idx], ds.task)

    def train_step(self) -> float:
        idx = self.batch_indices(self.step)
        data = self._epoch_data(self.step)
        self.params.mark_requires_grad()
        drop_rng = self.rng.fork("dropout", self.step) if self.tcfg.stage == "pretrain" else None
        loss = self.batch_loss(idx, data, drop_rng)
        value = loss.item()
        if not np.isfinite(value):
            raise DivergenceError(f"loss became {value} at step {self.step}")
        loss.backward()
        for n in self.params.trainable:
            t = self.params[n]
            if t.grad is None:  # not reached by this batch's graph
                t.grad = np.zeros_like(t.data)
        if self.tcfg.stage == "pretrain":
            clip_grad_norm(self.params, self.tcfg.clip_norm)
        self.opt.step(self.params)
        self.params.zero_grad()
        self.step += 1
        self.losses.append(value)
        return value

    def val_loss(self) -> float:
        if self.val is None:
            return float("nan")
        total, n = 0.0, 0
        with nx.no_grad():
            for start in range(0, len(self.val), 256):
                idx = np.arange(start, min(start + 256, len(self.val)))
                total += self.batch_loss(idx, self.val).item() * len(idx)
                n += len(idx)
        return total / n

    def run(self, n_steps: int | None = None) -> ParamStore:
        """Train ``n_steps`` (default: to the configured end) and return the selected parameters."""
        end = self.total_steps if n_steps is None else min(self.step + n_steps, self.total_steps)
        spe = self.steps_per_epoch
        while self.step < end:
            self.train_step()
            if self.step % spe == 0 or self.step == self.total_steps:
                self._end_of_epoch()
        if self.best is not None and self.tcfg.select_on_val and self.step >= self.total_steps:
            self.params.update_from(self.best, sorted(self.params.trainable))
        return self.params

    def _end_of_epoch(self) -> None:
        if self.val is None or not self.tcfg.select_on_val:
            return
        vl = self.val_loss()
        log.info("step %d val loss %.4f", self.step, vl)
        if vl < self.best_val:
            self.best_val = vl
            self.best = self.params.copy()

    def checkpoint(self, meta: dict | None = None, with_optimizer: bool = False) -> Checkpoint:
        info = {"stage": self.tcfg.stage, "train": self.tcfg.to_dict(), "step": self.step}
        info.update(meta or {})
        return Checkpoint(self.params, self.cfg, info, self.opt.state() if with_optimizer else None)

    def restore(self, ckpt: Checkpoint) -> None:
        """Resume from a checkpoint written by :meth:`checkpoint` with optimizer state."""
        self.params = ckpt.params
        self.params.set_trainable(trainable_prefixes(self.tcfg))
        if ckpt.optim is not None:
            self.opt.load_state(ckpt.optim)
        self.step = int(ckpt.meta.get("step", 0))


def pretrain(params: ParamStore, cfg: ModelConfig, train: Dataset, tcfg: TrainConfig, val: Dataset | None = None) -> Checkpoint:
    """Train the whole backbone on complete data; prompts and generation stay idle."""
    if tcfg.stage != "pretrain":
        raise ContractError(f"pretrain() needs stage='pretrain', got {tcfg.stage!r}")
    trainer = Trainer(params, cfg, tcfg, train, val)
    trainer.run()
    return trainer.checkpoint()


def fresh_prompt_params(
    ckpt: Checkpoint, seed: int, prompt_len: int | None = None, scratch: bool = False
) -> tuple[ParamStore, ModelConfig]:
    """Copy of the checkpoint's backbone with newly initialised prompts and generation convs.

    ``scratch=True`` keeps only the checkpoint's architecture and draws a new backbone too.
    """
    cfg = ckpt.config if prompt_len is None else replace(ckpt.config, prompt_len=prompt_len)
    cfg.validate()
    rng = Rng(seed, "tune-init")
    if scratch:
        params = init_backbone(cfg, rng.fork("backbone"))
        params.trainable = set()
    else:
        params = ParamStore(trainable=())
        params.update_from(ckpt.params, ckpt.params.names("backbone."))
    init_mmgm(cfg, rng.fork("mmgm"), params)
    init_prompts(cfg, rng.fork("prompts"), params)
    return params, cfg


def prompt_tune(
    ckpt: Checkpoint, train: Dataset, tcfg: TrainConfig, val: Dataset | None = None, prompt_len: int | None = None
) -> Checkpoint:
    """Freeze the pretrained backbone and fit prompts, generation convs, input convs and head.

    Prompts and generation convs start fresh from ``tcfg.seed``. Baseline modes
    reuse the same loop with a different trainable set, missingness and prompt
    switches.
    """
    if tcfg.stage != "prompt_tune":
        raise ContractError(f"prompt_tune() needs stage='prompt_tune', got {tcfg.stage!r}")
    params, cfg = fresh_prompt_params(ckpt, tcfg.seed, prompt_len, tcfg.backbone_init == "scratch")
    trainer = Trainer(params, cfg, tcfg, train, val)
    trainer.run()
    meta = {"baseline": tcfg.baseline, "prompts": tcfg.switches.label(), "eta": tcfg.eta}
    if tcfg.baseline != "none":
        meta["backbone_init"] = tcfg.backbone_init
    if tcfg.baseline == "lower_bound":
        meta["lb_case"] = MissingMask.from_name(tcfg.lb_case).name
    return trainer.checkpoint(meta)
