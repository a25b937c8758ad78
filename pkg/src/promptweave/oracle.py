"""Gradient oracle: central-difference checks for every primitive and the full pipeline."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import numerics as nx
from .backbone import ModelConfig
from .data import INCOMPLETE_MASKS, MODALITIES
from .model import PromptSwitches, forward, init_model
from .numerics import Rng, Tensor, grad_check_many

TOLERANCE = 1e-4

TINY = ModelConfig(
    d_model=4, prompt_len=2, n_heads=2, n_cross_layers=1, n_self_layers=1,
    raw_dims=(3, 3, 3), seq_lens=(4, 5, 4), dropout=0.0, ffn_mult=2,
)


@dataclass
class OracleResult:
    name: str
    max_rel_err: float
    n_checked: int

    @property
    def ok(self) -> bool:
        return self.max_rel_err <= TOLERANCE


def _leaf(a) -> Tensor:
    return Tensor(np.asarray(a, dtype=np.float64), requires_grad=True)


def primitive_cases(rng: np.random.Generator):
    """(name, f(*leaves) -> scalar, leaves) for every registered primitive."""

    def r(*shape):
        return _leaf(rng.normal(size=shape))

    def off_kink(*shape):
        v = rng.normal(size=shape)
        return _leaf(np.where(np.abs(v) < 0.05, np.sign(v + 1e-12) * 0.1, v))

    # fixed weights turn each output into a scalar with a generic gradient
    w = Tensor(rng.normal(size=(3, 4)))
    w5 = Tensor(rng.normal(size=(2, 5)))
    w4 = Tensor(rng.normal(size=4))
    w34 = Tensor(rng.normal(size=(3, 4)))
    w54 = Tensor(rng.normal(size=(5, 4)))
    w62 = Tensor(rng.normal(size=(6, 2)))
    drop_seed = int(rng.integers(1 << 30))
    return [
        ("add", lambda a, b: (nx.add(a, b) * w).sum(), [r(3, 4), r(1, 4)]),
        ("sub", lambda a, b: (nx.sub(a, b) * w).sum(), [r(3, 4), r(3, 1)]),
        ("neg", lambda a: (nx.neg(a) * w).sum(), [r(3, 4)]),
        ("mul", lambda a, b: (nx.mul(a, b) * w).sum(), [r(3, 4), r(3, 4)]),
        ("relu", lambda a: (nx.relu(a) * w).sum(), [off_kink(3, 4)]),
        ("abs", lambda a: (nx.abs_(a) * w).sum(), [off_kink(3, 4)]),
        ("exp", lambda a: (nx.exp(a) * w).sum(), [r(3, 4)]),
        ("log", lambda a: (nx.log(a) * w).sum(), [_leaf(rng.uniform(0.5, 2.0, size=(3, 4)))]),
        ("sum", lambda a: (nx.sum_(a, axis=0) * w4).sum(), [r(3, 4)]),
        ("mean", lambda a: (nx.mean(a, axis=1) * Tensor(np.arange(3.0))).sum(), [r(3, 4)]),
        ("reshape", lambda a: (nx.reshape(a, (4, 3)) * Tensor(w.data.reshape(4, 3))).sum(), [r(3, 4)]),
        ("swapaxes", lambda a: (nx.swapaxes(a, 0, 1) * Tensor(w.data.T)).sum(), [r(3, 4)]),
        ("getitem", lambda a: (a[1:, ::2] * Tensor(np.arange(4.0).reshape(2, 2))).sum(), [r(3, 4)]),
        ("take", lambda a: (nx.take(a, [2, 0, 2]) * w34).sum(), [r(3, 4)]),
        ("concat", lambda a, b: (nx.concat([a, b], axis=0) * w54).sum(), [r(3, 4), r(2, 4)]),
        ("broadcast_to", lambda a: (nx.broadcast_to(a, (3, 4)) * w).sum(), [r(1, 4)]),
        ("matmul", lambda a, b: (nx.matmul(a, b) * w5).sum(), [r(2, 3), r(3, 5)]),
        ("linear", lambda x, W, b: (nx.linear(x, W, b) * w5).sum(), [r(2, 3), r(3, 5), r(5)]),
        ("conv1d", lambda x, k, b: (nx.conv1d(x, k, b) * w62).sum(), [r(6, 3), r(3, 3, 2), r(2)]),
        ("softmax", lambda a: (nx.softmax(a, axis=-1) * w).sum(), [r(3, 4)]),
        ("log_softmax", lambda a: (nx.log_softmax(a, axis=-1) * w).sum(), [r(3, 4)]),
        ("layer_norm", lambda x, g, b: (nx.layer_norm(x, g, b) * w).sum(), [r(3, 4), r(4), r(4)]),
        ("dropout", lambda a: (nx.dropout(a, 0.3, np.random.default_rng(drop_seed)) * w).sum(), [r(3, 4)]),
    ]


def check_primitives(seeds=range(3)) -> list[OracleResult]:
    worst: dict[str, OracleResult] = {}
    for seed in seeds:
        for name, f, leaves in primitive_cases(np.random.default_rng(1000 + seed)):
            errs = grad_check_many(lambda: f(*leaves), leaves)
            err = max(errs.values())
            n = sum(t.size for t in leaves)
            prev = worst.get(name)
            if prev is None or err > prev.max_rel_err:
                worst[name] = OracleResult(name, err, n)
    return [worst[n] for n in nx.PRIMITIVES]


def pipeline_loss_fn(cfg: ModelConfig = TINY, seed: int = 0):
    """Float64 parameters plus a closure computing the prompt-tuning loss on a batch covering every incomplete case."""
    from .training import compute_loss, trainable_prefixes, TrainConfig

    p = init_model(cfg, seed).copy(np.float64)
    p.set_trainable(trainable_prefixes(TrainConfig()))
    rng = Rng(seed, "oracle")
    masks = np.array(list(INCOMPLETE_MASKS) + [(False, False, False)], dtype=bool)
    feats = {}
    for j, m in enumerate(MODALITIES):
        x = rng.fork(m).normal((len(masks), cfg.seq_len(m), cfg.raw_dim(m)))
        x[masks[:, j]] = 0.0
        feats[m] = Tensor(x)
    labels = rng.fork("y").normal(len(masks))

    def loss() -> Tensor:
        return compute_loss(forward(p, cfg, feats, masks, PromptSwitches()), labels, cfg.task)

    return p, loss


def check_pipeline(cfg: ModelConfig = TINY, seed: int = 0, h: float = 1e-6) -> list[OracleResult]:
    """Full loss w.r.t. every prompt tensor and every trainable conv / head parameter."""
    p, loss = pipeline_loss_fn(cfg, seed)
    names = sorted(p.trainable)
    leaves = [p[n] for n in names]
    errs = grad_check_many(loss, leaves, h=h)
    for t in p.tensors.values():
        t.requires_grad = False
    return [OracleResult(f"pipeline:{n}", errs[k], leaves[k].size) for k, n in enumerate(names)]


def run_oracle(seeds=range(3)) -> tuple[list[OracleResult], float]:
    t0 = time.perf_counter()
    results = check_primitives(seeds) + check_pipeline()
    return results, time.perf_counter() - t0
