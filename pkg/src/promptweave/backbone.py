"""Crossmodal-transformer backbone (directional pairwise attention, MulT style).

For each target modality the backbone runs one crossmodal stack per source
modality (queries from the target, keys/values from the source), joins the two
streams channel-wise, passes them through self-attention layers and keeps the
last time step. The three per-target vectors are concatenated and fed to a
linear head.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from . import numerics as nx
from .data import MODALITIES
from .numerics import DimensionError, Rng, Tensor
from .params import ParamStore


class ConfigError(ValueError):
    pass


@dataclass
class ModelConfig:
    d_model: int = 32
    prompt_len: int = 16
    n_heads: int = 4
    n_cross_layers: int = 2
    n_self_layers: int = 1
    raw_dims: tuple[int, int, int] = (20, 20, 20)
    seq_lens: tuple[int, int, int] = (24, 24, 24)
    task: str = "regression"
    n_classes: int = 2
    dropout: float = 0.1
    input_kernel: int = 3
    mmgm_kernel: int = 3
    mmgm_joint_kernel: int = 1
    ffn_mult: int = 4

    def __post_init__(self):
        self.raw_dims = tuple(int(x) for x in self.raw_dims)
        self.seq_lens = tuple(int(x) for x in self.seq_lens)

    def validate(self) -> None:
        if self.d_model % self.n_heads:
            raise ConfigError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if self.prompt_len < 1:
            raise ConfigError(f"prompt_len must be >= 1, got {self.prompt_len}")
        if self.prompt_len > min(self.seq_lens):
            raise ConfigError(
                f"prompt_len={self.prompt_len} exceeds the shortest sequence length {min(self.seq_lens)}"
            )
        if self.task not in ("regression", "classification"):
            raise ConfigError(f"unknown task {self.task!r}")
        if self.task == "classification" and self.n_classes < 2:
            raise ConfigError("classification needs n_classes >= 2")
        for k in (self.input_kernel, self.mmgm_kernel, self.mmgm_joint_kernel):
            if k % 2 == 0:
                raise ConfigError(f"kernel widths must be odd, got {k}")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    @property
    def out_dim(self) -> int:
        return 1 if self.task == "regression" else self.n_classes

    @property
    def fused_dim(self) -> int:
        return 3 * 2 * self.d_model

    def raw_dim(self, m: str) -> int:
        return self.raw_dims[MODALITIES.index(m)]

    def seq_len(self, m: str) -> int:
        return self.seq_lens[MODALITIES.index(m)]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["raw_dims"] = list(self.raw_dims)
        d["seq_lens"] = list(self.seq_lens)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in d.items() if k in known})


def sources_of(target: str) -> tuple[str, str]:
    return tuple(m for m in MODALITIES if m != target)


# -- parameter initialisation ----------------------------------------------------


def _dense(store: ParamStore, rng: Rng, name: str, n_in: int, n_out: int) -> None:
    store.add(f"{name}.weight", rng.fork(name).normal((n_in, n_out), scale=1.0 / math.sqrt(n_in)))
    store.add(f"{name}.bias", np.zeros(n_out))


def _norm(store: ParamStore, name: str, d: int) -> None:
    store.add(f"{name}.gain", np.ones(d))
    store.add(f"{name}.bias", np.zeros(d))


def _conv(store: ParamStore, rng: Rng, name: str, k: int, c_in: int, c_out: int) -> None:
    store.add(f"{name}.kernel", rng.fork(name).normal((k, c_in, c_out), scale=1.0 / math.sqrt(k * c_in)))
    store.add(f"{name}.bias", np.zeros(c_out))


def _attention_block(store: ParamStore, rng: Rng, name: str, d: int, ffn: int, cross: bool) -> None:
    _norm(store, f"{name}.ln_q", d)
    if cross:
        _norm(store, f"{name}.ln_kv", d)
    for proj in ("q", "k", "v", "o"):
        _dense(store, rng, f"{name}.{proj}", d, d)
    _norm(store, f"{name}.ln_ff", d)
    _dense(store, rng, f"{name}.ff1", d, ffn)
    _dense(store, rng, f"{name}.ff2", ffn, d)


def init_backbone(cfg: ModelConfig, rng: Rng, store: ParamStore | None = None) -> ParamStore:
    """Backbone parameters under the ``backbone.`` namespace."""
    cfg.validate()
    store = store if store is not None else ParamStore()
    d = cfg.d_model
    for m in MODALITIES:
        _conv(store, rng, f"backbone.input.{m}", cfg.input_kernel, cfg.raw_dim(m), d)
    for tgt in MODALITIES:
        for src in sources_of(tgt):
            for layer in range(cfg.n_cross_layers):
                _attention_block(store, rng, f"backbone.cross.{tgt}_from_{src}.{layer}", d, cfg.ffn_mult * d, True)
            _norm(store, f"backbone.cross.{tgt}_from_{src}.ln_out", d)
        for layer in range(cfg.n_self_layers):
            _attention_block(store, rng, f"backbone.self.{tgt}.{layer}", 2 * d, cfg.ffn_mult * 2 * d, False)
        _norm(store, f"backbone.self.{tgt}.ln_out", 2 * d)
    _dense(store, rng, "backbone.head", cfg.fused_dim, cfg.out_dim)
    return store


# -- forward pieces -------------------------------------------------------------


def _ln(x: Tensor, p: ParamStore, name: str) -> Tensor:
    return nx.layer_norm(x, p[f"{name}.gain"], p[f"{name}.bias"])


def _lin(x: Tensor, p: ParamStore, name: str) -> Tensor:
    return nx.linear(x, p[f"{name}.weight"], p[f"{name}.bias"])


def multi_head_attention(
    q_in: Tensor, kv_in: Tensor, p: ParamStore, name: str, n_heads: int, dropout: float = 0.0, rng=None
) -> Tensor:
    """Scaled dot-product attention over (B, T, d) inputs."""
    B, Tq, d = q_in.shape
    Tk = kv_in.shape[1]
    dh = d // n_heads

    def heads(x: Tensor, T: int) -> Tensor:
        return x.reshape(B, T, n_heads, dh).swapaxes(1, 2)

    q = heads(_lin(q_in, p, f"{name}.q"), Tq)
    k = heads(_lin(kv_in, p, f"{name}.k"), Tk)
    v = heads(_lin(kv_in, p, f"{name}.v"), Tk)
    scores = nx.matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(dh))
    weights = nx.softmax(scores, axis=-1)
    if rng is not None and dropout > 0:
        weights = nx.dropout(weights, dropout, rng)
    ctx = nx.matmul(weights, v).swapaxes(1, 2).reshape(B, Tq, d)
    return _lin(ctx, p, f"{name}.o")


def attention_block(x: Tensor, src: Tensor | None, p: ParamStore, name: str, n_heads: int, dropout=0.0, rng=None) -> Tensor:
    """Pre-norm residual block; ``src=None`` means self-attention."""
    q_in = _ln(x, p, f"{name}.ln_q")
    kv_in = q_in if src is None else _ln(src, p, f"{name}.ln_kv")
    x = x + multi_head_attention(q_in, kv_in, p, name, n_heads, dropout, rng)
    h = nx.relu(_lin(_ln(x, p, f"{name}.ln_ff"), p, f"{name}.ff1"))
    return x + _lin(h, p, f"{name}.ff2")


def project_inputs(feats: dict[str, Tensor], p: ParamStore, cfg: ModelConfig) -> dict[str, Tensor]:
    """Temporal conv of each modality into ``d_model`` channels, length preserved."""
    out = {}
    for m in MODALITIES:
        x = feats[m]
        if x.shape[-1] != cfg.raw_dim(m):
            raise DimensionError(f"modality {m!r} has raw width {x.shape[-1]}, expected {cfg.raw_dim(m)}")
        out[m] = nx.conv1d(x, p[f"backbone.input.{m}.kernel"], p[f"backbone.input.{m}.bias"])
    return out


def prepend_time(x: Tensor, prefix: Tensor) -> Tensor:
    """Prepend ``prefix`` (B or 1, l, d) to ``x`` (B, L, d) along time; l = 0 is a no-op."""
    if prefix.shape[-2] == 0:
        return x
    if prefix.shape[-1] != x.shape[-1]:
        raise DimensionError(f"prefix width {prefix.shape[-1]} vs stream width {x.shape[-1]}")
    if prefix.ndim == 2:
        prefix = prefix.reshape(1, *prefix.shape)
    if prefix.shape[0] != x.shape[0]:
        prefix = nx.broadcast_to(prefix, (x.shape[0],) + prefix.shape[1:])
    return nx.concat([prefix, x], axis=1)


def target_streams(
    feats: dict[str, Tensor],
    p: ParamStore,
    cfg: ModelConfig,
    type_prompts: dict[str, Tensor] | None = None,
    rng: Rng | None = None,
) -> dict[str, Tensor]:
    """Per-target sequences (B, T_m, 2d) after crossmodal and self-attention layers."""
    d = cfg.d_model
    for m in MODALITIES:
        if feats[m].shape[-1] != d:
            raise DimensionError(f"modality {m!r} features have width {feats[m].shape[-1]}, expected d_model={d}")
    drop = cfg.dropout if rng is not None else 0.0
    gen = rng.gen if rng is not None else None
    out = {}
    for tgt in MODALITIES:
        x_tgt = feats[tgt]
        if type_prompts is not None:
            x_tgt = prepend_time(x_tgt, type_prompts[tgt])
        streams = []
        for src in sources_of(tgt):
            h = x_tgt
            base = f"backbone.cross.{tgt}_from_{src}"
            for layer in range(cfg.n_cross_layers):
                h = attention_block(h, feats[src], p, f"{base}.{layer}", cfg.n_heads, drop, gen)
            streams.append(_ln(h, p, f"{base}.ln_out"))
        h = nx.concat(streams, axis=-1)
        for layer in range(cfg.n_self_layers):
            h = attention_block(h, None, p, f"backbone.self.{tgt}.{layer}", cfg.n_heads, drop, gen)
        out[tgt] = _ln(h, p, f"backbone.self.{tgt}.ln_out")
    return out


def crossmodal_forward(
    feats: dict[str, Tensor],
    p: ParamStore,
    cfg: ModelConfig,
    type_prompts: dict[str, Tensor] | None = None,
    rng: Rng | None = None,
) -> Tensor:
    """Fused representation (B, 6 * d_model): last step of each target stream, concatenated."""
    streams = target_streams(feats, p, cfg, type_prompts, rng)
    return nx.concat([streams[m][:, -1, :] for m in MODALITIES], axis=-1)


def predict(fused: Tensor, p: ParamStore, cfg: ModelConfig) -> Tensor:
    """(B, 1) for regression, (B, n_classes) logits for classification."""
    w = p["backbone.head.weight"]
    if fused.shape[-1] != w.shape[0]:
        raise DimensionError(f"head expects width {w.shape[0]}, got {fused.shape[-1]}")
    return _lin(fused, p, "backbone.head")


HEAD_AND_INPUT_PREFIXES = ("backbone.input.", "backbone.head.")
