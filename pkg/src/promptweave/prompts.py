"""Generative, missing-signal and missing-type prompts.

Parameter layout (``prompts.`` and ``mmgm.`` namespaces):

* ``prompts.gen.<m>``       (l_p, d_raw_m)   generative prefix for target m
* ``prompts.ms.<m>``        (l_p, d_model)   "this stream was generated"
* ``prompts.nms.<m>``       (l_p, d_model)   "this stream is real"
* ``prompts.mt``            (3, l_p, d_model) shared missing-type prompts
* ``prompts.proj.<m>``      (d_model, l_p)   projection bases
* ``mmgm.<src>_to_<tgt>``   conv d_raw_src -> d_raw_tgt
* ``mmgm.<srcs>_to_<tgt>_joint`` conv over the time-concatenated input whose
  channels are the time positions (l_p + sum of source lengths -> L_tgt), so
  every generated step can read the prompt and every source

The missing-signal prompts are the same tensors in the additive signal and in
the missing-type projection matrix.
"""

from __future__ import annotations

import math

import numpy as np

from . import numerics as nx
from .backbone import ModelConfig, prepend_time, sources_of
from .data import MODALITIES
from .numerics import ContractError, DimensionError, Rng, Tensor
from .params import ParamStore

PROMPT_STD = 0.02


def source_sets(target: str) -> list[tuple[str, ...]]:
    """Non-empty subsets of the other modalities, largest first."""
    a, b = sources_of(target)
    return [(a, b), (a,), (b,)]


def joint_name(srcs: tuple[str, ...], target: str) -> str:
    return f"mmgm.{''.join(srcs)}_to_{target}_joint"


def init_prompts(cfg: ModelConfig, rng: Rng, store: ParamStore) -> ParamStore:
    lp, d = cfg.prompt_len, cfg.d_model
    for m in MODALITIES:
        store.add(f"prompts.gen.{m}", rng.fork("gen", m).normal((lp, cfg.raw_dim(m)), scale=PROMPT_STD))
        store.add(f"prompts.ms.{m}", rng.fork("ms", m).normal((lp, d), scale=PROMPT_STD))
        store.add(f"prompts.nms.{m}", rng.fork("nms", m).normal((lp, d), scale=PROMPT_STD))
    store.add("prompts.mt", rng.fork("mt").normal((3, lp, d), scale=PROMPT_STD))
    for m in MODALITIES:
        store.add(f"prompts.proj.{m}", rng.fork("proj", m).normal((d, lp), scale=PROMPT_STD))
    return store


def init_mmgm(cfg: ModelConfig, rng: Rng, store: ParamStore) -> ParamStore:
    k = cfg.mmgm_kernel
    for tgt in MODALITIES:
        d_t = cfg.raw_dim(tgt)
        for src in sources_of(tgt):
            d_s = cfg.raw_dim(src)
            name = f"mmgm.{src}_to_{tgt}"
            store.add(f"{name}.kernel", rng.fork(name).normal((k, d_s, d_t), scale=1.0 / math.sqrt(k * d_s)))
            store.add(f"{name}.bias", np.zeros(d_t))
        L = cfg.seq_len(tgt)
        kj = cfg.mmgm_joint_kernel
        for srcs in source_sets(tgt):
            name = joint_name(srcs, tgt)
            t_cat = joint_length(cfg, srcs)
            store.add(f"{name}.kernel", rng.fork(name).normal((kj, t_cat, L), scale=1.0 / math.sqrt(kj * t_cat)))
            store.add(f"{name}.bias", np.zeros(L))
    return store


def joint_length(cfg: ModelConfig, srcs: tuple[str, ...]) -> int:
    """Time length of the joint block's input: the prompt followed by every source."""
    return cfg.prompt_len + sum(cfg.seq_len(s) for s in srcs)


def prompt_param_count(cfg: ModelConfig, n_modalities: int = 3, raw_dim: int | None = None) -> int:
    """Closed-form prompt parameter count; linear in the number of modalities.

    Per modality: a generative prompt (l_p x d_raw), missing/not-missing signal
    prompts (2 x l_p x d), one shared missing-type slice (l_p x d) and one
    projection basis (d x l_p). Assumes equal raw widths unless ``raw_dim`` is
    given.
    """
    lp, d = cfg.prompt_len, cfg.d_model
    d_raw = raw_dim if raw_dim is not None else cfg.raw_dims[0]
    return n_modalities * (lp * d_raw + 3 * lp * d + d * lp)


# -- generation module -------------------------------------------------------------


def _conv_block(x: Tensor, p: ParamStore, name: str) -> Tensor:
    return nx.relu(nx.conv1d(x, p[f"{name}.kernel"], p[f"{name}.bias"]))


def generate_modality(
    sources: dict[str, Tensor], target: str, p: ParamStore, cfg: ModelConfig
) -> Tensor:
    """Generate ``target`` (n, L_tgt, d_tgt) from the given available ``sources``.

    Each source goes through its own conv block into the target's channel
    width; the generative prompt and the converted sources are joined along
    time. The joint conv block then treats those time positions as channels
    and maps them onto the L_tgt output steps, convolving along the feature
    axis. A conv along time followed by a crop to the final L_tgt steps would
    leave the prompt and the first source outside its receptive field.
    """
    srcs = tuple(m for m in sources_of(target) if m in sources)
    if not srcs:
        raise ContractError(f"no source modality to generate {target!r} from")
    n = sources[srcs[0]].shape[0]
    prompt = p[f"prompts.gen.{target}"]
    parts = [nx.broadcast_to(prompt.reshape(1, *prompt.shape), (n,) + prompt.shape)]
    for s in srcs:
        parts.append(_conv_block(sources[s], p, f"mmgm.{s}_to_{target}"))
    joined = nx.concat(parts, axis=1)
    if joined.shape[1] != joint_length(cfg, srcs):
        raise DimensionError(f"joint input length {joined.shape[1]} != {joint_length(cfg, srcs)} for {target!r}")
    return _conv_block(joined.swapaxes(1, 2), p, joint_name(srcs, target)).swapaxes(1, 2)


def mmgm_generate(feats: dict[str, Tensor], masks: np.ndarray, p: ParamStore, cfg: ModelConfig) -> dict[str, Tensor]:
    """Fill every missing modality of a batch with generated features.

    ``masks`` is (B, 3) bool (True = missing). Rows are grouped by which
    sources are available; a generated row reads only those sources, never
    the zero-filled payload of a missing one. Modalities with nothing missing
    are returned as the very same tensor objects.
    """
    masks = np.asarray(masks, dtype=bool)
    if masks.ndim == 1:
        masks = masks[None, :]
    if masks.all(axis=1).any():
        raise ContractError("no source modality: a sample has every modality missing")
    out = {}
    for j, tgt in enumerate(MODALITIES):
        miss = masks[:, j]
        if not miss.any():
            out[tgt] = feats[tgt]
            continue
        pieces, order = [], []
        keep = np.flatnonzero(~miss)
        if keep.size:
            pieces.append(nx.take(feats[tgt], keep))
            order.append(keep)
        for srcs in source_sets(tgt):
            avail = np.ones(len(masks), dtype=bool)
            for s in sources_of(tgt):
                col = ~masks[:, MODALITIES.index(s)]
                avail &= col if s in srcs else ~col
            rows = np.flatnonzero(miss & avail)
            if not rows.size:
                continue
            src_feats = {s: nx.take(feats[s], rows) for s in srcs}
            pieces.append(generate_modality(src_feats, tgt, p, cfg))
            order.append(rows)
        order = np.concatenate(order)
        inverse = np.empty_like(order)
        inverse[order] = np.arange(order.size)
        stacked = pieces[0] if len(pieces) == 1 else nx.concat(pieces, axis=0)
        out[tgt] = nx.take(stacked, inverse)
    return out


# -- missing-signal prompts -----------------------------------------------------------


def select_signal(miss: np.ndarray, p_ms: Tensor, p_nms: Tensor) -> Tensor:
    """Per-row choice of ``p_ms`` (missing) or ``p_nms``; (B, l_p, d)."""
    flag = np.asarray(miss, dtype=p_ms.dtype).reshape(-1, 1, 1)
    return nx.add(nx.mul(flag, p_ms), nx.mul(1.0 - flag, p_nms))


def apply_missing_signal(
    feats: dict[str, Tensor], masks: np.ndarray, p: ParamStore
) -> dict[str, Tensor]:
    """Add the missing / not-missing signal prompt to the first l_p steps of each stream."""
    masks = np.asarray(masks, dtype=bool).reshape(-1, 3)
    out = {}
    for j, m in enumerate(MODALITIES):
        x = feats[m]
        sig = select_signal(masks[:, j], p[f"prompts.ms.{m}"], p[f"prompts.nms.{m}"])
        B, L, d = x.shape
        lp = sig.shape[1]
        if lp > L:
            raise DimensionError(f"prompt length {lp} exceeds stream length {L} for {m!r}")
        if sig.shape[0] != B:
            sig = nx.broadcast_to(sig, (B, lp, d))
        if lp < L:
            sig = nx.concat([sig, Tensor(np.zeros((B, L - lp, d), dtype=x.dtype))], axis=1)
        out[m] = x + sig
    return out


# -- missing-type prompts ---------------------------------------------------------------


def signal_terms(masks: np.ndarray, p: ParamStore) -> dict[str, Tensor]:
    masks = np.asarray(masks, dtype=bool).reshape(-1, 3)
    return {
        m: select_signal(masks[:, j], p[f"prompts.ms.{m}"], p[f"prompts.nms.{m}"])
        for j, m in enumerate(MODALITIES)
    }


def missing_type_matrix_from_terms(terms: dict[str, Tensor], p: ParamStore) -> Tensor:
    """Sum over modalities of basis (d, l_p) times signal term (B, l_p, d) -> (B, d, d)."""
    total = None
    for m in MODALITIES:
        term = nx.matmul(p[f"prompts.proj.{m}"], terms[m])
        total = term if total is None else total + term
    return total


def build_missing_type_matrix(masks: np.ndarray, p: ParamStore) -> Tensor:
    """Missing-type projection matrix; (d, d) for one mask, (B, d, d) for a batch."""
    single = np.asarray(masks).ndim == 1
    mp = missing_type_matrix_from_terms(signal_terms(masks, p), p)
    return mp[0] if single else mp


def project_missing_type(p_mt: Tensor, m_p: Tensor) -> Tensor:
    """(3, l_p, d) prompts times (d, d) -> (3, l_p, d); batched (B, d, d) -> (B, 3, l_p, d)."""
    if p_mt.shape[-1] != m_p.shape[-2]:
        raise DimensionError(f"missing-type prompts {p_mt.shape} vs projection {m_p.shape}")
    if m_p.ndim == 2:
        return nx.matmul(p_mt, m_p)
    B = m_p.shape[0]
    return nx.matmul(p_mt.reshape(1, *p_mt.shape), m_p.reshape(B, 1, *m_p.shape[1:]))


def split_type_prompts(projected: Tensor) -> dict[str, Tensor]:
    """Per-modality (B, l_p, d) slices of (B, 3, l_p, d) or (3, l_p, d) projected prompts."""
    if projected.ndim == 3:
        return {m: projected[j] for j, m in enumerate(MODALITIES)}
    return {m: projected[:, j] for j, m in enumerate(MODALITIES)}


def attach_missing_type(feats: dict[str, Tensor], projected: Tensor) -> dict[str, Tensor]:
    """Prepend each modality's projected missing-type prompt along time."""
    slices = split_type_prompts(projected)
    return {m: prepend_time(feats[m], slices[m]) for m in MODALITIES}
