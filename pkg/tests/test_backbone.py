import numpy as np
import pytest

from promptweave import numerics as nx
from promptweave.backbone import (
    ConfigError,
    ModelConfig,
    crossmodal_forward,
    init_backbone,
    predict,
    project_inputs,
    target_streams,
)
from promptweave.data import MODALITIES
from promptweave.model import PromptSwitches, forward, init_model
from promptweave.numerics import DimensionError, Rng, Tensor, grad_check
from promptweave.oracle import TINY, check_pipeline

CFG = ModelConfig(d_model=8, prompt_len=3, n_heads=2, raw_dims=(5, 6, 7), seq_lens=(6, 7, 8))


@pytest.fixture(scope="module")
def params():
    return init_backbone(CFG, Rng(0))


def _raw(n=2, seed=0, cfg=CFG):
    rng = Rng(seed)
    return {m: Tensor(rng.fork(m).normal((n, cfg.seq_len(m), cfg.raw_dim(m))).astype(np.float32)) for m in MODALITIES}


def _hidden(n=2, seed=0, cfg=CFG):
    rng = Rng(seed, "h")
    return {m: Tensor(rng.fork(m).normal((n, cfg.seq_len(m), cfg.d_model)).astype(np.float32)) for m in MODALITIES}


def test_default_config_shapes():
    cfg = ModelConfig()
    p = init_backbone(cfg, Rng(0))
    h = project_inputs(_raw(cfg=cfg), p, cfg)
    assert all(h[m].shape == (2, 24, 32) for m in MODALITIES)
    fused = crossmodal_forward(h, p, cfg)
    assert fused.shape == (2, 6 * 32)
    assert predict(fused, p, cfg).shape == (2, 1)


def test_input_projection_zero_in_zero_out(params):
    p = params.copy()
    for m in MODALITIES:
        p[f"backbone.input.{m}.bias"].data[:] = 0
    zeros = {m: Tensor(np.zeros((1, CFG.seq_len(m), CFG.raw_dim(m)), np.float32)) for m in MODALITIES}
    out = project_inputs(zeros, p, CFG)
    assert all(not out[m].data.any() for m in MODALITIES)


def test_input_projection_distinct_per_modality():
    cfg = ModelConfig(d_model=8, n_heads=2, prompt_len=2, raw_dims=(5, 5, 5), seq_lens=(6, 6, 6))
    p = init_backbone(cfg, Rng(0))
    x = Tensor(Rng(1).normal((1, 6, 5)).astype(np.float32))
    out = project_inputs({m: x for m in MODALITIES}, p, cfg)
    assert not np.array_equal(out["a"].data, out["v"].data)
    assert not np.array_equal(out["v"].data, out["t"].data)


def test_raw_width_mismatch(params):
    feats = _raw()
    feats["a"] = Tensor(np.zeros((2, 6, 4), np.float32))
    with pytest.raises(DimensionError):
        project_inputs(feats, params, CFG)


def test_width_mismatch_in_crossmodal(params):
    h = _hidden()
    h["t"] = Tensor(np.zeros((2, 8, 6), np.float32))
    with pytest.raises(DimensionError):
        crossmodal_forward(h, params, CFG)


def test_type_prompts_lengthen_streams(params):
    h = _hidden()
    prompts = {m: Tensor(np.ones((2, CFG.prompt_len, CFG.d_model), np.float32)) for m in MODALITIES}
    streams = target_streams(h, params, CFG, prompts)
    for m in MODALITIES:
        assert streams[m].shape == (2, CFG.prompt_len + CFG.seq_len(m), 2 * CFG.d_model)


def test_permutation_equivariance_with_tied_weights():
    cfg = ModelConfig(d_model=8, n_heads=2, prompt_len=2, raw_dims=(5, 5, 5), seq_lens=(6, 6, 6))
    p = init_backbone(cfg, Rng(3))
    # tie every audio-role parameter to its video-role counterpart
    pairs = [("backbone.input.a.", "backbone.input.v."), ("backbone.self.a.", "backbone.self.v."),
             ("backbone.cross.a_from_v.", "backbone.cross.v_from_a."), ("backbone.cross.a_from_t.", "backbone.cross.v_from_t.")]
    for src, dst in pairs:
        for name in p.names(src):
            p[dst + name[len(src):]].data[...] = p[name].data
    raw = _raw(n=1, cfg=cfg)
    swapped = {"a": raw["v"], "v": raw["a"], "t": raw["t"]}
    out = target_streams(project_inputs(raw, p, cfg), p, cfg)
    out_sw = target_streams(project_inputs(swapped, p, cfg), p, cfg)
    np.testing.assert_allclose(out_sw["a"].data[:, -1], out["v"].data[:, -1], atol=1e-5)
    np.testing.assert_allclose(out_sw["v"].data[:, -1], out["a"].data[:, -1], atol=1e-5)
    assert not np.allclose(out["a"].data[:, -1], out["v"].data[:, -1], atol=1e-3)


def test_zero_head_predicts_bias(params):
    p = params.copy()
    p["backbone.head.weight"].data[:] = 0
    p["backbone.head.bias"].data[:] = 0.25
    fused = Tensor(Rng(0).normal((3, CFG.fused_dim)).astype(np.float32))
    assert np.array_equal(predict(fused, p, CFG).data, np.full((3, 1), 0.25, np.float32))


def test_classification_logits_shape():
    cfg = ModelConfig(d_model=8, n_heads=2, prompt_len=2, raw_dims=(5, 6, 7), seq_lens=(6, 7, 8), task="classification", n_classes=4)
    p = init_backbone(cfg, Rng(0))
    out = crossmodal_forward(project_inputs(_raw(cfg=cfg), p, cfg), p, cfg)
    assert predict(out, p, cfg).shape == (2, 4)


def test_head_width_mismatch(params):
    with pytest.raises(DimensionError):
        predict(Tensor(np.zeros((1, 5), np.float32)), params, CFG)


def test_head_gradient_check(params):
    fused = Tensor(Rng(2).normal((3, CFG.fused_dim)))
    bias = Tensor(params["backbone.head.bias"].data.astype(np.float64))

    def f(w):
        y = nx.linear(fused, w, bias)
        return (y * y).sum()

    assert grad_check(f, params["backbone.head.weight"]) <= 1e-4


def test_forward_is_deterministic_without_dropout():
    p = init_model(CFG, 0)
    feats = _raw(n=3)
    masks = np.array([[True, False, False], [False, True, True], [False, False, False]])
    for j, m in enumerate(MODALITIES):
        feats[m].data[masks[:, j]] = 0
    a = forward(p, CFG, feats, masks).data
    b = forward(p, CFG, feats, masks).data
    assert np.array_equal(a, b)


def test_dropout_only_with_rng():
    p = init_model(CFG, 0)
    feats = _raw(n=2)
    masks = np.zeros((2, 3), bool)
    plain = forward(p, CFG, feats, masks, PromptSwitches.none()).data
    dropped = forward(p, CFG, feats, masks, PromptSwitches.none(), rng=Rng(1)).data
    assert not np.array_equal(plain, dropped)


def test_config_validation():
    with pytest.raises(ConfigError):
        ModelConfig(d_model=10, n_heads=4).validate()
    with pytest.raises(ConfigError):
        ModelConfig(prompt_len=25).validate()
    with pytest.raises(ConfigError):
        ModelConfig(input_kernel=2).validate()
    cfg = ModelConfig(prompt_len=7)
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_doubling_depth_keeps_prompt_count():
    shallow = init_model(ModelConfig(), 0)
    deep = init_model(ModelConfig(n_cross_layers=4, n_self_layers=2), 0)
    assert deep.count("backbone.") > shallow.count("backbone.")
    assert deep.count("prompts.") == shallow.count("prompts.")
    assert deep.count("mmgm.") == shallow.count("mmgm.")


def test_full_pipeline_gradient_oracle():
    results = check_pipeline(TINY, seed=1)
    assert {r.name.split(":", 1)[1].split(".")[0] for r in results} == {"backbone", "mmgm", "prompts"}
    worst = max(results, key=lambda r: r.max_rel_err)
    assert worst.max_rel_err <= 1e-4, worst
