import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from promptweave.evaluation import (
    compute_metrics,
    evaluate_cases,
    evaluate_complete,
    pearson,
    round_half_away,
    weighted_f1,
    write_csv,
    report_csv_rows,
    CSV_COLUMNS,
)


def reference_metrics(preds, labels):
    """Plain-python loops over the definitions, independent of the vectorised code."""
    n = len(preds)
    pos_p = [p >= 0 for p in preds]
    pos_y = [y >= 0 for y in labels]
    acc = sum(a == b for a, b in zip(pos_p, pos_y)) / n

    def r7(x):
        r = math.floor(abs(x) + 0.5) * (1 if x >= 0 else -1)
        return max(-3, min(3, r))

    acc7 = sum(r7(p) == r7(y) for p, y in zip(preds, labels)) / n
    f1 = 0.0
    for c in (False, True):
        tp = sum(1 for p, y in zip(pos_p, pos_y) if p == c and y == c)
        fp = sum(1 for p, y in zip(pos_p, pos_y) if p == c and y != c)
        fn = sum(1 for p, y in zip(pos_p, pos_y) if p != c and y == c)
        support = sum(1 for y in pos_y if y == c)
        denom = 2 * tp + fp + fn
        f1 += (2 * tp / denom if denom else 0.0) * support
    f1 /= n
    mae = sum(abs(p - y) for p, y in zip(preds, labels)) / n
    mp, my = sum(preds) / n, sum(labels) / n
    cov = sum((p - mp) * (y - my) for p, y in zip(preds, labels))
    sp = math.sqrt(sum((p - mp) ** 2 for p in preds))
    sy = math.sqrt(sum((y - my) ** 2 for y in labels))
    corr = cov / (sp * sy)
    return {"acc": 100 * acc, "acc7": 100 * acc7, "f1": 100 * f1, "mae": mae, "corr": corr}


def test_metrics_match_reference_on_random_sets():
    rng = np.random.default_rng(2024)
    for _ in range(100):
        n = int(rng.integers(2, 60))
        labels = np.clip(rng.normal(0, 1.5, n), -3, 3)
        preds = labels + rng.normal(0, rng.uniform(0.1, 2.0), n)
        # exercise the half-way and zero boundaries
        preds[rng.random(n) < 0.1] = 0.0
        preds[rng.random(n) < 0.1] = rng.choice([-2.5, -0.5, 0.5, 1.5, 2.5])
        got = compute_metrics(preds, labels)
        ref = reference_metrics(preds.tolist(), labels.tolist())
        for k in ref:
            assert abs(got[k] - ref[k]) <= 1e-9, (k, got[k], ref[k])


def test_hand_computed_f1():
    # TP=1, FP=1, FN=0, TN=2 for the positive class
    y_true = np.array([1, 0, 0, 0])
    y_pred = np.array([1, 1, 0, 0])
    tp, fp, fn = 1, 1, 0
    f1_pos = 2 * tp / (2 * tp + fp + fn)
    assert f1_pos == 2 / 3
    # negative class: TP=2, FP=0, FN=1 -> 0.8; weights 1/4 and 3/4
    assert weighted_f1(y_true, y_pred) == pytest.approx(0.25 * (2 / 3) + 0.75 * 0.8, abs=1e-15)


def test_perfect_regression():
    y = np.array([-2.0, -0.4, 0.0, 1.2, 2.9])
    m = compute_metrics(y, y)
    assert m["acc"] == 100.0 and m["acc7"] == 100.0 and m["f1"] == 100.0
    assert m["mae"] == 0.0 and m["corr"] == pytest.approx(1.0)


def test_zero_counts_as_positive():
    m = compute_metrics(np.array([0.0, -1.0]), np.array([1.0, -1.0]))
    assert m["acc"] == 100.0


@pytest.mark.parametrize(
    "x, r", [(2.5, 3), (-2.5, -3), (0.5, 1), (-0.5, -1), (0.49, 0), (1.5, 2), (-1.5, -2), (3.7, 4)]
)
def test_round_half_away(x, r):
    assert round_half_away(np.array([x]))[0] == r


def test_acc7_clamps_to_three():
    m = compute_metrics(np.array([3.7, -4.2]), np.array([3.0, -3.0]))
    assert m["acc7"] == 100.0


def test_anticorrelated_predictions():
    labels = np.array([-2.0, -0.5, 0.3, 1.0, 2.5])
    assert compute_metrics(-labels, labels)["corr"] == pytest.approx(-1.0, abs=1e-12)


def test_acc7_rounding_examples():
    assert compute_metrics(np.array([2.6, -1.0]), np.array([3.0, -1.0]))["acc7"] == 100.0
    assert compute_metrics(np.array([3.4, -1.0]), np.array([3.0, -1.0]))["acc7"] == 100.0
    assert compute_metrics(np.array([2.4, -1.0]), np.array([3.0, -1.0]))["acc7"] == 50.0


def test_constant_series_flags_correlation():
    m = compute_metrics(np.zeros(4), np.array([1.0, -1.0, 2.0, 0.5]))
    assert m["corr"] == 0.0 and m["corr_undefined"]
    assert pearson(np.ones(3), np.arange(3.0)) == (0.0, True)


def test_too_few_samples():
    with pytest.raises(ValueError):
        compute_metrics(np.array([1.0]), np.array([1.0]))


def test_classification_metrics():
    logits = np.array([[2.0, 0.1, 0.0], [0.0, 1.0, 0.5], [0.0, 0.1, 3.0], [1.0, 0.0, 0.0]])
    labels = np.array([0, 1, 1, 0])
    m = compute_metrics(logits, labels, "classification")
    assert m["acc"] == 75.0
    assert set(m) == {"acc", "f1"}


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3, allow_nan=False), min_size=2, max_size=30))
def test_metric_ranges(values):
    labels = np.array(values)
    preds = labels[::-1].copy()
    m = compute_metrics(preds, labels)
    assert 0 <= m["acc"] <= 100 and 0 <= m["acc7"] <= 100 and 0 <= m["f1"] <= 100
    assert -1 <= m["corr"] <= 1 and m["mae"] >= 0


# -- reports ------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def tiny_run():
    from promptweave.backbone import ModelConfig
    from promptweave.data import SyntheticSpec, generate_splits
    from promptweave.model import init_model
    from promptweave.training import TrainConfig, pretrain, prompt_tune

    cfg = ModelConfig(d_model=8, prompt_len=4, n_heads=2, n_cross_layers=1, raw_dims=(6, 6, 6), seq_lens=(8, 8, 8))
    spec = SyntheticSpec(raw_dim=(6, 6, 6), seq_len=(8, 8, 8), n_train=64, n_val=16, n_test=40)
    data = generate_splits(spec, "tune")
    pre = pretrain(init_model(cfg, 0), cfg, data["train"], TrainConfig(stage="pretrain", epochs=1, batch_size=32))
    tuned = prompt_tune(pre, data["train"], TrainConfig(epochs=1, batch_size=32))
    return pre, tuned, data


def test_report_has_six_rows_and_average(tiny_run):
    _, tuned, data = tiny_run
    rep = evaluate_cases(tuned, data["test"])
    assert rep.case_names == ["{a}", "{v}", "{t}", "{a,v}", "{a,t}", "{v,t}"]
    assert len(rep.all_rows()) == 7
    avg = rep.row("avg")
    assert avg["acc"] == pytest.approx(np.mean([r["acc"] for r in rep.rows]))
    assert 0.01 <= rep.trainable_ratio <= 0.5


def test_lower_bound_needs_all_cases(tiny_run):
    from promptweave.training import TrainConfig, prompt_tune

    pre, _, data = tiny_run
    lbs = [prompt_tune(pre, data["train"], TrainConfig(baseline="lb", lb_case=c, epochs=1, max_steps=1))
           for c in ("{a}", "{v}", "{t}", "{a,v}", "{a,t}", "{v,t}")]
    assert evaluate_cases(lbs[:2], data["test"]).average is None
    rep = evaluate_cases(lbs, data["test"])
    assert rep.average is not None and len(rep.rows) == 6


def test_complete_row(tiny_run):
    pre, _, data = tiny_run
    row = evaluate_complete(pre, data["test"])
    assert row["case"] == "{a,v,t}" and row["n"] == 40


def test_csv_layout(tmp_path, tiny_run):
    _, tuned, data = tiny_run
    rep = evaluate_cases(tuned, data["test"])
    path = tmp_path / "r.csv"
    write_csv(path, report_csv_rows(rep, seed=0))
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 8
    assert lines[1].split(",")[3] == "{a}"
