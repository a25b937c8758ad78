"""Metrics, per-missing-case reports, parameter accounting and sweeps."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nx
from .backbone import ModelConfig
from .checkpoint import Checkpoint
from .data import ALL_MASKS, COMPLETE, INCOMPLETE_MASKS, Dataset, MissingMask, apply_missingness
from .model import PromptSwitches, batch_tensors, forward
from .params import ParamStore
from .prompts import prompt_param_count
from .numerics import Rng

METRIC_KEYS = ("acc", "acc7", "f1", "mae", "corr")


# -- metrics ------------------------------------------------------------------------


def round_half_away(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def weighted_f1(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    """Support-weighted F1 over the classes present in either series, in [0, 1]."""
    classes = np.union1d(y_true, y_pred)
    total = 0.0
    for c in classes:
        tp = np.sum((y_pred == c) & (y_true == c))
        fp = np.sum((y_pred == c) & (y_true != c))
        fn = np.sum((y_pred != c) & (y_true == c))
        denom = 2 * tp + fp + fn
        f1 = 2 * tp / denom if denom else 0.0
        total += f1 * np.sum(y_true == c)
    return float(total / len(y_true))


def pearson(x: np.ndarray, y: np.ndarray) -> tuple[float, bool]:
    """Pearson correlation and a flag that is True when either series is constant."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    xc, yc = x - x.mean(), y - y.mean()
    sx, sy = np.sqrt((xc * xc).sum()), np.sqrt((yc * yc).sum())
    if sx == 0 or sy == 0:
        return 0.0, True
    return float(np.clip((xc * yc).sum() / (sx * sy), -1.0, 1.0)), False


def compute_metrics(preds, labels, task: str = "regression") -> dict:
    """ACC / F1 in percent; for regression also ACC-7 (percent), MAE and Corr.

    Regression binarises at zero with non-negative counted as positive.
    Classification takes argmax of (N, C) logits, or uses 1-D class ids as is.
    """
    preds = np.asarray(preds, dtype=np.float64)
    labels = np.asarray(labels)
    if len(labels) < 2 or len(preds) != len(labels):
        raise ValueError(f"need >= 2 paired predictions, got {len(preds)} preds / {len(labels)} labels")
    if task == "classification":
        cls = preds.argmax(axis=-1) if preds.ndim == 2 else preds.astype(np.int64)
        return {
            "acc": float(100.0 * np.mean(cls == labels)),
            "f1": 100.0 * weighted_f1(labels, cls),
        }
    preds = preds.reshape(-1)
    y = labels.astype(np.float64)
    pb, yb = preds >= 0, y >= 0
    p7 = np.clip(round_half_away(preds), -3, 3)
    y7 = np.clip(round_half_away(y), -3, 3)
    corr, undefined = pearson(preds, y)
    out = {
        "acc": float(100.0 * np.mean(pb == yb)),
        "acc7": float(100.0 * np.mean(p7 == y7)),
        "f1": 100.0 * weighted_f1(yb.astype(int), pb.astype(int)),
        "mae": float(np.mean(np.abs(preds - y))),
        "corr": corr,
    }
    if undefined:
        out["corr_undefined"] = True
    return out


# -- inference ------------------------------------------------------------------------


def predict_dataset(
    params: ParamStore, cfg: ModelConfig, ds: Dataset, switches: PromptSwitches, batch_size: int = 256
) -> np.ndarray:
    outs = []
    with nx.no_grad():
        for start in range(0, len(ds), batch_size):
            idx = np.arange(start, min(start + batch_size, len(ds)))
            feats, masks = batch_tensors(ds, idx)
            outs.append(forward(params, cfg, feats, masks, switches).data)
    pred = np.concatenate(outs, axis=0)
    return pred.reshape(-1) if cfg.task == "regression" else pred


def switches_of(ckpt: Checkpoint) -> PromptSwitches:
    if ckpt.meta.get("stage") != "prompt_tune" or ckpt.meta.get("baseline", "none") != "none":
        return PromptSwitches.none()
    return PromptSwitches.parse(ckpt.meta.get("prompts", "gen,ms,mt"))


# -- reports ------------------------------------------------------------------------------


@dataclass
class MetricsReport:
    rows: list[dict]
    average: dict | None
    task: str = "regression"
    trainable_ratio: float = float("nan")
    meta: dict = field(default_factory=dict)

    @property
    def case_names(self) -> list[str]:
        return [r["case"] for r in self.rows]

    def row(self, case: str) -> dict:
        for r in self.rows:
            if r["case"] == case:
                return r
        if case == "avg" and self.average is not None:
            return self.average
        raise KeyError(case)

    def all_rows(self) -> list[dict]:
        return self.rows + ([self.average] if self.average is not None else [])


def average_row(rows: Sequence[dict]) -> dict:
    keys = [k for k in METRIC_KEYS if all(k in r for r in rows)]
    avg = {"case": "avg", "n": int(sum(r["n"] for r in rows))}
    for k in keys:
        avg[k] = float(np.mean([r[k] for r in rows]))
    return avg


def evaluate_cases(ckpts: Checkpoint | Sequence[Checkpoint], test: Dataset) -> MetricsReport:
    """Force each of the six incomplete masks onto the whole test set and score it.

    A lower-bound checkpoint (``meta['lb_case']``) only scores its own case;
    pass all six to get a full table.
    """
    if isinstance(ckpts, Checkpoint):
        ckpts = [ckpts]
    by_case: dict[str, Checkpoint] = {}
    general = None
    for c in ckpts:
        if "lb_case" in c.meta:
            by_case[c.meta["lb_case"]] = c
        else:
            general = c
    rows = []
    for mask in INCOMPLETE_MASKS:
        ckpt = by_case.get(mask.name, general)
        if ckpt is None:
            continue
        forced = test.force_mask(mask)
        preds = predict_dataset(ckpt.params, ckpt.config, forced, switches_of(ckpt))
        row = {"case": mask.name, "n": len(test)}
        row.update(compute_metrics(preds, forced.labels, test.task))
        row.pop("corr_undefined", None)
        rows.append(row)
    avg = average_row(rows) if len(rows) == len(INCOMPLETE_MASKS) else None
    ref = general if general is not None else next(iter(by_case.values()))
    counts = count_params(ref)
    meta = {k: ref.meta.get(k) for k in ("baseline", "prompts", "eta") if k in ref.meta}
    meta["prompt_len"] = ref.config.prompt_len
    return MetricsReport(rows, avg, test.task, counts["trainable_ratio"], meta)


def evaluate_complete(ckpt: Checkpoint, test: Dataset) -> dict:
    preds = predict_dataset(ckpt.params, ckpt.config, test, switches_of(ckpt))
    row = {"case": COMPLETE.name, "n": len(test)}
    row.update(compute_metrics(preds, test.labels, test.task))
    row.pop("corr_undefined", None)
    return row


def evaluate_masked(ckpt: Checkpoint, test: Dataset) -> list[dict]:
    """Score a test set that carries its own masks.

    One row per realised mask (enumeration order, groups of fewer than two
    samples skipped) plus an ``all`` row over every sample.
    """
    preds = predict_dataset(ckpt.params, ckpt.config, test, switches_of(ckpt))
    rows = []
    for mask in ALL_MASKS:
        sel = np.all(test.masks == np.array(mask), axis=1)
        if sel.sum() < 2:
            continue
        row = {"case": mask.name, "n": int(sel.sum())}
        row.update(compute_metrics(preds[sel], test.labels[sel], test.task))
        row.pop("corr_undefined", None)
        rows.append(row)
    row = {"case": "all", "n": len(test)}
    row.update(compute_metrics(preds, test.labels, test.task))
    row.pop("corr_undefined", None)
    rows.append(row)
    return rows


# -- parameter accounting ----------------------------------------------------------------


def count_params(ckpt: Checkpoint | ParamStore, trainable: set[str] | None = None) -> dict:
    """Exact counts by namespace and partition, plus ratios to the total."""
    params = ckpt.params if isinstance(ckpt, Checkpoint) else ckpt
    trainable = params.trainable if trainable is None else trainable
    total = params.count()
    n_train = params.count(names=trainable)
    prompt_only = params.count("prompts.")
    out = {
        "total": total,
        "frozen": total - n_train,
        "trainable": n_train,
        "prompt_only": prompt_only,
        "backbone": params.count("backbone."),
        "mmgm": params.count("mmgm."),
        "trainable_ratio": n_train / total,
        "prompt_ratio": prompt_only / total,
    }
    return out


def prompt_count_formula(cfg: ModelConfig) -> int:
    return prompt_param_count(cfg, 3)


# -- CSV ------------------------------------------------------------------------------------

CSV_COLUMNS = ("axis", "value", "seed", "case", "n", "acc", "acc7", "f1", "mae", "corr", "iacc", "xi")


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return f"{float(x):.6f}"


def report_csv_rows(report: MetricsReport, axis: str = "cases", value="", seed="") -> list[dict]:
    out = []
    for r in report.all_rows():
        out.append({"axis": axis, "value": value, "seed": seed, **r})
    return out


def write_csv(path, rows: Sequence[dict]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in rows:
        writer.writerow([_fmt(r.get(c, "")) for c in CSV_COLUMNS])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")
