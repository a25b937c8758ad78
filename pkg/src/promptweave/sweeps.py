"""Sweeps over test-time missing rate, train-time missing rate and prompt length."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .backbone import ConfigError
from .checkpoint import Checkpoint
from .data import Dataset, apply_missingness
from .evaluation import evaluate_cases, evaluate_complete, evaluate_masked, write_csv
from .numerics import Rng
from .training import TrainConfig, prompt_tune

log = logging.getLogger(__name__)

AXES = ("test_missing_rate", "train_missing_rate", "prompt_length")
AXIS_ALIASES = {"test-eta": "test_missing_rate", "train-eta": "train_missing_rate", "prompt-len": "prompt_length"}


@dataclass
class SweepBase:
    """Everything a sweep holds fixed: the pretrained checkpoint, tuning data and tuning recipe.

    ``tuned`` is the checkpoint the test-rate sweep evaluates; it is tuned
    from ``pretrained`` with ``train`` on first use when left unset.
    """

    pretrained: Checkpoint
    train: Dataset
    val: Dataset | None
    test: Dataset
    tune: TrainConfig = field(default_factory=TrainConfig)
    tuned: Checkpoint | None = None
    md_init: str = "checkpoint"

    @property
    def seed(self) -> int:
        return self.tune.seed


@dataclass
class SweepResult:
    axis: str
    grid: list
    seed: int
    rows: list[list[dict]]  # per grid value: case rows (+ average / all row)
    iacc: list[float] | None = None
    xi: list[float] | None = None
    baseline_avg: float | None = None

    def summary(self, metric: str = "acc") -> list[float]:
        """Headline value per grid point: the average / all row, or complete-data row at test rate 0."""
        out = []
        for rows in self.rows:
            out.append(rows[-1][metric])
        return out

    def csv_rows(self) -> list[dict]:
        out = []
        for k, (value, rows) in enumerate(zip(self.grid, self.rows)):
            for r in rows:
                row = {"axis": self.axis, "value": _value_text(value), "seed": self.seed, **r}
                if self.iacc is not None and r["case"] == "avg":
                    row["iacc"] = self.iacc[k]
                    row["xi"] = self.xi[k]
                out.append(row)
        return out

    @property
    def filename(self) -> str:
        return f"report_{self.axis}_{self.seed}.csv"

    def write(self, out_dir) -> Path:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        path = out_dir / self.filename
        write_csv(path, self.csv_rows())
        return path

    def plot_svg(self, path) -> Path:
        """Line chart of the headline ACC per grid value (needs matplotlib)."""
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt

        fig, ax = plt.subplots(figsize=(4.5, 3.0))
        ax.plot(self.grid, self.summary("acc"), marker="o", label="ACC")
        if self.iacc is not None:
            ax.plot(self.grid, self.iacc, marker="s", label="IACC")
        ax.set_xlabel(self.axis.replace("_", " "))
        ax.legend()
        fig.tight_layout()
        path = Path(path)
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
        return path


def _value_text(v) -> str:
    return str(v) if isinstance(v, int) else f"{float(v):.6g}"


def canonical_axis(axis: str) -> str:
    axis = AXIS_ALIASES.get(axis, axis)
    if axis not in AXES:
        raise ValueError(f"unknown sweep axis {axis!r}; use one of {', '.join(AXES)}")
    return axis


def validate_grid(axis: str, grid: Sequence, base: SweepBase) -> list:
    grid = list(grid)
    if not grid:
        raise ValueError("sweep grid is empty")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"sweep grid must be strictly increasing, got {grid}")
    if axis == "prompt_length":
        min_len = min(base.pretrained.config.seq_lens)
        for v in grid:
            if int(v) != v or v < 1:
                raise ConfigError(f"prompt length must be a positive integer, got {v}")
            if v > min_len:
                raise ConfigError(f"prompt length {v} exceeds the shortest sequence length {min_len}")
        grid = [int(v) for v in grid]
    else:
        for v in grid:
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"missing rate must lie in [0, 1], got {v}")
        grid = [float(v) for v in grid]
    return grid


def run_sweep(axis: str, grid: Sequence, base: SweepBase) -> SweepResult:
    axis = canonical_axis(axis)
    grid = validate_grid(axis, grid, base)
    if axis == "test_missing_rate":
        return _test_rate_sweep(grid, base)
    if axis == "train_missing_rate":
        return _train_rate_sweep(grid, base)
    return _prompt_length_sweep(grid, base)


def _test_rate_sweep(grid: list[float], base: SweepBase) -> SweepResult:
    ckpt = base.tuned
    if ckpt is None:
        ckpt = base.tuned = prompt_tune(base.pretrained, base.train, base.tune, base.val)
    rows = []
    for k, eta in enumerate(grid):
        if eta == 0.0:
            rows.append([evaluate_complete(ckpt, base.test)])
            continue
        masked = apply_missingness(base.test, eta, Rng(base.seed, "test-eta", k))
        rows.append(evaluate_masked(ckpt, masked))
    return SweepResult("test_missing_rate", grid, base.seed, rows)


def _report_rows(report) -> list[dict]:
    return [dict(r) for r in report.all_rows()]


def _train_rate_sweep(grid: list[float], base: SweepBase) -> SweepResult:
    rows = []
    for eta in grid:
        log.info("tuning at train missing rate %.3f", eta)
        tuned = prompt_tune(base.pretrained, base.train, replace(base.tune, eta=eta), base.val)
        rows.append(_report_rows(evaluate_cases(tuned, base.test)))
    return SweepResult("train_missing_rate", grid, base.seed, rows)


def _prompt_length_sweep(grid: list[int], base: SweepBase) -> SweepResult:
    md_cfg = replace(base.tune, baseline="modality_dropout", backbone_init=base.md_init)
    md = evaluate_cases(prompt_tune(base.pretrained, base.train, md_cfg, base.val), base.test)
    md_acc = md.average["acc"]
    rows, iacc, xi = [], [], []
    for lp in grid:
        log.info("tuning at prompt length %d", lp)
        tuned = prompt_tune(base.pretrained, base.train, base.tune, base.val, prompt_len=lp)
        report = evaluate_cases(tuned, base.test)
        gain = report.average["acc"] - md_acc
        rows.append(_report_rows(report))
        iacc.append(gain)
        xi.append(gain / lp)
    return SweepResult("prompt_length", grid, base.seed, rows, iacc, xi, md_acc)


def mean_over_seeds(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=np.float64)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std
