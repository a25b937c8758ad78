"""Command-line entry point: ``promptweave <subcommand> ...``.

Exit codes: 0 success, 1 runtime or configuration failure (one-line
diagnostic on stderr), 2 usage error.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import sys
import time
from dataclasses import replace
from pathlib import Path

from .backbone import ConfigError
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .config import RunConfig, dump_config, load_config
from .data import INCOMPLETE_MASKS, DatasetFormatError, generate_splits, load_dataset, save_dataset
from .evaluation import count_params, evaluate_cases, prompt_count_formula, report_csv_rows, write_csv
from .model import init_model
from .numerics import ContractError
from .training import BASELINE_ALIASES, DivergenceError, TrainConfig, pretrain, prompt_tune, trainable_prefixes

log = logging.getLogger("promptweave")

SPLITS = ("train", "val", "test")
DOMAINS = ("pretrain", "tune")


class CliError(Exception):
    """A failure that is reported as one line and exit code 1."""


# -- helpers ----------------------------------------------------------------------------


def _data_path(rc: RunConfig, domain: str, split: str) -> Path:
    return Path(rc.paths.data_dir) / f"{domain}_{split}.mmjsonl"


def _load_split(rc: RunConfig, domain: str, split: str):
    path = _data_path(rc, domain, split)
    if not path.exists():
        raise CliError(f"dataset not found: {path} (run `promptweave gen-data` first)")
    return load_dataset(path)


def _load_ckpt(path):
    path = Path(path)
    if not path.exists():
        raise CliError(f"checkpoint not found: {path}")
    return load_checkpoint(path)


def write_provenance(output: Path, rc: RunConfig, argv: list[str], started: float, extra: dict | None = None) -> None:
    """Resolved config and a timestamped metadata sidecar next to ``output``."""
    output = Path(output)
    output.with_name(output.name + ".config.ini").write_text(dump_config(rc), encoding="utf-8")
    meta = {
        "output": output.name,
        "argv": argv,
        "started": _dt.datetime.fromtimestamp(started, _dt.timezone.utc).isoformat(),
        "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seconds": round(time.time() - started, 3),
    }
    meta.update(extra or {})
    output.with_name(output.name + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _overrides(args) -> dict[str, dict[str, str]]:
    out: dict[str, dict[str, str]] = {}
    for item in args.set or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"--set expects section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        sec, key = lhs.split(".", 1)
        out.setdefault(sec.strip(), {})[key.strip()] = value
    if args.seed is not None:
        out.setdefault("run", {})["seed"] = str(args.seed)
    for attr, (sec, key) in {
        "data_dir": ("paths", "data_dir"),
        "out_dir": ("paths", "out_dir"),
    }.items():
        value = getattr(args, attr, None)
        if value is not None:
            out.setdefault(sec, {})[key] = str(value)
    return out


def _print_rows(rows: list[dict], keys=("case", "n", "acc", "acc7", "f1", "mae", "corr")) -> None:
    present = [k for k in keys if any(k in r for r in rows)]
    print("  ".join(f"{k:>8}" for k in present))
    for r in rows:
        cells = []
        for k in present:
            v = r.get(k, "")
            cells.append(f"{v:>8.3f}" if isinstance(v, float) else f"{v!s:>8}")
        print("  ".join(cells))


# -- subcommands ---------------------------------------------------------------------------


def cmd_gen_data(args, rc: RunConfig, argv) -> None:
    started = time.time()
    out = Path(rc.paths.data_dir)
    out.mkdir(parents=True, exist_ok=True)
    for domain in DOMAINS:
        splits = generate_splits(rc.data, domain)
        for split in SPLITS:
            path = _data_path(rc, domain, split)
            save_dataset(path, splits[split])
            print(f"wrote {path} ({len(splits[split])} samples)")
    write_provenance(out / "synthetic", rc, argv, started)


def cmd_pretrain(args, rc: RunConfig, argv) -> None:
    started = time.time()
    train = _load_split(rc, "pretrain", "train")
    val = _load_split(rc, "pretrain", "val")
    tcfg = rc.pretrain
    if args.epochs is not None:
        tcfg = replace(tcfg, epochs=args.epochs)
    ckpt = pretrain(init_model(rc.model, rc.seed), rc.model, train, tcfg, val)
    out = Path(args.out or rc.paths.checkpoint)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(out, ckpt)
    write_provenance(out, rc, argv, started, {"steps": ckpt.meta.get("step")})
    print(f"wrote {out}")


def cmd_tune(args, rc: RunConfig, argv) -> None:
    started = time.time()
    ckpt = _load_ckpt(args.checkpoint or rc.paths.checkpoint)
    train = _load_split(rc, "tune", "train")
    val = _load_split(rc, "tune", "val")
    tcfg = rc.tune
    changes = {}
    if args.baseline is not None:
        changes["baseline"] = args.baseline
    if args.eta is not None:
        changes["eta"] = args.eta
    if args.epochs is not None:
        changes["epochs"] = args.epochs
    if args.prompts is not None:
        changes["prompts"] = args.prompts
    if args.backbone_init is not None:
        changes["backbone_init"] = args.backbone_init
    tcfg = replace(tcfg, **changes)
    prompt_len = args.prompt_len
    if prompt_len is not None and prompt_len > min(ckpt.config.seq_lens):
        raise ConfigError(f"--prompt-len {prompt_len} exceeds the shortest sequence length {min(ckpt.config.seq_lens)}")
    out = Path(args.out or rc.paths.tuned)
    out.parent.mkdir(parents=True, exist_ok=True)
    if tcfg.baseline == "lower_bound" and not args.lb_case:
        # one model per incomplete case
        for mask in INCOMPLETE_MASKS:
            tuned = prompt_tune(ckpt, train, replace(tcfg, lb_case=mask.name), val, prompt_len)
            path = out.with_name(f"{out.stem}_lb_{''.join(m for m, miss in zip('avt', mask) if not miss)}{out.suffix}")
            save_checkpoint(path, tuned)
            write_provenance(path, rc, argv, started)
            print(f"wrote {path}")
        return
    if args.lb_case:
        tcfg = replace(tcfg, lb_case=args.lb_case)
    tcfg.validate()
    tuned = prompt_tune(ckpt, train, tcfg, val, prompt_len)
    save_checkpoint(out, tuned)
    write_provenance(out, rc, argv, started)
    print(f"wrote {out}")


def cmd_eval(args, rc: RunConfig, argv) -> None:
    started = time.time()
    paths = args.checkpoint or [rc.paths.tuned]
    ckpts = [_load_ckpt(p) for p in paths]
    test = load_dataset(args.data) if args.data else _load_split(rc, "tune", "test")
    report = evaluate_cases(ckpts, test)
    if len(report.rows) != len(INCOMPLETE_MASKS):
        raise CliError(f"only {len(report.rows)} of 6 cases covered; lower-bound runs need all six checkpoints")
    out = Path(args.out) if args.out else Path(rc.paths.out_dir) / f"report_cases_{rc.seed}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(out, report_csv_rows(report, seed=rc.seed))
    write_provenance(out, rc, argv, started, {"checkpoints": [str(p) for p in paths]})
    _print_rows(report.all_rows())
    print(f"trainable ratio {report.trainable_ratio:.4f}")
    print(f"wrote {out}")


def cmd_sweep(args, rc: RunConfig, argv) -> None:
    from .sweeps import SweepBase, canonical_axis, run_sweep

    started = time.time()
    axis = canonical_axis(args.axis or rc.sweep.axis)
    grid = args.grid if args.grid is not None else list(rc.sweep.grid)
    seeds = args.seeds if args.seeds is not None else list(rc.sweep.seeds)
    pre = _load_ckpt(args.checkpoint or rc.paths.checkpoint)
    train = _load_split(rc, "tune", "train")
    val = _load_split(rc, "tune", "val")
    test = _load_split(rc, "tune", "test")
    out_dir = Path(rc.paths.out_dir)
    for seed in seeds:
        base = SweepBase(pre, train, val, test, replace(rc.tune, seed=seed))
        if axis == "test_missing_rate" and args.tuned:
            base.tuned = _load_ckpt(args.tuned)
        result = run_sweep(axis, grid, base)
        path = result.write(out_dir)
        write_provenance(path, rc, argv, started, {"axis": axis, "grid": list(result.grid), "seed": seed})
        if args.svg or rc.sweep.svg:
            result.plot_svg(path.with_suffix(".svg"))
        print(f"seed {seed}: " + ", ".join(f"{v}: {a:.2f}" for v, a in zip(result.grid, result.summary())))
        print(f"wrote {path}")


def cmd_gradcheck(args, rc: RunConfig, argv) -> None:
    from .oracle import TOLERANCE, run_oracle

    results, seconds = run_oracle(range(args.seeds))
    worst = max(r.max_rel_err for r in results)
    if args.verbose_checks:
        for r in results:
            print(f"{'ok  ' if r.ok else 'FAIL'} {r.name:<48} {r.max_rel_err:.3e}")
    bad = [r for r in results if not r.ok]
    print(f"{len(results)} checks, max rel err {worst:.3e} (tolerance {TOLERANCE:g}), {seconds:.1f} s")
    if bad:
        raise CliError(f"gradient check failed for {', '.join(r.name for r in bad)}")


def cmd_params(args, rc: RunConfig, argv) -> None:
    if args.checkpoint:
        ckpt = _load_ckpt(args.checkpoint)
        params, cfg = ckpt.params, ckpt.config
    else:
        cfg = rc.model
        params = init_model(cfg, rc.seed)
        params.set_trainable(trainable_prefixes(TrainConfig(baseline=args.baseline or "none")))
    counts = count_params(params)
    counts["prompt_formula"] = prompt_count_formula(cfg)
    width = max(len(k) for k in counts)
    for k, v in counts.items():
        print(f"{k:<{width}}  {v:.4f}" if isinstance(v, float) else f"{k:<{width}}  {v}")


# -- parser -------------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file", default=None)
    common.add_argument("--seed", type=int, default=None, help="run seed (falls back to $PROMPTWEAVE_SEED, then 0)")
    common.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE", default=None, help="override one config value (repeatable)")
    common.add_argument("--data-dir", default=None, help="dataset directory (config [paths] data_dir)")
    common.add_argument("--out-dir", default=None, help="output directory (config [paths] out_dir)")
    common.add_argument("-v", "--verbose", action="store_true", default=False, help="log training progress")

    parser = argparse.ArgumentParser(prog="promptweave", description="Prompt learning for missing modalities.", formatter_class=fmt)
    sub = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    p = sub.add_parser("gen-data", parents=[common], formatter_class=fmt, help="write synthetic datasets for both domains")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("pretrain", parents=[common], formatter_class=fmt, help="train the backbone on complete pretrain-domain data")
    p.add_argument("--epochs", type=int, default=None, help="override [pretrain] epochs")
    p.add_argument("--out", default=None, help="checkpoint path (config [paths] checkpoint)")
    p.set_defaults(func=cmd_pretrain)

    p = sub.add_parser("tune", parents=[common], formatter_class=fmt, help="prompt-tune a pretrained checkpoint, or train a baseline")
    p.add_argument("--checkpoint", default=None, help="pretrained checkpoint (config [paths] checkpoint)")
    p.add_argument("--baseline", choices=sorted(BASELINE_ALIASES), default=None, help="baseline mode; none = full method")
    p.add_argument("--eta", type=float, default=None, help="train missing rate (config [tune] eta)")
    p.add_argument("--prompt-len", type=int, default=None, help="prompt length (default: the checkpoint's)")
    p.add_argument("--prompts", default=None, help="prompt kinds, e.g. gen,ms,mt or none")
    p.add_argument("--lb-case", default=None, help="lower-bound case such as {v,t}; all six when omitted")
    p.add_argument("--backbone-init", choices=("checkpoint", "scratch"), default=None, help="baseline backbone start")
    p.add_argument("--epochs", type=int, default=None, help="override [tune] epochs")
    p.add_argument("--out", default=None, help="tuned checkpoint path (config [paths] tuned)")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("eval", parents=[common], formatter_class=fmt, help="per-case report over the six incomplete cases")
    p.add_argument("--checkpoint", nargs="+", default=None, help="tuned checkpoint(s); six lower-bound checkpoints allowed")
    p.add_argument("--data", default=None, help="test set (default: tune-domain test split)")
    p.add_argument("--out", default=None, help="CSV path (default: <out_dir>/report_cases_<seed>.csv)")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", parents=[common], formatter_class=fmt, help="missing-rate or prompt-length sweep")
    p.add_argument("--axis", choices=("test-eta", "train-eta", "prompt-len"), default=None, help="sweep axis (config [sweep] axis)")
    p.add_argument("--grid", type=float, nargs="+", default=None, help="strictly increasing grid values")
    p.add_argument("--seeds", type=int, nargs="+", default=None, help="training seeds, one CSV each")
    p.add_argument("--checkpoint", default=None, help="pretrained checkpoint (config [paths] checkpoint)")
    p.add_argument("--tuned", default=None, help="tuned checkpoint for the test-eta axis (tuned on the fly otherwise)")
    p.add_argument("--svg", action="store_true", default=False, help="also render an SVG line chart (needs matplotlib)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("gradcheck", parents=[common], formatter_class=fmt, help="run the finite-difference gradient oracle")
    p.add_argument("--seeds", type=int, default=3, help="random draws per primitive")
    p.add_argument("--verbose-checks", action="store_true", default=False, help="print every check")
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("params", parents=[common], formatter_class=fmt, help="parameter counts and ratios")
    p.add_argument("--checkpoint", default=None, help="count this checkpoint instead of a fresh model")
    p.add_argument("--baseline", choices=sorted(BASELINE_ALIASES), default=None, help="trainable set for a fresh model")
    p.set_defaults(func=cmd_params)
    return parser


def run_cli(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse: 0 for --help, 2 for usage errors
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        rc = load_config(args.config, _overrides(args))
        args.func(args, rc, argv)
    except (CliError, ConfigError, CheckpointError, DatasetFormatError, ContractError, DivergenceError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
