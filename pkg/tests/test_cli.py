import json

import pytest

from promptweave.cli import build_parser, run_cli

TINY = """\
[model]
d_model = 8
prompt_len = 2
n_heads = 2
n_cross_layers = 1
raw_dims = 4, 4, 4
seq_lens = 6, 6, 6
[data]
raw_dim = 4, 4, 4
seq_len = 6, 6, 6
n_train = 40
n_val = 16
n_test = 20
[pretrain]
epochs = 1
batch_size = 20
[tune]
epochs = 1
batch_size = 20
"""


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("PROMPTWEAVE_SEED", raising=False)
    (tmp_path / "tiny.ini").write_text(TINY)
    return tmp_path


def cli(*args):
    return run_cli(list(args) + ["--config", "tiny.ini"])


@pytest.fixture
def pretrained(workdir):
    assert cli("gen-data") == 0
    assert cli("pretrain") == 0
    return workdir


def test_tune_then_eval_writes_six_case_csv(pretrained, capsys):
    assert cli("tune", "--eta", "0.7", "--prompt-len", "2") == 0
    assert cli("eval") == 0
    lines = (pretrained / "runs" / "report_cases_0.csv").read_text().splitlines()
    assert lines[0].startswith("axis,value,seed,case")
    assert len(lines) == 1 + 6 + 1
    assert lines[-1].split(",")[3] == "avg"
    meta = json.loads((pretrained / "runs" / "report_cases_0.csv.meta.json").read_text())
    assert "started" in meta and "finished" in meta
    assert "[tune]" in (pretrained / "runs" / "report_cases_0.csv.config.ini").read_text()


def test_rerun_gives_identical_csv(pretrained):
    out = []
    for k in range(2):
        assert cli("tune", "--out", f"runs/t{k}.npz") == 0
        assert cli("eval", "--checkpoint", f"runs/t{k}.npz", "--out", f"runs/r{k}.csv") == 0
        out.append((pretrained / "runs" / f"r{k}.csv").read_bytes())
    assert out[0] == out[1]


def test_lower_bound_trains_all_six(pretrained):
    assert cli("tune", "--baseline", "lb") == 0
    ckpts = sorted(str(p) for p in (pretrained / "runs").glob("tuned_lb_*.npz"))
    assert len(ckpts) == 6
    assert run_cli(["eval", "--config", "tiny.ini", "--checkpoint", *ckpts]) == 0
    assert run_cli(["eval", "--config", "tiny.ini", "--checkpoint", ckpts[0], "--out", "x.csv"]) == 1


def test_sweep_csv(pretrained):
    assert cli("sweep", "--axis", "prompt-len", "--grid", "1", "2", "--seeds", "0", "1") == 0
    for seed in (0, 1):
        rows = (pretrained / "runs" / f"report_prompt_length_{seed}.csv").read_text().splitlines()
        assert len(rows) == 1 + 2 * 7


def test_prompt_len_too_long_is_config_error(pretrained, capsys):
    assert cli("tune", "--prompt-len", "9") == 1
    assert capsys.readouterr().err.startswith("error:")
    assert cli("sweep", "--axis", "prompt-len", "--grid", "3", "7") == 1


def test_eval_without_checkpoint_names_path(workdir, capsys):
    assert cli("eval", "--checkpoint", "runs/absent.npz") == 1
    err = capsys.readouterr().err
    assert "runs/absent.npz" in err and err.count("\n") == 1


def test_missing_data_is_reported(workdir, capsys):
    assert cli("pretrain") == 1
    assert "gen-data" in capsys.readouterr().err


def test_usage_errors_exit_2(workdir):
    assert run_cli(["frobnicate"]) == 2
    assert run_cli(["tune", "--baseline", "xx"]) == 2
    assert run_cli([]) == 2


def test_config_error_names_field(workdir, capsys):
    assert cli("params", "--set", "model.n_heads=3") == 1
    assert "n_heads" in capsys.readouterr().err
    assert cli("params", "--set", "nonsense") == 1


def test_params_report(workdir, capsys):
    assert run_cli(["params"]) == 0
    out = capsys.readouterr().out
    assert "trainable_ratio" in out and "prompt_formula" in out


def test_seed_from_environment(pretrained, monkeypatch):
    monkeypatch.setenv("PROMPTWEAVE_SEED", "3")
    assert cli("tune") == 0
    assert cli("eval") == 0
    assert (pretrained / "runs" / "report_cases_3.csv").exists()


def test_every_subcommand_help_lists_defaults(capsys):
    parser = build_parser()
    sub = next(a for a in parser._actions if a.dest == "command")
    for name, p in sub.choices.items():
        text = p.format_help()
        assert "--seed" in text and "--config" in text, name
        assert "default:" in text, name


def test_help_exits_zero(capsys):
    assert run_cli(["--help"]) == 0
    assert run_cli(["sweep", "--help"]) == 0


def test_gradcheck_passes(capsys):
    assert run_cli(["gradcheck", "--seeds", "1"]) == 0
    out = capsys.readouterr().out
    worst = float(out.split("max rel err ")[1].split()[0])
    assert worst <= 1e-4
