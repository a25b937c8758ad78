import pytest

from promptweave.backbone import ConfigError
from promptweave.config import RunConfig, dump_config, load_config, parse_value


def test_defaults_validate():
    rc = load_config(env={})
    assert rc.seed == 0
    assert rc.model.prompt_len == 16
    assert rc.tune.eta == 0.7
    assert rc.pretrain.stage == "pretrain"


def test_file_then_overrides(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nseed = 3\n[tune]\neta = 0.5\nepochs = 4\n[sweep]\ngrid = 0.0, 0.5\n")
    rc = load_config(ini, {"tune": {"eta": "0.9"}}, env={})
    assert rc.seed == 3
    assert rc.tune.eta == 0.9
    assert rc.tune.epochs == 4
    assert rc.sweep.grid == (0.0, 0.5)
    # the run seed reaches both training stages, the data seed stays put
    assert rc.tune.seed == 3 and rc.pretrain.seed == 3
    assert rc.data.seed == 0


def test_section_seed_pins_override_run_seed():
    rc = load_config(None, {"run": {"seed": "5"}, "tune": {"seed": "9"}}, env={})
    assert rc.pretrain.seed == 5 and rc.tune.seed == 9


def test_seed_env_fallback():
    assert load_config(env={"PROMPTWEAVE_SEED": "11"}).seed == 11
    assert load_config(None, {"run": {"seed": "2"}}, env={"PROMPTWEAVE_SEED": "11"}).seed == 2


@pytest.mark.parametrize(
    "overrides, fragment",
    [
        ({"model": {"d_modle": "8"}}, "[model] d_modle: unknown key"),
        ({"modle": {"d_model": "8"}}, "[modle]: unknown section"),
        ({"run": {"sead": "1"}}, "[run] sead"),
        ({"tune": {"eta": "lots"}}, "[tune] eta"),
        ({"tune": {"eta": "1.5"}}, "[tune]"),
        ({"model": {"d_model": "30"}}, "[model]"),
        ({"model": {"seq_lens": "24, 24"}}, "[model] seq_lens"),
        ({"model": {"seq_lens": "20, 24, 24"}}, "seq_lens"),
        ({"model": {"prompt_len": "30"}}, "[model]"),
    ],
)
def test_bad_values_name_the_field(overrides, fragment):
    with pytest.raises(ConfigError) as info:
        load_config(None, overrides, env={})
    assert fragment in str(info.value)


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "none.ini", env={})


def test_dump_round_trips(tmp_path):
    rc = load_config(None, {"run": {"seed": "4"}, "tune": {"prompts": "gen,mt"}, "sweep": {"svg": "yes"}}, env={})
    path = tmp_path / "dump.ini"
    path.write_text(dump_config(rc))
    assert load_config(path, env={}) == rc


def test_parse_value_types():
    assert parse_value("1, 2, 3", tuple[int, int, int], "x") == (1, 2, 3)
    assert parse_value("0.1,0.2", tuple[float, ...], "x") == (0.1, 0.2)
    assert parse_value("off", bool, "x") is False
    with pytest.raises(ConfigError, match="where"):
        parse_value("maybe", bool, "where")


def test_run_config_default_is_consistent():
    RunConfig().validate()
