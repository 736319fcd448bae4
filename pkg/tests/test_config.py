import pytest

from cvaead.config import (
    RunConfig,
    format_config,
    load_config,
    parse_config_text,
    resolve_config,
)
from cvaead.errors import ConfigError


def test_defaults_match_documented_values():
    cfg = RunConfig()
    assert cfg.n == 100 and cfg.m == 5 and cfg.o == 5
    assert cfg.epsilon_sigma == 0.1
    assert cfg.hidden == (64, 64) and cfg.latent_dim == 8
    assert cfg.conditional is True
    assert cfg.latent_draws == 30
    assert cfg.tau_a is None and cfg.tau_b is None
    assert cfg.dataset_path is None


def test_parse_ignores_comments_and_blanks():
    values = parse_config_text("# a comment\n\nn = 10\nm = 2  # trailing\n")
    assert values == {"n": 10, "m": 2}


def test_parse_typed_values():
    values = parse_config_text(
        "hidden = 32,16\nconditional = false\ntau_a = 1.5\ntau_b = none\n"
        "epsilon_sigma = 0.25\ndataset_path = /tmp/d.csv\n"
    )
    assert values["hidden"] == (32, 16)
    assert values["conditional"] is False
    assert values["tau_a"] == 1.5
    assert values["tau_b"] is None
    assert values["dataset_path"] == "/tmp/d.csv"


def test_unknown_key_rejected_with_line():
    with pytest.raises(ConfigError, match=r"cfg, line 2.*unknown config key 'frobnicate'"):
        parse_config_text("n = 10\nfrobnicate = 3\n", source="cfg")


def test_repeated_key_rejected():
    with pytest.raises(ConfigError, match="repeated key 'n'"):
        parse_config_text("n = 10\nn = 11\n")


def test_missing_equals_rejected():
    with pytest.raises(ConfigError, match="line 1.*expected key = value"):
        parse_config_text("just some words\n")


@pytest.mark.parametrize(
    "line,fragment",
    [
        ("n = zero", "expected an integer"),
        ("n = 0", "n must be >= 1"),
        ("epsilon_sigma = -1", "must be > 0"),
        ("epsilon_sigma = nan", "finite"),
        ("conditional = yes", "expected true or false"),
        ("hidden = 64,,64", "comma-separated"),
        ("hidden = 64,0", "widths must be >= 1"),
        ("sigma_power = 3", "sigma_power must be one of"),
        ("target_fpr = 1.5", "strictly between 0 and 1"),
        ("variant = bogus", "variant must be one of"),
        ("experiment = cms", "experiment must be one of"),
        ("patience = 0", "patience must be >= 1"),
        ("variance_warmup = -1", "variance_warmup must be >= 0"),
        ("kl_warmup = -3", "kl_warmup must be >= 0"),
    ],
)
def test_value_validation(line, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config_text(line + "\n")


def test_format_round_trips_non_default_config():
    cfg = RunConfig(
        n=20,
        m=4,
        hidden=(32, 16, 8),
        conditional=False,
        tau_a=2.5,
        learning_rate=3e-4,
        variant="type_b",
        dataset_path="data.csv",
        out_dir="runs/exp1",
        seed=99,
    )
    again = RunConfig(**parse_config_text(format_config(cfg)))
    assert again == cfg


def test_format_round_trips_defaults():
    assert RunConfig(**parse_config_text(format_config(RunConfig()))) == RunConfig()


def test_load_config_reads_file(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n = 10\nm = 2\no = 3\nseed = 7\n")
    cfg = load_config(path)
    assert (cfg.n, cfg.m, cfg.o, cfg.seed) == (10, 2, 3, 7)
    assert cfg.latent_dim == 8  # untouched default


def test_missing_config_file_is_config_error(tmp_path):
    with pytest.raises(ConfigError, match="cannot read config file"):
        resolve_config(config_path=tmp_path / "absent.cfg")


def test_precedence_defaults_file_env_flags(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("n = 10\ndataset_path = from_file.csv\nscores_path = file_scores.csv\n")
    env = {
        "CVAEAD_DATASET_PATH": "from_env.csv",
        "CVAEAD_N": "999",  # not a path key: must be ignored
    }
    cfg = resolve_config(config_path=path, overrides={"n": "20"}, env=env)
    assert cfg.n == 20  # flag beats file; env ignored for non-paths
    assert cfg.dataset_path == "from_env.csv"  # env beats file
    assert cfg.scores_path == "file_scores.csv"  # file beats default


def test_flag_override_errors_name_the_flag():
    with pytest.raises(ConfigError, match="--latent-dim"):
        resolve_config(overrides={"latent_dim": "0"}, env={})


def test_overrides_accept_typed_values():
    cfg = resolve_config(overrides={"hidden": (8, 4), "conditional": False}, env={})
    assert cfg.hidden == (8, 4) and cfg.conditional is False
