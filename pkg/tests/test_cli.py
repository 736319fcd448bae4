import logging

import numpy as np
import pytest

from cvaead.cli import main
from cvaead.config import RunConfig, parse_config_text
from cvaead.data import LABEL_INLIER, LABEL_TYPE_A, load_dataset
from cvaead.evaluate import load_report
from cvaead.metrics import load_scores
from cvaead.model import load_model

TINY = [
    "--n", "10", "--m", "2", "--o", "2",
    "--sample-count", "200",
    "--latent-dim", "3", "--hidden", "16",
    "--max-epochs", "3", "--patience", "2", "--latent-draws", "5",
]


def run(args):
    return main([str(a) for a in args])


def test_gen_data_writes_dataset(tmp_path):
    out = tmp_path / "data.csv"
    assert run(["gen-data", "--dataset-path", out, *TINY]) == 0
    ds = load_dataset(out)
    assert ds.x.shape == (200, 10) and ds.k.shape == (200, 2)
    assert all(label == LABEL_INLIER for label in ds.labels)


def test_gen_data_default_dims_have_105_numeric_columns(tmp_path):
    out = tmp_path / "data.csv"
    assert run(["gen-data", "--dataset-path", out, "--sample-count", "3"]) == 0
    header = out.read_text().splitlines()[0].split(",")
    numeric = [c for c in header if c.startswith("x_") or c.startswith("k_")]
    assert len(numeric) == 105  # 100 features + 5 known latents
    assert header[-2:] == ["label", "corrupted_features"]


def test_gen_data_variant_injects_anomalies(tmp_path):
    out = tmp_path / "bad.csv"
    assert run(["gen-data", "--dataset-path", out, "--variant", "type_a", *TINY]) == 0
    ds = load_dataset(out)
    assert all(label == LABEL_TYPE_A for label in ds.labels)
    assert all(len(c) == 1 for c in ds.corrupted)


def test_gen_data_writes_structure_file(tmp_path):
    out, st = tmp_path / "data.csv", tmp_path / "structure.json"
    assert run(["gen-data", "--dataset-path", out, "--structure-path", st, *TINY]) == 0
    assert st.exists()


def test_gen_data_is_deterministic(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert run(["gen-data", "--dataset-path", a, "--seed", "5", *TINY]) == 0
    assert run(["gen-data", "--dataset-path", b, "--seed", "5", *TINY]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_missing_required_path_fails_with_one_line_error(tmp_path, capsys):
    assert run(["gen-data", "--n", "10"]) == 1
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert err.startswith("error: ConfigError:") and "dataset_path" in err


def test_unknown_flag_exits_with_usage_error():
    with pytest.raises(SystemExit) as excinfo:
        main(["gen-data", "--frobnicate", "1"])
    assert excinfo.value.code == 2


def test_sim_trigger_writes_dataset_and_graph(tmp_path):
    out, gp = tmp_path / "rates.csv", tmp_path / "graph.json"
    assert run(["sim-trigger", "--dataset-path", out, "--graph-path", gp,
                "--sample-count", "50"]) == 0
    ds = load_dataset(out)
    assert ds.x.shape == (50, 24) and ds.k.shape == (50, 4)
    assert out.read_text().splitlines()[0].startswith("hlt_0,")
    assert gp.exists()


@pytest.fixture()
def trained(tmp_path):
    data = tmp_path / "train.csv"
    ckpt = tmp_path / "model.ckpt"
    assert run(["gen-data", "--dataset-path", data, *TINY]) == 0
    assert run(["train", "--dataset-path", data, "--checkpoint-path", ckpt, *TINY]) == 0
    return data, ckpt


def test_train_writes_loadable_checkpoint(trained):
    _, ckpt = trained
    model = load_model(ckpt)
    assert model.x_dim == 10 and model.k_dim == 2 and model.latent_dim == 3


def test_score_writes_verdicts(trained, tmp_path):
    data, ckpt = trained
    scores = tmp_path / "scores.csv"
    assert run(["score", "--dataset-path", data, "--checkpoint-path", ckpt,
                "--scores-path", scores, "--latent-draws", "5"]) == 0
    ids, type_a, type_b, flags, _ = load_scores(scores)
    assert len(ids) == 200
    assert np.all(np.asarray(type_a) >= 0) and np.all(np.asarray(type_b) >= 0)


def test_score_on_training_inliers_flags_about_target_fpr(trained, tmp_path):
    # calibration self-consistency: ~1% positive at target_fpr=0.01
    data, ckpt = trained
    scores = tmp_path / "scores.csv"
    assert run(["score", "--dataset-path", data, "--checkpoint-path", ckpt,
                "--scores-path", scores, "--latent-draws", "5",
                "--target-fpr", "0.01"]) == 0
    _, _, _, flags, _ = load_scores(scores)
    flagged = int(np.sum(flags))
    assert 1 <= flagged <= 4  # 200 samples, two OR-ed thresholds at 1% each


def test_score_with_explicit_thresholds(trained, tmp_path):
    data, ckpt = trained
    scores = tmp_path / "scores.csv"
    assert run(["score", "--dataset-path", data, "--checkpoint-path", ckpt,
                "--scores-path", scores, "--latent-draws", "5",
                "--tau-a", "1e12", "--tau-b", "1e12"]) == 0
    _, _, _, flags, _ = load_scores(scores)
    assert int(np.sum(flags)) == 0


def test_score_dimension_mismatch_names_fields(trained, tmp_path, capsys):
    _, ckpt = trained
    other = tmp_path / "other.csv"
    assert run(["gen-data", "--dataset-path", other, "--n", "6", "--m", "2",
                "--o", "2", "--sample-count", "20"]) == 0
    assert run(["score", "--dataset-path", other, "--checkpoint-path", ckpt,
                "--scores-path", tmp_path / "s.csv"]) == 1
    err = capsys.readouterr().err
    assert "x_dim" in err and "n=6" in err


def test_commands_log_reparseable_config(trained, caplog, tmp_path):
    data, ckpt = trained
    with caplog.at_level(logging.INFO, logger="cvaead"):
        assert run(["train", "--dataset-path", data, "--checkpoint-path", ckpt, *TINY]) == 0
    blocks = [r.getMessage() for r in caplog.records
              if r.getMessage().startswith("resolved configuration:")]
    assert blocks
    text = blocks[0].split("\n", 1)[1]
    cfg = RunConfig(**parse_config_text(text))
    assert cfg.n == 10 and cfg.dataset_path == str(data)


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.cfg"
    out = tmp_path / "from_file.csv"
    cfg.write_text(
        f"n = 10\nm = 2\no = 2\nsample_count = 30\ndataset_path = {out}\n"
    )
    assert run(["gen-data", "--config", cfg, "--sample-count", "40"]) == 0
    assert load_dataset(out).x.shape == (40, 10)  # flag won


def test_env_overrides_path_keys(tmp_path, monkeypatch):
    target = tmp_path / "env.csv"
    monkeypatch.setenv("CVAEAD_DATASET_PATH", str(target))
    assert run(["gen-data", *TINY]) == 0
    assert target.exists()


def test_eval_writes_report(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    report_path = tmp_path / "report.json"
    assert run(["eval", "--experiment", "synthetic", "--repeats", "1",
                "--report-path", report_path, *TINY]) == 0
    report = load_report(report_path)
    assert set(report["results"]) == {"cvae", "vae"}
    assert report["experiment"] == "synthetic"


def test_reproduce_synthetic_default_report_name(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(["reproduce-synthetic", "--repeats", "1", *TINY]) == 0
    report = load_report(tmp_path / "synthetic_report.json")
    assert report["experiment"] == "synthetic"
