import numpy as np
import pytest

from idmne.cli import ABLATION_VARIANTS, ci95_halfwidth, main
from idmne.config import dump_config, load_config, parse_config_text
from idmne.errors import ConfigError
from idmne.metrics import METRICS_COLUMNS, read_metrics_csv

TINY = """
data.generator = blobs
data.n_classes = 3
data.d_in = 4
data.n_source = 90
data.n_target = 90
data.spread = 2.0
train.epochs = 2
train.iterations_per_epoch = 2
model.hidden = 8
model.d_feat = 6
train.batch_source = 6
train.batch_labeled = 4
train.batch_expanded = 4
train.batch_unlabeled = 8
experiment.trials = 2
"""


@pytest.fixture
def cfg_path(tmp_path):
    p = tmp_path / "tiny.cfg"
    p.write_text(TINY)
    return p


def test_parse_types_and_sections():
    cfg = parse_config_text(TINY + "train.enable_pa = false\nexperiment.tau_list = 0.5, 0.9\n")
    assert cfg.train.hidden == (8,) and cfg.train.d_feat == 6 and cfg.train.enable_pa is False
    assert cfg.data.n_classes == 3 and cfg.tau_list == (0.5, 0.9) and cfg.trial_seeds() == [0, 1]


@pytest.mark.parametrize(
    "text, match",
    [
        ("train.nope = 1", "unknown key"),
        ("train.epochs = many", "train.epochs"),
        ("just words", "section.key"),
        ("train.tau = 1.5", "tau"),
        ("data.generator = spirals", "generator"),
        ("data.generator = csv", "data.path"),
        ("experiment.trials = 0", "trials"),
        ("train.enable_pa = maybe", "enable_pa"),
    ],
)
def test_parse_errors(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config_text(text)


def test_dump_round_trip():
    cfg = parse_config_text(TINY)
    again = parse_config_text(dump_config(cfg))
    assert again.train == cfg.train and again.data == cfg.data and again.trials == cfg.trials


def test_missing_config_file_is_named(tmp_path):
    with pytest.raises(ConfigError, match="nowhere.cfg"):
        load_config(tmp_path / "nowhere.cfg")


def test_train_writes_outputs_and_is_byte_deterministic(cfg_path, tmp_path, capsys):
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "a")]) == 0
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "b")]) == 0
    a, b = (tmp_path / d / "metrics.csv" for d in "ab")
    assert a.read_bytes() == b.read_bytes()
    rows = read_metrics_csv(a)
    assert len(rows) == 2 and list(rows[0]) == METRICS_COLUMNS
    assert (tmp_path / "a" / "pseudo_labels.csv").read_text().startswith("epoch,sample_id,class,confidence,correct")
    assert (tmp_path / "a" / "checkpoint.idmne").read_text().startswith("IDMNE1\n")


def test_seed_flag_changes_run(cfg_path, tmp_path):
    main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    assert main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "b"), "--seed", "1"]) == 0
    assert (tmp_path / "a" / "metrics.csv").read_bytes() != (tmp_path / "b" / "metrics.csv").read_bytes()


def test_eval_prints_one_row(cfg_path, tmp_path, capsys):
    main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    capsys.readouterr()
    code = main(["eval", "--config", str(cfg_path), "--checkpoint", str(tmp_path / "a" / "checkpoint.idmne")])
    out = capsys.readouterr().out.splitlines()
    assert code == 0 and out[0] == "n,acc_eval,ece" and len(out) == 2
    metrics = read_metrics_csv(tmp_path / "a" / "metrics.csv")
    assert float(out[1].split(",")[1]) == metrics[-1]["acc_eval"]


def test_eval_on_csv(cfg_path, tmp_path, capsys):
    from idmne.data import save_csv

    cfg = load_config(cfg_path)
    d = cfg.data.build()
    save_csv(tmp_path / "d.csv", [d.source, d.labeled, d.unlabeled, d.eval])
    main(["train", "--config", str(cfg_path), "--out", str(tmp_path / "a")])
    capsys.readouterr()
    code = main(["eval", "--data", str(tmp_path / "d.csv"), "--checkpoint", str(tmp_path / "a" / "checkpoint.idmne")])
    assert code == 0 and capsys.readouterr().out.splitlines()[1].startswith(f"{len(d.eval)},")


def test_sweep_tau_long_csv(cfg_path, tmp_path):
    assert main(["sweep-tau", "--config", str(cfg_path), "--out", str(tmp_path), "--tau-list", "0.6,0.99"]) == 0
    header = (tmp_path / "tau_sweep.csv").read_text().splitlines()[0]
    assert header == "tau," + ",".join(METRICS_COLUMNS)
    assert (tmp_path / "sweep" / "tau_0.6" / "metrics.csv").exists()


def test_ablate_summary(cfg_path, tmp_path):
    assert main(["ablate", "--config", str(cfg_path), "--out", str(tmp_path)]) == 0
    lines = (tmp_path / "ablation_summary.csv").read_text().splitlines()
    assert lines[0] == "variant,n_trials,acc_mean,acc_ci95,accd_mean,ece_mean"
    assert [line.split(",")[0] for line in lines[1:]] == list(ABLATION_VARIANTS)
    assert all(line.split(",")[1] == "2" for line in lines[1:])


def test_ci_halfwidth():
    assert np.isnan(ci95_halfwidth([0.5]))
    # t_{0.975, 1} = 12.706...
    assert ci95_halfwidth([0.0, 1.0]) == pytest.approx(12.7062047 * np.sqrt(0.5) / np.sqrt(2), rel=1e-6)


@pytest.mark.parametrize(
    "argv",
    [
        ["train", "--config", "/no/such/file.cfg"],
        ["train"],
        ["frobnicate"],
        ["eval", "--checkpoint", "/no/such/ckpt"],
        ["sweep-tau", "--tau-list", "0.5,2.0"],
    ],
)
def test_config_errors_exit_2(argv, cfg_path, tmp_path, capsys):
    if argv[0] in ("sweep-tau",):
        argv = argv + ["--config", str(cfg_path), "--out", str(tmp_path)]
    if argv[0] == "eval":
        argv = argv + ["--config", str(cfg_path)]
    assert main(argv) == 2
    assert not any(tmp_path.glob("sweep"))


def test_bad_shots_fails_before_writing(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text(TINY + "data.shots = 500\n")
    out = tmp_path / "out"
    assert main(["train", "--config", str(p), "--out", str(out)]) == 2
    assert not out.exists()


def test_corrupt_checkpoint_exit_2(cfg_path, tmp_path):
    bad = tmp_path / "bad.idmne"
    bad.write_text("IDMNE1\n{not json")
    assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(bad)]) == 2


def test_numeric_failure_exit_3(tmp_path, monkeypatch):
    from idmne import cli
    from idmne.errors import NumericError

    def boom(*a, **k):
        raise NumericError("non-finite loss (from l_pa)")

    monkeypatch.setattr(cli, "run", boom)
    p = tmp_path / "c.cfg"
    p.write_text(TINY)
    assert main(["train", "--config", str(p), "--out", str(tmp_path / "o")]) == 3
