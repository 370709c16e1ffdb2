import csv
import json

import pytest

from modex.cli import main, report_markdown
from modex.config import ConfigError, RunConfig, dump_config, parse_config
from modex.data import gen_blobs, save_csv

MINIMAL = """[run]
n_classes = 3
dim = 2
per_class = 40
test_per_class = 30
max_epochs = 3
tasks = accuracy, ood, shift
"""


def write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_parse_types_and_defaults():
    cfg = parse_config(MINIMAL + "ambiguity_pairs = 0-2, 1-2\nfix_tau_shared = yes\n")
    assert cfg.n_classes == 3 and cfg.max_epochs == 3
    assert cfg.tasks == ("accuracy", "ood", "shift")
    assert cfg.ambiguity_pairs == ((0, 2), (1, 2))
    assert cfg.fix_tau_shared is True
    assert cfg.eps == 0.1 and cfg.batch_size == 64
    assert cfg.method_name == "modex+fix_tau_shared"


def test_dump_round_trip():
    cfg = parse_config(MINIMAL + "ambiguity_pairs = 0-2\n")
    assert parse_config(dump_config(cfg)) == cfg


@pytest.mark.parametrize("text,needle", [
    ("[run]\nbogus = 1\n", "bogus"),
    ("[run]\nlr = fast\n", "lr"),
    ("[other]\nlr = 1\n", "other"),
    ("lr = 1\n", "malformed"),
    ("[run]\ntasks = accuracy, dance\n", "dance"),
    ("[run]\neps = 3\n", "eps"),
    ("[run]\ndataset = csv\n", "csv_path"),
])
def test_config_errors(text, needle):
    with pytest.raises(ConfigError, match=needle):
        parse_config(text)


def test_edl_baseline_name():
    assert RunConfig(fix_omega_uniform=True, fix_tau_shared=True).method_name == "edl-baseline"


def test_train_eval_report(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL)
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    assert (out / "model.ckpt").exists() and (out / "history.csv").exists()
    assert main(["eval", "--config", cfg, "--out", str(out)]) == 0
    rows = list(csv.DictReader(open(out / "results_modex_seed0.csv")))
    acc = [r for r in rows if r["task"] == "accuracy"]
    assert len(acc) == 1 and 0.0 <= float(acc[0]["accuracy"]) <= 100.0
    ood = [r for r in rows if r["task"] == "ood"]
    assert ood and int(ood[0]["n_pos"]) == 90
    assert [r["severity"] for r in rows if r["task"] == "shift"] == ["1", "3", "5"]
    js = json.loads((out / "results_modex_seed0.json").read_text())
    assert len(js) == len(rows)
    capsys.readouterr()
    assert main(["report", str(out)]) == 0
    table = capsys.readouterr().out
    assert "| modex |" in table and "ood AUROC" in table and "±" not in table


def test_train_is_byte_identical(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    for name in ("a", "b"):
        assert main(["train", "--config", cfg, "--out", str(tmp_path / name)]) == 0
    for f in ("model.ckpt", "history.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_unknown_key_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, MINIMAL + "colour = blue\n")
    assert main(["train", "--config", cfg]) == 2
    assert "colour" in capsys.readouterr().err


def test_missing_config_and_usage(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.ini")]) == 2
    assert main(["train"]) == 2
    assert main(["dance"]) == 2


def test_divergence_exit_code(tmp_path):
    cfg = write(tmp_path, MINIMAL + "lr = 1e308\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 3


def test_eval_checkpoint_errors(tmp_path):
    cfg = write(tmp_path, MINIMAL)
    assert main(["eval", "--config", cfg, "--checkpoint", str(tmp_path / "none.ckpt")]) == 4
    out = tmp_path / "run"
    assert main(["train", "--config", cfg, "--out", str(out)]) == 0
    other = write(tmp_path, MINIMAL.replace("dim = 2", "dim = 3"), "d3.ini")
    assert main(["eval", "--config", other, "--checkpoint", str(out / "model.ckpt")]) == 4


def test_csv_dataset(tmp_path):
    save_csv(gen_blobs(2, 60, 2, 0.5, seed=0), tmp_path / "d.csv")
    cfg = write(tmp_path, "[run]\ndataset = csv\ncsv_path = d.csv\nmax_epochs = 2\n")
    assert main(["train", "--config", cfg, "--out", str(tmp_path / "r")]) == 0
    assert main(["eval", "--config", cfg, "--out", str(tmp_path / "r")]) == 0


def test_report_empty_dir(tmp_path):
    assert main(["report", str(tmp_path)]) == 5
    assert main(["report", str(tmp_path / "missing")]) == 5


def test_report_table_formats():
    rows = [
        {"method": "modex", "task": "ood", "severity": "", "auroc": str(v), "aupr": "50", "accuracy": ""}
        for v in (80.0, 90.0, 100.0)
    ] + [{"method": "edl-baseline", "task": "accuracy", "severity": "", "auroc": "",
          "aupr": "", "accuracy": "70.5"}]
    table = report_markdown(rows)
    assert "90.00 ±10.00" in table
    assert "| edl-baseline |  |  | 70.50 |" in table
    assert table.splitlines()[0] == "| method | ood AUROC | ood AUPR | accuracy |"
