import json

import pytest

from foal.cli import main
from foal.data import write_split, parse_dataset_line

SMALL = ["hidden_size=16", "width_dim=4", "distance_dim=8", "span_hidden=16", "pair_hidden=16"]


def test_stats_expectation(tmp_path, capsys):
    path = tmp_path / "train.txt"
    write_split(path, [
        parse_dataset_line("a b c####[([0], [1], 'POS'), ([2], [1], 'NEG')]"),
        parse_dataset_line("d e####[([0], [1], 'NEU')]"),
    ])
    assert main(["stats", str(path), "--expect", "2,1,1,1"]) == 0
    assert main(["stats", str(path), "--expect", "2,2,1,1"]) == 1
    assert "#+: got 1, expected 2" in capsys.readouterr().out


def test_stats_published_key_mismatch(tmp_path):
    path = tmp_path / "train.txt"
    path.write_text("a b####[([0], [1], 'POS')]\n")
    assert main(["stats", str(path), "--expect", "14res/train"]) == 1
    assert main(["stats", str(path), "--expect", "99xyz/train"]) == 2


def test_stats_missing_file(tmp_path):
    assert main(["stats", str(tmp_path / "missing.txt")]) == 2


def test_stats_parse_error(tmp_path, capsys):
    path = tmp_path / "bad.txt"
    path.write_text("a b####[([0], [1], 'POS')]\nbroken\n")
    assert main(["stats", str(path)]) == 2
    assert "line 2" in capsys.readouterr().err


def test_stats_does_not_modify_input(tmp_path):
    path = tmp_path / "t.txt"
    path.write_text("a b####[([0], [1], 'POS')]\n")
    before = path.read_bytes()
    main(["stats", str(path)])
    assert path.read_bytes() == before


def test_usage_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2
    assert main(["train", "--set", "seed=1"]) == 2
    assert main(["train", "--set", "bogus=1"]) == 2


def test_synth_writes_splits(tmp_path):
    assert main(["synth", str(tmp_path), "--train", "4", "--dev", "2", "--test", "3"]) == 0
    assert len((tmp_path / "source" / "train.txt").read_text().splitlines()) == 4
    assert len((tmp_path / "target" / "test.txt").read_text().splitlines()) == 3


@pytest.fixture(scope="module")
def trained(tmp_path_factory):
    run = tmp_path_factory.mktemp("run")
    code = main(["train", "--set", *SMALL, "max_steps=5", "--run-dir", str(run)])
    assert code == 0
    return run


def test_train_writes_run_directory(trained):
    for name in ("config.json", "metrics.jsonl", "best.pt", "last.pt"):
        assert (trained / name).exists()
    assert json.loads((trained / "config.json").read_text())["model"]["span_hidden"] == 16


def test_train_from_config_file(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"hyper": {"lambda": 0}, "train": {"max_steps": 2}, "encoder": {"hidden_size": 8}}))
    assert main(["train", "--config", str(tmp_path / "run.json"), "--run-dir", str(tmp_path / "r")]) == 0
    saved = json.loads((tmp_path / "r" / "config.json").read_text())
    assert saved["hyper"]["lambda"] == 0 and saved["encoder"]["hidden_size"] == 8


def test_eval_report(trained, tmp_path):
    assert main(["eval", "--checkpoint", str(trained / "best.pt"), "--split", "target_test", "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "eval_target_test.json").read_text())
    assert set(report) == {"precision", "recall", "f1", "counts"}
    assert (tmp_path / "config.json").exists()


def test_eval_bad_split(trained):
    assert main(["eval", "--checkpoint", str(trained / "best.pt"), "--split", "target_train"]) == 2
    assert main(["eval", "--checkpoint", str(trained / "best.pt"), "--split", "nowhere"]) == 2


def test_eval_missing_checkpoint(tmp_path):
    assert main(["eval", "--checkpoint", str(tmp_path / "none.pt")]) == 2


def test_eval_checkpoint_config_mismatch(trained, tmp_path):
    import torch

    blob = torch.load(trained / "best.pt", weights_only=False)
    blob["config"]["encoder"]["hidden_size"] = 32
    torch.save(blob, tmp_path / "broken.pt")
    assert main(["eval", "--checkpoint", str(tmp_path / "broken.pt")]) == 2


def test_analyze_outputs(trained, tmp_path):
    assert main(["analyze", "--checkpoint", str(trained / "best.pt"), "--out-dir", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "discrepancy.json").read_text())
    assert sum(len(v) for v in report["values"].values()) == 6
    assert (tmp_path / "features.jsonl").stat().st_size > 0
    assert (tmp_path / "discrepancy.txt").exists()


def test_analyze_identical_domains(trained, tmp_path):
    code = main(["analyze", "--checkpoint", str(trained / "best.pt"), "--source", "target_test", "--target", "target_test", "--out-dir", str(tmp_path)])
    assert code == 0
    report = json.loads((tmp_path / "discrepancy.json").read_text())
    assert report["values"]["phrase"]["domain_mmd"] <= 1e-6
    assert report["values"]["pair"]["domain_mmd"] <= 1e-6


def test_eval_after_overfit_run(tmp_path):
    run = tmp_path / "overfit"
    assert main(["train", "--set", "lambda=0", "max_steps=300", "selection_split=none", "--run-dir", str(run)]) == 0
    assert main(["eval", "--checkpoint", str(run / "best.pt"), "--split", "source_train"]) == 0
    assert json.loads((run / "eval_source_train.json").read_text())["f1"] >= 0.95
