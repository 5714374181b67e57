import json
from pathlib import Path

import pytest

from towe.cli import main
from towe.config import ConfigError, EncoderConfig, ExperimentConfig, GridSpec, InputConfig, ModelConfig, TrainConfig
from towe.corpus import load_split, save_split
from towe.model import Checkpoint, untrained_checkpoint
from towe.synthetic import adjacent_corpus

RAW = """s_id\tsentence\ttarget_tags\topinion_words_tags
1\tThe food is good\tThe\\O food\\B is\\O good\\O\tThe\\O food\\O is\\O good\\B
2\tThe service is extremely slow\tThe\\O service\\B is\\O extremely\\O slow\\O\tThe\\O service\\O is\\O extremely\\B slow\\I
"""

PARSES = [
    {"tokens": ["The", "food", "is", "good"], "pos_tags": ["DT", "NN", "VBZ", "JJ"], "heads": [1, 2, -1, 2]},
    {"tokens": ["The", "service", "is", "extremely", "slow"], "pos_tags": ["DT", "NN", "VBZ", "RB", "JJ"],
     "heads": [1, 2, -1, 4, 2]},
]


@pytest.fixture
def raw_files(tmp_path):
    raw = tmp_path / "raw.tsv"
    raw.write_text(RAW)
    parses = tmp_path / "parses.jsonl"
    parses.write_text("".join(json.dumps(p) + "\n" for p in PARSES))
    return raw, parses


@pytest.fixture
def data_root(tmp_path):
    root = tmp_path / "data"
    (root / "toy").mkdir(parents=True)
    save_split(adjacent_corpus(20, seed=0, name="toy"), root / "toy" / "train.jsonl")
    save_split(adjacent_corpus(8, seed=5, name="toy"), root / "toy" / "test.jsonl")
    return root


@pytest.fixture
def config_file(tmp_path, data_root):
    model = ModelConfig(InputConfig(word_dim=8, posn_dim=4, post_dim=4, dropout_rate=0.0, max_distance=10),
                        EncoderConfig(hidden_dim=6))
    exp = ExperimentConfig(data_root=str(data_root), model=model, train=TrainConfig(epochs=2, batch_size=4),
                           grid=GridSpec(datasets=["toy"], encoders=["bilstm"], gcn=[False], seeds=[1]),
                           out_dir=str(tmp_path / "runs"))
    path = tmp_path / "exp.yaml"
    exp.dump(path)
    return path


# ---------------------------------------------------------------- import

def test_import_writes_structured_split(raw_files, tmp_path, capsys):
    raw, parses = raw_files
    out = tmp_path / "out" / "train.jsonl"
    assert main(["import", str(raw), "--parses", str(parses), "--out", str(out), "--name", "toy-train"]) == 0
    assert "2 instances" in capsys.readouterr().out
    split = load_split(out)
    assert [inst.opinion_spans for inst in split.instances] == [{(3, 4)}, {(3, 5)}]
    assert list(split.instances[1].heads) == [1, 2, -1, 4, 2]


def test_import_is_idempotent(raw_files, tmp_path):
    raw, parses = raw_files
    a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    assert main(["import", str(raw), "--parses", str(parses), "--out", str(a)]) == 0
    assert main(["import", str(raw), "--parses", str(parses), "--out", str(b)]) == 0
    assert a.read_bytes() == b.read_bytes()


def test_import_missing_parse_file(raw_files, tmp_path, capsys):
    raw, _ = raw_files
    missing = tmp_path / "nope.conllu"
    assert main(["import", str(raw), "--parses", str(missing), "--out", str(tmp_path / "o.jsonl")]) == 2
    assert str(missing) in capsys.readouterr().err


def test_import_format_error_names_line(tmp_path, raw_files, capsys):
    _, parses = raw_files
    bad = tmp_path / "bad.tsv"
    bad.write_text("1\tThe food\tThe\\O food\\B\tThe\\O\n")
    assert main(["import", str(bad), "--parses", str(parses), "--out", str(tmp_path / "o.jsonl")]) == 1
    assert f"{bad}:1" in capsys.readouterr().err


# ---------------------------------------------------------------- stats

def test_stats_two_splits(data_root, capsys):
    rc = main(["stats", "--data-root", str(data_root), "--dataset", "toy", "--format", "json"])
    assert rc == 0
    rows = json.loads(capsys.readouterr().out)
    assert set(rows) == {"toy (train)", "toy (test)"}
    assert rows["toy (train)"]["#Sent"] == 20 and rows["toy (train)"]["#AT"] == 40
    assert rows["toy (test)"]["#Sent"] == 8
    assert rows["toy (train)"]["#S.Dist"] == 1.0


def test_stats_unknown_split_lists_available(data_root, capsys):
    rc = main(["stats", "--data-root", str(data_root), "--dataset", "toy", "--split", "dev"])
    assert rc == 2
    err = capsys.readouterr().err
    assert "test" in err and "train" in err


def test_stats_on_files(data_root, capsys):
    assert main(["stats", str(data_root / "toy" / "test.jsonl")]) == 0
    assert "#Sent" in capsys.readouterr().out


# ---------------------------------------------------------------- train / eval

def test_train_then_eval(config_file, capsys):
    assert main(["train", "--config", str(config_file), "--dataset", "toy", "--seed", "3", "--format", "json"]) == 0
    info = json.loads(capsys.readouterr().out)
    run_dir = Path(info["run_dir"])
    assert run_dir.name.endswith("-seed3") and info["seed"] == 3
    curve = [json.loads(line) for line in (run_dir / "dev_curve.jsonl").read_text().splitlines()]
    assert [r["epoch"] for r in curve] == [1, 2]
    assert ExperimentConfig.load(run_dir / "config.yaml").train.seed == 3

    ck = run_dir / "checkpoint.pt"
    assert main(["eval", "--config", str(config_file), "--checkpoint", str(ck), "--dataset", "toy",
                 "--format", "json"]) == 0
    first = json.loads(capsys.readouterr().out)
    assert first["seed"] == 3 and 0.0 <= first["f1"] <= 1.0
    # re-running is deterministic
    assert main(["train", "--config", str(config_file), "--dataset", "toy", "--seed", "3", "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["best_dev_f1"] == info["best_dev_f1"]


def test_untrained_checkpoint_scores_near_zero(config_file, data_root, tmp_path, capsys):
    exp = ExperimentConfig.load(config_file)
    ck = untrained_checkpoint(load_split(data_root / "toy" / "train.jsonl"), exp.model, seed=1)
    path = tmp_path / "untrained.pt"
    ck.save(path)
    assert Checkpoint.load(path).state.keys() == ck.state.keys()
    assert main(["eval", "--config", str(config_file), "--checkpoint", str(path), "--dataset", "toy",
                 "--format", "json"]) == 0
    assert json.loads(capsys.readouterr().out)["f1"] < 0.1


def test_mode_b_without_sidecar_fails_before_training(config_file, tmp_path, capsys):
    rc = main(["train", "--config", str(config_file), "--dataset", "toy", "--mode", "B"])
    assert rc == 2
    assert "sidecar" in capsys.readouterr().err
    assert not (tmp_path / "runs").exists()


def test_missing_checkpoint(config_file, capsys):
    assert main(["eval", "--config", str(config_file), "--checkpoint", "nope.pt", "--dataset", "toy"]) == 2


def test_grid_writes_reports(config_file, capsys):
    assert main(["grid", "--config", str(config_file)]) == 0
    out = capsys.readouterr().out
    assert "| BiLSTM(G) |" in out
    run_dir = Path(out.strip().splitlines()[-1].split("reports in ")[1])
    assert (run_dir / "grid.json").exists() and (run_dir / "table.md").exists()


# ---------------------------------------------------------------- config

def test_config_roundtrip(tmp_path):
    exp = ExperimentConfig(seed=7, grid=GridSpec(ablations=[["gcn", "post"]]))
    exp.model.encoder = EncoderConfig.for_kind("cnn")
    path = tmp_path / "c.yaml"
    exp.dump(path)
    back = ExperimentConfig.load(path)
    assert back == exp and back.digest() == exp.digest()


def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "c.yaml"
    path.write_text("model:\n  encoder:\n    kind: bilstm\n    hiden_dim: 3\n")
    with pytest.raises(ConfigError, match="hiden_dim"):
        ExperimentConfig.load(path)


def test_bad_config_exit_code(tmp_path, data_root, capsys):
    path = tmp_path / "c.yaml"
    path.write_text("model:\n  gcn:\n    layers: 9\n")
    assert main(["train", "--config", str(path), "--data-root", str(data_root), "--dataset", "toy"]) == 2
    assert "GCN layers" in capsys.readouterr().err
