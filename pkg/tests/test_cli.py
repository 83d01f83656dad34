import json
import os
from pathlib import Path

import pytest

from dstkit.bundled import fixture_path
from dstkit.cli import EngineConfig, ConfigError, main


def run_cli(*argv, capsys=None):
    code = main(list(argv))
    return code


def test_validate_corpus_accepts_bundled_fixture(capsys):
    code = main(["validate-corpus", "--corpus", str(fixture_path("corpus_50.json"))])
    assert code == 0
    assert "ok: 50 dialogues" in capsys.readouterr().out


def test_validate_corpus_rejects_negative_fixture(capsys):
    path = fixture_path("negative/non_monotone_state.json")
    code = main(["validate-corpus", "--corpus", str(path)])
    assert code == 1
    err = capsys.readouterr().err
    assert "non_monotone_state" in err
    assert "d1" in err  # names the dialogue


def test_gen_fixture_deterministic(tmp_path):
    out1, out2 = tmp_path / "a.json", tmp_path / "b.json"
    assert main(["gen-fixture", "--dialogues", "20", "--seed", "7",
                 "--out", str(out1)]) == 0
    assert main(["gen-fixture", "--dialogues", "20", "--seed", "7",
                 "--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_eval_gold_prints_perfect_jga(tmp_path, capsys):
    report_base = tmp_path / "report"
    code = main(["eval", "--corpus", str(fixture_path("corpus_50.json")),
                 "--k", "5", "--seed", "0", "--report", str(report_base)])
    assert code == 0
    out = capsys.readouterr().out
    assert "JGA=1.000" in out
    assert "FGA=1.000" in out
    assert "AGA=1.000" in out
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["jga"] == 1.0
    table = (tmp_path / "report.txt").read_text()
    assert "jga" in table
    assert (tmp_path / "report_metrics.png").exists()
    assert (tmp_path / "report_folds.png").exists()


def test_eval_lexicon_mode(tmp_path, capsys):
    code = main(["eval", "--corpus", str(fixture_path("corpus_50.json")),
                 "--nlu", "lexicon", "--k", "5", "--seed", "0"])
    assert code == 0
    assert "JGA=1.000" in capsys.readouterr().out


def test_usage_error_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["eval"])  # missing required --corpus
    assert exc.value.code == 2


def test_unreadable_config_exits_2(tmp_path, capsys):
    code = main(["serve", "--config", str(tmp_path / "missing.json")])
    assert code == 2
    assert "config error" in capsys.readouterr().err


def test_train_validator_writes_model(tmp_path, capsys):
    out = tmp_path / "model.json"
    code = main(["train-validator",
                 "--corpus", str(fixture_path("corpus_50.json")),
                 "--out", str(out), "--n-trees", "5", "--max-depth", "2"])
    assert code == 0
    doc = json.loads(out.read_text())
    assert doc["n_classes"] == 3
    assert len(doc["trees"]) == 5


def test_chat_repl_round_trip(monkeypatch, capsys):
    lines = iter(["how is the weather in Tehran", ""])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(lines))
    code = main(["chat", "--show-state"])
    assert code == 0
    out = capsys.readouterr().out
    assert "session" in out
    assert "Tehran" in out
    assert "SELECT * FROM get_weather" in out


def test_config_env_override(tmp_path, monkeypatch):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({
        "ontology": str(fixture_path("ontology.json")),
        "lexicon": str(fixture_path("lexicon.json")),
        "seed": 1,
    }))
    monkeypatch.setenv("DST_SEED", "99")
    config = EngineConfig.load(str(config_path))
    assert config.seed == 99
    monkeypatch.delenv("DST_SEED")


def test_config_unknown_field_rejected(tmp_path):
    config_path = tmp_path / "config.json"
    config_path.write_text(json.dumps({"ontology": "x", "bogus": 1}))
    with pytest.raises(ConfigError, match="bogus"):
        EngineConfig.load(str(config_path))
