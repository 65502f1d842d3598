"""Command-line pipeline: exit codes, file handoff, determinism."""

from __future__ import annotations

import json

import numpy as np
import pytest

from stancegraph.cli import main
from stancegraph.config import parse_config_file, resolve, stage_seed
from stancegraph.errors import ConfigError
from stancegraph.ingest import load_counts
from stancegraph.model import ModelConfig, init_embeddings, load_checkpoint


def run(argv) -> int:
    return main([str(a) for a in argv])


def synth_and_build(tmp_path, seed="0"):
    raw = tmp_path / "raw"
    data = tmp_path / "data"
    assert run(["synth", "--out", raw, "--seed", seed,
                "--n-users", "40", "--n-hashtags", "20",
                "--n-neutral", "4", "--interactions-per-user", "10",
                "--annotated-per-camp", "5"]) == 0
    assert run(["build", "--counts", raw / "counts.json", "--out", data,
                "--seed", seed]) == 0
    return raw, data


# exit codes -----------------------------------------------------------------

def test_help_exits_zero(capsys):
    for argv in (["--help"], ["train", "--help"], ["eval", "--help"]):
        with pytest.raises(SystemExit) as exc:
            run(argv)
        assert exc.value.code == 0
    assert "stancegraph" in capsys.readouterr().out


def test_unknown_config_key_exits_2(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("no_such_knob=1\n", encoding="utf-8")
    code = run(["synth", "--out", tmp_path / "out", "--config", cfg])
    assert code == 2
    assert "kind=ConfigError" in capsys.readouterr().err


def test_missing_input_file_exits_4(tmp_path, capsys):
    code = run(["ingest", "--tweets", tmp_path / "absent.jsonl",
                "--out", tmp_path / "counts.json"])
    assert code == 4
    assert "exit=4" in capsys.readouterr().err


def test_malformed_record_exits_3(tmp_path, capsys):
    tweets = tmp_path / "tweets.jsonl"
    tweets.write_text('{"tweet_id": "t1"\n', encoding="utf-8")
    code = run(["ingest", "--tweets", tweets, "--out", tmp_path / "counts.json"])
    assert code == 3
    assert "kind=RecordError" in capsys.readouterr().err


def test_empty_annotation_file_exits_2(tmp_path, capsys):
    _, data = synth_and_build(tmp_path)
    empty = tmp_path / "empty.tsv"
    empty.write_text("", encoding="utf-8")
    code = run(["eval", "--data", data, "--annotations", empty,
                "--out", tmp_path / "eval"])
    assert code == 2
    assert "kind=ConfigError" in capsys.readouterr().err


def test_bounds_error_exits_2(tmp_path, capsys):
    _, data = synth_and_build(tmp_path)
    eval_dir = tmp_path / "eval"
    assert run(["eval", "--data", data, "--annotations", tmp_path / "raw" / "annotations.tsv",
                "--out", eval_dir, "--max-epochs", "2", "--folds", "2",
                "--holdout-fraction", "0.1"]) == 0
    code = run(["curve", "--data", data, "--eval-dir", eval_dir,
                "--annotations", tmp_path / "raw" / "annotations.tsv",
                "--out", tmp_path / "curve.csv", "--x-max", "99"])
    assert code == 2
    assert "kind=BoundsError" in capsys.readouterr().err


# config resolution ----------------------------------------------------------

def test_config_file_parsing(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("# comment\nseed=7\ndim=32\nuse_social=true\n", encoding="utf-8")
    values = parse_config_file(cfg_path)
    assert values == {"seed": 7, "dim": 32, "use_social": True}
    cfg = resolve(cfg_path)
    assert cfg.seed == 7 and cfg.dim == 32 and cfg.use_social is True


def test_flags_override_config_file(tmp_path, capsys):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("seed=7\n", encoding="utf-8")
    out = tmp_path / "out"
    assert run(["synth", "--out", out, "--config", cfg_path, "--seed", "9",
                "--n-users", "10", "--n-hashtags", "8", "--n-neutral", "2",
                "--interactions-per-user", "4", "--annotated-per-camp", "2"]) == 0
    stdout = capsys.readouterr().out
    assert "[config] seed=9" in stdout


def test_bad_config_value_rejected(tmp_path):
    cfg_path = tmp_path / "run.cfg"
    cfg_path.write_text("dim=notanumber\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        resolve(cfg_path)


def test_stage_seeds_differ_by_stage():
    seeds = {stage_seed(0, s) for s in ("ingest", "build", "train", "eval", "curve", "synth")}
    assert len(seeds) == 6


# pipeline -------------------------------------------------------------------

def test_synth_writes_dataset(tmp_path):
    raw, _ = synth_and_build(tmp_path)
    counts = load_counts(raw / "counts.json")
    assert len(counts.users) == 40
    assert len(counts.hashtags) == 20
    assert (raw / "annotations.tsv").exists()
    assert (raw / "planted.tsv").exists()


def test_build_writes_graph_files(tmp_path):
    _, data = synth_and_build(tmp_path)
    for name in ("counts.json", "bipartite.coo", "social.coo", "pathsim.coo",
                 "users.txt", "hashtags.txt"):
        assert (data / name).exists(), name


def test_ingest_command_roundtrip(tmp_path):
    tweets = tmp_path / "tweets.jsonl"
    rows = [
        {"tweet_id": f"t{i}", "user_id": f"u{i % 3}",
         "timestamp": "2022-09-04T12:00:00+00:00",
         "text": f"hola #tag{i % 4}", "kind": "original",
         "ref_user_id": None, "mentions": []}
        for i in range(9)
    ]
    tweets.write_text("\n".join(json.dumps(r) for r in rows) + "\n", encoding="utf-8")
    out = tmp_path / "counts.json"
    assert run(["ingest", "--tweets", tweets, "--out", out]) == 0
    counts = load_counts(out)
    assert counts.T.sum() == 9


def test_train_zero_epochs_checkpoint_is_initialization(tmp_path):
    _, data = synth_and_build(tmp_path)
    out = tmp_path / "model"
    assert run(["train", "--data", data, "--out", out,
                "--max-epochs", "0", "--seed", "0", "--dim", "8"]) == 0
    state, users, tags = load_checkpoint(out / "checkpoint.bin")
    assert len(users) == 40 and len(tags) == 20
    init = init_embeddings(40, 20, ModelConfig(dim=8), stage_seed(0, "train"))
    assert np.array_equal(state.users, init.users)
    assert np.array_equal(state.hashtags, init.hashtags)
    history = (out / "history.csv").read_text(encoding="utf-8").strip().splitlines()
    assert history == ["epoch,loss,recall@20,ndcg@20,elapsed_ms"]


def test_train_writes_history(tmp_path):
    _, data = synth_and_build(tmp_path)
    out = tmp_path / "model"
    assert run(["train", "--data", data, "--out", out,
                "--max-epochs", "3", "--seed", "1", "--dim", "8"]) == 0
    lines = (out / "history.csv").read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "epoch,loss,recall@20,ndcg@20,elapsed_ms"
    assert len(lines) == 4


def test_eval_and_curve_pipeline(tmp_path):
    raw, data = synth_and_build(tmp_path)
    eval_dir = tmp_path / "eval"
    assert run(["eval", "--data", data, "--annotations", raw / "annotations.tsv",
                "--out", eval_dir, "--max-epochs", "3", "--folds", "2",
                "--holdout-fraction", "0.1", "--seed", "0", "--dim", "8"]) == 0
    for name in ("report.txt", "folds.csv", "checkpoint.bin", "hidden.tsv", "val.tsv"):
        assert (eval_dir / name).exists(), name
    report = (eval_dir / "report.txt").read_text(encoding="utf-8")
    assert "recall@20=" in report and "rmse=" in report

    curve_path = tmp_path / "curve.csv"
    assert run(["curve", "--data", data, "--eval-dir", eval_dir,
                "--annotations", raw / "annotations.tsv",
                "--out", curve_path, "--x-max", "3", "--seed", "0", "--dim", "8"]) == 0
    lines = curve_path.read_text(encoding="utf-8").strip().splitlines()
    assert lines[0] == "x,accuracy"
    assert len(lines) == 4


def test_eval_variant_flag_runs_baselines(tmp_path):
    raw, data = synth_and_build(tmp_path)
    for variant in ("mf", "lightgcn", "null"):
        out_dir = tmp_path / f"eval_{variant}"
        assert run(["eval", "--data", data, "--annotations", raw / "annotations.tsv",
                    "--out", out_dir, "--max-epochs", "2", "--folds", "2",
                    "--holdout-fraction", "0.1", "--variant", variant]) == 0
        assert (out_dir / "report.txt").exists()


def test_pipeline_reports_are_deterministic(tmp_path):
    raw, data = synth_and_build(tmp_path)
    outputs = []
    for run_dir in ("eval_a", "eval_b"):
        out_dir = tmp_path / run_dir
        assert run(["eval", "--data", data, "--annotations", raw / "annotations.tsv",
                    "--out", out_dir, "--max-epochs", "3", "--folds", "2",
                    "--holdout-fraction", "0.1", "--seed", "5", "--dim", "8"]) == 0
        outputs.append({
            name: (out_dir / name).read_bytes()
            for name in ("report.txt", "folds.csv", "checkpoint.bin", "hidden.tsv", "val.tsv")
        })
    assert outputs[0] == outputs[1]
