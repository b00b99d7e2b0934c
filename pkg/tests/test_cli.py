"""Command-line surface: subcommands, exit codes, reproducibility."""

import json
import os

import pytest

from spancascade.cli import (
    EXIT_IO,
    EXIT_NUMERIC,
    EXIT_OK,
    EXIT_UNANSWERABLE,
    EXIT_USAGE,
    main,
)


def test_no_subcommand_is_usage_error(capsys):
    assert main([]) == EXIT_USAGE


def test_unknown_flag_is_usage_error():
    assert main(["train", "--nonsense"]) == EXIT_USAGE


def test_train_missing_embeddings_names_path(tmp_path, corpus_path, capsys):
    missing = str(tmp_path / "nope.txt")
    code = main(["train", "--data", corpus_path, "--embeddings", missing,
                 "--dim", "8", "--out", str(tmp_path / "out")])
    assert code == EXIT_IO
    assert missing in capsys.readouterr().err


def test_train_unknown_config_key(corpus_path, embeddings_path, tmp_path,
                                  capsys):
    code = main(["train", "--data", corpus_path, "--embeddings",
                 embeddings_path, "--dim", "8", "--out", str(tmp_path),
                 "--set", "not_a_key=1"])
    assert code == EXIT_USAGE
    assert "not_a_key" in capsys.readouterr().err


def test_train_writes_outputs_and_echoes_config(trained_dir, capsys):
    assert (trained_dir / "checkpoint.ckpt").exists()
    assert (trained_dir / "metrics.jsonl").exists()
    lines = (trained_dir / "metrics.jsonl").read_text().strip().split("\n")
    assert len(lines) == 3
    assert json.loads(lines[0])["epoch"] == 1


def test_train_rerun_identical_checkpoint(tmp_path, corpus_path,
                                          embeddings_path, trained_dir):
    out2 = tmp_path / "rerun"
    code = main([
        "train", "--data", corpus_path, "--embeddings", embeddings_path,
        "--dim", "8", "--out", str(out2),
        "--set", "hidden_width=8", "--set", "epochs=3", "--seed", "0",
    ])
    assert code == EXIT_OK
    assert ((out2 / "checkpoint.ckpt").read_bytes()
            == (trained_dir / "checkpoint.ckpt").read_bytes())


def test_train_ablation_resolves_weights(tmp_path, corpus_path,
                                         embeddings_path, capsys):
    code = main([
        "train", "--data", corpus_path, "--embeddings", embeddings_path,
        "--dim", "8", "--out", str(tmp_path / "out"),
        "--ablation", "single_loss",
        "--set", "hidden_width=8", "--set", "epochs=1",
    ])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "lambda4 = 1.0" in out and "lambda1 = 0.0" in out


def test_eval_prints_metrics_and_writes_reports(tmp_path, corpus_path,
                                                embeddings_path, trained_dir,
                                                capsys):
    out = tmp_path / "eval"
    code = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                 "--data", corpus_path, "--embeddings", embeddings_path,
                 "--out", str(out), "--topk", "5"])
    assert code == EXIT_OK
    printed = capsys.readouterr().out
    assert "EM" in printed and "F1" in printed
    report = json.loads((out / "report.json").read_text())
    assert 0.0 <= report["em"] <= 1.0
    topk_lines = (out / "topk.csv").read_text().strip().split("\n")
    assert len(topk_lines) == 6  # header + 5 rows
    assert (out / "frequency.csv").exists()


def test_eval_empty_corpus_is_usage_error(tmp_path, embeddings_path,
                                          trained_dir):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    code = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                 "--data", str(empty), "--embeddings", embeddings_path])
    assert code == EXIT_USAGE


def test_eval_truncation_sweep(tmp_path, corpus_path, embeddings_path,
                               trained_dir, capsys):
    out = tmp_path / "sweep"
    code = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                 "--data", corpus_path, "--embeddings", embeddings_path,
                 "--out", str(out), "--truncate", "4,50"])
    assert code == EXIT_OK
    lines = (out / "truncation_sweep.csv").read_text().strip().split("\n")
    assert lines[0] == "limit,em,oracle_em"
    assert len(lines) == 3
    # oracle EM can only improve with a larger budget
    first = float(lines[1].split(",")[2])
    second = float(lines[2].split(",")[2])
    assert second >= first


def test_eval_bad_checkpoint(tmp_path, corpus_path, embeddings_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    code = main(["eval", "--checkpoint", str(bad), "--data", corpus_path,
                 "--embeddings", embeddings_path])
    assert code == EXIT_IO


def test_eval_dimension_mismatch_is_data_error(tmp_path, corpus_path,
                                               trained_dir, capsys):
    # checkpoint expects 8-dim vectors; this file carries 3-dim ones
    small = tmp_path / "small.txt"
    small.write_text("boral 1 0 0\nprelt 0 1 0\n")
    code = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.ckpt"),
                 "--data", corpus_path, "--embeddings", str(small)])
    assert code == EXIT_IO
    assert "expected token plus 8 values" in capsys.readouterr().err


def test_predict_answers_toy_question(tmp_path, embeddings_path, trained_dir,
                                      capsys):
    doc = tmp_path / "doc.txt"
    doc.write_text("boral holds the prelt . boral stands near the stone . "
                   "cindra holds the quost .")
    code = main(["predict", "--checkpoint",
                 str(trained_dir / "checkpoint.ckpt"),
                 "--embeddings", embeddings_path,
                 "--question", "which item holds the prelt ?",
                 "--document", str(doc)])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    assert "answer:" in out and "score:" in out and "mentions:" in out


def test_predict_unanswerable_empty_document(tmp_path, embeddings_path,
                                             trained_dir, capsys):
    doc = tmp_path / "empty.txt"
    doc.write_text("")
    code = main(["predict", "--checkpoint",
                 str(trained_dir / "checkpoint.ckpt"),
                 "--embeddings", embeddings_path,
                 "--question", "which item ?", "--document", str(doc)])
    assert code == EXIT_UNANSWERABLE
    assert "unanswerable" in capsys.readouterr().out


def test_predict_respects_truncate_flag(tmp_path, embeddings_path,
                                        trained_dir, capsys):
    doc = tmp_path / "doc.txt"
    doc.write_text("boral holds the prelt . cindra holds the quost .")
    code = main(["predict", "--checkpoint",
                 str(trained_dir / "checkpoint.ckpt"),
                 "--embeddings", embeddings_path,
                 "--question", "which item holds the quost ?",
                 "--document", str(doc), "--truncate", "5"])
    assert code == EXIT_OK
    out = capsys.readouterr().out
    # the second sentence was cut away, so its entity cannot be predicted
    assert "cindra" not in out.split("answer:")[1].split("\n")[0]


def test_bench_writes_csv(tmp_path, capsys):
    out = tmp_path / "bench.csv"
    code = main(["bench", "--lengths", "40,80", "--workers", "2",
                 "--reps", "1", "--dim", "8", "--hidden", "8",
                 "--out", str(out)])
    assert code == EXIT_OK
    lines = out.read_text().strip().split("\n")
    assert lines[0] == "n,workers,cascade_ms,baseline_ms,speedup"
    assert len(lines) == 3


def test_bench_rejects_unsorted_lengths(tmp_path):
    code = main(["bench", "--lengths", "100,50", "--reps", "1",
                 "--out", str(tmp_path / "b.csv")])
    assert code == EXIT_USAGE


def test_gradcheck_passes_and_prints(capsys):
    code = main(["gradcheck"])
    out = capsys.readouterr().out
    assert code == EXIT_OK
    assert "max relative error" in out


def test_gradcheck_impossible_threshold_fails(capsys):
    code = main(["gradcheck", "--threshold", "1e-18"])
    assert code == EXIT_NUMERIC
