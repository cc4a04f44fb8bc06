"""End-to-end tests for the command-line interface.

Runs the CLI in-process through ``retrogan.cli.main`` so the exit-code
contract (0 success, 2 usage/data problems, 1 internal failure) and the
artifact layout of each subcommand can be asserted cheaply.
"""

import json
import os
import subprocess
import sys

import numpy as np
import pytest

from retrogan.cli import main
from retrogan.embeddings import load_table
from retrogan.evaluation import EvalReport
from retrogan.trainer import load_checkpoint

TINY = [
    "--synthetic",
    "--synthetic-vocab", "120",
    "--synthetic-clusters", "6",
    "--dim", "16",
    "--generator-size", "24",
    "--discriminator-size", "24",
    "--batch-size", "16",
    "--total-batches", "6",
    "--eval-every", "3",
    "--seed", "0",
]


@pytest.fixture(scope="module")
def synth_dir(tmp_path_factory):
    """A small on-disk corpus written by gen-synthetic."""
    out = tmp_path_factory.mktemp("synth")
    rc = main([
        "gen-synthetic", "--seed", "3", "--vocab-size", "140", "--dim", "16",
        "--clusters", "7", "--coverage", "0.5", "--output-dir", str(out),
    ])
    assert rc == 0
    return out


@pytest.fixture(scope="module")
def train_dir(tmp_path_factory):
    """Artifacts of one tiny synthetic training run."""
    out = tmp_path_factory.mktemp("run")
    rc = main(["train", *TINY, "--output-dir", str(out)])
    assert rc == 0
    return out


# ---------------------------------------------------------------------------
# gen-synthetic


def test_gen_synthetic_writes_corpus_files(synth_dir):
    for name in ("x_embeddings.txt", "y_embeddings.txt", "benchmark.tsv",
                 "constraints.txt"):
        assert (synth_dir / name).exists(), name
    x = load_table(str(synth_dir / "x_embeddings.txt"))
    y = load_table(str(synth_dir / "y_embeddings.txt"))
    assert len(x) == 140 and len(y) == 140
    assert x.dim == 16 and y.dim == 16
    with open(synth_dir / "constraints.txt", encoding="utf-8") as fh:
        constrained = [line.strip() for line in fh if line.strip()]
    assert len(constrained) == 70  # half the vocabulary at coverage 0.5
    assert constrained == sorted(constrained)


def test_gen_synthetic_same_seed_is_byte_identical(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        rc = main(["gen-synthetic", "--seed", "9", "--vocab-size", "60",
                   "--dim", "8", "--clusters", "4", "--output-dir", str(out)])
        assert rc == 0
    for name in ("x_embeddings.txt", "y_embeddings.txt", "benchmark.tsv",
                 "constraints.txt"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


# ---------------------------------------------------------------------------
# train


def test_train_writes_expected_artifacts(train_dir):
    for name in ("effective_config.json", "train_log.txt", "checkpoint_final.ckpt",
                 "checkpoint_best.ckpt", "loss_curves.png", "eval_curves.png",
                 "eval_report.tsv"):
        assert (train_dir / name).exists(), name
    assert (train_dir / "loss_curves.png").stat().st_size > 1000
    assert (train_dir / "eval_curves.png").stat().st_size > 1000


def test_train_effective_config_reflects_flags(train_dir):
    with open(train_dir / "effective_config.json", encoding="utf-8") as fh:
        cfg = json.load(fh)
    assert set(cfg) == {"arch", "weights", "toggles", "train"}
    assert cfg["train"]["total_batches"] == 6
    assert cfg["train"]["batch_size"] == 16
    assert cfg["arch"]["dim"] == 16
    assert cfg["arch"]["generator_size"] == 24
    assert all(cfg["toggles"].values())


def test_train_log_has_loss_and_eval_lines(train_dir):
    with open(train_dir / "train_log.txt", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    loss = [l for l in lines if l.startswith("loss\t")]
    evals = [l for l in lines if l.startswith("eval\t")]
    assert len(loss) == 6
    assert evals  # eval_every=3 fired at least once
    # loss lines: tag, step, then ten float fields
    assert all(len(l.split("\t")) == 12 for l in loss)


def test_train_checkpoint_is_loadable(train_dir):
    model, optimizers, cfg, step = load_checkpoint(str(train_dir / "checkpoint_final.ckpt"))
    assert step == 6
    assert cfg.arch.dim == 16
    assert set(optimizers) >= {"gen_xy", "gen_yx", "cond_disc_x", "cond_disc_y"}
    mapped, _ = model.gen_xy.forward(np.zeros((2, 16)), mode="eval")
    assert mapped.shape == (2, 16)


def test_train_disable_flag_lands_in_config(tmp_path):
    out = tmp_path / "run"
    rc = main(["train", *TINY, "--disable", "id_loss", "--disable", "cycle_mm",
               "--output-dir", str(out)])
    assert rc == 0
    with open(out / "effective_config.json", encoding="utf-8") as fh:
        cfg = json.load(fh)
    assert cfg["toggles"]["id_loss"] is False
    assert cfg["toggles"]["cycle_mm"] is False
    assert cfg["toggles"]["cycle_loss"] is True


def test_train_flag_beats_config_file_beats_preset(tmp_path):
    cfg_file = tmp_path / "run.json"
    cfg_file.write_text(json.dumps({"train": {"g_lr": 0.123, "d_lr": 0.321}}))
    out = tmp_path / "run"
    rc = main(["train", *TINY, "--config", str(cfg_file), "--g-lr", "0.456",
               "--output-dir", str(out)])
    assert rc == 0
    with open(out / "effective_config.json", encoding="utf-8") as fh:
        cfg = json.load(fh)
    assert cfg["train"]["g_lr"] == 0.456  # flag wins
    assert cfg["train"]["d_lr"] == 0.321  # file beats preset default


def test_train_from_embedding_files(synth_dir, tmp_path):
    out = tmp_path / "run"
    rc = main([
        "train",
        "--x-embeddings", str(synth_dir / "x_embeddings.txt"),
        "--y-embeddings", str(synth_dir / "y_embeddings.txt"),
        "--constraints", str(synth_dir / "constraints.txt"),
        "--benchmark", f"tsv:{synth_dir / 'benchmark.tsv'}",
        "--dim", "16", "--generator-size", "24", "--discriminator-size", "24",
        "--batch-size", "16", "--total-batches", "4", "--seed", "1",
        "--output-dir", str(out),
    ])
    assert rc == 0
    assert (out / "checkpoint_final.ckpt").exists()
    assert (out / "eval_report.tsv").exists()


# ---------------------------------------------------------------------------
# postspecialize / evaluate / neighbors


def test_postspecialize_maps_a_table(train_dir, synth_dir, tmp_path):
    out = tmp_path / "specialized.txt"
    rc = main([
        "postspecialize",
        "--checkpoint", str(train_dir / "checkpoint_final.ckpt"),
        "--input", str(synth_dir / "x_embeddings.txt"),
        "--output", str(out),
    ])
    assert rc == 0
    table = load_table(str(out))
    assert len(table) == 140 and table.dim == 16
    assert np.all(np.isfinite(table.vectors))


def test_evaluate_prints_header_and_report(synth_dir, capsys):
    rc = main([
        "evaluate", "--table", str(synth_dir / "x_embeddings.txt"),
        "--benchmark", f"tsv:{synth_dir / 'benchmark.tsv'}",
    ])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0] == EvalReport.HEADER
    name, mode, rho, evaluated, skipped = lines[1].split("\t")
    assert name == "benchmark"
    assert mode == "all"
    assert -1.0 <= float(rho) <= 1.0
    assert int(evaluated) >= 2 and int(skipped) == 0


def test_evaluate_split_modes(synth_dir, capsys):
    rhos = {}
    for mode in ("disjoint", "full"):
        rc = main([
            "evaluate", "--table", str(synth_dir / "x_embeddings.txt"),
            "--benchmark", f"tsv:{synth_dir / 'benchmark.tsv'}",
            "--constraints", str(synth_dir / "constraints.txt"),
            "--mode", mode,
        ])
        assert rc == 0
        line = capsys.readouterr().out.strip().splitlines()[1]
        fields = line.split("\t")
        assert fields[1] == mode
        rhos[mode] = float(fields[2])
    assert rhos["disjoint"] == pytest.approx(rhos["disjoint"])  # finite
    assert all(-1.0 <= v <= 1.0 for v in rhos.values())


def test_neighbors_lists_k_scored_words(synth_dir, capsys):
    rc = main(["neighbors", "--table", str(synth_dir / "x_embeddings.txt"),
               "--word", "w00000", "-k", "3"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    # the query itself is eligible and ranks first at cosine ~1
    first_word, first_sim = lines[0].split("\t")
    assert first_word == "w00000"
    assert float(first_sim) == pytest.approx(1.0, abs=1e-6)
    sims = [float(l.split("\t")[1]) for l in lines]
    assert all(-1.0 <= s <= 1.0 for s in sims)
    assert sims == sorted(sims, reverse=True)


# ---------------------------------------------------------------------------
# ook / ablate


def test_ook_grid_artifacts_and_stdout(tmp_path, capsys):
    out = tmp_path / "ook"
    rc = main([
        "ook", *TINY, "--total-batches", "4",
        "--fractions", "0.5,1.0", "--output-dir", str(out),
    ])
    assert rc == 0
    assert (out / "ook_grid.tsv").exists()
    assert (out / "ook_grid.png").stat().st_size > 1000
    stdout = capsys.readouterr().out
    assert stdout == (out / "ook_grid.tsv").read_text(encoding="utf-8")
    lines = stdout.strip().splitlines()
    assert lines[0] == "fraction\tdataset\tmode\trho\tevaluated\tskipped"
    fractions = {line.split("\t")[0] for line in lines[1:]}
    assert fractions == {"0.5", "1"}


def test_ablate_toggle_mode_artifacts(tmp_path, capsys):
    out = tmp_path / "ablate"
    rc = main([
        "ablate", *TINY, "--total-batches", "4", "--eval-every", "2",
        "--mode", "toggle", "--output-dir", str(out),
    ])
    assert rc == 0
    stdout = capsys.readouterr().out
    lines = stdout.strip().splitlines()
    assert lines[0].startswith("variant\tsteps\tfinal_")
    variants = {line.split("\t")[0] for line in lines[1:]}
    assert "baseline" in variants
    assert {v for v in variants if v.startswith("no_")}
    assert (out / "ablation_total.tsv").exists()
    assert (out / "ablation_cyc.png").stat().st_size > 1000
    assert (out / "ablation_total.png").stat().st_size > 1000


# ---------------------------------------------------------------------------
# exit-code contract


def test_train_without_data_source_is_usage_error(tmp_path, capsys):
    rc = main(["train", "--total-batches", "4", "--output-dir", str(tmp_path / "x")])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_train_with_missing_embedding_file_is_usage_error(tmp_path):
    rc = main(["train", "--x-embeddings", str(tmp_path / "nope.txt"),
               "--y-embeddings", str(tmp_path / "nope2.txt"),
               "--total-batches", "4", "--output-dir", str(tmp_path / "x")])
    assert rc == 2


def test_evaluate_without_benchmark_is_usage_error(synth_dir):
    rc = main(["evaluate", "--table", str(synth_dir / "x_embeddings.txt")])
    assert rc == 2


def test_evaluate_malformed_benchmark_spec_is_usage_error(synth_dir):
    rc = main(["evaluate", "--table", str(synth_dir / "x_embeddings.txt"),
               "--benchmark", "missing-colon"])
    assert rc == 2


def test_evaluate_unknown_benchmark_format_is_usage_error(synth_dir):
    rc = main(["evaluate", "--table", str(synth_dir / "x_embeddings.txt"),
               "--benchmark", f"nope:{synth_dir / 'benchmark.tsv'}"])
    assert rc == 2


def test_neighbors_unknown_word_is_usage_error(synth_dir, capsys):
    rc = main(["neighbors", "--table", str(synth_dir / "x_embeddings.txt"),
               "--word", "not-in-vocab"])
    assert rc == 2
    assert "error:" in capsys.readouterr().err


def test_unknown_subcommand_raises_argparse_exit(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate"])
    assert exc.value.code == 2


def test_missing_required_flag_raises_argparse_exit():
    with pytest.raises(SystemExit) as exc:
        main(["train", "--synthetic"])  # no --output-dir
    assert exc.value.code == 2


def test_unexpected_exception_is_internal_error(synth_dir, monkeypatch, capsys):
    import retrogan.cli as cli

    def boom(path):
        raise RuntimeError("wires crossed")

    monkeypatch.setattr(cli, "load_table", boom)
    rc = main(["neighbors", "--table", str(synth_dir / "x_embeddings.txt"),
               "--word", "w00000"])
    assert rc == 1
    assert "internal error" in capsys.readouterr().err


def test_console_script_is_installed():
    proc = subprocess.run([sys.executable, "-m", "retrogan.cli", "--help"]
                          if os.environ.get("RETROGAN_NO_SCRIPT")
                          else ["retrogan", "--help"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert "train" in proc.stdout and "postspecialize" in proc.stdout
