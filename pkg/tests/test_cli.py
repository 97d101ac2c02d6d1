"""End-to-end command-line behavior: flows, outputs, exit codes."""

import numpy as np
import pytest

from resnetplus import autodiff as ad
from resnetplus.cli import main
from resnetplus.data import load_manifest

TRAIN_ARGS = ["--synthetic", "3x12", "--size", "32", "--width", "0.25",
              "--epochs", "2", "--batch-size", "8", "--t-max", "2", "--quiet"]


@pytest.fixture(scope="module")
def run_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli_run")
    code = main(["train", *TRAIN_ARGS, "--out", str(out)])
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# usage errors


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["train"],                                       # no dataset
    ["train", "--synthetic", "3x12", "--manifest", "d"],  # both datasets
    ["train", "--synthetic", "4x7"],                 # 7 not a multiple of 4
    ["train", "--synthetic", "3x12", "--depth", "34"],
])
def test_usage_errors_exit_2(argv, capsys):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# train


def test_train_writes_artifacts(run_dir):
    for name in ("resolved.cfg", "history.csv", "best.ckpt", "report.txt",
                 "curves.png"):
        assert (run_dir / name).is_file(), name


def test_resolved_reflects_flags(run_dir):
    text = (run_dir / "resolved.cfg").read_text()
    assert "width_mult = 0.25" in text
    assert "epochs = 2" in text
    assert "synthetic = 3x12" in text


def test_train_config_file_plus_flag_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("[model]\nwidth_mult = 0.25\ncbam = false\n"
                   "[train]\nepochs = 3\nbatch_size = 8\nt_max = 2\n"
                   "[data]\nsynthetic = 3x12\n")
    out = tmp_path / "out"
    code = main(["train", "--config", str(cfg), "--epochs", "1",
                 "--out", str(out), "--quiet"])
    assert code == 0
    text = (out / "resolved.cfg").read_text()
    assert "epochs = 1" in text          # flag beats file
    assert "cbam = False" in text        # file beats default
    history = (out / "history.csv").read_text()
    assert history.count("\n") == 2      # header plus one epoch


def test_twin_runs_byte_identical(run_dir, tmp_path):
    out = tmp_path / "twin"
    assert main(["train", *TRAIN_ARGS, "--out", str(out)]) == 0
    assert (out / "history.csv").read_bytes() == \
        (run_dir / "history.csv").read_bytes()
    assert (out / "best.ckpt").read_bytes() == \
        (run_dir / "best.ckpt").read_bytes()


# ---------------------------------------------------------------------------
# eval


def test_eval_writes_report(run_dir, tmp_path, capsys):
    out = tmp_path / "report"
    code = main(["eval", str(run_dir / "best.ckpt"), "--synthetic", "3x12",
                 "--out", str(out)])
    assert code == 0
    for name in ("metrics.json", "metrics.csv", "roc_points.csv",
                 "dca_points.csv", "roc.svg", "dca.svg",
                 "roc.png", "dca.png", "confusion.png"):
        assert (out / name).is_file(), name
    stdout = capsys.readouterr().out
    assert "ACC" in stdout and "AUC" in stdout
    assert "parameters:" in stdout
    assert "latency" in stdout


def test_eval_raw_weights(run_dir, tmp_path):
    out = tmp_path / "raw_report"
    code = main(["eval", str(run_dir / "best.ckpt"), "--synthetic", "3x12",
                 "--weights", "raw", "--out", str(out)])
    assert code == 0
    assert (out / "metrics.json").is_file()


def test_eval_corrupt_checkpoint_no_partial_report(tmp_path, capsys):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"not a checkpoint at all")
    out = tmp_path / "report"
    code = main(["eval", str(bad), "--synthetic", "3x12", "--out", str(out)])
    assert code == 3
    assert not out.exists()


def test_eval_class_count_mismatch(run_dir, tmp_path, capsys):
    out = tmp_path / "report"
    code = main(["eval", str(run_dir / "best.ckpt"), "--synthetic", "2x4",
                 "--out", str(out)])
    assert code == 3
    assert "mismatch" in capsys.readouterr().err
    assert not out.exists()


# ---------------------------------------------------------------------------
# ablate


def test_ablate_dry_run_trains_nothing(tmp_path, capsys):
    out = tmp_path / "grid"
    code = main(["ablate", "--synthetic", "3x12", "--width", "0.25",
                 "--epochs", "1", "--out", str(out), "--dry-run"])
    assert code == 0
    stdout = capsys.readouterr().out
    assert stdout.count("# combo") == 16
    assert stdout.count("[model]") == 16
    assert not out.exists()


def test_ablate_grid_and_vanilla_equivalence(tmp_path, capsys):
    out = tmp_path / "grid"
    args = ["--synthetic", "3x12", "--size", "32", "--width", "0.25",
            "--epochs", "1", "--batch-size", "8", "--quiet"]
    assert main(["ablate", *args, "--out", str(out)]) == 0
    table = (out / "ablation.csv").read_text().splitlines()
    assert table[0] == "cbam,sco,replace_stem,modify_shortcut,params,best_val_acc"
    assert len(table) == 17
    assert (out / "ablation.png").is_file()
    # 16 per-combo directories, each a complete run
    subdirs = [p for p in out.iterdir() if p.is_dir()]
    assert len(subdirs) == 16
    for sub in subdirs:
        assert (sub / "history.csv").is_file()
        assert (sub / "resolved.cfg").is_file()

    # the all-off row must be indistinguishable from a standalone plain run
    vanilla = tmp_path / "vanilla"
    assert main(["train", *args, "--no-cbam", "--no-sco", "--no-replace-stem",
                 "--no-replace-maxpool", "--no-modify-shortcut",
                 "--out", str(vanilla)]) == 0
    all_off = out / "cbam0_sco0_replace_stem0_modify_shortcut0"
    assert (all_off / "history.csv").read_bytes() == \
        (vanilla / "history.csv").read_bytes()
    assert (all_off / "best.ckpt").read_bytes() == \
        (vanilla / "best.ckpt").read_bytes()


# ---------------------------------------------------------------------------
# synth and predict


@pytest.fixture(scope="module")
def image_tree(tmp_path_factory):
    out = tmp_path_factory.mktemp("tree")
    assert main(["synth", str(out), "--spec", "3x6", "--size", "32"]) == 0
    return out


def test_synth_tree_rescannable(image_tree):
    manifest = load_manifest(image_tree / "manifest.cfg")
    assert manifest.class_names == ["class0", "class1", "class2"]
    assert len(manifest.split("train")) == 6
    assert len(manifest.split("val")) == 3
    assert len(manifest.split("test")) == 3


def test_predict_prints_probabilities(run_dir, image_tree, capsys):
    images = sorted((image_tree / "test" / "class0").glob("*.png"))
    code = main(["predict", str(run_dir / "best.ckpt"), str(images[0])])
    assert code == 0
    lines = capsys.readouterr().out.splitlines()
    probs = [float(tok.split("=")[1]) for tok in lines[0].split()
             if "=" in tok]
    assert len(probs) == 3
    assert abs(sum(probs) - 1.0) < 1e-4
    assert "latency" in lines[-1]


def test_predict_continues_past_bad_file(run_dir, image_tree, tmp_path, capsys):
    good = sorted((image_tree / "test" / "class1").glob("*.png"))[0]
    code = main(["predict", str(run_dir / "best.ckpt"),
                 str(tmp_path / "missing.png"), str(good)])
    assert code == 0
    out = capsys.readouterr().out
    assert "ERROR" in out
    assert "class" in out.splitlines()[1]


def test_predict_all_bad_exits_3(run_dir, tmp_path, capsys):
    code = main(["predict", str(run_dir / "best.ckpt"),
                 str(tmp_path / "a.png"), str(tmp_path / "b.png")])
    assert code == 3


# ---------------------------------------------------------------------------
# gradcheck


def test_gradcheck_primitives_pass(capsys):
    code = main(["gradcheck", "--scope", "primitives"])
    assert code == 0
    out = capsys.readouterr().out
    for op in ("conv2d/input", "pool2d/max", "batchnorm_train/x", "softmax",
               "cross_entropy", "channel_max", "concat"):
        assert op in out, op
    assert "worst relative error" in out


def test_gradcheck_blocks_pass(capsys):
    assert main(["gradcheck", "--scope", "blocks"]) == 0
    out = capsys.readouterr().out
    assert "identity_stride1" in out
    assert "cbam_stride1" in out


def test_gradcheck_catches_corrupted_adjoint(monkeypatch, capsys):
    orig = ad._track

    def crooked(op, out_value, inputs, backward):
        if op == "conv2d":
            def warped(g, _bw=backward):
                return tuple(None if gr is None else gr * 1.01
                             for gr in _bw(g))
            return orig(op, out_value, inputs, warped)
        return orig(op, out_value, inputs, backward)

    monkeypatch.setattr(ad, "_track", crooked)
    code = main(["gradcheck", "--scope", "blocks"])
    assert code != 0
    assert "FAIL" in capsys.readouterr().out
