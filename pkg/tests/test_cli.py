import json

import numpy as np
import pytest
import yaml

from bicolor_dehaze.cli import (
    DATA_ROOT_ENV, EXIT_OK, EXIT_RUNTIME, EXIT_VALIDATION, main,
)
from bicolor_dehaze.trainer import TrainingAborted

from conftest import make_clean_scene, write_png


def make_clean_dir(root, n=2, size=64):
    root.mkdir(parents=True)
    for i in range(n):
        write_png(root / f"scene_{i:02d}.png",
                  make_clean_scene(np.random.default_rng(i), size=size))
    return root


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """One synthesize -> train chain shared by the read-only CLI tests."""
    ws = tmp_path_factory.mktemp("cli")
    clean = make_clean_dir(ws / "clean")
    assert main(["synthesize", "--clean-dir", str(clean), "--out", str(ws / "data"),
                 "--count", "4", "--val-fraction", "0.25"]) == EXIT_OK
    cfg = {
        "data_root": str(ws / "data"),
        "steps": 3, "batch": 2, "patch": 48, "lr": 1e-3,
        "checkpoint_every": 2,
        "model": {"base_channels": 8, "blocks_per_stage": [1, 1, 1]},
    }
    (ws / "train.yaml").write_text(yaml.safe_dump(cfg))
    assert main(["train", "--config", str(ws / "train.yaml"),
                 "--out", str(ws / "run")]) == EXIT_OK
    return ws


# -- synthesize ---------------------------------------------------------------

def test_synthesize_tree_layout(workspace):
    data = workspace / "data"
    assert sorted(p.name for p in data.iterdir() if p.is_dir()) == ["gt", "hazy"]
    stems = sorted(p.stem for p in (data / "hazy").glob("*.png"))
    assert len(stems) == 4
    assert stems == sorted(p.stem for p in (data / "gt").glob("*.png"))
    splits = (data / "splits.txt").read_text().splitlines()
    assert splits[0] == "train:" and "val:" in splits
    assert splits.index("val:") == 4  # 3 train + header
    params = json.loads((data / "asm_params.json").read_text())
    assert sorted(params) == stems
    for rec in params.values():
        assert 0.4 <= rec["beta"] <= 2.0
        assert len(rec["airlight"]) == 3
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["subcommand"] == "synthesize"
    assert manifest["seed"] == 0


def test_synthesize_deterministic(tmp_path):
    clean = make_clean_dir(tmp_path / "clean", n=1, size=32)
    blobs = []
    for name in ("a", "b"):
        assert main(["synthesize", "--clean-dir", str(clean),
                     "--out", str(tmp_path / name), "--count", "2"]) == EXIT_OK
        hazy = sorted((tmp_path / name / "hazy").glob("*.png"))[0]
        blobs.append(hazy.read_bytes() + (tmp_path / name / "asm_params.json").read_bytes())
    assert blobs[0] == blobs[1]


def test_synthesize_seed_changes_output(tmp_path):
    clean = make_clean_dir(tmp_path / "clean", n=1, size=32)
    blobs = []
    for seed, name in ((0, "a"), (1, "b")):
        assert main(["--seed", str(seed), "synthesize", "--clean-dir", str(clean),
                     "--out", str(tmp_path / name), "--count", "1"]) == EXIT_OK
        blobs.append(sorted((tmp_path / name / "hazy").glob("*.png"))[0].read_bytes())
    assert blobs[0] != blobs[1]


def test_synthesize_missing_dir(tmp_path, capsys):
    assert main(["synthesize", "--clean-dir", str(tmp_path / "nope"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION
    assert "error:" in capsys.readouterr().err


def test_synthesize_empty_dir(tmp_path):
    (tmp_path / "clean").mkdir()
    assert main(["synthesize", "--clean-dir", str(tmp_path / "clean"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


# -- train --------------------------------------------------------------------

def test_train_outputs(workspace):
    run = workspace / "run"
    assert len((run / "run.log").read_text().splitlines()) == 3
    assert sorted(p.name for p in run.glob("step_*.pt")) == [
        "step_0000002.pt", "step_0000003.pt"]
    resolved = yaml.safe_load((run / "resolved_config.yaml").read_text())
    assert resolved["steps"] == 3
    assert resolved["model"]["base_channels"] == 8
    assert resolved["loss_weights"] == {"eta": 1.0, "theta": 0.5, "lam": 0.1}
    assert (run / "val.log").is_file()
    manifest = json.loads((run / "manifest.json").read_text())
    assert manifest["subcommand"] == "train"


def test_train_rejects_unknown_key(workspace, tmp_path, capsys):
    cfg = yaml.safe_load((workspace / "train.yaml").read_text())
    cfg["stepz"] = 10
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump(cfg))
    assert main(["train", "--config", str(tmp_path / "bad.yaml"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION
    assert "stepz" in capsys.readouterr().err


def test_train_collects_all_config_errors(tmp_path, capsys):
    (tmp_path / "bad.yaml").write_text(yaml.safe_dump({
        "steps": -1, "ablation": "nonsense", "model": {"base_channels": 10}}))
    assert main(["train", "--config", str(tmp_path / "bad.yaml"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION
    err = capsys.readouterr().err
    for fragment in ("steps", "nonsense", "model", "data_root"):
        assert fragment in err


def test_train_missing_config_file(tmp_path):
    assert main(["train", "--config", str(tmp_path / "nope.yaml"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_train_data_root_from_env(workspace, tmp_path, monkeypatch):
    cfg = yaml.safe_load((workspace / "train.yaml").read_text())
    del cfg["data_root"]
    cfg["steps"] = 1
    (tmp_path / "env.yaml").write_text(yaml.safe_dump(cfg))
    monkeypatch.setenv(DATA_ROOT_ENV, str(workspace / "data"))
    assert main(["train", "--config", str(tmp_path / "env.yaml"),
                 "--out", str(tmp_path / "out")]) == EXIT_OK


def test_train_abort_maps_to_runtime_exit(workspace, tmp_path, monkeypatch, capsys):
    import bicolor_dehaze.cli as cli

    def boom(*a, **k):
        raise TrainingAborted(7, "total", float("nan"))

    monkeypatch.setattr(cli.trainer_mod, "train", boom)
    assert main(["train", "--config", str(workspace / "train.yaml"),
                 "--out", str(tmp_path / "out")]) == EXIT_RUNTIME
    assert "step 7" in capsys.readouterr().err


# -- dehaze -------------------------------------------------------------------

def test_dehaze_roundtrip(workspace, tmp_path):
    ckpt = workspace / "run" / "step_0000003.pt"
    out = tmp_path / "out"
    assert main(["dehaze", "--checkpoint", str(ckpt),
                 "--in-dir", str(workspace / "data" / "hazy"),
                 "--out", str(out)]) == EXIT_OK
    names = sorted(p.name for p in (workspace / "data" / "hazy").glob("*.png"))
    assert sorted(p.name for p in out.glob("*.png")) == names
    from bicolor_dehaze.data import load_image
    img = load_image(out / names[0])
    assert img.shape == (64, 64, 3)
    assert 0.0 <= img.min() and img.max() <= 1.0


def test_dehaze_side_by_side(workspace, tmp_path):
    ckpt = workspace / "run" / "step_0000003.pt"
    out = tmp_path / "out"
    assert main(["dehaze", "--checkpoint", str(ckpt),
                 "--in-dir", str(workspace / "data" / "hazy"),
                 "--out", str(out), "--side-by-side"]) == EXIT_OK
    from bicolor_dehaze.data import load_image
    sheet = sorted(out.glob("*_compare.png"))[0]
    assert load_image(sheet).shape == (64, 128, 3)


def test_dehaze_missing_checkpoint(workspace, tmp_path):
    assert main(["dehaze", "--checkpoint", str(tmp_path / "nope.pt"),
                 "--in-dir", str(workspace / "data" / "hazy"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


def test_dehaze_corrupt_checkpoint(workspace, tmp_path):
    import torch
    torch.save({"schema_version": 999}, tmp_path / "bad.pt")
    assert main(["dehaze", "--checkpoint", str(tmp_path / "bad.pt"),
                 "--in-dir", str(workspace / "data" / "hazy"),
                 "--out", str(tmp_path / "out")]) == EXIT_VALIDATION


# -- evaluate -----------------------------------------------------------------

def test_evaluate_with_checkpoint(workspace, tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["evaluate", "--checkpoint", str(workspace / "run" / "step_0000003.pt"),
                 "--data-root", str(workspace / "data"), "--split", "val",
                 "--out", str(out)]) == EXIT_OK
    text = (out / "report.txt").read_text()
    assert text.startswith("# per-image metrics\n")
    assert "mean_psnr_db" in text
    assert (out / "report_hazy_baseline.txt").is_file()
    assert "hazy baseline" in capsys.readouterr().out


def test_evaluate_hazy_only_and_env_root(workspace, tmp_path, monkeypatch):
    monkeypatch.setenv(DATA_ROOT_ENV, str(workspace / "data"))
    out = tmp_path / "out"
    assert main(["evaluate", "--split", "val", "--out", str(out)]) == EXIT_OK
    assert not (out / "report.txt").exists()
    assert "hazy-input" in (out / "report_hazy_baseline.txt").read_text()


def test_evaluate_reports_byte_stable(workspace, tmp_path):
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        assert main(["evaluate", "--checkpoint", str(workspace / "run" / "step_0000003.pt"),
                     "--data-root", str(workspace / "data"), "--split", "val",
                     "--out", str(out)]) == EXIT_OK
        blobs.append((out / "report.txt").read_bytes())
    assert blobs[0] == blobs[1]


def test_evaluate_no_root(tmp_path, monkeypatch):
    monkeypatch.delenv(DATA_ROOT_ENV, raising=False)
    assert main(["evaluate", "--out", str(tmp_path / "out")]) == EXIT_VALIDATION
