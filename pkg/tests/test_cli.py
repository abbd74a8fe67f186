import subprocess
import sys

import numpy as np
import pytest

from attnloco.cli import main
from attnloco.config import OUTPUT_ENV_VAR, dump_config
from attnloco.evaluation import RateTable
from attnloco.ppo import TrainingLog

from helpers import small_config


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(dump_config(small_config(epochs=10, episode_length=2.0)))
    return path


def _train(config_file, out, *extra):
    return main(["train", str(config_file), "--out", str(out), *extra])


def test_stage_two_requires_resume(config_file, tmp_path, capsys):
    assert main(["train", str(config_file), "--stage", "2", "--out", str(tmp_path / "x")]) == 2
    assert "--resume" in capsys.readouterr().err


def test_smoke_run_logs_every_epoch(config_file, tmp_path):
    assert _train(config_file, tmp_path / "run", "--seed", "4") == 0
    records = TrainingLog.read(tmp_path / "run" / "stage1_log.jsonl")
    assert len(records) == 10
    assert [r["epoch"] for r in records] == list(range(1, 11))
    assert (tmp_path / "run" / "stage1_last.ckpt").exists()


def test_same_seed_same_log_and_checkpoint(config_file, tmp_path):
    for name in ("a", "b"):
        assert _train(config_file, tmp_path / name, "--seed", "9", "--epochs", "3") == 0
    for f in ("stage1_log.jsonl", "stage1_last.ckpt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_corrupt_checkpoint_exits_nonzero(config_file, tmp_path, capsys):
    _train(config_file, tmp_path / "run", "--epochs", "1")
    ckpt = tmp_path / "run" / "stage1_last.ckpt"
    data = bytearray(ckpt.read_bytes())
    data[-5] ^= 0x55
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(bytes(data))
    assert main(["eval", str(bad), "--out", str(tmp_path / "e")]) == 1
    assert "checksum" in capsys.readouterr().err
    short = tmp_path / "short.ckpt"
    short.write_bytes(ckpt.read_bytes()[:-100])
    assert main(["eval", str(short), "--out", str(tmp_path / "e")]) == 1
    assert "truncated" in capsys.readouterr().err


def test_eval_rows_and_determinism(config_file, tmp_path):
    _train(config_file, tmp_path / "run", "--epochs", "1")
    ckpt = str(tmp_path / "run" / "stage1_last.ckpt")
    fams = ["flat", "stairs", "pits"]
    texts = []
    for name in ("e1", "e2"):
        args = ["eval", ckpt, "--families", *fams, "--episodes", "2", "--level", "3", "--out", str(tmp_path / name)]
        assert main(args) == 0
        texts.append((tmp_path / name / "rates.tsv").read_text())
    assert texts[0] == texts[1]
    assert len(RateTable.read(tmp_path / "e1" / "rates.tsv")) == len(fams)


def test_stage_two_resume_and_attention_export(config_file, tmp_path):
    _train(config_file, tmp_path / "s1", "--epochs", "1")
    ckpt = tmp_path / "s1" / "stage1_last.ckpt"
    assert main(["train", str(config_file), "--stage", "2", "--resume", str(ckpt), "--epochs", "1",
                 "--out", str(tmp_path / "s2")]) == 0
    assert len(TrainingLog.read(tmp_path / "s2" / "stage2_log.jsonl")) == 1
    assert main(["attn", str(ckpt), "--steps", "2", "--out", str(tmp_path / "att")]) == 0
    assert (tmp_path / "att" / "attention" / "attention.txt").exists()


def test_attention_refused_for_other_encoders(tmp_path, capsys):
    cfg = tmp_path / "vit.yaml"
    cfg.write_text(dump_config(small_config(encoder="vit", epochs=1)))
    assert main(["train", str(cfg), "--out", str(tmp_path / "run")]) == 0
    assert main(["attn", str(tmp_path / "run" / "stage1_last.ckpt"), "--out", str(tmp_path / "att")]) == 1
    assert "attention" in capsys.readouterr().err


def test_terrain_preview_and_env_override(tmp_path, monkeypatch):
    monkeypatch.setenv(OUTPUT_ENV_VAR, str(tmp_path / "env_out"))
    assert main(["terrain-preview", "stairs", "--level", "4", "--seed", "2"]) == 0
    assert (tmp_path / "env_out" / "stairs_level4_seed2.pgm").exists()
    assert (tmp_path / "env_out" / "stairs_level4_seed2.txt").exists()
    assert main(["terrain-preview", "pits", "--out", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "pits_level5_seed0.pgm").exists()


def test_invalid_config_is_a_clean_error(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text("ppo:\n  clip: 3.0\n")
    assert main(["train", str(bad), "--out", str(tmp_path / "run")]) == 1
    assert "ppo.clip" in capsys.readouterr().err


def test_grad_check_command():
    proc = subprocess.run(
        [sys.executable, "-m", "attnloco.cli", "grad-check", "--seed", "0"], capture_output=True, text=True, timeout=300
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    lines = proc.stdout.strip().splitlines()
    assert lines and all(line.startswith("PASS") for line in lines)
    assert np.all(["max rel err" in line for line in lines])
