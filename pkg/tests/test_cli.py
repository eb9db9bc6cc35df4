import csv
import hashlib
import json
import time

import pytest

from cmm import autodiff, cli, model as model_lib


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert run("gen", "--out", out, "--seed", 0, "--n", 300, "--n-test", 60) == 0
    return out


def _digests(d):
    return {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in sorted(d.iterdir())}


def test_gen_writes_splits_and_reports_counts(tmp_path, capsys):
    assert run("gen", "--out", tmp_path, "--seed", 0, "--n", 200, "--n-test", 40) == 0
    out = capsys.readouterr().out
    train_line = next(line for line in out.splitlines() if line.startswith("train"))
    assert "ROTX=0" in train_line
    names = {p.name for p in tmp_path.iterdir()}
    for split in ("train", "test_roto", "test_rxto", "test_rotx"):
        assert {f"{split}.jsonl", f"{split}.meta.json"} <= names


def test_gen_is_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        run("gen", "--out", tmp_path / name, "--seed", 3, "--n", 100, "--n-test", 20)
    assert _digests(tmp_path / "a") == _digests(tmp_path / "b")


def test_gen_custom_mix(tmp_path, capsys):
    assert run("gen", "--out", tmp_path, "--n", 50, "--n-test", 10, "--mix", "0,0,1") == 0
    regimes = {json.loads(line)["regime"] for line in (tmp_path / "train.jsonl").open()}
    assert regimes == {"ROTX"}


@pytest.mark.parametrize("mix", ["0.5,0.5", "a,b,c"])
def test_gen_malformed_mix_is_a_usage_error(tmp_path, mix):
    with pytest.raises(SystemExit) as info:
        run("gen", "--out", tmp_path, "--mix", mix)
    assert info.value.code == 2


def test_gen_mix_not_summing_to_one_fails(tmp_path):
    assert run("gen", "--out", tmp_path, "--mix", "0.6,0.6,0") == 1


def test_seed_precedence(tmp_path, monkeypatch):
    monkeypatch.setenv("CMM_SEED", "7")
    run("gen", "--out", tmp_path / "env", "--n", 40, "--n-test", 10)
    run("gen", "--out", tmp_path / "flag", "--seed", 7, "--n", 40, "--n-test", 10)
    run("gen", "--out", tmp_path / "both", "--seed", 0, "--n", 40, "--n-test", 10)
    monkeypatch.delenv("CMM_SEED")
    run("gen", "--out", tmp_path / "none", "--n", 40, "--n-test", 10)
    assert _digests(tmp_path / "env") == _digests(tmp_path / "flag")
    assert _digests(tmp_path / "both") == _digests(tmp_path / "none")
    assert _digests(tmp_path / "both") != _digests(tmp_path / "env")


def test_train_writes_checkpoint_and_trace(data_dir, tmp_path, capsys):
    ckpt = tmp_path / "m.json"
    assert run("train", "--data", data_dir, "--strategy", "stie", "--seed", 0,
               "--out", ckpt, "--epochs", 3) == 0
    assert "l_total=" in capsys.readouterr().out
    doc = json.loads(ckpt.read_text())
    assert doc["metadata"]["train_config"]["epochs"] == 3
    rows = list(csv.reader((tmp_path / "m.loss.csv").open()))
    assert rows[0] == ["epoch", "l_cmm", "l_rgb", "l_thermal", "l_total"] and len(rows) == 4


def test_train_with_zero_lr_keeps_initialisation(data_dir, tmp_path):
    ckpt = tmp_path / "m.json"
    assert run("train", "--data", data_dir, "--strategy", "te_train", "--seed", 2,
               "--out", ckpt, "--epochs", 2, "--lr", 0) == 0
    trained, init = model_lib.load(ckpt), model_lib.init(2)
    for (_, a), (_, b) in zip(trained.named_parameters(), init.named_parameters()):
        assert a.tobytes() == b.tobytes()


def test_unknown_strategy_is_a_usage_error(data_dir, tmp_path):
    with pytest.raises(SystemExit) as info:
        run("train", "--data", data_dir, "--strategy", "nde", "--out", tmp_path / "m.json")
    assert info.value.code == 2


def test_missing_data_is_a_runtime_error(tmp_path):
    assert run("train", "--data", tmp_path / "nowhere", "--strategy", "stie",
               "--out", tmp_path / "m.json") == 1


def test_train_stie_defaults_finishes_quickly(tmp_path):
    run("gen", "--out", tmp_path / "d", "--seed", 0)
    start = time.perf_counter()
    assert run("train", "--data", tmp_path / "d", "--strategy", "stie", "--out", tmp_path / "m.json") == 0
    assert time.perf_counter() - start < 300


def test_eval_prints_table_and_pr_points(data_dir, tmp_path, capsys):
    ckpt = tmp_path / "m.json"
    run("train", "--data", data_dir, "--strategy", "stie", "--out", ckpt, "--epochs", 2)
    capsys.readouterr()
    pr = tmp_path / "pr.csv"
    assert run("eval", "--data", data_dir, "--ckpt", ckpt, "--strategy", "stie", "--pr-out", pr) == 0
    out = capsys.readouterr().out
    for split in ("test_roto", "test_rxto", "test_rotx"):
        assert split in out
    assert pr.read_text().startswith("split,threshold,precision,recall\n")
    assert run("eval", "--data", data_dir, "--ckpt", ckpt, "--strategy", "stie", "--hard-gate") == 0


def test_ablate_one_run(tmp_path, monkeypatch, capsys):
    monkeypatch.chdir(tmp_path)
    assert run("ablate", "--runs", 1, "--n-train", 200, "--n-test", 40, "--epochs", 1) == 0
    rows = list(csv.reader((tmp_path / "reports" / "ablation.csv").open()))
    assert rows[0] == ["seed", "strategy", "split", "accuracy", "ap"]
    assert len(rows) == 13
    assert "mean AP over 1 seed(s)" in capsys.readouterr().out


def test_verify_passes_on_fresh_build(capsys):
    assert run("verify") == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


def test_verify_catches_relu_convention_flip(monkeypatch, capsys):
    monkeypatch.setattr(autodiff, "RELU_GRAD_AT_ZERO", 1.0)
    assert run("verify") == 1
    captured = capsys.readouterr()
    assert "FAIL  gate-boundary" in captured.out
    assert json.loads(captured.err)["suite"] == "gate-boundary"


def test_verify_reports_checkpoint_version_mismatch(tmp_path, capsys):
    ckpt = tmp_path / "m.json"
    model_lib.save(model_lib.init(0), ckpt)
    assert run("verify", "--checkpoint", ckpt) == 0
    doc = json.loads(ckpt.read_text())
    doc["version"] = 2
    ckpt.write_text(json.dumps(doc))
    capsys.readouterr()
    assert run("verify", "--checkpoint", ckpt) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["suite"] == "checkpoint-loader"
    assert "version mismatch" in err["counterexample"]["error"]


def test_subcommand_is_required():
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 2
