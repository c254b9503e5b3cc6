import hashlib
import json
import os
from pathlib import Path

import numpy as np
import pytest

from sepclr import cli, datagen
from sepclr.encoders import EncoderPair, save_checkpoint


def run_cli(*argv):
    return cli.main(list(argv))


def checksum_tree(root):
    digest = hashlib.sha256()
    for path in sorted(Path(root).rglob("*")):
        if path.is_file():
            digest.update(path.name.encode())
            digest.update(path.read_bytes())
    return digest.hexdigest()


# ---------------------------------------------------------------------------
# gen

def test_gen_reproducible_checksums(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        code = run_cli("gen", "vector-ca", "--n-bg", "20", "--n-tg", "20",
                       "--seed", "3", "--out", str(out))
        assert code == 0
    assert checksum_tree(a) == checksum_tree(b)


def test_gen_invalid_kind_exits_2(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("gen", "mnist", "--n-bg", "5", "--n-tg", "5", "--out", str(tmp_path / "x"))
    assert exc.value.code == 2


def test_gen_refuses_overwrite_without_force(tmp_path):
    out = tmp_path / "d"
    assert run_cli("gen", "vector-ca", "--n-bg", "5", "--n-tg", "5",
                   "--seed", "0", "--out", str(out)) == 0
    assert run_cli("gen", "vector-ca", "--n-bg", "5", "--n-tg", "5",
                   "--seed", "0", "--out", str(out)) == 2
    assert run_cli("gen", "vector-ca", "--n-bg", "5", "--n-tg", "5",
                   "--seed", "0", "--out", str(out), "--force") == 0


def test_gen_seed_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("SEPCLR_SEED", "11")
    out = tmp_path / "env"
    assert run_cli("gen", "vector-ca", "--n-bg", "6", "--n-tg", "6", "--out", str(out)) == 0
    meta = json.loads((out / "dataset.json").read_text())
    assert meta["seed"] == 11


# ---------------------------------------------------------------------------
# train

@pytest.fixture
def tiny_data(tmp_path):
    data_dir = tmp_path / "data"
    ds = datagen.gen_vector_ca(n_bg=16, n_tg=16, seed=0)
    ds.save(data_dir)
    return data_dir


def write_config(path, **kv):
    lines = [f"{k} = {v}" for k, v in kv.items()]
    Path(path).write_text("\n".join(lines) + "\n")
    return path


def test_train_rejects_zero_epochs(tmp_path, tiny_data, capsys):
    cfgfile = write_config(tmp_path / "cfg", epochs=0, batch_size=8)
    code = run_cli("train", "--data", str(tiny_data), "--config", str(cfgfile),
                   "--out", str(tmp_path / "run"))
    assert code == 2
    assert "epochs" in capsys.readouterr().err


def test_train_rejects_unknown_config_key(tmp_path, tiny_data, capsys):
    cfgfile = tmp_path / "cfg"
    cfgfile.write_text("epochs = 1\nwarmup_epochs = 5\n")
    code = run_cli("train", "--data", str(tiny_data), "--config", str(cfgfile),
                   "--out", str(tmp_path / "run"))
    assert code == 2
    assert "warmup_epochs" in capsys.readouterr().err


def test_train_rejects_malformed_config_line(tmp_path, tiny_data):
    cfgfile = tmp_path / "cfg"
    cfgfile.write_text("epochs: 1\n")
    assert run_cli("train", "--data", str(tiny_data), "--config", str(cfgfile),
                   "--out", str(tmp_path / "run")) == 2


def _train_args(tmp_path, tiny_data, out_name, **cfg_kv):
    defaults = dict(epochs=1, batch_size=8, common_dim=6, salient_dim=4,
                    lambda_s="10", beta="10", lambda_ind="1")
    defaults.update(cfg_kv)
    cfgfile = write_config(tmp_path / f"{out_name}.cfg", **defaults)
    return ["train", "--data", str(tiny_data), "--config", str(cfgfile),
            "--out", str(tmp_path / out_name)]


def test_train_writes_outputs_and_manifest(tmp_path, tiny_data):
    assert run_cli(*_train_args(tmp_path, tiny_data, "run")) == 0
    out = tmp_path / "run"
    assert (out / "checkpoint.bin").exists()
    assert (out / "history.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["resolved_seed"] == 0
    assert manifest["config"]["epochs"] == 1
    assert "wall_clock_s" in manifest


def test_train_independence_flag_selects_arm(tmp_path, tiny_data):
    args = _train_args(tmp_path, tiny_data, "run_mmd")
    assert run_cli(*args, "--independence", "mmd") == 0
    manifest = json.loads((tmp_path / "run_mmd" / "manifest.json").read_text())
    assert manifest["config"]["independence"] == "mmd"


def test_train_manifest_relaunch_reproduces_checkpoint(tmp_path, tiny_data):
    args = _train_args(tmp_path, tiny_data, "run1")
    assert run_cli(*args) == 0
    manifest_path = tmp_path / "run1" / "manifest.json"
    assert run_cli("train", "--data", str(tiny_data), "--manifest", str(manifest_path),
                   "--out", str(tmp_path / "run2")) == 0
    c1 = (tmp_path / "run1" / "checkpoint.bin").read_bytes()
    c2 = (tmp_path / "run2" / "checkpoint.bin").read_bytes()
    assert c1 == c2


def test_train_refuses_existing_output_without_force(tmp_path, tiny_data):
    args = _train_args(tmp_path, tiny_data, "runx")
    assert run_cli(*args) == 0
    assert run_cli(*args) == 2


# ---------------------------------------------------------------------------
# eval

def test_eval_missing_checkpoint_exit_2(tmp_path, tiny_data, capsys):
    code = run_cli("eval", "--checkpoint", str(tmp_path / "nope.bin"),
                   "--data", str(tiny_data))
    assert code == 2


def test_eval_prints_table_and_writes_reports(tmp_path, tiny_data, capsys):
    args = _train_args(tmp_path, tiny_data, "trained")
    assert run_cli(*args) == 0
    code = run_cli("eval", "--checkpoint", str(tmp_path / "trained" / "checkpoint.bin"),
                   "--data", str(tiny_data), "--out", str(tmp_path / "report"))
    assert code == 0
    stdout = capsys.readouterr().out
    assert "delta_tot" in stdout
    report = json.loads((tmp_path / "report" / "report.json").read_text())
    assert "delta_tot" in report
    assert (tmp_path / "report" / "report.csv").exists()


def test_eval_oracle_checkpoint_near_zero_delta(tmp_path):
    # hand-built checkpoint whose trunk copies the one-hot factor blocks
    data_dir = tmp_path / "grid"
    n_bg, n_tg = 600, 1200
    n = n_bg + n_tg
    shape = np.concatenate([np.arange(n_bg) % 3, np.arange(n_tg) % 3]).astype(float)
    hue = np.concatenate([np.full(n_bg, np.nan), (np.arange(n_tg) // 3) % 4])
    inputs = np.zeros((n, 7))
    for i in range(n):
        inputs[i, int(shape[i])] = 1.0
        if not np.isnan(hue[i]):
            inputs[i, 3 + int(hue[i])] = 1.0
    origin = np.array([0] * n_bg + [1] * n_tg, dtype=np.uint8)
    ds = datagen.CADataset(
        kind="vector_ca", inputs=inputs, origin=origin,
        factors={"shape": shape, "hue": hue},
        factor_kinds={"shape": "categorical", "hue": "categorical"},
        factor_roles={"shape": "common", "hue": "salient"},
        seed=0,
    )
    ds.save(data_dir)

    pair = EncoderPair.build(input_dim=7, common_dim=3, salient_dim=4,
                             hidden=(), head_hidden=4, init_seed=0)
    for enc, sl in ((pair.common, slice(0, 3)), (pair.salient, slice(3, 7))):
        w = np.zeros((7, enc.spec.layer_widths[-1]))
        w[sl, :] = np.eye(sl.stop - sl.start)
        enc.layers[0].w.values[...] = w
        enc.layers[0].b.values[...] = 0.0
    ckpt = tmp_path / "oracle.bin"
    save_checkpoint(pair, ckpt)

    code = run_cli("eval", "--checkpoint", str(ckpt), "--data", str(data_dir),
                   "--out", str(tmp_path / "oracle_report"))
    assert code == 0
    report = json.loads((tmp_path / "oracle_report" / "report.json").read_text())
    # population value is exactly 0; the seeded split leaves O(1/sqrt(n)) noise
    assert report["delta_tot"] <= 0.1
    perfect = {("hue", "salient"), ("shape", "common")}
    for row in report["rows"]:
        if (row["factor"], row["space"]) in perfect:
            assert row["value"] == 1.0


def test_eval_untrained_checkpoint_far_from_separation(tmp_path):
    # an untrained encoder leaks every linearly-readable pixel factor into
    # both spaces, so its gap table is far from the separated optimum
    data_dir = tmp_path / "shapes"
    datagen.gen_colored_shapes(n_bg=120, n_tg=120, seed=1).save(data_dir)
    pair = EncoderPair.build(input_dim=768, common_dim=8, salient_dim=8,
                             hidden=(32,), head_hidden=8, init_seed=9)
    ckpt = tmp_path / "untrained.bin"
    save_checkpoint(pair, ckpt)
    assert run_cli("eval", "--checkpoint", str(ckpt), "--data", str(data_dir),
                   "--out", str(tmp_path / "rep")) == 0
    report = json.loads((tmp_path / "rep" / "report.json").read_text())
    assert report["delta_tot"] >= 0.5
    for row in report["rows"]:
        assert 0.0 <= row["value"] <= 1.0


# ---------------------------------------------------------------------------
# verify

def test_verify_all_suites_pass(capsys):
    assert run_cli("verify", "--suite", "kernels") == 0
    assert run_cli("verify", "--suite", "oracles") == 0
    out = capsys.readouterr().out
    assert "PASS" in out and "FAIL" not in out


def test_verify_unknown_suite_exits_2():
    with pytest.raises(SystemExit) as exc:
        run_cli("verify", "--suite", "everything")
    assert exc.value.code == 2


def test_verify_detects_injected_sign_bug(monkeypatch, capsys):
    from sepclr import estimators, verify

    real = estimators.kjem_loss

    def flipped(c, s, tau, **kw):
        from sepclr import diffcore as dc
        return dc.scalar_mul(real(c, s, tau, **kw), -1.0)

    monkeypatch.setattr(estimators, "kjem_loss", flipped)
    checks = verify.run_suite("oracles")
    assert any(not ok for name, ok, _ in checks if "kjem" in name)


def test_cli_version_flag(capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli("--version")
    assert exc.value.code == 0
