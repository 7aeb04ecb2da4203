import json

import numpy as np
import pytest

from lbccn import cli
from lbccn.wavio import read_wav, write_wav


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    assert cli.main(["synth", "--out", str(data), "--count", "10", "--seed", "3"]) == 0
    ckpt = root / "m.ckpt"
    assert cli.main(["train", "--data", str(data), "--out", str(ckpt), "--max-steps", "2",
                     "--epochs", "1", "--lr", "1e-3"]) == 0
    return root, data, ckpt


def test_synth_layout(workspace):
    _, data, _ = workspace
    doc = json.loads((data / "manifest.json").read_text())
    assert len(doc["samples"]) == 10
    assert doc["params"]["azimuth"] == 45.0


def test_enhance_offline_and_streaming(workspace, rng):
    root, _, ckpt = workspace
    src = root / "in.wav"
    x = (rng.standard_normal((20000, 2)) * 0.1).astype(np.float32)
    write_wav(src, x, 16000)
    for flag, name in (([], "off.wav"), (["--streaming"], "on.wav")):
        assert cli.main(["enhance", "--checkpoint", str(ckpt), str(src), str(root / name)]
                        + flag) == 0
    off, on = read_wav(root / "off.wav"), read_wav(root / "on.wav")
    assert off.samples.shape == x.shape and off.sample_rate == 16000
    assert np.max(np.abs(off.samples - on.samples)) < 1e-5


def test_eval_writes_records(workspace, capsys):
    root, data, ckpt = workspace
    out = root / "metrics.jsonl"
    assert cli.main(["eval", "--data", str(data), "--checkpoint", str(ckpt), "--out", str(out),
                     "--no-stoi"]) == 0
    lines = out.read_text().splitlines()
    assert lines and all(json.loads(l)["id"] for l in lines)
    assert "delta.snr_db_left" in capsys.readouterr().out


def test_bench(workspace, capsys):
    root, _, ckpt = workspace
    out = root / "bench.json"
    assert cli.main(["bench", "--checkpoint", str(ckpt), "--seconds", "1", "--repetitions", "3",
                     "--json", str(out)]) == 0
    text = capsys.readouterr().out
    assert "parameters:" in text and "basis[macs]" in text
    assert json.loads(out.read_text())["rtf"] > 0


def test_sweep_k(workspace, capsys):
    root, data, _ = workspace
    out = root / "sweep.json"
    assert cli.main(["sweep-k", "--data", str(data), "--grid", "0,1", "--max-steps", "1",
                     "--epochs", "1", "--no-stoi", "--out", str(out)]) == 0
    rows = json.loads(out.read_text())
    assert [r["k"] for r in rows] == [0.0, 1.0]


def test_defaults():
    assert cli.DEFAULTS["ablate-q"]["grid"] == [30, 40, 64, 129]
    assert cli.DEFAULTS["train"]["k"] == 0.5 and cli.DEFAULTS["train"]["q"] == 40
    assert cli.DEFAULTS["synth"]["count"] == 200


def test_precedence(tmp_path):
    parser = cli.build_parser()
    file_cfg = {"lr": 0.5, "epochs": 7, "train": {"epochs": 9, "q": 64}}
    cfg = cli.resolve("train", parser.parse_args(["train", "--q", "30"]), file_cfg)
    assert cfg["q"] == 30          # flag beats config section
    assert cfg["epochs"] == 9      # section beats top level
    assert cfg["lr"] == 0.5        # top level beats default
    assert cfg["k"] == 0.5         # default
    with pytest.raises(cli.ConfigError):
        cli.resolve("train", parser.parse_args(["train"]), {"train": {"bogus": 1}})


def test_exit_codes(tmp_path, capsys):
    assert cli.main(["train", "--nope"]) == cli.EXIT_USAGE
    assert cli.main([]) == cli.EXIT_USAGE
    assert cli.main(["enhance", "--checkpoint", str(tmp_path / "none.ckpt"),
                     str(tmp_path / "a.wav"), str(tmp_path / "b.wav")]) == cli.EXIT_INPUT
    assert cli.main(["enhance"]) == cli.EXIT_INPUT
    bad = tmp_path / "cfg.json"
    bad.write_text("{oops")
    assert cli.main(["--config", str(bad), "bench"]) == cli.EXIT_CONFIG
    bad.write_text(json.dumps({"bench": {"q": 0}}))
    assert cli.main(["--config", str(bad), "bench", "--repetitions", "3"]) == cli.EXIT_CONFIG
    assert cli.main(["eval", "--data", str(tmp_path)]) == cli.EXIT_INPUT
    assert "error [" in capsys.readouterr().err


def test_logs_resolved_config(tmp_path, caplog):
    import logging
    with caplog.at_level(logging.INFO, logger="lbccn"):
        cli.main(["eval", "--data", str(tmp_path)])
    assert any("resolved config for eval" in r.message for r in caplog.records)
