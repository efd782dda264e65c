import csv
import json

import numpy as np
import pytest

from qutrit_readout import jsonio
from qutrit_readout.cli import build_parser, main
from qutrit_readout.config import ConfigError, build_config
from qutrit_readout.datafile import read_dataset, write_dataset
from qutrit_readout.sim import default_device, generate_dataset, computational_states

TINY = {
    "seed": 11,
    "device_options": {"n_qubits": 2},
    "shots_per_state": 80,
    "cluster": {"m": 120, "restarts": 5},
    "scaling_n": [1, 5],
}


def write_config(path, **changes):
    cfg = {**TINY, **changes}
    path.write_text(json.dumps(cfg))
    return path


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("tiny")
    cfg = write_config(root / "cfg.json")
    assert main(["pipeline", "--config", str(cfg), "--out", str(root / "a")]) == 0
    return root


def digests(d):
    return {p.name: jsonio.file_sha256(p) for p in sorted(d.iterdir()) if p.is_file()}


def test_outputs_and_rerun_determinism(run, tmp_path):
    a = run / "a"
    for name in ("dataset.qrt", "bank.json", "model.json", "report.json", "confusion.csv", "sweep.csv", "scaling.csv"):
        assert (a / name).is_file()
    assert not (a / "FAILED").exists()
    assert main(["pipeline", "--config", str(run / "cfg.json"), "--out", str(tmp_path), "--threads", "2"]) == 0
    assert digests(a) == digests(tmp_path)


def test_sweep_rows(run):
    rows = list(csv.DictReader(open(run / "a" / "sweep.csv")))
    assert [int(r["n_keep"]) for r in rows] == [100, 200, 300, 400, 500]


def test_classify_matches_report(run, tmp_path, capsys):
    a = run / "a"
    out = tmp_path / "labels.csv"
    assert main(["classify", str(a / "model.json"), str(a / "dataset.qrt"), "--split", "test", "--out", str(out)]) == 0
    rep = json.loads((a / "report.json").read_text())
    ds = read_dataset(a / "dataset.qrt")
    rows = list(csv.DictReader(open(out)))
    pred = np.array([[int(r["q0"]), int(r["q1"])] for r in rows])
    acc = (pred == ds.initial_levels[ds.indices("test")]).mean(axis=0)
    assert np.allclose(acc, rep["methods"]["mlp"]["fidelity"], rtol=0, atol=1e-15)
    probs = np.array([[float(r[f"p{q}_{k}"]) for q in range(2) for k in range(3)] for r in rows]).reshape(-1, 2, 3)
    assert np.allclose(probs.sum(axis=2), 1.0)


def test_classify_truncated_matches_sweep(run, tmp_path):
    a = run / "a"
    out = tmp_path / "l400.csv"
    assert main(["classify", str(a / "model.json"), str(a / "dataset.qrt"), "--split", "test", "--n-keep", "400", "--out", str(out)]) == 0
    ds = read_dataset(a / "dataset.qrt")
    pred = np.array([[int(r["q0"]), int(r["q1"])] for r in csv.DictReader(open(out))])
    acc = (pred == ds.initial_levels[ds.indices("test")]).mean(axis=0)
    row = [r for r in json.loads((a / "report.json").read_text())["sweep"] if r["n_keep"] == 400][0]
    assert np.allclose(acc, row["fidelities"], rtol=0, atol=1e-15)


def test_sweep_command_reproduces_report(run, tmp_path):
    a = run / "a"
    assert main(["sweep", str(a / "model.json"), str(a / "dataset.qrt"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "sweep.csv").read_bytes() == (a / "sweep.csv").read_bytes()


def test_report_rerender(run, tmp_path):
    a = run / "a"
    assert main(["report", str(a / "report.json"), "--out", str(tmp_path)]) == 0
    for name in ("confusion.csv", "fidelity.csv", "sweep.csv", "scaling.csv", "report.json"):
        assert (tmp_path / name).read_bytes() == (a / name).read_bytes()


def test_missing_seed_is_config_error(tmp_path):
    cfg = {k: v for k, v in TINY.items() if k != "seed"}
    (tmp_path / "c.json").write_text(json.dumps(cfg))
    assert main(["pipeline", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")]) == 2
    with pytest.raises(ConfigError, match="seed"):
        build_config(tmp_path / "c.json")


def test_flag_overrides_file(tmp_path):
    cfg = build_config(write_config(tmp_path / "c.json"), {"seed": 5, "labels": "truth"})
    assert cfg.seed == 5 and cfg.labels == "truth" and cfg.shots_per_state == 80
    with pytest.raises(ConfigError, match="unknown"):
        build_config(write_config(tmp_path / "d.json", bogus=1))


def test_unknown_flag_exits_2():
    with pytest.raises(SystemExit) as exc:
        main(["pipeline", "--no-such-flag"])
    assert exc.value.code == 2


def test_corrupted_dataset_is_data_error(run, tmp_path):
    blob = bytearray((run / "a" / "dataset.qrt").read_bytes())
    blob[len(blob) // 2] ^= 0xFF
    bad = tmp_path / "bad.qrt"
    bad.write_bytes(bytes(blob))
    assert main(["classify", str(run / "a" / "model.json"), str(bad), "--out", str(tmp_path / "x.csv")]) == 3
    out = tmp_path / "p"
    assert main(["pipeline", "--config", str(run / "cfg.json"), "--dataset", str(bad), "--out", str(out)]) == 3
    assert (out / "FAILED").is_file()


def test_qubit_count_mismatch(run, tmp_path, capsys):
    ds = generate_dataset(default_device(n_qubits=3, seed=1), computational_states(3)[:2], 5)
    write_dataset(ds, tmp_path / "three.qrt")
    code = main(["classify", str(run / "a" / "model.json"), str(tmp_path / "three.qrt"), "--out", str(tmp_path / "x.csv")])
    assert code == 3
    assert "qubit count" in capsys.readouterr().err


def test_n_keep_too_long(run, tmp_path, capsys):
    a = run / "a"
    code = main(["classify", str(a / "model.json"), str(a / "dataset.qrt"), "--n-keep", "501", "--out", str(tmp_path / "x.csv")])
    assert code == 3
    assert "kernel length" in capsys.readouterr().err


def test_divergence_is_numeric_failure(run, tmp_path):
    cfg = write_config(tmp_path / "c.json", train={"learning_rate": 1e300})
    out = tmp_path / "o"
    assert main(["pipeline", "--config", str(cfg), "--dataset", str(run / "a" / "dataset.qrt"), "--out", str(out)]) == 4
    assert "train" in (out / "FAILED").read_text()


def test_help_lists_flags(capsys):
    with pytest.raises(SystemExit):
        main(["pipeline", "--help"])
    text = capsys.readouterr().out
    for flag in ("--config", "--seed", "--out", "--threads", "--n-keep", "--labels"):
        assert flag in text
    assert {"simulate", "pipeline", "classify", "sweep", "report"} <= set(build_parser()._subparsers._group_actions[0].choices)
