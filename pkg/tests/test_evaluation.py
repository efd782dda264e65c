import numpy as np
import pytest
from hypothesis import given, strategies as st

from qutrit_readout.evaluation import (
    EvalReport,
    confusion,
    fidelity,
    geomean_fidelity,
    leakage_metrics,
    scaling_report,
)


def test_fidelity_examples():
    assert fidelity(np.diag([10, 10, 10])) == 1.0
    assert fidelity(np.ones((3, 3))) == pytest.approx(1 / 3)
    assert fidelity([[9, 1, 0], [0, 8, 2], [1, 0, 9]]) == pytest.approx(26 / 30)
    with pytest.raises(ValueError):
        fidelity(np.zeros((3, 3)))


def test_geomean_examples():
    assert abs(geomean_fidelity([0.971, 0.745, 0.923, 0.939, 0.969]) - 0.9052) <= 1e-4
    assert abs(geomean_fidelity([0.967, 0.728, 0.928, 0.932, 0.962]) - 0.8985) <= 1e-4
    assert geomean_fidelity([1, 1, 1, 1, 1]) == 1.0
    for bad in ([0.9, 0.0], [0.9, -0.1]):
        with pytest.raises(ValueError):
            geomean_fidelity(bad)


@given(st.lists(st.floats(0.01, 1.0), min_size=1, max_size=8), st.randoms())
def test_geomean_properties(f, rnd):
    g = geomean_fidelity(f)
    shuffled = list(f)
    rnd.shuffle(shuffled)
    assert geomean_fidelity(shuffled) == pytest.approx(g, rel=1e-12)
    assert geomean_fidelity([f[0]] * len(f)) == pytest.approx(f[0], rel=1e-12)


@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=200))
def test_fidelity_of_confusion_is_accuracy(pairs):
    p, t = np.array(pairs).T
    c = confusion(p, t)
    assert c.sum(axis=1).tolist() == np.bincount(t, minlength=3).tolist()
    assert fidelity(c) == pytest.approx(np.mean(p == t))


def test_leakage_examples():
    assert leakage_metrics([0, 2, 1, 2], [0, 2, 1, 2]) == (1.0, 1.0)
    assert leakage_metrics([0, 0], [0, 2]) == (1.0, 0.0)
    assert leakage_metrics([2, 2, 0], [2, 0, 2]) == (0.5, 0.5)
    with pytest.raises(ValueError):
        leakage_metrics([0], [0, 1])


def test_scaling_examples():
    rows = {(r["n"], r["k"]): r for r in scaling_report([1, 5, 10, 100], [2, 3])}
    r = rows[(5, 3)]
    assert (r["features"], r["params_total"], r["output_states"]) == (45, 6505, "243")
    assert 100 <= r["reference_ratio"] <= 110
    assert rows[(1, 2)]["features"] == 3
    assert rows[(10, 3)]["features"] == 90 and rows[(10, 3)]["output_states"] == "59049"
    assert rows[(100, 3)]["output_states"] == str(3**100)
    assert rows[(1, 3)]["reference_params"] is None


def test_scaling_growth():
    rows = scaling_report([50, 100, 200, 400], [3])
    # each per-qubit network is quadratic in its input width, which is linear in n
    per_qubit = [b["params_per_qubit"] / a["params_per_qubit"] for a, b in zip(rows, rows[1:])]
    assert all(abs(r - 4) < 0.05 for r in per_qubit)
    # n such networks make the total cubic in n
    total = [b["params_total"] / a["params_total"] for a, b in zip(rows, rows[1:])]
    assert all(abs(r - 8) < 0.1 for r in total)


def test_report_round_trip(tmp_path):
    confs = np.array([[[5, 1, 0], [0, 4, 0], [0, 1, 2]]] * 2)
    rep = EvalReport(
        methods={"mlp": confs, "lda": confs},
        leakage=[(1.0, 0.5), (1.0, 1.0)],
        cluster_leakage=[(1.0, 1.0), (0.9, 0.8)],
        sweep=[{"n_keep": 500, "duration_ns": 1000.0, "mean_fidelity": 0.8, "geomean_fidelity": 0.8, "fidelities": [0.8, 0.8]}],
        scaling=scaling_report([5], [3]),
        exclude_qubits=(1,),
    )
    h1 = rep.write(tmp_path / "a")
    again = EvalReport.from_dict(__import__("json").loads((tmp_path / "a" / "report.json").read_text()))
    h2 = again.write(tmp_path / "b")
    assert h1 == h2
    assert rep.excluded_error() == pytest.approx(1 - 11 / 13)
    head = (tmp_path / "a" / "sweep.csv").read_text().splitlines()
    assert head[0] == "n_keep,duration_ns,mean_fidelity,geomean_fidelity" and len(head) == 2
