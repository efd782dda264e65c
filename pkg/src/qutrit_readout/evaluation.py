"""Fidelity, confusion, leakage and scaling metrics, plus report writers.

CSV files written by :meth:`EvalReport.write`:

``confusion.csv``
    ``method, qubit, true_level, pred_0, pred_1, pred_2``; rows are true
    levels, counts over the test split.
``fidelity.csv``
    ``method, qubit, fidelity``; qubit ``all`` holds the geometric mean.
``leakage.csv``
    ``qubit, precision, recall, cluster_purity, cluster_recall``.
``sweep.csv``
    ``n_keep, duration_ns, mean_fidelity, geomean_fidelity``.
``scaling.csv``
    ``n, k, features, params_per_qubit, params_total, output_states,
    reference_params, reference_ratio``.
"""

from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import jsonio
from .dsp import dataset_features, truncate_bank
from .mlp import mlp_parameter_count

N_LEVELS = 3
REFERENCE_PARAMS = 686000  # monolithic FNN for five qutrits
REFERENCE_SHAPE = (5, 3)


def confusion(predictions, truths, k: int = N_LEVELS) -> np.ndarray:
    """``k x k`` counts, rows = true level, columns = predicted level."""
    p = np.asarray(predictions).ravel()
    t = np.asarray(truths).ravel()
    if len(p) != len(t):
        raise ValueError("predictions and truths differ in length")
    out = np.zeros((k, k), dtype=np.int64)
    np.add.at(out, (t, p), 1)
    return out


def fidelity(conf) -> float:
    conf = np.asarray(conf)
    total = conf.sum()
    if total == 0:
        raise ValueError("empty confusion matrix")
    return float(np.trace(conf) / total)


def geomean_fidelity(f) -> float:
    f = np.asarray(f, dtype=float)
    if len(f) == 0 or np.any(f <= 0):
        raise ValueError("fidelities must be positive")
    return float(np.exp(np.mean(np.log(f))))


def leakage_metrics(predictions, truths, positive: int = 2) -> tuple[float, float]:
    """Precision and recall with ``positive`` as the positive class.

    An empty denominator gives 1.0 when there are no false predictions of
    that kind, else 0.0.
    """
    p = np.asarray(predictions).ravel() == positive
    t = np.asarray(truths).ravel() == positive
    if len(p) != len(t):
        raise ValueError("predictions and truths differ in length")
    tp = np.count_nonzero(p & t)
    fp = np.count_nonzero(p & ~t)
    fn = np.count_nonzero(~p & t)
    precision = tp / (tp + fp) if tp + fp else (1.0 if fp == 0 else 0.0)
    recall = tp / (tp + fn) if tp + fn else (1.0 if fn == 0 else 0.0)
    return float(precision), float(recall)


def cluster_leakage(cluster_labels, truths, qubit: int) -> tuple[float, float]:
    """Purity and recall of the leak cluster against simulator ground truth.

    A member counts as pure if the qubit started in level 2 or was excited
    into it during the readout; recall is over shots that started in 2.
    """
    lab = np.asarray(cluster_labels).ravel() == 2
    started = np.array([t.effective_initial_level[qubit] == 2 for t in truths])
    visited = np.array(
        [t.effective_initial_level[qubit] == 2 or any(e[2] == 2 for e in t.events[qubit]) for t in truths]
    )
    purity = float(visited[lab].mean()) if lab.any() else 1.0
    recall = float(lab[started].mean()) if started.any() else 1.0
    return purity, recall


def per_qubit_fidelity(predictions, truths) -> tuple[np.ndarray, np.ndarray]:
    """Confusions ``(n, k, k)`` and marginal fidelities ``(n,)``."""
    p = np.atleast_2d(predictions)
    t = np.atleast_2d(truths)
    confs = np.array([confusion(p[:, q], t[:, q]) for q in range(p.shape[1])])
    return confs, np.array([fidelity(c) for c in confs])


def predict_levels(models, features) -> np.ndarray:
    return np.stack([m.predict(features) for m in models], axis=1)


def duration_sweep(dataset, bank, models, n_keep_list, indices=None, truths=None, workers: int = 1) -> list[dict]:
    """Re-evaluate full-length models on truncated kernels and traces.

    No model is retrained; only the bank and the traces are cut to
    ``n_keep`` samples.
    """
    n_keep_list = [int(n) for n in n_keep_list]
    if n_keep_list != sorted(n_keep_list):
        raise ValueError("n_keep list must be sorted ascending")
    if n_keep_list and n_keep_list[-1] > bank.length:
        raise ValueError(f"n_keep {n_keep_list[-1]} exceeds trace length {bank.length}")
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    if truths is None:
        truths = dataset.initial_levels[idx]

    def point(n_keep):
        feats = dataset_features(truncate_bank(bank, n_keep), dataset, idx, n_keep)
        _, fids = per_qubit_fidelity(predict_levels(models, feats), truths)
        return {
            "n_keep": n_keep,
            "duration_ns": n_keep / bank.sample_rate * 1e9,
            "mean_fidelity": float(np.mean(fids)),
            "geomean_fidelity": geomean_fidelity(fids),
            "fidelities": fids.tolist(),
        }

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        return list(pool.map(point, n_keep_list))


def scaling_report(n_list, k_list) -> list[dict]:
    """Parameter counts of the per-qubit design against ``k**n`` outputs.

    ``output_states`` is an exact decimal string.
    """
    rows = []
    for n in n_list:
        for k in k_list:
            if n < 1 or k < 2:
                raise ValueError("need n >= 1 and k >= 2")
            p = n * 3 * k * (k - 1) // 2
            per_qubit = mlp_parameter_count(p, k)
            total = n * per_qubit
            ref = REFERENCE_PARAMS if (n, k) == REFERENCE_SHAPE else None
            rows.append(
                {
                    "n": n,
                    "k": k,
                    "features": p,
                    "params_per_qubit": per_qubit,
                    "params_total": total,
                    "output_states": str(k**n),
                    "reference_params": ref,
                    "reference_ratio": None if ref is None else ref / total,
                }
            )
    return rows


def _cell(x):
    if isinstance(x, (float, np.floating)):
        return format(float(x), ".17g")
    return "" if x is None else x


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_cell(x) for x in r])


SWEEP_COLUMNS = ["n_keep", "duration_ns", "mean_fidelity", "geomean_fidelity"]


def write_sweep_csv(rows, path) -> None:
    _write_csv(Path(path), SWEEP_COLUMNS, [[r[c] for c in SWEEP_COLUMNS] for r in rows])


@dataclass
class EvalReport:
    """Everything the pipeline reports; ``methods`` maps a method name to
    its ``(n, 3, 3)`` test-split confusion matrices."""

    methods: dict
    leakage: list  # per qubit (precision, recall) of the MLP
    cluster_leakage: list = field(default_factory=list)  # per qubit (purity, recall)
    sweep: list = field(default_factory=list)
    scaling: list = field(default_factory=list)
    exclude_qubits: tuple = ()
    meta: dict = field(default_factory=dict)

    def fidelities(self, method: str = "mlp") -> np.ndarray:
        return np.array([fidelity(c) for c in self.methods[method]])

    def mean_fidelity(self, method: str = "mlp") -> float:
        return float(np.mean(self.fidelities(method)))

    def geomean(self, method: str = "mlp") -> float:
        return geomean_fidelity(self.fidelities(method))

    def excluded_error(self, method: str = "mlp"):
        """Infidelity of the mean accuracy over qubits not in ``exclude_qubits``."""
        if not self.exclude_qubits:
            return None
        f = self.fidelities(method)
        keep = [q for q in range(len(f)) if q not in self.exclude_qubits]
        return float(1 - np.mean(f[keep]))

    def to_dict(self) -> dict:
        out = {
            "methods": {},
            "leakage": [{"precision": p, "recall": r} for p, r in self.leakage],
            "cluster_leakage": [{"purity": p, "recall": r} for p, r in self.cluster_leakage],
            "sweep": self.sweep,
            "scaling": self.scaling,
            "exclude_qubits": list(self.exclude_qubits),
            "meta": self.meta,
        }
        for name, confs in self.methods.items():
            out["methods"][name] = {
                "confusion": np.asarray(confs).tolist(),
                "fidelity": self.fidelities(name).tolist(),
                "mean_fidelity": self.mean_fidelity(name),
                "geomean_fidelity": self.geomean(name),
                "excluded_error": self.excluded_error(name),
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "EvalReport":
        return cls(
            methods={k: np.array(v["confusion"], dtype=np.int64) for k, v in d["methods"].items()},
            leakage=[(x["precision"], x["recall"]) for x in d["leakage"]],
            cluster_leakage=[(x["purity"], x["recall"]) for x in d["cluster_leakage"]],
            sweep=d["sweep"],
            scaling=d["scaling"],
            exclude_qubits=tuple(d["exclude_qubits"]),
            meta=d["meta"],
        )

    def write(self, out_dir) -> dict:
        """Write the CSV tables and ``report.json``; returns name -> sha256."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        conf_rows, fid_rows = [], []
        for name, confs in sorted(self.methods.items()):
            for q, c in enumerate(confs):
                for t in range(c.shape[0]):
                    conf_rows.append([name, q, t, *c[t].tolist()])
                fid_rows.append([name, q, fidelity(c)])
            fid_rows.append([name, "all", self.geomean(name)])
        _write_csv(out / "confusion.csv", ["method", "qubit", "true_level", "pred_0", "pred_1", "pred_2"], conf_rows)
        _write_csv(out / "fidelity.csv", ["method", "qubit", "fidelity"], fid_rows)
        cl = self.cluster_leakage or [(None, None)] * len(self.leakage)
        _write_csv(
            out / "leakage.csv",
            ["qubit", "precision", "recall", "cluster_purity", "cluster_recall"],
            [[q, p, r, *c] for q, ((p, r), c) in enumerate(zip(self.leakage, cl))],
        )
        write_sweep_csv(self.sweep, out / "sweep.csv")
        keys = ["n", "k", "features", "params_per_qubit", "params_total", "output_states", "reference_params", "reference_ratio"]
        _write_csv(out / "scaling.csv", keys, [[r[k] for k in keys] for r in self.scaling])
        jsonio.dump(self.to_dict(), out / "report.json")
        names = ["confusion.csv", "fidelity.csv", "leakage.csv", "sweep.csv", "scaling.csv", "report.json"]
        return {n: jsonio.file_sha256(out / n) for n in names}
