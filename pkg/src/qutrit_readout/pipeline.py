"""End-to-end run: simulate, cluster, build the bank, train, evaluate.

Output directory layout::

    dataset.qrt      simulated traces (skipped when a dataset is supplied)
    bank.json        matched-filter bank
    model.json       model bundle (MLPs, baselines, cluster model, config)
    confusion.csv, fidelity.csv, leakage.csv, sweep.csv, scaling.csv,
    report.json      evaluation report
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import jsonio
from .cluster import ClusterModel, fit_cluster_model
from .config import RunConfig
from .datafile import DatasetFormatError, read_dataset, write_dataset
from .discriminant import DiscriminantModel, QMFVoteModel, train_discriminant, train_qmf_vote
from .dsp import KERNELS_PER_QUBIT, MatchedFilterBank, build_filter_bank, dataset_features, dataset_mtvs, truncate_bank
from .evaluation import (
    EvalReport,
    cluster_leakage,
    duration_sweep,
    leakage_metrics,
    per_qubit_fidelity,
    predict_levels,
    scaling_report,
)
from .linalg import EigenSolverError
from .mlp import MLPModel, TrainConfig, TrainingError, train_mlp
from .rng import derive_seed
from .sim import TraceDataset, generate_dataset

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "qutrit-readout-bundle"
BUNDLE_VERSION = 1
FAILED_MARKER = "FAILED"


class DataError(ValueError):
    """Input files are missing, corrupt or incompatible."""


class NumericError(RuntimeError):
    """A numeric stage (eigensolver, training) failed."""


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


def training_labels(dataset: TraceDataset, cluster_labels, mode: str) -> np.ndarray:
    """Per-shot, per-qubit levels used to build kernels and train models.

    ``cluster`` mode takes the prepared level, replaced by 2 wherever the
    shot falls in the leak cluster.  ``truth`` mode uses the simulator's
    effective initial level.
    """
    if mode == "truth":
        return dataset.initial_levels
    if mode != "cluster":
        raise ValueError(f"unknown label mode {mode!r}")
    return np.where(np.asarray(cluster_labels) == 2, 2, dataset.prep)


@dataclass
class ModelBundle:
    mlps: list
    cluster: ClusterModel
    train_config: TrainConfig
    bank_path: str
    bank_sha256: str
    labels: str
    baselines: dict

    @property
    def n_qubits(self) -> int:
        return len(self.mlps)

    def to_dict(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "version": BUNDLE_VERSION,
            "n_qubits": self.n_qubits,
            "feature_dim": self.mlps[0].n_features,
            "bank": {"path": self.bank_path, "sha256": self.bank_sha256},
            "labels": self.labels,
            "train_config": self.train_config.to_dict(),
            "mlps": [m.to_dict() for m in self.mlps],
            "cluster": self.cluster.to_dict(),
            "baselines": {k: [m.to_dict() for m in v] for k, v in self.baselines.items()},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelBundle":
        if d.get("format") != BUNDLE_FORMAT or d.get("version") != BUNDLE_VERSION:
            raise DataError("not a model bundle of a supported version")
        base = d["baselines"]
        return cls(
            mlps=[MLPModel.from_dict(m) for m in d["mlps"]],
            cluster=ClusterModel.from_dict(d["cluster"]),
            train_config=TrainConfig.from_dict(d["train_config"]),
            bank_path=d["bank"]["path"],
            bank_sha256=d["bank"]["sha256"],
            labels=d["labels"],
            baselines={
                "lda": [DiscriminantModel.from_dict(m) for m in base.get("lda", [])],
                "qda": [DiscriminantModel.from_dict(m) for m in base.get("qda", [])],
                "qmf": [QMFVoteModel.from_dict(m) for m in base.get("qmf", [])],
            },
        )

    def save(self, path) -> str:
        return jsonio.dump(self.to_dict(), path)


def load_bundle(path) -> tuple[ModelBundle, MatchedFilterBank]:
    """Read a bundle and its bank, checking the bank's content hash."""
    path = Path(path)
    try:
        bundle = ModelBundle.from_dict(jsonio.load(path))
    except (OSError, ValueError, KeyError) as exc:
        raise DataError(f"cannot read model bundle {path}: {exc}") from exc
    bank_file = path.parent / bundle.bank_path
    if not bank_file.is_file():
        raise DataError(f"bank file {bank_file} not found")
    if jsonio.file_sha256(bank_file) != bundle.bank_sha256:
        raise DataError(f"bank file {bank_file} does not match the hash stored in the bundle")
    bank = MatchedFilterBank.load(bank_file)
    if bank.n_qubits != bundle.n_qubits or bank.feature_dim != bundle.mlps[0].n_features:
        raise DataError("bank and bundle disagree on the qubit count")
    return bundle, bank


def check_compatible(bundle: ModelBundle, bank: MatchedFilterBank, dataset: TraceDataset, n_keep: int | None = None):
    if dataset.device.n_qubits != bundle.n_qubits:
        raise DataError(f"qubit count mismatch: bundle has {bundle.n_qubits}, dataset has {dataset.device.n_qubits}")
    if not np.allclose(bank.if_freqs, [q.if_freq for q in dataset.device.qubits]):
        raise DataError("IF frequency mismatch between bank and dataset")
    if bank.sample_rate != dataset.device.sample_rate:
        raise DataError("sample rate mismatch between bank and dataset")
    if n_keep is not None and not 1 <= n_keep <= min(bank.length, dataset.device.n_samples):
        raise DataError(
            f"kernel length mismatch: n_keep {n_keep} outside [1, {min(bank.length, dataset.device.n_samples)}]"
        )


def load_dataset(path) -> TraceDataset:
    try:
        return read_dataset(path)
    except FileNotFoundError as exc:
        raise DataError(f"dataset {path} not found") from exc
    except DatasetFormatError as exc:
        raise DataError(f"dataset {path}: {exc}") from exc


@dataclass
class PipelineResult:
    dataset: TraceDataset
    mtvs: np.ndarray
    cluster: ClusterModel
    cluster_labels: np.ndarray
    labels: np.ndarray
    bank: MatchedFilterBank
    features: np.ndarray
    bundle: ModelBundle
    report: EvalReport
    hashes: dict


def run_stage(name: str, fn, *args, **kw):
    log.info("stage %s", name)
    try:
        return fn(*args, **kw)
    except (DataError, NumericError):
        raise
    except (EigenSolverError, TrainingError, FloatingPointError) as exc:
        raise NumericError(f"stage '{name}': {exc}") from exc
    except Exception as exc:
        raise StageError(name, exc) from exc


def train_models(features, labels, dataset: TraceDataset, cfg: TrainConfig, threads: int = 1) -> list:
    tr, va = dataset.indices("train"), dataset.indices("val")

    def one(q):
        return train_mlp(features[tr], labels[tr, q], features[va], labels[va, q], cfg, qubit_index=q)

    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(one, range(labels.shape[1])))


def train_baselines(features, mtvs, labels, dataset: TraceDataset) -> dict:
    tr = dataset.indices("train", "val")
    out = {"lda": [], "qda": [], "qmf": []}
    for q in range(labels.shape[1]):
        qmf = features[tr, q * KERNELS_PER_QUBIT : q * KERNELS_PER_QUBIT + 3]
        out["qmf"].append(train_qmf_vote(qmf, labels[tr, q], qubit_index=q))
        for kind in ("lda", "qda"):
            out[kind].append(train_discriminant(kind.upper(), mtvs[tr, q], labels[tr, q], qubit_index=q))
    return out


def baseline_predictions(baselines: dict, features, mtvs) -> dict:
    preds = {}
    for kind, models in baselines.items():
        if kind == "qmf":
            cols = [features[:, m.qubit_index * KERNELS_PER_QUBIT : m.qubit_index * KERNELS_PER_QUBIT + 3] for m in models]
            preds[kind] = np.stack([m.predict(c) for m, c in zip(models, cols)], axis=1)
        else:
            preds[kind] = np.stack([m.predict(mtvs[:, m.qubit_index]) for m in models], axis=1)
    return preds


def simulate(cfg: RunConfig, out_dir) -> tuple[TraceDataset, Path]:
    device = cfg.device_config()
    states = cfg.state_list(device.n_qubits)
    ds = generate_dataset(device, states, cfg.shots_per_state, workers=cfg.threads)
    path = Path(out_dir) / "dataset.qrt"
    write_dataset(ds, path)
    return ds, path


def run_pipeline(cfg: RunConfig, out_dir) -> PipelineResult:
    """Run every stage and write all artifacts to ``out_dir``.

    On failure a ``FAILED`` file naming the stage is left in ``out_dir``;
    anything else there may be partial.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    marker = out / FAILED_MARKER
    marker.unlink(missing_ok=True)
    try:
        return _run(cfg, out)
    except (StageError, DataError, NumericError) as exc:
        marker.write_text(f"{exc}\n")
        raise


def _run(cfg: RunConfig, out: Path) -> PipelineResult:
    hashes = {}
    if cfg.dataset is not None:
        dataset = run_stage("load", load_dataset, cfg.resolve(cfg.dataset))
    else:
        dataset, path = run_stage("simulate", simulate, cfg, out)
        hashes["dataset.qrt"] = jsonio.file_sha256(path)

    n = dataset.device.n_qubits
    fit = dataset.indices("train", "val")
    mtvs = run_stage("mtv", dataset_mtvs, dataset)
    cluster_opts = dict(cfg.cluster)
    m = cluster_opts.pop("m", 500)
    restarts = cluster_opts.pop("restarts", 100)
    clusters = run_stage(
        "cluster", fit_cluster_model, mtvs[fit], dataset.prep[fit], m, derive_seed(cfg.seed, "cluster"), restarts, **cluster_opts
    )
    cluster_labels = clusters.predict(mtvs)
    labels = training_labels(dataset, cluster_labels, cfg.labels)

    tr = dataset.indices("train")
    bank = run_stage(
        "bank",
        build_filter_bank,
        dataset,
        labels[tr],
        clusters.level_centroids,
        tr,
        cfg.min_error_traces,
        cfg.denominator,
        f"seed={dataset.seed}",
    )
    hashes["bank.json"] = bank.save(out / "bank.json")
    features = run_stage("features", dataset_features, bank, dataset)

    tcfg = cfg.train_config()
    mlps = run_stage("train", train_models, features, labels, dataset, tcfg, cfg.threads)
    baselines = run_stage("baselines", train_baselines, features, mtvs, labels, dataset)
    bundle = ModelBundle(
        mlps=mlps,
        cluster=clusters,
        train_config=tcfg,
        bank_path="bank.json",
        bank_sha256=hashes["bank.json"],
        labels=cfg.labels,
        baselines=baselines,
    )
    hashes["model.json"] = bundle.save(out / "model.json")

    def evaluate():
        te = dataset.indices("test")
        truth = dataset.initial_levels[te]
        preds = {"mlp": predict_levels(mlps, features[te])}
        preds.update(baseline_predictions(baselines, features[te], mtvs[te]))
        methods = {k: per_qubit_fidelity(p, truth)[0] for k, p in preds.items()}
        leak = [leakage_metrics(preds["mlp"][:, q], truth[:, q]) for q in range(n)]
        cl = [cluster_leakage(cluster_labels[:, q], dataset.truths, q) for q in range(n)]
        sweep = [s for s in cfg.sweep if s <= bank.length]
        rows = duration_sweep(dataset, bank, mlps, sweep, te, truth, workers=cfg.threads)
        return EvalReport(
            methods=methods,
            leakage=leak,
            cluster_leakage=cl,
            sweep=rows,
            scaling=scaling_report(cfg.scaling_n, cfg.scaling_k),
            exclude_qubits=tuple(cfg.exclude_qubits),
            meta={"n_test": int(len(te)), "n_shots": len(dataset), "labels": cfg.labels, "config": {k: v for k, v in cfg.to_dict().items() if k != "threads"}},
        )

    report = run_stage("evaluate", evaluate)
    hashes.update(run_stage("report", report.write, out))
    return PipelineResult(dataset, mtvs, clusters, cluster_labels, labels, bank, features, bundle, report, hashes)


def classify(bundle: ModelBundle, bank: MatchedFilterBank, dataset: TraceDataset, n_keep: int | None = None, indices=None):
    """Predicted levels ``(S, n)`` and probabilities ``(S, n, 3)``."""
    check_compatible(bundle, bank, dataset, n_keep)
    if n_keep is not None:
        bank = truncate_bank(bank, n_keep)
    feats = dataset_features(bank, dataset, indices, n_keep)
    probs = np.stack([m.predict_proba(feats) for m in bundle.mlps], axis=1)
    return np.argmax(probs, axis=2), probs
