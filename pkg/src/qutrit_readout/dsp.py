"""Demodulation, mean trace values and the matched-filter bank.

Feature layout
--------------
A bank holds nine kernels per qubit, in this order::

    0 QMF(0|1)   1 QMF(0|2)   2 QMF(1|2)
    3 RMF(1->0)  4 RMF(2->0)  5 RMF(2->1)
    6 EMF(0->1)  7 EMF(0->2)  8 EMF(1->2)

and feature ``9 * q + j`` is the response of kernel ``j`` of qubit ``q``
(qubit-major, kernel-kind-minor).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import jsonio

KERNEL_KINDS = (
    "QMF(0|1)", "QMF(0|2)", "QMF(1|2)",
    "RMF(1->0)", "RMF(2->0)", "RMF(2->1)",
    "EMF(0->1)", "EMF(0->2)", "EMF(1->2)",
)
KERNELS_PER_QUBIT = len(KERNEL_KINDS)
QMF_PAIRS = ((0, 1), (0, 2), (1, 2))
# kernel index of the error class for a trace labelled `src` whose MTV sits nearest `dst`
ERROR_KERNEL = {(1, 0): 3, (2, 0): 4, (2, 1): 5, (0, 1): 6, (0, 2): 7, (1, 2): 8}
ERROR_TRANSITION = {v: k for k, v in ERROR_KERNEL.items()}
NO_ERROR = -1
DENOMINATORS = ("difference", "sum")


def error_tag_name(tag: int) -> str:
    if tag == NO_ERROR:
        return "none"
    src, dst = ERROR_TRANSITION[tag]
    return f"{'relax' if dst < src else 'excite'}({src}->{dst})"


@dataclass
class BasebandTrace:
    samples: np.ndarray
    qubit_index: int

    def __len__(self) -> int:
        return len(self.samples)


def demodulate_samples(i_samples, q_samples, if_freq: float, sample_rate: float, n_keep: int | None = None) -> np.ndarray:
    """Down-convert raw I/Q (1-D or ``(shots, N)``) to complex baseband."""
    i_samples = np.asarray(i_samples)
    n = i_samples.shape[-1]
    n_keep = n if n_keep is None else int(n_keep)
    if not 1 <= n_keep <= n:
        raise ValueError(f"n_keep must lie in [1, {n}], got {n_keep}")
    lo = np.exp(-2j * np.pi * if_freq * np.arange(n_keep) / sample_rate)
    z = i_samples[..., :n_keep].astype(np.float64) + 1j * np.asarray(q_samples)[..., :n_keep].astype(np.float64)
    return z * lo


def demodulate(shot, qubit, n_keep: int, sample_rate: float = 500e6) -> BasebandTrace:
    """Baseband trace of ``qubit`` (a ``QubitConfig``) from one raw shot."""
    z = demodulate_samples(shot.i_samples, shot.q_samples, qubit.if_freq, sample_rate, n_keep)
    return BasebandTrace(z, qubit.index)


def _as_matrix(traces) -> np.ndarray:
    if isinstance(traces, np.ndarray):
        return np.atleast_2d(traces)
    rows = [t.samples if isinstance(t, BasebandTrace) else np.asarray(t) for t in traces]
    if not rows:
        return np.empty((0, 0), dtype=complex)
    if len({len(r) for r in rows}) != 1:
        raise ValueError("traces have mismatched lengths")
    return np.array(rows, dtype=complex)


def mtv(trace):
    """Mean trace value; a ``(shots, N)`` array gives one value per row."""
    samples = trace.samples if isinstance(trace, BasebandTrace) else np.asarray(trace)
    if samples.shape[-1] == 0:
        raise ValueError("empty trace")
    return samples.mean(axis=-1)


def build_kernel(traces_a, traces_b, denominator: str = "difference") -> np.ndarray:
    """Matched-filter taps separating class ``a`` from class ``b``.

    ``K[t] = (mu_b[t] - mu_a[t]) / D[t]`` where ``D = var_b - var_a`` for
    ``denominator="difference"`` and ``var_b + var_a`` for ``"sum"``.  The
    per-bin variance is the sample variance of the real part plus that of
    the imaginary part.  Near-zero denominators are pushed away from zero by
    ``1e-12 * max|D|`` and bins with ``D == 0`` fall back to the mean
    difference.

    With equal-variance white noise the variance difference is pure
    estimation noise, so the "sum" form is the one that gives a usable
    filter in that regime.
    """
    a, b = _as_matrix(traces_a), _as_matrix(traces_b)
    if a.shape[0] < 2 or b.shape[0] < 2:
        raise ValueError("each class needs at least 2 traces")
    if a.shape[1] != b.shape[1]:
        raise ValueError("traces have mismatched lengths")
    if denominator not in DENOMINATORS:
        raise ValueError(f"denominator must be one of {DENOMINATORS}")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    var_a = a.real.var(axis=0, ddof=1) + a.imag.var(axis=0, ddof=1)
    var_b = b.real.var(axis=0, ddof=1) + b.imag.var(axis=0, ddof=1)
    den = var_b - var_a if denominator == "difference" else var_b + var_a
    num = mu_b - mu_a
    scale = np.max(np.abs(den))
    den = den + np.sign(den) * 1e-12 * scale
    kernel = num.copy()
    ok = den != 0
    kernel[ok] = num[ok] / den[ok]
    return kernel


def tag_error_traces(mtvs, labels, centroids) -> np.ndarray:
    """Tag traces whose MTV sits strictly nearer another level's centroid.

    Parameters
    ----------
    mtvs : complex array, shape (shots, n)
    labels : int array, shape (shots, n)
        Assigned level of each trace.
    centroids : complex array, shape (n, 3)

    Returns
    -------
    int array, shape (shots, n)
        Kernel index of the matching RMF/EMF class (see ``ERROR_KERNEL``)
        or ``NO_ERROR``.
    """
    mtvs = np.atleast_2d(np.asarray(mtvs, dtype=complex))
    labels = np.atleast_2d(np.asarray(labels))
    centroids = np.atleast_2d(np.asarray(centroids, dtype=complex))
    if centroids.shape != (mtvs.shape[1], 3) or not np.all(np.isfinite(centroids)):
        raise ValueError("need 3 finite centroids for every qubit")
    dist = np.abs(mtvs[:, :, None] - centroids[None, :, :])
    own = np.take_along_axis(dist, labels[:, :, None], axis=2)[:, :, 0]
    others = dist.copy()
    np.put_along_axis(others, labels[:, :, None], np.inf, axis=2)
    nearest = np.argmin(others, axis=2)
    closer = np.min(others, axis=2) < own
    table = np.full((3, 3), NO_ERROR)
    for (src, dst), k in ERROR_KERNEL.items():
        table[src, dst] = k
    return np.where(closer, table[labels, nearest], NO_ERROR)


@dataclass
class MatchedFilterKernel:
    taps: np.ndarray
    kind: str
    qubit_index: int


@dataclass
class MatchedFilterBank:
    """Nine kernels per qubit plus what is needed to apply them to raw shots.

    ``taps`` has shape ``(n_qubits, 9, length)``.  ``zero_kernel`` flags
    kernels that had too few traces to build; their taps are all zero.
    """

    taps: np.ndarray
    if_freqs: np.ndarray
    sample_rate: float
    zero_kernel: np.ndarray
    source_id: str = ""
    denominator: str = "sum"
    class_counts: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n_qubits(self) -> int:
        return self.taps.shape[0]

    @property
    def length(self) -> int:
        return self.taps.shape[2]

    @property
    def feature_dim(self) -> int:
        return self.n_qubits * KERNELS_PER_QUBIT

    def kernels(self):
        for q in range(self.n_qubits):
            for j, kind in enumerate(KERNEL_KINDS):
                yield MatchedFilterKernel(self.taps[q, j], kind, q)

    def to_dict(self) -> dict:
        return {
            "kernel_kinds": list(KERNEL_KINDS),
            "taps": jsonio.complex_pairs(self.taps),
            "if_freqs": [float(f) for f in self.if_freqs],
            "sample_rate": float(self.sample_rate),
            "zero_kernel": self.zero_kernel.astype(bool).tolist(),
            "source_id": self.source_id,
            "denominator": self.denominator,
            "class_counts": None if self.class_counts is None else self.class_counts.tolist(),
            "kernel_length": self.length,
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MatchedFilterBank":
        if list(d["kernel_kinds"]) != list(KERNEL_KINDS):
            raise ValueError("bank file uses an unknown kernel ordering")
        return cls(
            taps=jsonio.from_pairs(d["taps"]).reshape(len(d["if_freqs"]), KERNELS_PER_QUBIT, -1),
            if_freqs=np.array(d["if_freqs"], dtype=float),
            sample_rate=float(d["sample_rate"]),
            zero_kernel=np.array(d["zero_kernel"], dtype=bool),
            source_id=d["source_id"],
            denominator=d["denominator"],
            class_counts=None if d["class_counts"] is None else np.array(d["class_counts"], dtype=np.int64),
            meta=d.get("meta", {}),
        )

    def save(self, path) -> str:
        return jsonio.dump(self.to_dict(), path)

    @classmethod
    def load(cls, path) -> "MatchedFilterBank":
        return cls.from_dict(jsonio.load(path))


def iter_baseband(dataset, qubit: int, indices=None, n_keep: int | None = None, chunk: int = 4096):
    """Yield ``(row_indices, z)`` blocks of demodulated traces for one qubit."""
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    dev = dataset.device
    f = dev.qubits[qubit].if_freq
    for start in range(0, len(idx), chunk):
        rows = idx[start : start + chunk]
        yield rows, demodulate_samples(dataset.i_samples[rows], dataset.q_samples[rows], f, dev.sample_rate, n_keep)


def dataset_mtvs(dataset, indices=None, n_keep: int | None = None) -> np.ndarray:
    """MTV of every selected shot for every qubit, shape ``(shots, n)``."""
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    out = np.empty((len(idx), dataset.device.n_qubits), dtype=complex)
    for q in range(dataset.device.n_qubits):
        pos = 0
        for rows, z in iter_baseband(dataset, q, idx, n_keep):
            out[pos : pos + len(rows), q] = mtv(z)
            pos += len(rows)
    return out


def build_filter_bank(
    dataset,
    labels,
    centroids,
    indices=None,
    min_error_traces: int = 20,
    denominator: str = "sum",
    source_id: str = "",
) -> MatchedFilterBank:
    """Build QMF, RMF and EMF kernels for every qubit.

    Parameters
    ----------
    dataset : TraceDataset
    labels : int array, shape (len(indices), n)
        Assigned level of each selected trace (cluster- or truth-based).
    centroids : complex array, shape (n, 3)
        Level centroids in MTV space, used to tag error traces.
    indices : shot indices to build from (default: every shot).
    min_error_traces : error classes with fewer tagged traces get a zero
        kernel, flagged in ``zero_kernel``.
    """
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    labels = np.asarray(labels).reshape(len(idx), -1)
    dev = dataset.device
    n = dev.n_qubits
    if labels.shape[1] != n:
        raise ValueError("labels do not match the device qubit count")
    length = dev.n_samples
    taps = np.zeros((n, KERNELS_PER_QUBIT, length), dtype=complex)
    zero = np.zeros((n, KERNELS_PER_QUBIT), dtype=bool)
    counts = np.zeros((n, KERNELS_PER_QUBIT, 2), dtype=np.int64)
    mtvs = dataset_mtvs(dataset, idx)
    tags = tag_error_traces(mtvs, labels, centroids)

    for q in range(n):
        z = np.concatenate([blk for _, blk in iter_baseband(dataset, q, idx)]) if len(idx) else np.empty((0, length))
        lab, tag = labels[:, q], tags[:, q]
        represented = [lvl for lvl in range(3) if np.count_nonzero(lab == lvl) >= 2]
        if len(represented) < 2:
            raise ValueError(f"qubit {q}: fewer than 2 levels represented in the labels")
        classes = {}
        for j, (a, b) in enumerate(QMF_PAIRS):
            classes[j] = (lab == a, lab == b, 2)
        for (src, dst), j in ERROR_KERNEL.items():
            classes[j] = ((lab == src) & (tag == NO_ERROR), (lab == src) & (tag == j), min_error_traces)
        for j in range(KERNELS_PER_QUBIT):
            mask_a, mask_b, need = classes[j]
            counts[q, j] = np.count_nonzero(mask_a), np.count_nonzero(mask_b)
            if counts[q, j, 0] < 2 or counts[q, j, 1] < max(need, 2):
                zero[q, j] = True
                continue
            taps[q, j] = build_kernel(z[mask_a], z[mask_b], denominator)

    return MatchedFilterBank(
        taps=taps,
        if_freqs=np.array([qb.if_freq for qb in dev.qubits]),
        sample_rate=dev.sample_rate,
        zero_kernel=zero,
        source_id=source_id,
        denominator=denominator,
        class_counts=counts,
        meta={"min_error_traces": min_error_traces},
    )


def bank_features(bank: MatchedFilterBank, i_samples, q_samples, n_keep: int | None = None) -> np.ndarray:
    """Feature matrix ``(shots, 9n)`` for raw I/Q arrays of shape ``(shots, N)``.

    Each feature is ``Re(sum_t conj(K[t]) z[t]) / n_keep``.
    """
    i_samples = np.atleast_2d(i_samples)
    q_samples = np.atleast_2d(q_samples)
    n_keep = bank.length if n_keep is None else int(n_keep)
    if not 1 <= n_keep <= bank.length:
        raise ValueError(f"n_keep must lie in [1, {bank.length}], got {n_keep}")
    if n_keep > i_samples.shape[1]:
        raise ValueError("n_keep exceeds the trace length")
    out = np.empty((i_samples.shape[0], bank.feature_dim))
    for q in range(bank.n_qubits):
        z = demodulate_samples(i_samples, q_samples, bank.if_freqs[q], bank.sample_rate, n_keep)
        k = bank.taps[q, :, :n_keep]
        out[:, q * KERNELS_PER_QUBIT : (q + 1) * KERNELS_PER_QUBIT] = (z.real @ k.real.T + z.imag @ k.imag.T) / n_keep
    return out


def dataset_features(bank: MatchedFilterBank, dataset, indices=None, n_keep: int | None = None, chunk: int = 4096) -> np.ndarray:
    if dataset.device.n_qubits != bank.n_qubits:
        raise ValueError(f"qubit count mismatch: bank has {bank.n_qubits}, dataset has {dataset.device.n_qubits}")
    idx = np.arange(len(dataset)) if indices is None else np.asarray(indices)
    parts = [
        bank_features(bank, dataset.i_samples[idx[s : s + chunk]], dataset.q_samples[idx[s : s + chunk]], n_keep)
        for s in range(0, len(idx), chunk)
    ]
    return np.concatenate(parts) if parts else np.empty((0, bank.feature_dim))


def apply_bank(bank: MatchedFilterBank, shot, n_keep: int | None = None) -> np.ndarray:
    """Feature vector of one raw shot."""
    if len(shot.truth.prepared_level) != bank.n_qubits:
        raise ValueError(
            f"qubit count mismatch: bank has {bank.n_qubits}, shot has {len(shot.truth.prepared_level)}"
        )
    return bank_features(bank, shot.i_samples, shot.q_samples, n_keep)[0]


def truncate_bank(bank: MatchedFilterBank, n_keep: int) -> MatchedFilterBank:
    if not 1 <= n_keep <= bank.length:
        raise ValueError(f"n_keep must lie in [1, {bank.length}], got {n_keep}")
    return MatchedFilterBank(
        taps=bank.taps[:, :, :n_keep].copy(),
        if_freqs=bank.if_freqs.copy(),
        sample_rate=bank.sample_rate,
        zero_kernel=bank.zero_kernel.copy(),
        source_id=bank.source_id,
        denominator=bank.denominator,
        class_counts=None if bank.class_counts is None else bank.class_counts.copy(),
        meta={**bank.meta, "truncated_from": bank.length},
    )
