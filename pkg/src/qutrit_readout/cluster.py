"""Calibration-free leakage discovery by spectral clustering of MTV points.

Points are complex mean trace values.  A subsample is clustered into three
groups through the normalized-Laplacian embedding; every other point is
assigned to the nearest cluster centroid.  The two large clusters are then
named after the computational preparation that dominates them and the
remaining (small) cluster is called leaked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numba
import numpy as np

from . import jsonio
from .linalg import jacobi_eigh
from .rng import derive_seed, stream

N_CLUSTERS = 3


def _splitmix64(x: np.ndarray) -> np.ndarray:
    x = x.astype(np.uint64)
    with np.errstate(over="ignore"):
        x = x + np.uint64(0x9E3779B97F4A7C15)
        x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
        x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def hash_order(points: np.ndarray, seed: int) -> np.ndarray:
    """Pseudo-random ordering of points keyed on their values and ``seed``.

    The order depends on the set of points, not on their positions in the
    input array; exact duplicates end up adjacent.
    """
    pts = np.ascontiguousarray(points, dtype=np.complex128)
    bits = pts.view(np.uint64).reshape(-1, 2)
    with np.errstate(over="ignore"):
        key = _splitmix64(bits[:, 0] ^ np.uint64(seed & 0xFFFFFFFFFFFFFFFF))
        key = _splitmix64(key ^ bits[:, 1])
    return np.lexsort((pts.imag, pts.real, key))


def uniform_subsample(points: np.ndarray, m: int, seed: int) -> np.ndarray:
    """``m`` points drawn uniformly without replacement (first ``m`` in hash order)."""
    return hash_order(points, seed)[:m]


@numba.njit(cache=True)
def _greedy_net(x, y, order, r):
    sel = np.empty(len(order), dtype=np.int64)
    n_sel = 0
    r2 = r * r
    for i in order:
        keep = True
        for k in range(n_sel):
            j = sel[k]
            dx = x[i] - x[j]
            dy = y[i] - y[j]
            if dx * dx + dy * dy <= r2:
                keep = False
                break
        if keep:
            sel[n_sel] = i
            n_sel += 1
    return sel[:n_sel]


def thinned_subsample(points: np.ndarray, m: int, seed: int, iterations: int = 40):
    """Spatially thinned subsample of at most ``m`` points.

    Walks the points in hash order and keeps a point only if no kept point
    lies within radius ``r``; ``r`` is the smallest radius (found by
    bisection) whose net has at most ``m`` points.  Sparse regions, such as
    a rare leaked population, keep almost all their points while dense
    blobs are thinned, so every occupied region of the plane is represented.

    Returns ``(indices, r)``.
    """
    pts = np.asarray(points, dtype=np.complex128)
    order = hash_order(pts, seed)
    x, y = pts.real.copy(), pts.imag.copy()
    net = _greedy_net(x, y, order, 0.0)
    if len(net) <= m:
        return net, 0.0
    lo, hi = 0.0, float(np.max(np.abs(pts - pts.mean()))) * 2.0
    best = _greedy_net(x, y, order, hi)
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        net = _greedy_net(x, y, order, mid)
        if len(net) > m:
            lo = mid
        else:
            hi, best = mid, net
    return best, hi


@dataclass
class KMeansResult:
    labels: np.ndarray
    centers: np.ndarray
    objective: float
    history: list
    restart: int


def _kmeans_pp(x: np.ndarray, k: int, gen: np.random.Generator) -> np.ndarray:
    centers = [x[gen.integers(len(x))]]
    for _ in range(1, k):
        d2 = np.min(((x[:, None, :] - np.array(centers)[None]) ** 2).sum(-1), axis=1)
        total = d2.sum()
        if total <= 0:
            centers.append(x[gen.integers(len(x))])
        else:
            centers.append(x[np.searchsorted(np.cumsum(d2), gen.random() * total, side="right").clip(max=len(x) - 1)])
    return np.array(centers)


def _lloyd(x: np.ndarray, centers: np.ndarray, max_iter: int = 300):
    history = []
    labels = None
    for _ in range(max_iter):
        d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
        new = np.argmin(d2, axis=1)
        history.append(float(d2[np.arange(len(x)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in range(len(centers)):
            members = x[labels == c]
            if len(members):
                centers[c] = members.mean(axis=0)
    d2 = ((x[:, None, :] - centers[None]) ** 2).sum(-1)
    return labels, centers, float(d2[np.arange(len(x)), labels].sum()), history


def kmeans(x: np.ndarray, k: int, seed: int, restarts: int = 100) -> KMeansResult:
    """Lloyd's k-means with k-means++ seeding, best of ``restarts`` runs.

    Restart ``r`` seeds from substream ``r`` of ``seed``; ties in the final
    objective go to the lowest restart index.
    """
    x = np.asarray(x, dtype=float)
    best = None
    for r in range(restarts):
        labels, centers, obj, hist = _lloyd(x, _kmeans_pp(x, k, stream(seed, r)))
        if best is None or obj < best.objective:
            best = KMeansResult(labels, centers, obj, hist, r)
    return best


@dataclass
class SpectralResult:
    assignment: np.ndarray
    centroids: np.ndarray
    subsample: np.ndarray
    bandwidth: float
    eigenvalues: np.ndarray
    kmeans: KMeansResult


def _bandwidth(p: np.ndarray, dist: np.ndarray, rule: str, scale: float) -> float:
    if rule == "median":
        upper = dist[np.triu_indices(len(p), 1)]
        sigma = float(np.median(upper))
        return sigma if sigma > 0 else float(np.median(upper[upper > 0]))
    masked = dist + np.diag(np.full(len(p), np.inf))
    return scale * float(np.median(masked.min(axis=1)))


def spectral_cluster(
    points,
    m: int,
    seed: int,
    restarts: int = 100,
    sampling: str = "thinned",
    bandwidth: str = "net",
    bandwidth_scale: float = 2.0,
) -> SpectralResult:
    """Split complex points into three clusters.

    Parameters
    ----------
    points : complex array
    m : maximum subsample size for the dense eigenproblem
    seed : 64-bit seed for subsampling and k-means restarts
    sampling : "thinned" (spatial net, see ``thinned_subsample``) or
        "uniform" (plain random subsample)
    bandwidth : "net" sets the Gaussian width to ``bandwidth_scale`` times
        the median nearest-neighbour distance inside the subsample;
        "median" uses the median pairwise distance.

    The affinity ``exp(-|p_i - p_j|^2 / (2 sigma^2))`` has a zero diagonal.
    Points outside the subsample join the cluster with the nearest centroid.
    """
    pts = np.asarray(points, dtype=complex).ravel()
    if len(pts) < N_CLUSTERS:
        raise ValueError("need at least 3 points")
    if not N_CLUSTERS <= m <= len(pts):
        raise ValueError(f"subsample size must lie in [3, {len(pts)}], got {m}")
    if len(np.unique(pts)) < N_CLUSTERS:
        raise ValueError("fewer than 3 distinct points")
    if sampling not in ("thinned", "uniform") or bandwidth not in ("net", "median"):
        raise ValueError("unknown sampling or bandwidth rule")

    sub_seed = derive_seed(seed, "subsample")
    if sampling == "thinned":
        sub, _ = thinned_subsample(pts, m, sub_seed)
    else:
        sub = uniform_subsample(pts, m, sub_seed)
    p = pts[sub]
    if len(np.unique(p)) < N_CLUSTERS:
        raise ValueError("fewer than 3 distinct points in the subsample")
    dist = np.abs(p[:, None] - p[None, :])
    sigma = _bandwidth(p, dist, bandwidth, bandwidth_scale)
    affinity = np.exp(-(dist**2) / (2 * sigma**2))
    np.fill_diagonal(affinity, 0.0)
    degree = affinity.sum(axis=1)
    d_inv_sqrt = 1.0 / np.sqrt(np.maximum(degree, np.finfo(float).tiny))
    lap = np.eye(len(p)) - affinity * d_inv_sqrt[:, None] * d_inv_sqrt[None, :]
    w, v = jacobi_eigh(lap)
    emb = v[:, :N_CLUSTERS]
    norms = np.linalg.norm(emb, axis=1, keepdims=True)
    emb = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
    km = kmeans(emb, N_CLUSTERS, derive_seed(seed, "kmeans"), restarts)

    centroids = np.array([p[km.labels == c].mean() for c in range(N_CLUSTERS)])
    assignment = np.argmin(np.abs(pts[:, None] - centroids[None, :]), axis=1)
    assignment[sub] = km.labels
    return SpectralResult(assignment, centroids, sub, sigma, w[:N_CLUSTERS], km)


@dataclass
class QubitClusters:
    """Cluster fit of one qubit; ``label_map[c]`` is the level of cluster ``c``."""

    centroids: np.ndarray
    label_map: tuple[int, int, int]
    sizes: tuple[int, int, int]
    bandwidth: float
    subsample: np.ndarray
    method: str = "majority"

    @property
    def level_centroids(self) -> np.ndarray:
        out = np.empty(3, dtype=complex)
        for c, lvl in enumerate(self.label_map):
            out[lvl] = self.centroids[c]
        return out

    def predict(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=complex)
        nearest = np.argmin(np.abs(pts[..., None] - self.centroids), axis=-1)
        return np.asarray(self.label_map)[nearest]


def assign_labels(result: SpectralResult, prep_labels, points=None) -> QubitClusters:
    """Name the three clusters after the levels they contain.

    ``prep_labels`` gives the prepared level of every point, or -1 when
    unknown.  ``points`` (the clustered MTVs) is needed only for the
    centroid-matching fallback.
    """
    assign = np.asarray(result.assignment)
    prep = np.asarray(prep_labels)
    sizes = np.bincount(assign, minlength=N_CLUSTERS)
    if np.any(sizes == 0):
        raise ValueError("empty cluster")
    known = prep >= 0
    counts = np.zeros((N_CLUSTERS, 3), dtype=np.int64)
    np.add.at(counts, (assign[known], prep[known]), 1)
    totals = np.maximum(counts.sum(axis=0), 1)

    def vote(c, levels):
        scored = [(counts[c, l], counts[c, l] / totals[l], -l) for l in levels]
        return -max(scored)[2]

    method = "majority"
    majority = [vote(c, (0, 1, 2)) for c in range(N_CLUSTERS)]
    if sorted(majority) == [0, 1, 2] and all(counts[c, majority[c]] > 0 for c in range(N_CLUSTERS)):
        label_map = tuple(majority)
    else:
        order = sorted(range(N_CLUSTERS), key=lambda c: (-sizes[c], c))
        big = [vote(c, (0, 1)) for c in order[:2]]
        if big[0] != big[1]:
            label_map = [2, 2, 2]
            label_map[order[0]], label_map[order[1]] = big
            label_map = tuple(label_map)
        else:
            method = "centroid"
            label_map = _match_centroids(result, prep, points)
    return QubitClusters(
        centroids=np.asarray(result.centroids),
        label_map=label_map,
        sizes=tuple(int(s) for s in sizes),
        bandwidth=result.bandwidth,
        subsample=np.asarray(result.subsample),
        method=method,
    )


def _match_centroids(result: SpectralResult, prep, points) -> tuple[int, int, int]:
    if points is None:
        raise ValueError("centroid fallback needs the clustered points")
    pts = np.asarray(points, dtype=complex)
    means = {l: pts[prep == l].mean() for l in range(3) if np.any(prep == l)}
    best, best_cost = None, np.inf
    for perm in itertools.permutations(range(3)):
        cost = sum(abs(result.centroids[c] - means[lvl]) for c, lvl in enumerate(perm) if lvl in means)
        if cost < best_cost:
            best, best_cost = perm, cost
    return tuple(best)


@dataclass
class ClusterModel:
    qubits: list[QubitClusters]
    m: int
    seed: int
    restarts: int = 100
    meta: dict = field(default_factory=dict)

    @property
    def level_centroids(self) -> np.ndarray:
        """``(n, 3)`` centroids indexed by level."""
        return np.array([qc.level_centroids for qc in self.qubits])

    def predict(self, mtvs) -> np.ndarray:
        mtvs = np.atleast_2d(mtvs)
        return np.stack([qc.predict(mtvs[:, q]) for q, qc in enumerate(self.qubits)], axis=1)

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "seed": self.seed,
            "restarts": self.restarts,
            "qubits": [
                {
                    "centroids": jsonio.complex_pairs(qc.centroids),
                    "label_map": list(qc.label_map),
                    "sizes": list(qc.sizes),
                    "bandwidth": qc.bandwidth,
                    "subsample": [int(i) for i in qc.subsample],
                    "method": qc.method,
                }
                for qc in self.qubits
            ],
            "meta": self.meta,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterModel":
        qubits = [
            QubitClusters(
                centroids=jsonio.from_pairs(q["centroids"]),
                label_map=tuple(q["label_map"]),
                sizes=tuple(q["sizes"]),
                bandwidth=q["bandwidth"],
                subsample=np.array(q["subsample"], dtype=np.int64),
                method=q["method"],
            )
            for q in d["qubits"]
        ]
        return cls(qubits=qubits, m=d["m"], seed=d["seed"], restarts=d["restarts"], meta=d.get("meta", {}))


def fit_cluster_model(mtvs, prep, m: int = 500, seed: int = 0, restarts: int = 100, **options) -> ClusterModel:
    """Cluster every qubit's MTVs; ``prep`` is ``(shots, n)`` prepared levels.

    ``options`` are passed on to :func:`spectral_cluster`.
    """
    mtvs = np.atleast_2d(mtvs)
    prep = np.atleast_2d(prep)
    qubits = []
    for q in range(mtvs.shape[1]):
        res = spectral_cluster(mtvs[:, q], min(m, mtvs.shape[0]), derive_seed(seed, f"qubit{q}"), restarts, **options)
        qubits.append(assign_labels(res, prep[:, q], mtvs[:, q]))
    return ClusterModel(qubits=qubits, m=m, seed=seed, restarts=restarts, meta=dict(options))
