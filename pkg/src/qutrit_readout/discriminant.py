"""Gaussian discriminant baselines (LDA, QDA) on per-qubit MTV points."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KINDS = ("LDA", "QDA")


def as_plane(points) -> np.ndarray:
    """Complex MTVs -> ``(N, 2)`` real; real ``(N, 2)`` input passes through."""
    a = np.asarray(points)
    if np.iscomplexobj(a) or a.ndim == 1:
        a = a.ravel()
        return np.stack([a.real, a.imag], axis=1).astype(float)
    return a.astype(float)


def _regularize(cov: np.ndarray) -> np.ndarray:
    dim = cov.shape[0]
    lam = 1e-6 * np.trace(cov) / dim
    return cov + lam * np.eye(dim)


@dataclass
class DiscriminantModel:
    kind: str
    classes: np.ndarray
    means: np.ndarray  # (c, 2)
    covariances: np.ndarray  # (c, 2, 2); LDA repeats the pooled matrix
    priors: np.ndarray
    qubit_index: int = 0

    def __post_init__(self):
        self._chol = []
        for cov in self.covariances:
            if not np.allclose(cov, cov.T):
                raise ValueError("covariance is not symmetric")
            try:
                self._chol.append(np.linalg.cholesky(cov))
            except np.linalg.LinAlgError:
                raise ValueError("singular covariance even after regularization") from None

    def log_posterior(self, points) -> np.ndarray:
        """Gaussian log-likelihood plus log prior, up to a shared constant."""
        x = as_plane(points)
        out = np.empty((len(x), len(self.classes)))
        for c, (mu, chol) in enumerate(zip(self.means, self._chol)):
            r = np.linalg.solve(chol, (x - mu).T)
            out[:, c] = -0.5 * np.sum(r * r, axis=0) - np.sum(np.log(np.diag(chol))) + np.log(self.priors[c])
        return out

    def predict(self, points) -> np.ndarray:
        return self.classes[np.argmax(self.log_posterior(points), axis=1)]

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "classes": self.classes.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "priors": self.priors.tolist(),
            "qubit_index": self.qubit_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DiscriminantModel":
        return cls(
            kind=d["kind"],
            classes=np.array(d["classes"], dtype=np.int64),
            means=np.array(d["means"], dtype=float),
            covariances=np.array(d["covariances"], dtype=float),
            priors=np.array(d["priors"], dtype=float),
            qubit_index=d["qubit_index"],
        )


def train_discriminant(kind: str, mtv_features, labels, qubit_index: int = 0) -> DiscriminantModel:
    """Fit LDA (pooled covariance) or QDA (per-class covariance).

    Every covariance gets ``lambda * I`` added with
    ``lambda = 1e-6 * trace / dim``.
    """
    if kind not in KINDS:
        raise ValueError(f"kind must be one of {KINDS}")
    x = as_plane(mtv_features)
    y = np.asarray(labels).ravel()
    if len(x) != len(y):
        raise ValueError("features and labels differ in length")
    classes, counts = np.unique(y, return_counts=True)
    if len(classes) < 2:
        raise ValueError("need at least two classes")
    if np.any(counts < 2):
        raise ValueError(f"class {classes[counts < 2].tolist()} has fewer than 2 samples")
    means = np.array([x[y == c].mean(axis=0) for c in classes])
    priors = counts / counts.sum()
    if kind == "QDA":
        covs = np.array([_regularize(np.cov(x[y == c], rowvar=False)) for c in classes])
    else:
        resid = np.concatenate([x[y == c] - means[i] for i, c in enumerate(classes)])
        pooled = resid.T @ resid / (len(x) - len(classes))
        covs = np.repeat(_regularize(pooled)[None], len(classes), axis=0)
    return DiscriminantModel(kind, classes, means, covs, priors, qubit_index)


@dataclass
class QMFVoteModel:
    """Threshold each pairwise QMF output and take the majority level.

    ``thresholds[j]`` sits midway between the training means of the two
    classes of pair ``pairs[j]``; ``signs[j]`` is +1 when the first level
    lies above it.  Pairs whose means coincide (zero kernels) abstain.
    Three-way ties go to the largest summed normalized margin, then the
    lowest level.
    """

    pairs: tuple
    thresholds: np.ndarray
    signs: np.ndarray
    scales: np.ndarray
    qubit_index: int = 0

    def predict(self, qmf_features) -> np.ndarray:
        f = np.atleast_2d(np.asarray(qmf_features, dtype=float))
        votes = np.zeros((len(f), 3))
        margin = np.zeros((len(f), 3))
        for j, (a, b) in enumerate(self.pairs):
            if self.signs[j] == 0:
                continue
            m = self.signs[j] * (f[:, j] - self.thresholds[j]) / self.scales[j]
            votes[:, a] += m > 0
            votes[:, b] += m <= 0
            margin[:, a] += m
            margin[:, b] -= m
        # lexicographic (votes, margin, -level) maximum
        best = votes.max(axis=1, keepdims=True)
        margin = np.where(votes == best, margin, -np.inf)
        return np.argmax(margin, axis=1)

    def to_dict(self) -> dict:
        return {
            "pairs": [list(p) for p in self.pairs],
            "thresholds": self.thresholds.tolist(),
            "signs": self.signs.tolist(),
            "scales": self.scales.tolist(),
            "qubit_index": self.qubit_index,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QMFVoteModel":
        return cls(
            pairs=tuple(tuple(p) for p in d["pairs"]),
            thresholds=np.array(d["thresholds"], dtype=float),
            signs=np.array(d["signs"], dtype=np.int64),
            scales=np.array(d["scales"], dtype=float),
            qubit_index=d["qubit_index"],
        )


def train_qmf_vote(qmf_features, labels, pairs=((0, 1), (0, 2), (1, 2)), qubit_index: int = 0) -> QMFVoteModel:
    f = np.atleast_2d(np.asarray(qmf_features, dtype=float))
    y = np.asarray(labels).ravel()
    thr, sgn, scl = [], [], []
    for j, (a, b) in enumerate(pairs):
        fa, fb = f[y == a, j], f[y == b, j]
        if len(fa) == 0 or len(fb) == 0 or fa.mean() == fb.mean():
            t, s, w = 0.0, 0, 1.0
        else:
            t, s, w = 0.5 * (fa.mean() + fb.mean()), int(np.sign(fa.mean() - fb.mean())), abs(fa.mean() - fb.mean())
        thr.append(t)
        sgn.append(s)
        scl.append(w)
    return QMFVoteModel(tuple(pairs), np.array(thr), np.array(sgn), np.array(scl), qubit_index)
