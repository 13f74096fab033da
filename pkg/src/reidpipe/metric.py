"""Dimension reduction, KISSME metric learning, and set-to-set distances.

Descriptors are first projected by PCA, then compared under a learned
Mahalanobis metric.  KISSME derives the metric from the covariances of
same-person and different-person descriptor differences:

    M = clip_psd(inv(cov_similar) - inv(cov_dissimilar))

Two set-to-set measures compare the descriptor sets of a query and a
gallery identity: the global minimum pair distance, and the symmetric
average of per-element minimum distances

    d_avg(x, y) = sum_i min_j d(x_i, y_j) / (2 n_x)
                + sum_j min_i d(x_i, y_j) / (2 n_y).
"""

from __future__ import annotations

import struct
import warnings
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (CrcMismatch, DimMismatch, EmptySet, FormatError,
                     InsufficientPairs, RankReducedWarning, SingularCovariance)

COVARIANCE_SHRINKAGE = 1e-4

MODEL_MAGIC = b"RDM1"


@dataclass(frozen=True)
class PcaModel:
    """Mean plus an orthonormal (p, d) projection basis."""

    mean: np.ndarray
    components: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        comps = np.asarray(self.components, dtype=np.float64)
        if mean.ndim != 1 or comps.ndim != 2 or comps.shape[1] != mean.shape[0]:
            raise DimMismatch(
                f"components {comps.shape} incompatible with mean {mean.shape}")
        gram = comps @ comps.T
        if not np.allclose(gram, np.eye(len(comps)), atol=1e-8):
            raise ValueError("component rows must be orthonormal")
        mean.setflags(write=False)
        comps.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "components", comps)

    @property
    def p(self) -> int:
        return self.components.shape[0]

    @property
    def d(self) -> int:
        return self.components.shape[1]


@dataclass(frozen=True)
class MahalanobisModel:
    """Symmetric positive-semidefinite distance matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimMismatch(f"expected square matrix, got {m.shape}")
        if not np.allclose(m, m.T, atol=1e-10):
            raise ValueError("matrix must be symmetric")
        scale = max(1.0, float(np.abs(m).max()))
        if np.linalg.eigvalsh(m).min() < -1e-10 * scale:
            raise ValueError("matrix must be positive semidefinite")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def p(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class PairSet:
    """Cross-camera descriptor pairs for metric learning.

    ``similar`` holds same-person pairs, ``dissimilar`` different-person
    pairs; a pair never appears in both by construction.
    """

    similar: tuple
    dissimilar: tuple

    def __post_init__(self):
        object.__setattr__(self, "similar", tuple(self.similar))
        object.__setattr__(self, "dissimilar", tuple(self.dissimilar))


@dataclass(frozen=True)
class MetricModel:
    """Fitted projection and distance matrix, as serialized to disk."""

    pca: PcaModel
    maha: MahalanobisModel

    def __post_init__(self):
        if self.maha.p != self.pca.p:
            raise DimMismatch(
                f"metric dim {self.maha.p} != projection dim {self.pca.p}")


def fit_pca(descriptors, p: int) -> PcaModel:
    """Top-p eigenvectors of the sample covariance of the descriptors.

    Components are ordered by descending eigenvalue, and each is signed
    so its largest-magnitude entry is positive.  If the data rank is
    below ``p`` (including when there are fewer samples than ``p``), the
    dimension is reduced to the rank and a RankReducedWarning is issued.
    """
    X = np.asarray([np.asarray(d, dtype=np.float64) for d in descriptors])
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimMismatch("need at least 2 descriptors of equal dimension")
    if p < 1:
        raise ValueError("p must be >= 1")
    n, d = X.shape

    mean = X.mean(axis=0)
    cov = np.cov(X, rowvar=False, bias=False).reshape(d, d)
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals, eigvecs = eigvals[order], eigvecs[:, order]

    tol = max(eigvals[0], 0.0) * 1e-10 + 1e-12
    rank = int(np.sum(eigvals > tol))
    p_eff = min(p, d, n - 1)
    if rank < p_eff:
        p_eff = max(rank, 1)
    if p_eff < p:
        warnings.warn(RankReducedWarning(p_eff), stacklevel=2)

    comps = eigvecs[:, :p_eff].T.copy()
    for row in comps:
        if row[np.argmax(np.abs(row))] < 0:
            row *= -1
    return PcaModel(mean=mean, components=comps)


def project(model: PcaModel, v: np.ndarray) -> np.ndarray:
    """Project a vector (or a batch of row vectors) into PCA space."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] != model.d:
        raise DimMismatch(f"vector dim {v.shape[-1]} != model dim {model.d}")
    return (v - model.mean) @ model.components.T


def _pair_covariance(pairs) -> np.ndarray:
    diffs = np.asarray([np.asarray(a, dtype=np.float64) - b for a, b in pairs])
    # Differences of unordered pairs are symmetric around zero, so the
    # second moment is the covariance; no mean subtraction.
    return diffs.T @ diffs / len(diffs)


def _regularized_inverse(sigma: np.ndarray) -> np.ndarray:
    p = sigma.shape[0]
    reg = COVARIANCE_SHRINKAGE * np.trace(sigma) / p
    try:
        return np.linalg.inv(sigma + reg * np.eye(p))
    except np.linalg.LinAlgError:
        raise SingularCovariance(
            "pair covariance singular after regularization") from None


def fit_kissme(pairs: PairSet) -> MahalanobisModel:
    """Difference of inverse pair covariances, clipped to the PSD cone."""
    if not pairs.similar or not pairs.dissimilar:
        raise InsufficientPairs("similar and dissimilar sets must be nonempty")
    sigma_s = _pair_covariance(pairs.similar)
    sigma_d = _pair_covariance(pairs.dissimilar)
    if sigma_s.shape != sigma_d.shape:
        raise DimMismatch("similar and dissimilar pair dims differ")
    m0 = _regularized_inverse(sigma_s) - _regularized_inverse(sigma_d)
    m0 = (m0 + m0.T) / 2
    eigvals, eigvecs = np.linalg.eigh(m0)
    m = (eigvecs * np.clip(eigvals, 0.0, None)) @ eigvecs.T
    return MahalanobisModel(matrix=(m + m.T) / 2)


def identity_metric(p: int) -> MahalanobisModel:
    """Mahalanobis model that reduces to the Euclidean distance."""
    return MahalanobisModel(matrix=np.eye(p))


def maha_dist(model: MahalanobisModel, a: np.ndarray, b: np.ndarray) -> float:
    """sqrt(max(0, (a-b)^T M (a-b)))."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != (model.p,) or b.shape != (model.p,):
        raise DimMismatch(
            f"vectors {a.shape}/{b.shape} do not match metric dim {model.p}")
    d = a - b
    return float(np.sqrt(max(0.0, d @ model.matrix @ d)))


def euclidean_dist(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimMismatch(f"vector dims differ: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


def _as_set(x) -> list[np.ndarray]:
    vectors = [np.asarray(v, dtype=np.float64) for v in x]
    if not vectors:
        raise EmptySet("descriptor set is empty")
    return vectors


def set_distance_min(x, y, dist=euclidean_dist) -> float:
    """Global minimum distance over all cross pairs of the two sets."""
    xs, ys = _as_set(x), _as_set(y)
    return min(dist(a, b) for a in xs for b in ys)


def set_distance_avg(x, y, dist=euclidean_dist) -> float:
    """Symmetric average of per-element minimum distances."""
    xs, ys = _as_set(x), _as_set(y)
    grid = [[dist(a, b) for b in ys] for a in xs]
    row_min = sum(min(row) for row in grid)
    col_min = sum(min(grid[i][j] for i in range(len(xs)))
                  for j in range(len(ys)))
    return row_min / (2 * len(xs)) + col_min / (2 * len(ys))


def save_model(model: MetricModel, path) -> None:
    """Serialize to the RDM1 binary format with a trailing CRC-32.

    Layout: magic ``RDM1``, uint32-LE p and d, then mean (d), components
    (p*d) and M (p*p) as float64-LE, and finally the CRC-32 of all
    preceding bytes as uint32-LE.
    """
    p, d = model.pca.p, model.pca.d
    payload = b"".join([
        MODEL_MAGIC,
        struct.pack("<II", p, d),
        model.pca.mean.astype("<f8").tobytes(),
        model.pca.components.astype("<f8").tobytes(),
        model.maha.matrix.astype("<f8").tobytes(),
    ])
    Path(path).write_bytes(payload + struct.pack("<I", zlib.crc32(payload)))


def load_model(path) -> MetricModel:
    data = Path(path).read_bytes()
    header = len(MODEL_MAGIC) + 8
    if len(data) < header + 4 or data[:len(MODEL_MAGIC)] != MODEL_MAGIC:
        raise FormatError(f"{path}: bad magic or truncated header")
    stored_crc, = struct.unpack_from("<I", data, len(data) - 4)
    if zlib.crc32(data[:-4]) != stored_crc:
        raise CrcMismatch(f"{path}: CRC-32 check failed")
    p, d = struct.unpack_from("<II", data, len(MODEL_MAGIC))
    expected = header + 8 * (d + p * d + p * p) + 4
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, got {len(data)}")
    floats = np.frombuffer(data, dtype="<f8", count=d + p * d + p * p,
                           offset=header)
    mean = floats[:d]
    comps = floats[d:d + p * d].reshape(p, d)
    m = floats[d + p * d:].reshape(p, p)
    return MetricModel(pca=PcaModel(mean=mean, components=comps),
                       maha=MahalanobisModel(matrix=m))
