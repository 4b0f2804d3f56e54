"""Anomaly scores over feature rows. Higher score = more anomalous.

Three estimators of "far from the normal training data":

* :func:`knn_score` -- mean cosine distance to the k nearest training
  rows (k=1 is the minimum distance).
* :func:`mahalanobis_score` -- covariance-whitened distance to the
  nearest cluster mean, from per-cluster Gaussians with trace-scaled
  shrinkage (fit once with :func:`fit_gaussians`).
* :func:`confidence_score` -- one minus the classifier's max
  probability.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .adaptation import ClusterHead

DEFAULT_SHRINKAGE = 1e-3
_NORM_TOL = 1e-3


@dataclass
class ScoreVector:
    """Scores plus the scorer identity and its parameters."""

    scores: np.ndarray
    scorer: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        if not np.all(np.isfinite(self.scores)):
            raise ValueError("scores contain non-finite values")


def _as_unit_rows(m, name: str) -> np.ndarray:
    x = np.asarray(m, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {x.shape}")
    norms = np.sqrt(np.einsum("ij,ij->i", x, x))
    bad = np.flatnonzero(np.abs(norms - 1.0) > _NORM_TOL)
    if bad.size:
        raise ValueError(
            f"{name} row {bad[0]} is not L2-normalized (norm {norms[bad[0]]:.6f})"
        )
    return x


def knn_score(train, test, k: int = 1) -> ScoreVector:
    """Mean of the k smallest cosine distances to the training rows.

    Both matrices must be L2-normalized (checked to 1e-3). Exact: every
    pairwise distance is evaluated.
    """
    tr = _as_unit_rows(train, "train")
    te = _as_unit_rows(test, "test")
    if tr.shape[1] != te.shape[1]:
        raise ValueError(f"dimension mismatch: train d={tr.shape[1]}, test d={te.shape[1]}")
    if not 1 <= k <= tr.shape[0]:
        raise ValueError(f"k must be in [1, train.n], got k={k} with train.n={tr.shape[0]}")
    dist = 1.0 - te @ tr.T
    if k == 1:
        scores = dist.min(axis=1)
    else:
        part = np.partition(dist, k - 1, axis=1)[:, :k]
        scores = part.mean(axis=1)
    return ScoreVector(scores, "knn", {"k": k})


@dataclass
class GaussianBank:
    """Per-cluster Gaussian fits with cached Cholesky factors.

    `cluster_ids` lists the label ids actually fitted; `flagged` are ids
    that fell back to a scaled-identity covariance (fewer than 2
    members). Ids with zero members are excluded and flagged.
    """

    means: np.ndarray        # (C, d)
    covariances: np.ndarray  # (C, d, d), after shrinkage
    chol: np.ndarray         # (C, d, d) lower-triangular factors
    counts: np.ndarray       # (C,)
    cluster_ids: np.ndarray  # (C,)
    shrinkage: float
    flagged: list[int] = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def fit_gaussians(train, labels, shrinkage: float = DEFAULT_SHRINKAGE,
                  n_clusters: int | None = None, shared: bool = False) -> GaussianBank:
    """Fit one Gaussian per cluster with trace-scaled diagonal shrinkage.

    Covariance is the sample covariance (divisor n_c - 1) plus
    eps_c * I where eps_c = shrinkage * trace(cov_c)/d. Clusters with a
    single member fall back to (global trace/d) * I and are flagged.
    With shared=True every cluster uses the pooled within-cluster
    covariance (divisor n - C) instead of its own. Raises if any
    factorization fails after shrinkage.
    """
    x = np.asarray(train, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if y.shape != (x.shape[0],):
        raise ValueError(f"labels shape {y.shape} does not match train n={x.shape[0]}")
    if shrinkage < 0:
        raise ValueError("shrinkage must be >= 0")
    K = int(n_clusters) if n_clusters is not None else int(y.max()) + 1
    d = x.shape[1]
    if shared:
        return _fit_shared(x, y, K, shrinkage)

    global_center = x - x.mean(axis=0)
    global_var = float(np.einsum("ij,ij->", global_center, global_center)) / max(x.shape[0] - 1, 1)
    fallback = (global_var / d) * np.eye(d)

    means, covs, chols, counts, ids, flagged = [], [], [], [], [], []
    for c in range(K):
        members = x[y == c]
        n_c = members.shape[0]
        if n_c == 0:
            flagged.append(c)
            continue
        mu = members.mean(axis=0)
        if n_c < 2:
            cov = fallback.copy()
            flagged.append(c)
        else:
            centered = members - mu
            cov = centered.T @ centered / (n_c - 1)
            eps = shrinkage * float(np.trace(cov)) / d
            cov = cov + eps * np.eye(d)
        try:
            L = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            raise ValueError(
                f"covariance of cluster {c} is not positive definite "
                f"(shrinkage={shrinkage})"
            ) from None
        means.append(mu)
        covs.append(cov)
        chols.append(L)
        counts.append(n_c)
        ids.append(c)
    if not means:
        raise ValueError("no cluster has any members")
    return GaussianBank(
        means=np.array(means),
        covariances=np.array(covs),
        chol=np.array(chols),
        counts=np.array(counts, dtype=np.int64),
        cluster_ids=np.array(ids, dtype=np.int64),
        shrinkage=float(shrinkage),
        flagged=flagged,
    )


def _fit_shared(x, y, K, shrinkage):
    present = [c for c in range(K) if np.any(y == c)]
    flagged = [c for c in range(K) if c not in present]
    n, d = x.shape
    if n - len(present) < 1:
        raise ValueError("pooled covariance needs more samples than clusters")
    means = np.array([x[y == c].mean(axis=0) for c in present])
    scatter = np.zeros((d, d))
    for mu, c in zip(means, present):
        centered = x[y == c] - mu
        scatter += centered.T @ centered
    cov = scatter / (n - len(present))
    cov = cov + (shrinkage * float(np.trace(cov)) / d) * np.eye(d)
    try:
        L = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError(
            f"pooled covariance is not positive definite (shrinkage={shrinkage})"
        ) from None
    C = len(present)
    return GaussianBank(
        means=means,
        covariances=np.broadcast_to(cov, (C, d, d)).copy(),
        chol=np.broadcast_to(L, (C, d, d)).copy(),
        counts=np.array([int((y == c).sum()) for c in present], dtype=np.int64),
        cluster_ids=np.array(present, dtype=np.int64),
        shrinkage=float(shrinkage),
        flagged=flagged,
    )


def mahalanobis_score(bank: GaussianBank, test) -> ScoreVector:
    """Smallest covariance-whitened distance to any cluster mean.

    Solved with the cached Cholesky factors; the covariance is never
    inverted explicitly.
    """
    te = np.asarray(test, dtype=np.float64)
    if te.ndim != 2 or te.shape[1] != bank.dim:
        raise ValueError(f"dimension mismatch: test shape {te.shape}, bank d={bank.dim}")
    best = np.full(te.shape[0], np.inf)
    for mu, L in zip(bank.means, bank.chol):
        z = solve_triangular(L, (te - mu).T, lower=True)
        np.minimum(best, np.einsum("ij,ij->j", z, z), out=best)
    return ScoreVector(np.sqrt(best), "mahalanobis", {"shrinkage": bank.shrinkage})


def confidence_score(head: ClusterHead, test) -> ScoreVector:
    """One minus the max class probability (low confidence = anomalous)."""
    te = np.asarray(test, dtype=np.float64)
    if te.ndim != 2 or te.shape[1] != head.input_dim:
        raise ValueError(
            f"dimension mismatch: test shape {te.shape}, head input dim {head.input_dim}"
        )
    p = head.forward(te)
    return ScoreVector(1.0 - p.max(axis=1), "confidence", {"K": head.n_classes})
