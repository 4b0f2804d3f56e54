"""Pseudo-labels for unlabeled embeddings.

Three routes, in increasing order of machinery:

* :func:`kmeans` -- k-means++ seeded Lloyd iteration (baseline labels).
* :func:`scan_train` -- trains a classifier head so each sample agrees
  with its nearest neighbors while an entropy term keeps the cluster
  marginal balanced.
* :func:`self_label` -- refines a trained head by retraining on its own
  most confident predictions.

All routines are deterministic given their seed. Neighbor search and
cluster accuracy are exact (no approximations).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .adaptation import (
    Adam,
    AdaptConfig,
    ClusterHead,
    DEFAULT_HIDDEN,
    finetune_head,
    init_head,
    softmax,
)

MAX_ACCURACY_CLASSES = 64


@dataclass
class ScanConfig:
    """Knobs for neighbor-consistency training."""

    K: int = 10
    k_graph: int = 20
    lambda_entropy: float = 5.0
    epochs: int = 40
    batch_size: int = 256
    lr: float = 1e-3
    hidden: int = DEFAULT_HIDDEN
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValueError("K must be >= 2")
        if self.k_graph < 1:
            raise ValueError("k_graph must be >= 1")
        if self.lambda_entropy < 0:
            raise ValueError("lambda_entropy must be >= 0")


@dataclass
class ClusterAssignment:
    """Per-sample pseudo-labels with the assigned-class confidence.

    confidences[i] is the probability of the assigned class for head
    based methods, and 1.0 for k-means. `collapsed` flags the degenerate
    all-one-cluster outcome; `warning` carries non-fatal notes (e.g. a
    self-label round that found no confident samples); `inertia_trace`
    is filled by k-means only.
    """

    labels: np.ndarray
    confidences: np.ndarray
    method: str
    K: int
    collapsed: bool = False
    warning: str | None = None
    inertia_trace: list[float] | None = None


# ---------------------------------------------------------------------------
# neighbor graph


def build_knn_graph(m, k_graph: int) -> np.ndarray:
    """Exact cosine nearest neighbors, ties broken by lower row index.

    Expects L2-normalized rows (cosine distance computed as 1 - dot).
    Returns an n x k_graph integer index matrix with no self loops.
    """
    x = np.asarray(m, dtype=np.float64)
    if x.ndim != 2:
        raise ValueError(f"expected a matrix, got shape {x.shape}")
    n = x.shape[0]
    if not 1 <= k_graph < n:
        raise ValueError(f"k_graph must be in [1, n), got k_graph={k_graph} with n={n}")
    dist = 1.0 - x @ x.T
    np.fill_diagonal(dist, np.inf)
    order = np.argsort(dist, axis=1, kind="stable")
    return order[:, :k_graph].astype(np.int64)


# ---------------------------------------------------------------------------
# k-means


def _pairwise_sq_dists(x: np.ndarray, c: np.ndarray) -> np.ndarray:
    d2 = (
        np.einsum("ij,ij->i", x, x)[:, None]
        - 2.0 * (x @ c.T)
        + np.einsum("ij,ij->i", c, c)[None, :]
    )
    np.maximum(d2, 0.0, out=d2)
    return d2


def _kmeans_pp_init(x: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = x.shape[0]
    centroids = np.empty((K, x.shape[1]), dtype=np.float64)
    centroids[0] = x[rng.integers(n)]
    closest = ((x - centroids[0]) ** 2).sum(axis=1)
    for j in range(1, K):
        total = closest.sum()
        if total > 0:
            pick = rng.choice(n, p=closest / total)
        else:
            pick = rng.integers(n)
        centroids[j] = x[pick]
        np.minimum(closest, ((x - centroids[j]) ** 2).sum(axis=1), out=closest)
    return centroids


def kmeans(m, K: int, max_iters: int = 100, seed: int = 0):
    """Lloyd iteration with k-means++ seeding, squared Euclidean distance.

    Returns (ClusterAssignment, centroids). Terminates when assignments
    are fixed or after max_iters; the recorded inertia trace is
    non-increasing. An empty cluster is reseeded to the point that is
    currently farthest from its own centroid (ties to the lower index).
    """
    x = np.asarray(m, dtype=np.float64)
    n = x.shape[0]
    if K > n:
        raise ValueError(f"K={K} exceeds sample count n={n}")
    if K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(seed)
    centroids = _kmeans_pp_init(x, K, rng)

    labels = np.full(n, -1, dtype=np.int64)
    trace: list[float] = []
    for _ in range(max_iters):
        d2 = _pairwise_sq_dists(x, centroids)
        new_labels = d2.argmin(axis=1)

        counts = np.bincount(new_labels, minlength=K)
        for j in np.flatnonzero(counts == 0):
            contrib = ((x - centroids[new_labels]) ** 2).sum(axis=1)
            worst = int(contrib.argmax())
            centroids[j] = x[worst]
            new_labels[worst] = j

        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(K):
            centroids[j] = x[labels == j].mean(axis=0)
        trace.append(float(((x - centroids[labels]) ** 2).sum()))

    assignment = ClusterAssignment(
        labels=labels,
        confidences=np.ones(n, dtype=np.float64),
        method="kmeans",
        K=K,
        collapsed=(np.unique(labels).size == 1),
        inertia_trace=trace,
    )
    return assignment, centroids


# ---------------------------------------------------------------------------
# neighbor-consistency training


def shannon_entropy(p) -> float:
    """Entropy of a probability vector, natural log, 0*log(0) = 0."""
    p = np.asarray(p, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def _scan_batch(head: ClusterHead, x: np.ndarray, neighbors: np.ndarray,
                lam: float, anchors: np.ndarray, want_grad: bool):
    """Loss (and gradients) of the consistency + entropy objective over
    the given anchor rows; neighbor rows enter the forward pass too."""
    nbr = neighbors[anchors]  # (B, k)
    rows = np.unique(np.concatenate([anchors, nbr.ravel()]))
    a_loc = np.searchsorted(rows, anchors)
    n_loc = np.searchsorted(rows, nbr)

    X = x[rows]
    h = np.tanh(X @ head.W1 + head.b1)
    z = h @ head.W2 + head.b2
    p = softmax(z)

    B, k = nbr.shape
    P_a = p[a_loc]  # (B, K)
    P_n = p[n_loc]  # (B, k, K)
    dots = np.einsum("bk,bjk->bj", P_a, P_n)
    consistency = -float(np.log(dots).sum()) / (B * k)
    pbar = P_a.mean(axis=0)
    loss = consistency - lam * shannon_entropy(pbar)
    if not want_grad:
        return loss, None

    dP = np.zeros_like(p)
    w = -1.0 / (B * k) / dots  # (B, k)
    np.add.at(dP, a_loc, np.einsum("bj,bjk->bk", w, P_n))
    np.add.at(dP, n_loc.ravel(), (w[:, :, None] * P_a[:, None, :]).reshape(-1, p.shape[1]))
    # d/dpbar of -lam*H(pbar) is lam*(log pbar + 1); pbar > 0 under softmax
    np.add.at(dP, a_loc, np.broadcast_to((lam / B) * (np.log(pbar) + 1.0), (B, p.shape[1])))

    dz = p * (dP - (dP * p).sum(axis=1, keepdims=True))
    dW2 = h.T @ dz
    db2 = dz.sum(axis=0)
    dh = (dz @ head.W2.T) * (1.0 - h * h)
    dW1 = X.T @ dh
    db1 = dh.sum(axis=0)
    return loss, [dW1, db1, dW2, db2]


def scan_loss(head: ClusterHead, m, graph, lambda_entropy: float) -> float:
    """Full-dataset objective: mean negative log neighbor agreement minus
    lambda times the entropy of the mean probability row."""
    x = np.asarray(m, dtype=np.float64)
    g = np.asarray(graph, dtype=np.int64)
    loss, _ = _scan_batch(head, x, g, lambda_entropy, np.arange(x.shape[0]), False)
    return loss


def scan_loss_grad(head: ClusterHead, m, graph, lambda_entropy: float):
    """Full-dataset objective value and gradients [dW1, db1, dW2, db2]."""
    x = np.asarray(m, dtype=np.float64)
    g = np.asarray(graph, dtype=np.int64)
    return _scan_batch(head, x, g, lambda_entropy, np.arange(x.shape[0]), True)


def scan_train(m, graph, cfg: ScanConfig):
    """Train a cluster head against the neighbor graph.

    Returns (ClusterHead, ClusterAssignment); the assignment is the
    per-row argmax of the head's probabilities. Collapse to a single
    cluster is reported on the assignment, not raised.
    """
    x = np.asarray(m, dtype=np.float64)
    g = np.asarray(graph, dtype=np.int64)
    n, d = x.shape
    if g.shape[0] != n:
        raise ValueError(f"graph rows {g.shape[0]} != sample count {n}")

    head = init_head(d, cfg.hidden, cfg.K, cfg.seed)
    opt = Adam(head.params())
    rng = np.random.default_rng(cfg.seed)
    n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for b in range(n_batches):
            anchors = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            _, grads = _scan_batch(head, x, g, cfg.lambda_entropy, anchors, True)
            opt.step(grads, cfg.lr)

    p = head.forward(x)
    labels = p.argmax(axis=1).astype(np.int64)
    assignment = ClusterAssignment(
        labels=labels,
        confidences=p[np.arange(n), labels],
        method="scan",
        K=cfg.K,
        collapsed=(np.unique(labels).size == 1),
    )
    return head, assignment


def self_label(head: ClusterHead, m, threshold: float, rounds: int,
               *, lr: float = 1e-3, epochs: int = 3, batch_size: int = 128,
               seed: int = 0):
    """Confident-relabel refinement.

    Each round selects samples whose max probability meets the
    threshold and retrains the head on their argmax labels with
    cross-entropy. If no sample qualifies the head is returned
    unchanged and the assignment carries a warning flag.
    """
    K = head.n_classes
    if not (1.0 / K < threshold <= 1.0):
        raise ValueError(f"threshold must be in (1/K, 1], got {threshold}")
    if rounds < 0:
        raise ValueError("rounds must be >= 0")
    x = np.asarray(m, dtype=np.float64)

    cur = head.copy()
    warning = None
    for r in range(rounds):
        p = cur.forward(x)
        conf = p.max(axis=1)
        mask = conf >= threshold
        if not mask.any():
            warning = f"round {r}: no samples at or above threshold {threshold}"
            break
        y = p[mask].argmax(axis=1).astype(np.int64)
        cfg = AdaptConfig(epochs=epochs, lr_start=lr, lr_end=lr,
                          batch_size=batch_size, seed=seed + r)
        cur = finetune_head(cur, x[mask], y, cfg).checkpoints[-1]

    p = cur.forward(x)
    labels = p.argmax(axis=1).astype(np.int64)
    assignment = ClusterAssignment(
        labels=labels,
        confidences=p[np.arange(x.shape[0]), labels],
        method="self_label",
        K=K,
        collapsed=(np.unique(labels).size == 1),
        warning=warning,
    )
    return cur, assignment


# ---------------------------------------------------------------------------
# clustering accuracy


def cluster_accuracy(pred, truth) -> float:
    """Best-bijection matched fraction between two labelings.

    Builds the contingency matrix over max(pred, truth) label ids and
    solves the optimal assignment exactly. Invariant under independent
    relabelings of either side.
    """
    p = np.asarray(pred, dtype=np.int64)
    t = np.asarray(truth, dtype=np.int64)
    if p.shape != t.shape or p.ndim != 1:
        raise ValueError(f"length mismatch: pred {p.shape} vs truth {t.shape}")
    if p.min() < 0 or t.min() < 0:
        raise ValueError("labels must be non-negative")
    K = int(max(p.max(), t.max())) + 1
    if K > MAX_ACCURACY_CLASSES:
        raise ValueError(f"at most {MAX_ACCURACY_CLASSES} classes supported, got {K}")
    w = np.zeros((K, K), dtype=np.int64)
    np.add.at(w, (p, t), 1)
    rows, cols = linear_sum_assignment(w, maximize=True)
    return float(w[rows, cols].sum()) / p.size
