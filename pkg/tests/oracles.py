"""Independent brute-force reference implementations.

Everything here is written the slow, obvious way (double loops, full
enumeration, explicit inverses, finite differences) and stays
independent of the library's fast paths. Tests compute expected values
through these and compare.
"""

import itertools

import numpy as np


def pair_count_auc(scores_in, scores_out) -> float:
    """O(n*m) definition: P(out > in) + 0.5 * P(out == in)."""
    a = np.asarray(scores_in, dtype=np.float64)
    b = np.asarray(scores_out, dtype=np.float64)
    wins = 0.0
    for s_out in b:
        for s_in in a:
            if s_out > s_in:
                wins += 1.0
            elif s_out == s_in:
                wins += 0.5
    return wins / (a.size * b.size)


def knn_neighbors(x, k):
    """Per-row cosine neighbors by exhaustive sort of (distance, index)."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    out = np.empty((n, k), dtype=np.int64)
    for i in range(n):
        cand = []
        for j in range(n):
            if j == i:
                continue
            cand.append((1.0 - np.dot(x[i], x[j]), j))
        cand.sort()
        out[i] = [j for _, j in cand[:k]]
    return out


def knn_scores(train, test, k):
    """Mean of the k smallest cosine distances, by full sort per row."""
    tr = np.asarray(train, dtype=np.float64)
    te = np.asarray(test, dtype=np.float64)
    out = np.empty(te.shape[0])
    for i in range(te.shape[0]):
        dists = np.sort(1.0 - tr @ te[i])
        out[i] = dists[:k].mean()
    return out


def best_kmeans_partition(x, K):
    """Exact k-means optimum by enumerating every assignment. Tiny n only."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    best = (np.inf, None, None)
    for labels in itertools.product(range(K), repeat=n):
        labels = np.asarray(labels)
        if np.unique(labels).size < K:
            continue
        cents = np.array([x[labels == j].mean(axis=0) for j in range(K)])
        inertia = float(((x - cents[labels]) ** 2).sum())
        if inertia < best[0]:
            best = (inertia, labels.copy(), cents)
    return best


def best_bijection_accuracy(pred, truth):
    """Max matched fraction over every label bijection (K! enumeration)."""
    pred = np.asarray(pred)
    truth = np.asarray(truth)
    K = int(max(pred.max(), truth.max())) + 1
    best = 0
    for perm in itertools.permutations(range(K)):
        mapped = np.array([perm[p] for p in pred])
        best = max(best, int((mapped == truth).sum()))
    return best / pred.size


def mahalanobis_min_dist(means, covariances, test):
    """Explicit-inverse Mahalanobis distance to the nearest cluster mean."""
    te = np.asarray(test, dtype=np.float64)
    invs = [np.linalg.inv(c) for c in covariances]
    out = np.empty(te.shape[0])
    for i, t in enumerate(te):
        vals = []
        for mu, inv in zip(means, invs):
            diff = t - mu
            vals.append(float(diff @ inv @ diff))
        out[i] = np.sqrt(min(vals))
    return out


def softmax_then_log_ce(logits, labels):
    """Naive cross-entropy: explicit softmax, then log, then mean."""
    z = np.asarray(logits, dtype=np.float64)
    p = np.exp(z) / np.exp(z).sum(axis=1, keepdims=True)
    return float(np.mean([-np.log(p[i, y]) for i, y in enumerate(labels)]))


def finite_difference_grads(loss_fn, head, step=1e-6):
    """Central differences of loss_fn(head) w.r.t. every head parameter."""
    grads = []
    for p in head.params():
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = loss_fn(head)
            flat[i] = orig - step
            lo = loss_fn(head)
            flat[i] = orig
            gflat[i] = (hi - lo) / (2.0 * step)
        grads.append(g)
    return grads


def relative_grad_error(analytic, numeric) -> float:
    """Vector-norm relative error between two gradient lists."""
    a = np.concatenate([g.ravel() for g in analytic])
    b = np.concatenate([g.ravel() for g in numeric])
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)
