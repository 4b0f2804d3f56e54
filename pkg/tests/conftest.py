import numpy as np
import pytest

from oodkit import l2_normalize


def make_blobs(n_per, d, centers, scale=1.0, seed=0):
    """Gaussian blobs around the given centers, rows L2-normalized.

    Returns (matrix, labels) with labels = blob index.
    """
    rng = np.random.default_rng(seed)
    centers = np.asarray(centers, dtype=np.float64)
    rows, labels = [], []
    for c, center in enumerate(centers):
        rows.append(center + scale * rng.standard_normal((n_per, d)))
        labels.extend([c] * n_per)
    return l2_normalize(np.vstack(rows)), np.asarray(labels, dtype=np.int64)


def two_blobs(seed=0, n_per=100, d=8, dist=10.0, scale=1.0):
    """Two far-separated blobs; the standard clustering fixture."""
    c0 = np.zeros(d)
    c0[0] = dist / 2
    return make_blobs(n_per, d, [c0, -c0], scale=scale, seed=seed)


def random_unit_rows(n, d, seed=0):
    rng = np.random.default_rng(seed)
    return l2_normalize(rng.standard_normal((n, d)))


@pytest.fixture
def tmp_emb_dir(tmp_path):
    return tmp_path
