"""Feature-head finetuning on pseudo-labels with epoch-end weight averaging.

A 2-layer perceptron (input -> tanh hidden -> softmax) is trained with
cross-entropy against pseudo-labels using Adam under a cosine-annealed
learning rate. One weight snapshot is kept per epoch end; the scoring
representation is the parameter-wise mean of the snapshots, and the
"adapted" feature space is the L2-normalized hidden activation of that
averaged head.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CKPT_MAGIC = b"\x93CKPT\r\n\x00"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<8sIQ")  # magic, version, number of layer dims

DEFAULT_HIDDEN = 512


# ---------------------------------------------------------------------------
# head


@dataclass
class ClusterHead:
    """2-layer classifier head: probabilities out, hidden layer as features.

    Weights are kept in float64 in memory; checkpoint files store float32.
    """

    W1: np.ndarray  # (d, h)
    b1: np.ndarray  # (h,)
    W2: np.ndarray  # (h, K)
    b2: np.ndarray  # (K,)

    def __post_init__(self):
        self.W1 = np.asarray(self.W1, dtype=np.float64)
        self.b1 = np.asarray(self.b1, dtype=np.float64)
        self.W2 = np.asarray(self.W2, dtype=np.float64)
        self.b2 = np.asarray(self.b2, dtype=np.float64)
        d, h = self.W1.shape
        h2, K = self.W2.shape
        if h2 != h or self.b1.shape != (h,) or self.b2.shape != (K,):
            raise ValueError("inconsistent head parameter shapes")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.W2.shape[1]

    @property
    def layer_dims(self) -> tuple[int, int, int]:
        return (self.input_dim, self.hidden_dim, self.n_classes)

    def copy(self) -> "ClusterHead":
        return ClusterHead(self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy())

    def params(self) -> list[np.ndarray]:
        return [self.W1, self.b1, self.W2, self.b2]

    def hidden(self, x) -> np.ndarray:
        """Post-activation hidden vectors, float64, one row per input row."""
        x = np.asarray(x, dtype=np.float64)
        return np.tanh(x @ self.W1 + self.b1)

    def logits(self, x) -> np.ndarray:
        return self.hidden(x) @ self.W2 + self.b2

    def forward(self, x) -> np.ndarray:
        """K-way probability rows (softmax of the logits, shift-stable)."""
        return softmax(self.logits(x))


def softmax(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def init_head(d: int, h: int, K: int, seed: int) -> ClusterHead:
    """Fan-in-scaled uniform initialization from a fixed seed."""
    rng = np.random.default_rng(seed)
    s1 = 1.0 / np.sqrt(d)
    s2 = 1.0 / np.sqrt(h)
    return ClusterHead(
        W1=rng.uniform(-s1, s1, size=(d, h)),
        b1=rng.uniform(-s1, s1, size=h),
        W2=rng.uniform(-s2, s2, size=(h, K)),
        b2=rng.uniform(-s2, s2, size=K),
    )


# ---------------------------------------------------------------------------
# optimizer and schedule


class Adam:
    """Adam with bias correction (beta1=0.9, beta2=0.999, eps=1e-8).

    First step from w with gradient g moves w by exactly
    lr * g/ (|g| + eps) thanks to the bias-corrected moments.
    """

    def __init__(self, params: list[np.ndarray], beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = params
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: list[np.ndarray], lr: float) -> None:
        self.t += 1
        b1t = 1.0 - self.beta1**self.t
        b2t = 1.0 - self.beta2**self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= lr * (m / b1t) / (np.sqrt(v / b2t) + self.eps)


def cosine_lr(step: int, total_steps: int, lr_start: float, lr_end: float) -> float:
    """Cosine annealing: step 0 gives lr_start, the last step gives lr_end."""
    if total_steps <= 1:
        return lr_start
    frac = step / (total_steps - 1)
    return lr_end + 0.5 * (lr_start - lr_end) * (1.0 + np.cos(np.pi * frac))


# ---------------------------------------------------------------------------
# cross-entropy


def _check_labels(y, K: int, n: int) -> np.ndarray:
    y = np.asarray(y, dtype=np.int64)
    if y.shape != (n,):
        raise ValueError(f"labels have shape {y.shape}, expected ({n},)")
    if y.size and (y.min() < 0 or y.max() >= K):
        raise ValueError(f"label out of range [0, {K})")
    return y


def cross_entropy_loss(head: ClusterHead, m, y) -> float:
    """Mean negative log-probability of the assigned class.

    Computed via log-sum-exp on the logits; never materializes
    softmax-then-log.
    """
    x = np.asarray(m, dtype=np.float64)
    y = _check_labels(y, head.n_classes, x.shape[0])
    z = head.logits(x)
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    return float(np.mean(lse - z[np.arange(len(y)), y]))


def cross_entropy_grad(head: ClusterHead, m, y) -> tuple[float, list[np.ndarray]]:
    """Loss and gradients [dW1, db1, dW2, db2] of the mean cross-entropy."""
    x = np.asarray(m, dtype=np.float64)
    y = _check_labels(y, head.n_classes, x.shape[0])
    n = x.shape[0]
    h = head.hidden(x)
    z = h @ head.W2 + head.b2
    zmax = z.max(axis=1)
    lse = zmax + np.log(np.exp(z - zmax[:, None]).sum(axis=1))
    loss = float(np.mean(lse - z[np.arange(n), y]))

    p = softmax(z)
    dz = p
    dz[np.arange(n), y] -= 1.0
    dz /= n
    dW2 = h.T @ dz
    db2 = dz.sum(axis=0)
    dh = (dz @ head.W2.T) * (1.0 - h * h)
    dW1 = x.T @ dh
    db1 = dh.sum(axis=0)
    return loss, [dW1, db1, dW2, db2]


# ---------------------------------------------------------------------------
# finetuning


@dataclass
class AdaptConfig:
    """Finetuning hyperparameters.

    The schedule shape is cosine annealing from lr_start to lr_end over
    all optimizer steps. Defaults suit the small surrogate head; set
    lr_start=1e-5, lr_end=1e-6 to mimic full-backbone finetuning rates.
    """

    epochs: int = 5
    lr_start: float = 1e-3
    lr_end: float = 1e-4
    batch_size: int = 128
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr_end > self.lr_start:
            raise ValueError("lr_end must be <= lr_start")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass
class CheckpointSet:
    """Epoch-end weight snapshots plus the per-epoch training-loss trace."""

    checkpoints: list[ClusterHead] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)

    def __post_init__(self):
        dims = {c.layer_dims for c in self.checkpoints}
        if len(dims) > 1:
            raise ValueError(f"mismatched layer dims across snapshots: {sorted(dims)}")


def finetune_head(init: ClusterHead, m, y, cfg: AdaptConfig) -> CheckpointSet:
    """Minibatch cross-entropy finetuning; one snapshot per epoch end.

    Batches are drawn without replacement, reshuffled each epoch from
    cfg.seed. Raises RuntimeError naming the epoch/batch if the loss
    turns NaN.
    """
    x = np.asarray(m, dtype=np.float64)
    n = x.shape[0]
    if x.shape[1] != init.input_dim:
        raise ValueError(
            f"input dim {x.shape[1]} does not match head input dim {init.input_dim}"
        )
    y = _check_labels(y, init.n_classes, n)

    head = init.copy()
    opt = Adam(head.params(), beta1=cfg.beta1, beta2=cfg.beta2, eps=cfg.eps)
    rng = np.random.default_rng(cfg.seed)
    n_batches = (n + cfg.batch_size - 1) // cfg.batch_size
    total_steps = cfg.epochs * n_batches

    out = CheckpointSet()
    step = 0
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        for b in range(n_batches):
            idx = order[b * cfg.batch_size : (b + 1) * cfg.batch_size]
            loss, grads = cross_entropy_grad(head, x[idx], y[idx])
            if not np.isfinite(loss):
                raise RuntimeError(f"training diverged at epoch {epoch}, batch {b}")
            opt.step(grads, cosine_lr(step, total_steps, cfg.lr_start, cfg.lr_end))
            step += 1
        out.checkpoints.append(head.copy())
        out.loss_trace.append(cross_entropy_loss(head, x, y))
    return out


def average_checkpoints(cs: CheckpointSet) -> ClusterHead:
    """Parameter-wise arithmetic mean of all snapshots (uniform weights)."""
    if not cs.checkpoints:
        raise ValueError("empty checkpoint set")
    dims = {c.layer_dims for c in cs.checkpoints}
    if len(dims) > 1:
        raise ValueError(f"mismatched layer dims across snapshots: {sorted(dims)}")
    heads = cs.checkpoints
    return ClusterHead(
        W1=np.mean([h.W1 for h in heads], axis=0),
        b1=np.mean([h.b1 for h in heads], axis=0),
        W2=np.mean([h.W2 for h in heads], axis=0),
        b2=np.mean([h.b2 for h in heads], axis=0),
    )


def extract_features(head: ClusterHead, m) -> np.ndarray:
    """Hidden-layer features, L2-normalized, as an n x h float32 matrix.

    Raises ValueError naming the row if a hidden vector is exactly zero.
    """
    x = np.asarray(m, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != head.input_dim:
        raise ValueError(
            f"input of shape {x.shape} does not match head input dim {head.input_dim}"
        )
    h = head.hidden(x)
    norms = np.sqrt(np.einsum("ij,ij->i", h, h))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero hidden vector at row {zero[0]}")
    return (h / norms[:, None]).astype(np.float32)


# ---------------------------------------------------------------------------
# checkpoint files


def save_head(head: ClusterHead, path) -> None:
    """Write a head checkpoint: layer dims, then W1, b1, W2, b2 as f32 LE."""
    dims = head.layer_dims
    payload = b"".join(
        np.ascontiguousarray(p, dtype="<f4").tobytes() for p in head.params()
    )
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, len(dims)))
        for v in dims:
            f.write(struct.pack("<Q", v))
        f.write(payload)
        f.write(hashlib.sha256(payload).digest())


def load_head(path) -> ClusterHead:
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(CKPT_MAGIC) or raw[: len(CKPT_MAGIC)] != CKPT_MAGIC:
        raise ValueError(f"bad magic in {path}")
    _, version, ndims = _CKPT_HEADER.unpack_from(raw)
    if version != CKPT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version} in {path}")
    if ndims != 3:
        raise ValueError(f"expected 3 layer dims in {path}, got {ndims}")
    off = _CKPT_HEADER.size
    d, h, K = struct.unpack_from("<QQQ", raw, off)
    off += 24
    sizes = [(d, h), (h,), (h, K), (K,)]
    n_floats = sum(int(np.prod(s)) for s in sizes)
    expected = off + 4 * n_floats + 32
    if len(raw) < expected:
        raise ValueError(f"truncated checkpoint {path}")
    if len(raw) > expected:
        raise ValueError(f"trailing data in checkpoint {path}")
    payload = raw[off : off + 4 * n_floats]
    if hashlib.sha256(payload).digest() != raw[expected - 32 :]:
        raise ValueError(f"checksum mismatch in {path}")
    flat = np.frombuffer(payload, dtype="<f4").astype(np.float64)
    parts = []
    pos = 0
    for s in sizes:
        cnt = int(np.prod(s))
        parts.append(flat[pos : pos + cnt].reshape(s))
        pos += cnt
    return ClusterHead(*parts)
