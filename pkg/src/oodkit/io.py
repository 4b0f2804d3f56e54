"""Embedding dataset files, manifests and row normalization.

Datasets are dense n x d float32 matrices stored in a fixed little-endian
binary layout (``.emb``) with a JSON manifest sidecar. The layout is
platform independent and round-trips bit exactly:

    8 bytes   magic
    u32       format version
    u64       n (rows)
    u64       d (columns)
    n*d*f32   row-major payload
    32 bytes  SHA-256 of the payload

Values are stored in 32 bits; every accumulation done by this package
(norms, dot products, covariances, losses) runs in 64 bits.
"""

from __future__ import annotations

import csv
import hashlib
import json
import struct
from dataclasses import dataclass, asdict
from pathlib import Path

import numpy as np

MAGIC = b"\x93EMBED\r\n"
FORMAT_VERSION = 1
SPLITS = ("train_normal", "test_in", "test_out")

_HEADER = struct.Struct("<8sIQQ")  # magic, version, n, d
_HASH_BYTES = 32


def _sha256(payload: bytes) -> bytes:
    return hashlib.sha256(payload).digest()


@dataclass
class DatasetManifest:
    """Sidecar metadata for one embedding file."""

    name: str
    split: str
    source: str
    d: int
    n: int
    checksum: str = ""

    def __post_init__(self):
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}, expected one of {SPLITS}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetManifest":
        extra = set(d) - {"name", "split", "source", "d", "n", "checksum"}
        if extra:
            raise ValueError(f"unknown manifest keys: {sorted(extra)}")
        return cls(**d)


def validate_embeddings(x, name: str = "embeddings") -> np.ndarray:
    """Coerce to a float32 C-contiguous matrix and check invariants.

    Raises ValueError if the input is not 2-D, is empty in either axis,
    or contains NaN/Inf.
    """
    arr = np.asarray(x)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must be at least 1x1, got shape {arr.shape}")
    arr = np.ascontiguousarray(arr, dtype=np.float32)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")
    return arr


def manifest_path(path) -> Path:
    p = Path(path)
    if p.suffix == ".emb":
        return p.with_suffix(".manifest.json")
    return Path(str(p) + ".manifest.json")


def save_embeddings(m, manifest: DatasetManifest, path) -> None:
    """Write an embedding matrix and its manifest sidecar.

    The manifest must agree with the matrix shape; its checksum, when
    set, must match the payload hash (leave it empty to have it filled).
    """
    arr = validate_embeddings(m)
    n, d = arr.shape
    if manifest.d != d:
        raise ValueError(f"dimension mismatch: manifest.d={manifest.d} but matrix d={d}")
    if manifest.n != n:
        raise ValueError(f"count mismatch: manifest.n={manifest.n} but matrix n={n}")

    payload = arr.astype("<f4", copy=False).tobytes()
    digest = _sha256(payload)
    if manifest.checksum and manifest.checksum != digest.hex():
        raise ValueError("checksum mismatch: manifest checksum does not match payload")

    path = Path(path)
    with open(path, "wb") as f:
        f.write(_HEADER.pack(MAGIC, FORMAT_VERSION, n, d))
        f.write(payload)
        f.write(digest)

    sidecar = manifest.to_dict()
    sidecar["checksum"] = digest.hex()
    with open(manifest_path(path), "w") as f:
        json.dump(sidecar, f, indent=2, sort_keys=True)
        f.write("\n")


def load_embeddings(path) -> tuple[np.ndarray, DatasetManifest]:
    """Read an ``.emb`` file and its manifest, verifying the checksum.

    Returns a read-only float32 matrix (safe to share across readers)
    and the parsed manifest.
    """
    path = Path(path)
    raw = path.read_bytes()
    if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
        raise ValueError(f"bad magic in {path}")
    if len(raw) < _HEADER.size:
        raise ValueError(f"truncated header in {path}")
    _, version, n, d = _HEADER.unpack_from(raw)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported format version {version} in {path}")
    expected = _HEADER.size + 4 * n * d + _HASH_BYTES
    if len(raw) < expected:
        raise ValueError(f"truncated payload in {path}: {len(raw)} < {expected} bytes")
    if len(raw) > expected:
        raise ValueError(f"trailing data in {path}: {len(raw)} > {expected} bytes")

    payload = raw[_HEADER.size : _HEADER.size + 4 * n * d]
    stored = raw[expected - _HASH_BYTES :]
    digest = _sha256(payload)
    if stored != digest:
        raise ValueError(f"checksum mismatch in {path}")

    arr = np.frombuffer(payload, dtype="<f4").reshape(n, d)
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"non-finite value in payload of {path}")
    arr.flags.writeable = False

    mpath = manifest_path(path)
    if not mpath.exists():
        raise ValueError(f"manifest sidecar not found: {mpath}")
    manifest = DatasetManifest.from_dict(json.loads(mpath.read_text()))
    if manifest.n != n or manifest.d != d:
        raise ValueError(
            f"manifest/matrix mismatch: manifest says {manifest.n}x{manifest.d}, "
            f"header says {n}x{d}"
        )
    if manifest.checksum != digest.hex():
        raise ValueError(f"checksum mismatch between manifest and payload of {path}")
    return arr, manifest


def l2_normalize(m) -> np.ndarray:
    """Scale every row to unit Euclidean norm (norms accumulated in float64).

    Raises ValueError naming the first zero-norm row.
    """
    arr = validate_embeddings(m)
    norms = np.sqrt(np.einsum("ij,ij->i", arr.astype(np.float64), arr.astype(np.float64)))
    zero = np.flatnonzero(norms == 0.0)
    if zero.size:
        raise ValueError(f"zero-norm row {zero[0]}: cannot normalize")
    return (arr / norms[:, None]).astype(np.float32)


def save_labels(labels, path, *, K: int, kind: str = "pseudo", extra: dict | None = None) -> None:
    """Write a label vector as JSON with its label-space size and kind."""
    lab = np.asarray(labels, dtype=np.int64)
    if lab.ndim != 1:
        raise ValueError(f"labels must be 1-D, got shape {lab.shape}")
    if kind not in ("ground_truth", "pseudo"):
        raise ValueError(f"unknown label kind {kind!r}")
    if lab.size and (lab.min() < 0 or lab.max() >= K):
        raise ValueError(f"labels outside [0, {K})")
    doc = {"labels": lab.tolist(), "K": int(K), "kind": kind}
    if extra:
        doc.update(extra)
    with open(path, "w") as f:
        json.dump(doc, f, indent=2, sort_keys=True)
        f.write("\n")


def load_labels(path) -> tuple[np.ndarray, int, str]:
    """Read a label JSON written by :func:`save_labels`.

    Returns (labels, K, kind).
    """
    doc = json.loads(Path(path).read_text())
    lab = np.asarray(doc["labels"], dtype=np.int64)
    K = int(doc["K"])
    kind = doc.get("kind", "pseudo")
    if lab.size and (lab.min() < 0 or lab.max() >= K):
        raise ValueError(f"labels outside [0, {K}) in {path}")
    return lab, K, kind


def import_csv(path) -> np.ndarray:
    """Read embeddings from CSV with header row ``dim0,dim1,...,dim{d-1}``."""
    path = Path(path)
    with open(path, newline="") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"empty CSV file {path}") from None
        expected = [f"dim{i}" for i in range(len(header))]
        if header != expected:
            raise ValueError(
                f"bad CSV header in {path}: expected dim0..dim{len(header) - 1}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise ValueError(f"row {lineno} of {path} has {len(row)} fields, expected {len(header)}")
            rows.append([float(v) for v in row])
    if not rows:
        raise ValueError(f"no data rows in {path}")
    return validate_embeddings(np.array(rows, dtype=np.float64), name=str(path))
