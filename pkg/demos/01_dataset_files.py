#!/usr/bin/env python3
"""Embedding dataset files: save, load, verify, import from CSV.

Embeddings live in .emb files (fixed little-endian binary with a
SHA-256 payload hash) plus a JSON manifest sidecar. Everything
round-trips bit exactly.
"""

import tempfile
from pathlib import Path

import numpy as np

from oodkit import (
    DatasetManifest,
    import_csv,
    l2_normalize,
    load_embeddings,
    save_embeddings,
)

workdir = Path(tempfile.mkdtemp(prefix="oodkit-demo-"))
print(f"working in {workdir}\n")

# --- write a small dataset -------------------------------------------------
rng = np.random.default_rng(0)
mat = rng.standard_normal((100, 32)).astype(np.float32)
manifest = DatasetManifest(name="demo", split="train_normal", source="synthetic",
                           d=32, n=100)
path = workdir / "demo.emb"
save_embeddings(mat, manifest, path)
print(f"wrote {path} ({path.stat().st_size} bytes) + sidecar {path.stem}.manifest.json")

# --- load it back ------------------------------------------------------------
loaded, loaded_manifest = load_embeddings(path)
print(f"loaded {loaded_manifest.n}x{loaded_manifest.d}, "
      f"checksum {loaded_manifest.checksum[:16]}...")
print("bit-exact round trip:", bool(np.array_equal(loaded, mat)))

# --- corruption is detected ---------------------------------------------------
corrupt = workdir / "corrupt.emb"
raw = bytearray(path.read_bytes())
raw[40] ^= 0xFF
corrupt.write_bytes(bytes(raw))
(workdir / "corrupt.manifest.json").write_text((workdir / "demo.manifest.json").read_text())
try:
    load_embeddings(corrupt)
except ValueError as e:
    print("corrupted copy rejected:", e)

# --- CSV convenience path ----------------------------------------------------
csv_path = workdir / "vectors.csv"
csv_path.write_text("dim0,dim1,dim2\n1,0,0\n3,4,0\n")
csv_mat = import_csv(csv_path)
print("\nCSV import:", csv_mat.tolist())
print("normalized:", l2_normalize(csv_mat).tolist())
