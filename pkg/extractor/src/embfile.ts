/**
 * Writer (and self-check reader) for the .emb embedding container.
 *
 * Layout, little-endian throughout:
 *   8 bytes  magic 0x93 'E' 'M' 'B' 'E' 'D' '\r' '\n'
 *   u32      format version (1)
 *   u64      n rows
 *   u64      d columns
 *   n*d f32  payload, row-major
 *   32 bytes SHA-256 of the payload
 *
 * A JSON manifest sidecar (<name>.manifest.json) carries name, split,
 * source, shape and the checksum hex. Files written here are validated
 * by the Python package's load_embeddings.
 */

import { createHash } from "node:crypto";
import * as fs from "node:fs";
import * as path from "node:path";

export const MAGIC = Buffer.from([0x93, 0x45, 0x4d, 0x42, 0x45, 0x44, 0x0d, 0x0a]);
export const FORMAT_VERSION = 1;

export type Split = "train_normal" | "test_in" | "test_out";

export interface Manifest {
  name: string;
  split: Split;
  source: string;
  d: number;
  n: number;
  checksum: string;
}

export function manifestPath(embPath: string): string {
  const parsed = path.parse(embPath);
  if (parsed.ext === ".emb") {
    return path.join(parsed.dir, `${parsed.name}.manifest.json`);
  }
  return `${embPath}.manifest.json`;
}

/** Serialize rows to the binary layout; returns the payload checksum hex. */
export function writeEmb(
  rows: Float32Array,
  n: number,
  d: number,
  manifest: Omit<Manifest, "checksum" | "n" | "d">,
  outPath: string,
): string {
  if (n < 1 || d < 1) {
    throw new Error(`matrix must be at least 1x1, got ${n}x${d}`);
  }
  if (rows.length !== n * d) {
    throw new Error(`payload length ${rows.length} != n*d = ${n * d}`);
  }
  for (let i = 0; i < rows.length; i++) {
    if (!Number.isFinite(rows[i])) {
      throw new Error(`non-finite value at flat index ${i}`);
    }
  }

  const header = Buffer.alloc(28);
  MAGIC.copy(header, 0);
  header.writeUInt32LE(FORMAT_VERSION, 8);
  header.writeBigUInt64LE(BigInt(n), 12);
  header.writeBigUInt64LE(BigInt(d), 20);

  const payload = Buffer.alloc(4 * n * d);
  for (let i = 0; i < rows.length; i++) {
    payload.writeFloatLE(rows[i], 4 * i);
  }
  const digest = createHash("sha256").update(payload).digest();

  fs.writeFileSync(outPath, Buffer.concat([header, payload, digest]));

  const checksum = digest.toString("hex");
  const doc: Manifest = { ...manifest, d, n, checksum };
  fs.writeFileSync(manifestPath(outPath), JSON.stringify(doc, Object.keys(doc).sort(), 2) + "\n");
  return checksum;
}

/** Parse an .emb file back (used by tests to cross-check the writer). */
export function readEmb(embPath: string): { rows: Float32Array; n: number; d: number; checksum: string } {
  const raw = fs.readFileSync(embPath);
  if (raw.length < 8 || !raw.subarray(0, 8).equals(MAGIC)) {
    throw new Error(`bad magic in ${embPath}`);
  }
  const version = raw.readUInt32LE(8);
  if (version !== FORMAT_VERSION) {
    throw new Error(`unsupported version ${version} in ${embPath}`);
  }
  const n = Number(raw.readBigUInt64LE(12));
  const d = Number(raw.readBigUInt64LE(20));
  const expected = 28 + 4 * n * d + 32;
  if (raw.length < expected) {
    throw new Error(`truncated payload in ${embPath}`);
  }
  if (raw.length > expected) {
    throw new Error(`trailing data in ${embPath}`);
  }
  const payload = raw.subarray(28, 28 + 4 * n * d);
  const digest = createHash("sha256").update(payload).digest();
  if (!digest.equals(raw.subarray(expected - 32))) {
    throw new Error(`checksum mismatch in ${embPath}`);
  }
  const rows = new Float32Array(n * d);
  for (let i = 0; i < rows.length; i++) {
    rows[i] = payload.readFloatLE(4 * i);
  }
  return { rows, n, d, checksum: digest.toString("hex") };
}
