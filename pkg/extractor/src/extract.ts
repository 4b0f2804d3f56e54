/**
 * The extraction job: dataset rows -> preprocess -> backbone ->
 * .emb file + manifest. Row order equals dataset order, preprocessing
 * is evaluation-mode only (no augmentation), and repeated runs of the
 * same job produce bit-identical files.
 */

import { Backbone, loadBackbone, sourceTag } from "./backbones";
import { openDataset } from "./datasets";
import { Split, writeEmb } from "./embfile";
import { preprocess } from "./preprocess";

export interface ExtractJob {
  /** `dir:<path>`, `cifar10`, or `cifar100` */
  dataset: string;
  split: "train" | "test";
  backbone: string;
  batchSize: number;
  outPath: string;
  /** split recorded in the manifest (defaults per dataset split) */
  manifestSplit?: Split;
  /** only the first N images (rehearsals on big datasets) */
  limit?: number;
  /** explicit ONNX file for real backbones */
  modelFile?: string;
}

export interface ExtractResult {
  n: number;
  d: number;
  checksum: string;
  source: string;
}

export async function extract(job: ExtractJob): Promise<ExtractResult> {
  if (job.batchSize < 1) {
    throw new Error("batchSize must be >= 1");
  }
  const backbone: Backbone = loadBackbone(job.backbone, job.modelFile);
  const data = openDataset(job.dataset, job.split);
  const n = job.limit !== undefined ? Math.min(job.limit, data.size) : data.size;
  if (n < 1) {
    throw new Error(`dataset ${data.name} is empty after limit`);
  }

  const rows = new Float32Array(n * backbone.dim);
  for (let start = 0; start < n; start += job.batchSize) {
    const end = Math.min(start + job.batchSize, n);
    const batch: Float32Array[] = [];
    for (let i = start; i < end; i++) {
      batch.push(preprocess(data.get(i), backbone.spec));
    }
    const embedded = await backbone.embed(batch);
    embedded.forEach((row, j) => {
      if (row.length !== backbone.dim) {
        throw new Error(
          `backbone returned d=${row.length}, expected ${backbone.dim}`,
        );
      }
      rows.set(row, (start + j) * backbone.dim);
    });
  }

  const source = sourceTag(backbone);
  const manifestSplit: Split =
    job.manifestSplit ?? (job.split === "train" ? "train_normal" : "test_in");
  const checksum = writeEmb(rows, n, backbone.dim, {
    name: `${data.name}/${job.split}`,
    split: manifestSplit,
    source,
  }, job.outPath);
  return { n, d: backbone.dim, checksum, source };
}
