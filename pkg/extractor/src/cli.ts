#!/usr/bin/env node
/**
 * oodkit-extract: dump penultimate-layer embeddings into .emb files.
 *
 *   oodkit-extract --dataset cifar10 --split train --backbone resnet152-in1k --out train.emb
 *   oodkit-extract --dataset dir:./images --backbone ref-768 --out images.emb
 *
 * Exit codes: 0 success, 1 usage error, 2 extraction error.
 */

import { backboneIds } from "./backbones";
import { extract, ExtractJob } from "./extract";
import { Split } from "./embfile";

const USAGE = `usage: oodkit-extract --dataset <id> --backbone <id> --out <file.emb>
                      [--split train|test] [--batch-size N] [--limit N]
                      [--manifest-split train_normal|test_in|test_out]
                      [--model-file model.onnx]

datasets:  dir:<path> (sorted .ppm/.pgm/.png files), cifar10, cifar100
backbones: ${backboneIds().join(", ")}
env:       OODKIT_DATA_DIR (CIFAR binary batches), OODKIT_MODEL_DIR (ONNX exports)`;

function parseArgs(argv: string[]): ExtractJob {
  const opts = new Map<string, string>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (arg === "--help" || arg === "-h") {
      console.log(USAGE);
      process.exit(0);
    }
    if (!arg.startsWith("--")) {
      throw new UsageError(`unexpected argument '${arg}'`);
    }
    const value = argv[++i];
    if (value === undefined) {
      throw new UsageError(`missing value for ${arg}`);
    }
    opts.set(arg.slice(2), value);
  }
  const known = new Set([
    "dataset", "split", "backbone", "batch-size", "out",
    "manifest-split", "limit", "model-file",
  ]);
  for (const key of opts.keys()) {
    if (!known.has(key)) {
      throw new UsageError(`unknown option --${key}`);
    }
  }
  for (const required of ["dataset", "backbone", "out"]) {
    if (!opts.has(required)) {
      throw new UsageError(`--${required} is required`);
    }
  }
  const split = (opts.get("split") ?? "train") as "train" | "test";
  if (split !== "train" && split !== "test") {
    throw new UsageError(`--split must be train or test, got '${split}'`);
  }
  const manifestSplit = opts.get("manifest-split") as Split | undefined;
  if (manifestSplit && !["train_normal", "test_in", "test_out"].includes(manifestSplit)) {
    throw new UsageError(`bad --manifest-split '${manifestSplit}'`);
  }
  return {
    dataset: opts.get("dataset")!,
    split,
    backbone: opts.get("backbone")!,
    batchSize: parseInt(opts.get("batch-size") ?? "64", 10),
    outPath: opts.get("out")!,
    manifestSplit,
    limit: opts.has("limit") ? parseInt(opts.get("limit")!, 10) : undefined,
    modelFile: opts.get("model-file"),
  };
}

class UsageError extends Error {}

export async function main(argv: string[]): Promise<number> {
  let job: ExtractJob;
  try {
    job = parseArgs(argv);
  } catch (e) {
    if (e instanceof UsageError) {
      console.error(`oodkit-extract: ${e.message}`);
      console.error(USAGE);
      return 1;
    }
    throw e;
  }
  try {
    const result = await extract(job);
    console.error(
      `wrote ${result.n}x${result.d} embeddings to ${job.outPath} ` +
      `(source: ${result.source}, sha256 ${result.checksum.slice(0, 16)}...)`,
    );
    return 0;
  } catch (e) {
    console.error(`oodkit-extract: extraction failed: ${(e as Error).message}`);
    return 2;
  }
}

if (require.main === module) {
  main(process.argv.slice(2)).then((code) => {
    process.exitCode = code;
  });
}
