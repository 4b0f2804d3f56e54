/**
 * Backbone registry. A backbone turns preprocessed CHW tensors into
 * penultimate-layer embedding rows.
 *
 * Two kinds are wired in:
 *  - "ref-*": a deterministic offline encoder (seeded random projection
 *    of the preprocessed pixels through a tanh) used for format
 *    conformance and pipeline rehearsal without downloads.
 *  - ONNX-backed real backbones (ResNet / ViT / CLIP visual heads):
 *    these need onnxruntime-node plus a penultimate-layer ONNX export,
 *    located via --model-file or $OODKIT_MODEL_DIR/<backbone>.onnx.
 *    Without both, extraction fails with a download/weights error
 *    rather than producing fake numbers.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { PreprocessSpec, describePreprocess } from "./preprocess";
import { Splitmix64 } from "./prng";

export interface Backbone {
  id: string;
  dim: number;
  spec: PreprocessSpec;
  /** Embed a batch of CHW tensors; returns [batch.length][dim] rows. */
  embed(batch: Float32Array[]): Promise<Float32Array[]>;
}

const IMAGENET: Pick<PreprocessSpec, "mean" | "std"> = {
  mean: [0.485, 0.456, 0.406],
  std: [0.229, 0.224, 0.225],
};
const CLIP: Pick<PreprocessSpec, "mean" | "std"> = {
  mean: [0.48145466, 0.4578275, 0.40821073],
  std: [0.26862954, 0.26130258, 0.27577711],
};

interface Entry {
  dim: number;
  spec: PreprocessSpec;
  kind: "reference" | "onnx";
}

export const REGISTRY: Record<string, Entry> = {
  "ref-768": {
    dim: 768,
    spec: { resize: 36, crop: 32, mean: [0.5, 0.5, 0.5], std: [0.5, 0.5, 0.5] },
    kind: "reference",
  },
  "ref-64": {
    dim: 64,
    spec: { resize: 36, crop: 32, mean: [0.5, 0.5, 0.5], std: [0.5, 0.5, 0.5] },
    kind: "reference",
  },
  "resnet18-in1k": {
    dim: 512,
    spec: { resize: 256, crop: 224, ...IMAGENET },
    kind: "onnx",
  },
  "resnet152-in1k": {
    dim: 2048,
    spec: { resize: 256, crop: 224, ...IMAGENET },
    kind: "onnx",
  },
  "vit-b16-in21k": {
    dim: 768,
    spec: { resize: 256, crop: 224, ...IMAGENET },
    kind: "onnx",
  },
  "clip-vit-b32": {
    dim: 512,
    spec: { resize: 224, crop: 224, ...CLIP },
    kind: "onnx",
  },
  "clip-vit-l14": {
    dim: 768,
    spec: { resize: 224, crop: 224, ...CLIP },
    kind: "onnx",
  },
};

export function backboneIds(): string[] {
  return Object.keys(REGISTRY);
}

export function sourceTag(b: Backbone): string {
  return `${b.id}; ${describePreprocess(b.spec)}`;
}

export function loadBackbone(id: string, modelFile?: string): Backbone {
  const entry = REGISTRY[id];
  if (!entry) {
    throw new Error(`unknown backbone '${id}'; known: ${backboneIds().join(", ")}`);
  }
  if (entry.kind === "reference") {
    return new ReferenceBackbone(id, entry.dim, entry.spec);
  }
  return new OnnxBackbone(id, entry.dim, entry.spec, modelFile);
}

/**
 * Deterministic offline encoder: a fixed random projection (seeded by
 * the backbone id) of the preprocessed pixels, squashed by tanh. Not a
 * learned representation; exists so the file format, preprocessing and
 * batching can be exercised and conformance-tested offline.
 */
export class ReferenceBackbone implements Backbone {
  readonly id: string;
  readonly dim: number;
  readonly spec: PreprocessSpec;
  private weights: Float64Array | null = null;

  constructor(id: string, dim: number, spec: PreprocessSpec) {
    this.id = id;
    this.dim = dim;
    this.spec = spec;
  }

  private projection(inputDim: number): Float64Array {
    if (this.weights === null) {
      const rng = new Splitmix64(Splitmix64.seedFromString(this.id));
      const w = new Float64Array(this.dim * inputDim);
      const scale = 1.0 / Math.sqrt(inputDim);
      for (let i = 0; i < w.length; i++) {
        w[i] = (2 * rng.nextFloat() - 1) * scale;
      }
      this.weights = w;
    }
    return this.weights;
  }

  async embed(batch: Float32Array[]): Promise<Float32Array[]> {
    const out: Float32Array[] = [];
    for (const x of batch) {
      const w = this.projection(x.length);
      const row = new Float32Array(this.dim);
      for (let j = 0; j < this.dim; j++) {
        let acc = 0;
        const base = j * x.length;
        for (let i = 0; i < x.length; i++) {
          acc += w[base + i] * x[i];
        }
        row[j] = Math.tanh(acc);
      }
      out.push(row);
    }
    return out;
  }
}

/** Real backbone via an ONNX penultimate-layer export. */
export class OnnxBackbone implements Backbone {
  readonly id: string;
  readonly dim: number;
  readonly spec: PreprocessSpec;
  private modelFile: string | undefined;
  private session: { run: Function } | null = null;
  private ort: any = null;

  constructor(id: string, dim: number, spec: PreprocessSpec, modelFile?: string) {
    this.id = id;
    this.dim = dim;
    this.spec = spec;
    this.modelFile = modelFile;
  }

  private resolveModelFile(): string {
    if (this.modelFile) return this.modelFile;
    const dir = process.env.OODKIT_MODEL_DIR;
    if (dir) {
      const candidate = path.join(dir, `${this.id}.onnx`);
      if (fs.existsSync(candidate)) return candidate;
    }
    throw new Error(
      `weights for '${this.id}' not obtainable: no --model-file given and ` +
      `$OODKIT_MODEL_DIR/${this.id}.onnx not found (downloads are not attempted)`,
    );
  }

  private async ensureSession(): Promise<void> {
    if (this.session) return;
    const file = this.resolveModelFile();
    try {
      // optional dependency; only needed for real-backbone extraction
      this.ort = require("onnxruntime-node");
    } catch {
      throw new Error(
        `backbone '${this.id}' needs onnxruntime-node (npm install onnxruntime-node)`,
      );
    }
    this.session = await this.ort.InferenceSession.create(file);
  }

  async embed(batch: Float32Array[]): Promise<Float32Array[]> {
    await this.ensureSession();
    const s = this.spec.crop;
    const data = new Float32Array(batch.length * 3 * s * s);
    batch.forEach((x, i) => {
      if (x.length !== 3 * s * s) {
        throw new Error(
          `preprocessing mismatch: got ${x.length} values, expected ${3 * s * s}`,
        );
      }
      data.set(x, i * 3 * s * s);
    });
    const input = new this.ort.Tensor("float32", data, [batch.length, 3, s, s]);
    const session = this.session as any;
    const outputs = await session.run({ [session.inputNames[0]]: input });
    const result = outputs[session.outputNames[0]];
    const [rows, dim] = result.dims;
    if (dim !== this.dim) {
      throw new Error(
        `backbone '${this.id}' produced d=${dim}, registry says ${this.dim}`,
      );
    }
    const out: Float32Array[] = [];
    for (let i = 0; i < rows; i++) {
      out.push(Float32Array.from(result.data.slice(i * dim, (i + 1) * dim)));
    }
    return out;
  }
}
