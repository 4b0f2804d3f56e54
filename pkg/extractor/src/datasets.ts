/**
 * Dataset providers. Row order is the dataset order and is stable:
 * directory datasets iterate files in sorted name order; CIFAR batches
 * keep record order.
 *
 * `dir:<path>` reads every .ppm/.pgm/.png under the path (one image per
 * file). `cifar10` / `cifar100` read the binary-batch distributions
 * from $OODKIT_DATA_DIR; nothing is downloaded, a missing copy is an
 * explicit error.
 */

import * as fs from "node:fs";
import * as path from "node:path";

import { Image, decodeImage } from "./image";

export interface Dataset {
  name: string;
  size: number;
  get(index: number): Image;
}

export function openDataset(id: string, split: "train" | "test"): Dataset {
  if (id.startsWith("dir:")) {
    return new DirectoryDataset(id.slice(4));
  }
  if (id === "cifar10") {
    return new Cifar10Dataset(split);
  }
  if (id === "cifar100") {
    return new Cifar100Dataset(split);
  }
  throw new Error(`unknown dataset '${id}' (use dir:<path>, cifar10 or cifar100)`);
}

const IMAGE_EXTS = new Set([".ppm", ".pgm", ".png"]);

export class DirectoryDataset implements Dataset {
  readonly name: string;
  private files: string[];

  constructor(dir: string) {
    if (!fs.existsSync(dir) || !fs.statSync(dir).isDirectory()) {
      throw new Error(`dataset directory not found: ${dir}`);
    }
    this.files = fs
      .readdirSync(dir)
      .filter((f) => IMAGE_EXTS.has(path.extname(f).toLowerCase()))
      .sort()
      .map((f) => path.join(dir, f));
    if (this.files.length === 0) {
      throw new Error(`no images (.ppm/.pgm/.png) in ${dir}`);
    }
    this.name = `dir:${dir}`;
  }

  get size(): number {
    return this.files.length;
  }

  get(index: number): Image {
    return decodeImage(fs.readFileSync(this.files[index]), this.files[index]);
  }
}

interface CifarLayout {
  name: string;
  subdir: string;
  files: string[];
  /** bytes per record: labels + 3072 channel-planar pixels */
  recordLen: number;
  /** offset of the red plane within a record */
  pixelOffset: number;
}

/** CIFAR binary-batch reader (channel-planar RGB 32x32 records). */
class CifarBinaryDataset implements Dataset {
  readonly name: string;
  private records: Buffer[] = [];
  private pixelOffset: number;

  constructor(layout: CifarLayout) {
    this.name = layout.name;
    this.pixelOffset = layout.pixelOffset;
    const root = process.env.OODKIT_DATA_DIR;
    if (!root) {
      throw new Error(
        "download failure: $OODKIT_DATA_DIR is not set and automatic " +
        "downloads are not attempted; place the binary batches there",
      );
    }
    for (const f of layout.files) {
      const p = path.join(root, layout.subdir, f);
      if (!fs.existsSync(p)) {
        throw new Error(`download failure: ${p} not found (nothing is fetched)`);
      }
      const raw = fs.readFileSync(p);
      if (raw.length % layout.recordLen !== 0) {
        throw new Error(`${p}: size ${raw.length} is not a multiple of ${layout.recordLen}`);
      }
      for (let off = 0; off < raw.length; off += layout.recordLen) {
        this.records.push(raw.subarray(off, off + layout.recordLen));
      }
    }
  }

  get size(): number {
    return this.records.length;
  }

  get(index: number): Image {
    const rec = this.records[index];
    const pixels = new Float32Array(32 * 32 * 3);
    const plane = 32 * 32;
    for (let i = 0; i < plane; i++) {
      pixels[3 * i] = rec[this.pixelOffset + i] / 255;
      pixels[3 * i + 1] = rec[this.pixelOffset + plane + i] / 255;
      pixels[3 * i + 2] = rec[this.pixelOffset + 2 * plane + i] / 255;
    }
    return { width: 32, height: 32, pixels };
  }
}

export class Cifar10Dataset extends CifarBinaryDataset {
  constructor(split: "train" | "test") {
    super({
      name: `cifar10/${split}`,
      subdir: "cifar-10-batches-bin",
      files: split === "train"
        ? [1, 2, 3, 4, 5].map((i) => `data_batch_${i}.bin`)
        : ["test_batch.bin"],
      recordLen: 3073,
      pixelOffset: 1,
    });
  }
}

/** CIFAR-100 binary records carry a coarse and a fine label byte. */
export class Cifar100Dataset extends CifarBinaryDataset {
  constructor(split: "train" | "test") {
    super({
      name: `cifar100/${split}`,
      subdir: "cifar-100-binary",
      files: split === "train" ? ["train.bin"] : ["test.bin"],
      recordLen: 3074,
      pixelOffset: 2,
    });
  }
}
