/**
 * Evaluation-mode preprocessing: bilinear resize of the shorter side,
 * center crop, per-channel normalization. No augmentation anywhere, so
 * repeated runs are bit-identical.
 */

import { Image } from "./image";

export interface PreprocessSpec {
  /** shorter side after resize */
  resize: number;
  /** square crop size */
  crop: number;
  mean: [number, number, number];
  std: [number, number, number];
}

export function describePreprocess(p: PreprocessSpec): string {
  return `resize=${p.resize},crop=${p.crop},mean=[${p.mean}],std=[${p.std}]`;
}

/** Bilinear resample to exactly width x height (half-pixel centers). */
export function resizeBilinear(img: Image, width: number, height: number): Image {
  const out = new Float32Array(width * height * 3);
  const sx = img.width / width;
  const sy = img.height / height;
  for (let y = 0; y < height; y++) {
    const fy = Math.min(Math.max((y + 0.5) * sy - 0.5, 0), img.height - 1);
    const y0 = Math.floor(fy);
    const y1 = Math.min(y0 + 1, img.height - 1);
    const wy = fy - y0;
    for (let x = 0; x < width; x++) {
      const fx = Math.min(Math.max((x + 0.5) * sx - 0.5, 0), img.width - 1);
      const x0 = Math.floor(fx);
      const x1 = Math.min(x0 + 1, img.width - 1);
      const wx = fx - x0;
      for (let c = 0; c < 3; c++) {
        const p00 = img.pixels[3 * (y0 * img.width + x0) + c];
        const p01 = img.pixels[3 * (y0 * img.width + x1) + c];
        const p10 = img.pixels[3 * (y1 * img.width + x0) + c];
        const p11 = img.pixels[3 * (y1 * img.width + x1) + c];
        out[3 * (y * width + x) + c] =
          (1 - wy) * ((1 - wx) * p00 + wx * p01) + wy * ((1 - wx) * p10 + wx * p11);
      }
    }
  }
  return { width, height, pixels: out };
}

export function centerCrop(img: Image, size: number): Image {
  if (img.width < size || img.height < size) {
    throw new Error(
      `cannot center-crop ${size}x${size} from ${img.width}x${img.height}`,
    );
  }
  const x0 = Math.floor((img.width - size) / 2);
  const y0 = Math.floor((img.height - size) / 2);
  const out = new Float32Array(size * size * 3);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      for (let c = 0; c < 3; c++) {
        out[3 * (y * size + x) + c] =
          img.pixels[3 * ((y0 + y) * img.width + (x0 + x)) + c];
      }
    }
  }
  return { width: size, height: size, pixels: out };
}

/** Full pipeline; returns CHW float32 of shape [3, crop, crop]. */
export function preprocess(img: Image, spec: PreprocessSpec): Float32Array {
  const scale = spec.resize / Math.min(img.width, img.height);
  const resized = resizeBilinear(
    img,
    Math.max(spec.crop, Math.round(img.width * scale)),
    Math.max(spec.crop, Math.round(img.height * scale)),
  );
  const cropped = centerCrop(resized, spec.crop);
  const s = spec.crop;
  const out = new Float32Array(3 * s * s);
  for (let c = 0; c < 3; c++) {
    for (let i = 0; i < s * s; i++) {
      out[c * s * s + i] = (cropped.pixels[3 * i + c] - spec.mean[c]) / spec.std[c];
    }
  }
  return out;
}
