/**
 * Image loading without native dependencies.
 *
 * Supported containers:
 *  - PPM (P6) and PGM (P5), 8-bit maxval
 *  - PNG: 8-bit depth, color types 0/2/4/6, non-interlaced (the zlib
 *    inflate comes from node's built-in zlib)
 *
 * Decoded images are interleaved RGB in [0, 1].
 */

import * as zlib from "node:zlib";

export interface Image {
  width: number;
  height: number;
  /** RGB interleaved, length = width * height * 3, values in [0, 1]. */
  pixels: Float32Array;
}

export function decodeImage(buf: Buffer, name = "image"): Image {
  if (buf.length >= 2 && buf[0] === 0x50 && (buf[1] === 0x35 || buf[1] === 0x36)) {
    return decodePnm(buf, name);
  }
  if (buf.length >= 8 && buf.readUInt32BE(0) === 0x89504e47) {
    return decodePng(buf, name);
  }
  throw new Error(`${name}: unsupported image container (expected PPM/PGM or PNG)`);
}

// --------------------------------------------------------------------------
// PNM

function decodePnm(buf: Buffer, name: string): Image {
  const channels = buf[1] === 0x36 ? 3 : 1;
  let pos = 2;
  const fields: number[] = [];
  while (fields.length < 3) {
    while (pos < buf.length && isSpace(buf[pos])) pos++;
    if (buf[pos] === 0x23) { // comment line
      while (pos < buf.length && buf[pos] !== 0x0a) pos++;
      continue;
    }
    let start = pos;
    while (pos < buf.length && !isSpace(buf[pos])) pos++;
    fields.push(parseInt(buf.subarray(start, pos).toString("ascii"), 10));
  }
  pos++; // single whitespace after maxval
  const [width, height, maxval] = fields;
  if (!(width >= 1 && height >= 1)) throw new Error(`${name}: bad PNM dimensions`);
  if (maxval !== 255) throw new Error(`${name}: only 8-bit PNM supported`);
  const need = width * height * channels;
  if (buf.length - pos < need) throw new Error(`${name}: truncated PNM payload`);

  const pixels = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    if (channels === 3) {
      pixels[3 * i] = buf[pos + 3 * i] / 255;
      pixels[3 * i + 1] = buf[pos + 3 * i + 1] / 255;
      pixels[3 * i + 2] = buf[pos + 3 * i + 2] / 255;
    } else {
      const v = buf[pos + i] / 255;
      pixels[3 * i] = v;
      pixels[3 * i + 1] = v;
      pixels[3 * i + 2] = v;
    }
  }
  return { width, height, pixels };
}

function isSpace(b: number): boolean {
  return b === 0x20 || b === 0x09 || b === 0x0a || b === 0x0d;
}

// --------------------------------------------------------------------------
// PNG

function decodePng(buf: Buffer, name: string): Image {
  let pos = 8;
  let width = 0;
  let height = 0;
  let bitDepth = 0;
  let colorType = 0;
  const idat: Buffer[] = [];

  while (pos + 8 <= buf.length) {
    const length = buf.readUInt32BE(pos);
    const type = buf.subarray(pos + 4, pos + 8).toString("ascii");
    const data = buf.subarray(pos + 8, pos + 8 + length);
    if (type === "IHDR") {
      width = data.readUInt32BE(0);
      height = data.readUInt32BE(4);
      bitDepth = data[8];
      colorType = data[9];
      if (data[12] !== 0) throw new Error(`${name}: interlaced PNG not supported`);
      if (bitDepth !== 8) throw new Error(`${name}: only 8-bit PNG supported`);
      if (![0, 2, 4, 6].includes(colorType)) {
        throw new Error(`${name}: palette PNG not supported`);
      }
    } else if (type === "IDAT") {
      idat.push(data);
    } else if (type === "IEND") {
      break;
    }
    pos += 12 + length; // length + type + data + crc
  }
  if (!width || !height) throw new Error(`${name}: missing IHDR`);

  const channels = { 0: 1, 2: 3, 4: 2, 6: 4 }[colorType as 0 | 2 | 4 | 6];
  const raw = zlib.inflateSync(Buffer.concat(idat));
  const stride = width * channels;
  if (raw.length < height * (stride + 1)) throw new Error(`${name}: truncated PNG payload`);

  // undo per-scanline filters
  const out = Buffer.alloc(height * stride);
  for (let y = 0; y < height; y++) {
    const filter = raw[y * (stride + 1)];
    const line = raw.subarray(y * (stride + 1) + 1, (y + 1) * (stride + 1));
    const prev = y > 0 ? out.subarray((y - 1) * stride, y * stride) : null;
    const cur = out.subarray(y * stride, (y + 1) * stride);
    for (let x = 0; x < stride; x++) {
      const a = x >= channels ? cur[x - channels] : 0;
      const b = prev ? prev[x] : 0;
      const c = x >= channels && prev ? prev[x - channels] : 0;
      let v: number;
      switch (filter) {
        case 0: v = line[x]; break;
        case 1: v = line[x] + a; break;
        case 2: v = line[x] + b; break;
        case 3: v = line[x] + ((a + b) >> 1); break;
        case 4: v = line[x] + paeth(a, b, c); break;
        default: throw new Error(`${name}: unknown PNG filter ${filter}`);
      }
      cur[x] = v & 0xff;
    }
  }

  const pixels = new Float32Array(width * height * 3);
  for (let i = 0; i < width * height; i++) {
    const base = i * channels;
    let r: number, g: number, b: number;
    if (colorType === 0 || colorType === 4) {
      r = g = b = out[base];
    } else {
      r = out[base];
      g = out[base + 1];
      b = out[base + 2];
    }
    pixels[3 * i] = r / 255;
    pixels[3 * i + 1] = g / 255;
    pixels[3 * i + 2] = b / 255;
  }
  return { width, height, pixels };
}

function paeth(a: number, b: number, c: number): number {
  const p = a + b - c;
  const pa = Math.abs(p - a);
  const pb = Math.abs(p - b);
  const pc = Math.abs(p - c);
  if (pa <= pb && pa <= pc) return a;
  if (pb <= pc) return b;
  return c;
}

/** Encode as binary PPM (P6); used by tests and fixture tooling. */
export function encodePpm(img: Image): Buffer {
  const header = Buffer.from(`P6\n${img.width} ${img.height}\n255\n`, "ascii");
  const body = Buffer.alloc(img.width * img.height * 3);
  for (let i = 0; i < body.length; i++) {
    body[i] = Math.max(0, Math.min(255, Math.round(img.pixels[i] * 255)));
  }
  return Buffer.concat([header, body]);
}
