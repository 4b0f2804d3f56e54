import assert from "node:assert/strict";
import { test } from "node:test";

import { decodeImage, encodePpm } from "../src/image";

// PIL-written fixtures with known pixel values
const RGB_4x4 =
  "iVBORw0KGgoAAAANSUhEUgAAAAQAAAAECAIAAAAmkwkpAAAAP0lEQVR4nAE0AMv/AF+CwtnP6w+jIdfZggD4vRBFuOjNTqk9fQoBHfBC9sblKE4UFtrxAluK8L2Y9QWiPgjMvcAUGmGw6GylAAAAAElFTkSuQmCC";
const RGB_4x4_PIXELS = [
  95, 130, 194, 217, 207, 235, 15, 163, 33, 215, 217, 130, 248, 189, 16, 69,
  184, 232, 205, 78, 169, 61, 125, 10, 29, 240, 66, 19, 182, 39, 59, 4, 59,
  81, 222, 44, 120, 122, 50, 208, 78, 28, 64, 166, 121, 89, 170, 233,
];
const RGBA_3x3 =
  "iVBORw0KGgoAAAANSUhEUgAAAAMAAAADCAYAAABWKLW/AAAAMklEQVR4nAEnANj/AX+y7f/yyV8A1B82AABfScD/v3/c/+cBK/8A7b9W/wfoYP9MNwD/nJUUxUSZCGUAAAAASUVORK5CYII=";
const RGBA_3x3_PIXELS = [
  127, 178, 237, 255, 113, 123, 76, 255, 69, 154, 130, 255, 95, 73, 192, 255,
  191, 127, 220, 255, 231, 1, 43, 255, 237, 191, 86, 255, 7, 232, 96, 255,
  76, 55, 0, 255,
];
const GRAY_5x2 =
  "iVBORw0KGgoAAAANSUhEUgAAAAUAAAACCAAAAAC1AUmBAAAAFElEQVR4nGP0rRL5+oDF+fuFvQIAH+QFjWa9x/0AAAAASUVORK5CYII=";
const GRAY_5x2_PIXELS = [77, 199, 219, 208, 176, 144, 190, 171, 104, 120];

function assertPixels(actual: Float32Array, expected: number[]) {
  assert.equal(actual.length, expected.length);
  for (let i = 0; i < expected.length; i++) {
    assert.ok(
      Math.abs(actual[i] - expected[i] / 255) < 1e-6,
      `pixel ${i}: ${actual[i]} != ${expected[i] / 255}`,
    );
  }
}

test("decodes 8-bit RGB PNG to known pixels", () => {
  const img = decodeImage(Buffer.from(RGB_4x4, "base64"), "rgb");
  assert.equal(img.width, 4);
  assert.equal(img.height, 4);
  assertPixels(img.pixels, RGB_4x4_PIXELS);
});

test("decodes RGBA PNG, alpha dropped", () => {
  const img = decodeImage(Buffer.from(RGBA_3x3, "base64"), "rgba");
  assert.equal(img.width, 3);
  assert.equal(img.height, 3);
  const rgb = RGBA_3x3_PIXELS.filter((_, i) => i % 4 !== 3);
  assertPixels(img.pixels, rgb);
});

test("decodes grayscale PNG, replicated to RGB", () => {
  const img = decodeImage(Buffer.from(GRAY_5x2, "base64"), "gray");
  assert.equal(img.width, 5);
  assert.equal(img.height, 2);
  const rgb: number[] = [];
  for (const v of GRAY_5x2_PIXELS) rgb.push(v, v, v);
  assertPixels(img.pixels, rgb);
});

test("PPM round-trips through encode/decode", () => {
  const src = decodeImage(Buffer.from(RGB_4x4, "base64"), "rgb");
  const back = decodeImage(encodePpm(src), "ppm");
  assert.equal(back.width, 4);
  assert.equal(back.height, 4);
  for (let i = 0; i < src.pixels.length; i++) {
    assert.ok(Math.abs(back.pixels[i] - src.pixels[i]) < 1e-6);
  }
});

test("PGM grayscale is replicated to RGB", () => {
  const buf = Buffer.concat([
    Buffer.from("P5\n2 1\n255\n", "ascii"),
    Buffer.from([10, 250]),
  ]);
  const img = decodeImage(buf, "pgm");
  assert.equal(img.width, 2);
  assertPixels(img.pixels, [10, 10, 10, 250, 250, 250]);
});

test("unsupported container is rejected", () => {
  assert.throws(() => decodeImage(Buffer.from("JFIF....", "ascii"), "x"),
                /unsupported image container/);
});

test("corrupted PNG magic is rejected", () => {
  const raw = Buffer.from(RGB_4x4, "base64");
  raw[1] ^= 0xff;
  assert.throws(() => decodeImage(raw, "x"), /unsupported image container/);
});
