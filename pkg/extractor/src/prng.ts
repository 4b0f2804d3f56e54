/**
 * Splitmix64 over BigInt: deterministic, platform-independent stream
 * used to seed the reference backbone's projection matrix.
 */

const MASK = (1n << 64n) - 1n;

export class Splitmix64 {
  private state: bigint;

  constructor(seed: bigint) {
    this.state = seed & MASK;
  }

  static seedFromString(s: string): bigint {
    // FNV-1a, folded to 64 bits
    let h = 0xcbf29ce484222325n;
    for (const ch of Buffer.from(s, "utf8")) {
      h ^= BigInt(ch);
      h = (h * 0x100000001b3n) & MASK;
    }
    return h;
  }

  nextUint64(): bigint {
    this.state = (this.state + 0x9e3779b97f4a7c15n) & MASK;
    let z = this.state;
    z = ((z ^ (z >> 30n)) * 0xbf58476d1ce4e5b9n) & MASK;
    z = ((z ^ (z >> 27n)) * 0x94d049bb133111ebn) & MASK;
    return z ^ (z >> 31n);
  }

  /** Uniform in [0, 1) with 53-bit resolution. */
  nextFloat(): number {
    return Number(this.nextUint64() >> 11n) / 2 ** 53;
  }
}
