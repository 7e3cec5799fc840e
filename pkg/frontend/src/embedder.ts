import { createHash } from "node:crypto";

/**
 * Deterministic local text embedder: character n-grams hashed into a
 * fixed-length bag, L2 normalized.
 *
 * It is not a contextual encoder and does not try to be one; it exists so the
 * export pipeline is runnable and testable offline. A production encoder
 * plugs in behind the same (text) => number[] contract, and the manifest
 * records which model produced the vectors.
 */
export const MODEL_ID = "hashed-ngram-v1";

const NGRAM_SIZES = [2, 3];

function bucketAndSign(ngram: string, dim: number): [number, number] {
  // one sha1 per n-gram: first 4 bytes pick the bucket, next byte the sign
  const digest = createHash("sha1").update(ngram, "utf8").digest();
  const bucket = digest.readUInt32BE(0) % dim;
  const sign = digest[4] % 2 === 0 ? 1 : -1;
  return [bucket, sign];
}

export function embed(text: string, dim: number): number[] {
  if (dim < 1) throw new Error(`embedding dim must be >= 1, got ${dim}`);
  const vec = new Array<number>(dim).fill(0);
  const normalized = text.toLowerCase().replace(/\s+/g, " ").trim();
  const padded = ` ${normalized} `;
  for (const n of NGRAM_SIZES) {
    for (let i = 0; i + n <= padded.length; i++) {
      const [bucket, sign] = bucketAndSign(`${n}:${padded.slice(i, i + n)}`, dim);
      vec[bucket] += sign;
    }
  }
  const norm = Math.sqrt(vec.reduce((s, v) => s + v * v, 0));
  return norm === 0 ? vec : vec.map((v) => v / norm);
}
