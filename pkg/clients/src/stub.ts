/**
 * Deterministic stand-ins for the neural model and encoder.
 *
 * The stub rewriter "decodes" by hashing its input: each beam keeps the tail
 * of the input and appends hash-chosen expansion words, with hash-derived
 * per-token log-probabilities. No weights, no downloads, fully reproducible,
 * which is what the conformance tests need. Select it with the model id
 * `stub` (rewriter) or `stub:<dimension>` (encoder).
 */

import type { BeamOutput, PassageEncoder, RewriteModel } from "./types.js";

const EXPANSION_WORDS = [
  "ancient", "history", "capital", "river", "empire", "treaty", "league",
  "harbor", "senate", "census", "aqueduct", "frontier", "legion", "forum",
];

/** FNV-1a over a string, folded with a numeric salt. */
function fnv1a(text: string, salt: number): number {
  let hash = 0x811c9dc5 ^ salt;
  for (let i = 0; i < text.length; i++) {
    hash ^= text.charCodeAt(i);
    hash = Math.imul(hash, 0x01000193) >>> 0;
  }
  return hash >>> 0;
}

export class StubRewriteModel implements RewriteModel {
  readonly maxInputTokens: number;

  constructor(maxInputTokens = 512) {
    this.maxInputTokens = maxInputTokens;
  }

  async countTokens(text: string): Promise<number> {
    return text.split(/\s+/).filter(Boolean).length;
  }

  async generate(
    input: string,
    beamWidth: number,
    maxNewTokens: number,
  ): Promise<BeamOutput[]> {
    const words = input.split(/\s+/).filter((w) => w !== "" && w !== "|||");
    const tail = words.slice(-3);
    const beams: BeamOutput[] = [];
    for (let j = 0; j < beamWidth; j++) {
      const tokens = [...tail];
      const extra = j === 0 ? 0 : 1 + (fnv1a(input, j) % 2);
      for (let e = 0; e < extra; e++) {
        tokens.push(EXPANSION_WORDS[fnv1a(input, 31 * j + e) % EXPANSION_WORDS.length]);
      }
      const truncated = tokens.slice(0, maxNewTokens);
      const logProbs = truncated.map((_, l) => {
        const u = (fnv1a(input, 997 * j + l) % 1000) / 1000;
        return -(0.05 + 1.5 * u) - 0.1 * j;
      });
      beams.push({ text: truncated.join(" "), tokenLogProbs: logProbs });
    }
    return beams;
  }
}

export class StubPassageEncoder implements PassageEncoder {
  readonly dimension: number;

  constructor(dimension = 64) {
    if (dimension < 1) {
      throw new Error(`dimension must be >= 1, got ${dimension}`);
    }
    this.dimension = dimension;
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    return texts.map((text) => {
      const vector = new Float32Array(this.dimension);
      for (const word of text.toLowerCase().split(/[^a-z0-9]+/).filter(Boolean)) {
        const bucket = fnv1a(word, 1) % this.dimension;
        const sign = fnv1a(word, 2) % 2 === 0 ? 1 : -1;
        vector[bucket] += sign;
      }
      let norm = 0;
      for (const x of vector) norm += x * x;
      norm = Math.sqrt(norm);
      if (norm > 0) {
        for (let i = 0; i < vector.length; i++) vector[i] = Math.fround(vector[i] / norm);
      }
      return vector;
    });
  }
}
