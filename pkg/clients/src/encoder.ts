/** Passage encoding: collection JSONL/TSV to a CMQE embedding file. */

import { readFile } from "node:fs/promises";

import { writeCmqe, type EmbeddingRecord } from "./cmqe.js";
import type { EncoderClientConfig, PassageEncoder } from "./types.js";

export interface CollectionPassage {
  id: string;
  contents: string;
}

/** Parse the engine's collection format: JSONL {id, contents} or TSV. */
export async function readCollection(path: string): Promise<CollectionPassage[]> {
  const text = await readFile(path, "utf-8");
  const passages: CollectionPassage[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].replace(/\r$/, "");
    if (line.trim() === "") continue;
    try {
      if (line.trimStart().startsWith("{")) {
        const record = JSON.parse(line) as { id?: unknown; contents?: unknown };
        if (typeof record.id !== "string" || typeof record.contents !== "string") {
          throw new Error("expected string fields 'id' and 'contents'");
        }
        passages.push({ id: record.id, contents: record.contents });
      } else {
        const tab = line.indexOf("\t");
        if (tab < 1) throw new Error("expected id<TAB>text");
        passages.push({ id: line.slice(0, tab), contents: line.slice(tab + 1) });
      }
    } catch (err) {
      throw new Error(`${path}: line ${i + 1}: ${(err as Error).message}`);
    }
  }
  return passages;
}

/**
 * Encode a collection in batches and write the CMQE file, ids aligned with
 * collection order. Deterministic given fixed model weights and batch size.
 */
export async function encodePassages(
  passages: CollectionPassage[],
  encoder: PassageEncoder,
  config: EncoderClientConfig,
  outputPath: string,
): Promise<number> {
  if (config.batchSize < 1) {
    throw new Error(`batch size must be >= 1, got ${config.batchSize}`);
  }
  if (config.dimension !== undefined && config.dimension !== encoder.dimension) {
    throw new Error(
      `configured dimension ${config.dimension} does not match model output ` +
        `dimension ${encoder.dimension}`,
    );
  }
  const records: EmbeddingRecord[] = [];
  for (let start = 0; start < passages.length; start += config.batchSize) {
    const batch = passages.slice(start, start + config.batchSize);
    const vectors = await encoder.encode(batch.map((p) => p.contents));
    if (vectors.length !== batch.length) {
      throw new Error("encoder returned a wrong-sized batch");
    }
    batch.forEach((passage, i) => {
      if (vectors[i].length !== encoder.dimension) {
        throw new Error(
          `passage ${passage.id}: vector has dimension ${vectors[i].length}, ` +
            `expected ${encoder.dimension}`,
        );
      }
      records.push({ id: passage.id, vector: vectors[i] });
    });
  }
  await writeCmqe(outputPath, encoder.dimension, records);
  return records.length;
}
