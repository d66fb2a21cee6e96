/**
 * CMQE embedding file writer/reader (the engine's binary contract).
 *
 * Little-endian: magic "CMQE", u32 version=1, u32 dimension, u64 count,
 * then per record [u32 id byte length, id bytes UTF-8, dimension x f32].
 */

import { readFile, writeFile } from "node:fs/promises";

export const CMQE_MAGIC = "CMQE";
export const CMQE_VERSION = 1;

export interface EmbeddingRecord {
  id: string;
  vector: Float32Array;
}

export function encodeCmqe(dimension: number, records: EmbeddingRecord[]): Buffer {
  const idBytes = records.map((r) => Buffer.from(r.id, "utf-8"));
  let size = 4 + 4 + 4 + 8;
  for (const raw of idBytes) size += 4 + raw.length + 4 * dimension;
  const buffer = Buffer.alloc(size);
  let offset = 0;
  offset += buffer.write(CMQE_MAGIC, offset, "ascii");
  offset = buffer.writeUInt32LE(CMQE_VERSION, offset);
  offset = buffer.writeUInt32LE(dimension, offset);
  offset = buffer.writeBigUInt64LE(BigInt(records.length), offset);
  for (let i = 0; i < records.length; i++) {
    const { vector } = records[i];
    if (vector.length !== dimension) {
      throw new Error(
        `record ${records[i].id}: vector has dimension ${vector.length}, expected ${dimension}`,
      );
    }
    offset = buffer.writeUInt32LE(idBytes[i].length, offset);
    offset += idBytes[i].copy(buffer, offset);
    for (const value of vector) {
      offset = buffer.writeFloatLE(value, offset);
    }
  }
  return buffer;
}

export async function writeCmqe(
  path: string,
  dimension: number,
  records: EmbeddingRecord[],
): Promise<void> {
  await writeFile(path, encodeCmqe(dimension, records));
}

export function decodeCmqe(buffer: Buffer): { dimension: number; records: EmbeddingRecord[] } {
  if (buffer.subarray(0, 4).toString("ascii") !== CMQE_MAGIC) {
    throw new Error("not a CMQE embedding file");
  }
  const version = buffer.readUInt32LE(4);
  if (version !== CMQE_VERSION) {
    throw new Error(`unsupported CMQE version ${version}`);
  }
  const dimension = buffer.readUInt32LE(8);
  const count = Number(buffer.readBigUInt64LE(12));
  let offset = 20;
  const records: EmbeddingRecord[] = [];
  for (let i = 0; i < count; i++) {
    const idLength = buffer.readUInt32LE(offset);
    offset += 4;
    const id = buffer.subarray(offset, offset + idLength).toString("utf-8");
    offset += idLength;
    const vector = new Float32Array(dimension);
    for (let j = 0; j < dimension; j++) {
      vector[j] = buffer.readFloatLE(offset);
      offset += 4;
    }
    records.push({ id, vector });
  }
  if (offset !== buffer.length) {
    throw new Error(`${buffer.length - offset} trailing bytes`);
  }
  return { dimension, records };
}

export async function readCmqe(
  path: string,
): Promise<{ dimension: number; records: EmbeddingRecord[] }> {
  return decodeCmqe(await readFile(path));
}
