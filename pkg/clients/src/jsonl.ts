/** JSON-lines reading and writing. */

import { readFile, writeFile } from "node:fs/promises";

export async function readJsonl<T>(path: string): Promise<T[]> {
  const text = await readFile(path, "utf-8");
  const records: T[] = [];
  const lines = text.split("\n");
  for (let i = 0; i < lines.length; i++) {
    const line = lines[i].trim();
    if (line === "") continue;
    try {
      records.push(JSON.parse(line) as T);
    } catch (err) {
      throw new Error(`${path}: line ${i + 1}: ${(err as Error).message}`);
    }
  }
  return records;
}

export async function writeJsonl(path: string, records: unknown[]): Promise<void> {
  const body = records.map((r) => JSON.stringify(r)).join("\n");
  await writeFile(path, body.length > 0 ? body + "\n" : "", "utf-8");
}
