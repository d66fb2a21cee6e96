#!/usr/bin/env node
/**
 * encoder --model <id> --input <collection.jsonl> --output <emb.cmqe>
 *         [--batch-size 32] [--dimension N] [--device <d>]
 *
 * Model id `stub` or `stub:<dimension>` selects the deterministic built-in
 * stand-in (testing).
 */

import { parseArgs } from "node:util";

import { encodePassages, readCollection } from "./encoder.js";
import { StubPassageEncoder } from "./stub.js";
import type { PassageEncoder } from "./types.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      model: { type: "string" },
      input: { type: "string" },
      output: { type: "string" },
      "batch-size": { type: "string", default: "32" },
      dimension: { type: "string" },
      device: { type: "string" },
    },
  });
  if (!values.model || !values.input || !values.output) {
    console.error(
      "usage: encoder --model <id> --input <collection.jsonl> --output <emb.cmqe>" +
        " [--batch-size N] [--dimension N]",
    );
    return 1;
  }
  const config = {
    model: values.model,
    batchSize: Number(values["batch-size"]),
    dimension: values.dimension ? Number(values.dimension) : undefined,
    device: values.device,
  };
  let encoder: PassageEncoder;
  if (config.model === "stub" || config.model.startsWith("stub:")) {
    const dim = config.model.includes(":")
      ? Number(config.model.split(":")[1])
      : config.dimension ?? 64;
    encoder = new StubPassageEncoder(dim);
  } else {
    const { TransformersPassageEncoder } = await import("./transformersBackend.js");
    encoder = await TransformersPassageEncoder.load(
      config.model,
      config.device as import("@huggingface/transformers").DeviceType | undefined,
    );
  }
  const passages = await readCollection(values.input);
  const count = await encodePassages(passages, encoder, config, values.output);
  console.log(`encoded ${count} passages at dimension ${encoder.dimension}`);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`encoder: ${(err as Error).message}`);
    process.exit(2);
  },
);
