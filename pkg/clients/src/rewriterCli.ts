#!/usr/bin/env node
/**
 * rewriter --model <id> --input <conv.jsonl> --output <rewrites.jsonl>
 *          [--beam-width 10] [--num-rewrites 10] [--max-input-tokens 512]
 *          [--max-new-tokens 64] [--device <d>]
 *
 * Model id `stub` selects the deterministic built-in stand-in (testing).
 */

import { parseArgs } from "node:util";

import { readJsonl, writeJsonl } from "./jsonl.js";
import { generateRewrites } from "./rewriter.js";
import { StubRewriteModel } from "./stub.js";
import type { ConversationRecord, RewriteModel } from "./types.js";

async function main(): Promise<number> {
  const { values } = parseArgs({
    options: {
      model: { type: "string" },
      input: { type: "string" },
      output: { type: "string" },
      "beam-width": { type: "string", default: "10" },
      "num-rewrites": { type: "string", default: "10" },
      "max-input-tokens": { type: "string", default: "512" },
      "max-new-tokens": { type: "string", default: "64" },
      device: { type: "string" },
    },
  });
  if (!values.model || !values.input || !values.output) {
    console.error(
      "usage: rewriter --model <id> --input <conv.jsonl> --output <rewrites.jsonl>" +
        " [--beam-width N] [--num-rewrites N]",
    );
    return 1;
  }
  const config = {
    model: values.model,
    beamWidth: Number(values["beam-width"]),
    numRewrites: Number(values["num-rewrites"]),
    maxInputTokens: Number(values["max-input-tokens"]),
    maxNewTokens: Number(values["max-new-tokens"]),
    device: values.device,
  };
  let model: RewriteModel;
  if (config.model === "stub") {
    model = new StubRewriteModel(config.maxInputTokens);
  } else {
    const { TransformersRewriteModel } = await import("./transformersBackend.js");
    model = await TransformersRewriteModel.load(
      config.model,
      config.maxInputTokens,
      config.device as import("@huggingface/transformers").DeviceType | undefined,
    );
  }
  const conversations = await readJsonl<ConversationRecord>(values.input);
  const records = await generateRewrites(conversations, model, config);
  await writeJsonl(values.output, records);
  console.log(`wrote ${records.length} turns to ${values.output}`);
  return 0;
}

main().then(
  (code) => process.exit(code),
  (err) => {
    console.error(`rewriter: ${(err as Error).message}`);
    process.exit(2);
  },
);
