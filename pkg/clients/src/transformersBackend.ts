/**
 * transformers.js-backed implementations of the model interfaces.
 *
 * The rewriter decodes with beams and then RESCORES every returned sequence
 * with a plain forward pass to obtain per-token log-probabilities. Framework
 * beam scores bake in their own length-penalty conventions, so the client
 * never uses them; the emitted score is always exp(mean token log-prob)
 * recomputed from these rescored values.
 *
 * Loading a model requires the checkpoint to be reachable (hub or local
 * path via the HF_HUB_* environment variables / `env.localModelPath`).
 */

import type { DeviceType } from "@huggingface/transformers";

import type { BeamOutput, PassageEncoder, RewriteModel } from "./types.js";

type TransformersModule = typeof import("@huggingface/transformers");

let transformersModule: TransformersModule | null = null;

async function loadTransformers(): Promise<TransformersModule> {
  if (transformersModule === null) {
    transformersModule = await import("@huggingface/transformers");
  }
  return transformersModule;
}

function logSoftmaxAt(logits: Float32Array | number[], index: number): number {
  let max = -Infinity;
  for (let i = 0; i < logits.length; i++) {
    if (logits[i] > max) max = logits[i];
  }
  let sumExp = 0;
  for (let i = 0; i < logits.length; i++) {
    sumExp += Math.exp(logits[i] - max);
  }
  return logits[index] - max - Math.log(sumExp);
}

export class TransformersRewriteModel implements RewriteModel {
  readonly maxInputTokens: number;

  private constructor(
    private readonly tokenizer: any,
    private readonly model: any,
    maxInputTokens: number,
  ) {
    this.maxInputTokens = maxInputTokens;
  }

  static async load(
    modelId: string,
    maxInputTokens = 512,
    device?: DeviceType,
  ): Promise<TransformersRewriteModel> {
    const { AutoTokenizer, AutoModelForSeq2SeqLM } = await loadTransformers();
    try {
      const tokenizer = await AutoTokenizer.from_pretrained(modelId);
      const model = await AutoModelForSeq2SeqLM.from_pretrained(modelId, {
        dtype: "fp32",
        ...(device ? { device } : {}),
      });
      return new TransformersRewriteModel(tokenizer, model, maxInputTokens);
    } catch (err) {
      throw new Error(`failed to load rewriter model ${modelId}: ${(err as Error).message}`);
    }
  }

  async countTokens(text: string): Promise<number> {
    const encoded = await this.tokenizer(text, { add_special_tokens: false });
    return encoded.input_ids.dims[encoded.input_ids.dims.length - 1];
  }

  async generate(
    input: string,
    beamWidth: number,
    maxNewTokens: number,
  ): Promise<BeamOutput[]> {
    const inputs = await this.tokenizer(input, {
      truncation: true,
      max_length: this.maxInputTokens,
    });
    const sequences: any = await this.model.generate({
      ...inputs,
      max_new_tokens: maxNewTokens,
      num_beams: beamWidth,
      num_return_sequences: beamWidth,
      do_sample: false,
      early_stopping: true,
    });
    const [numReturned, seqLen] = sequences.dims;
    const data: bigint[] | number[] = sequences.data;
    const eosId = this.model.config.eos_token_id;
    const padId = this.model.config.pad_token_id ?? eosId;
    const beams: BeamOutput[] = [];
    for (let row = 0; row < numReturned; row++) {
      const ids: number[] = [];
      for (let col = 0; col < seqLen; col++) {
        ids.push(Number(data[row * seqLen + col]));
      }
      const text: string = this.tokenizer.decode(ids, { skip_special_tokens: true });
      const tokenLogProbs = await this.scoreSequence(inputs, ids, eosId, padId);
      beams.push({ text, tokenLogProbs });
    }
    return beams;
  }

  /**
   * Per-token log-probabilities of a generated sequence via one forward
   * pass: position 0 is the decoder start token (never predicted), and
   * trailing EOS/pad tokens are excluded to match the engine's convention
   * that end-of-sequence never counts toward the score.
   */
  private async scoreSequence(
    inputs: any,
    sequenceIds: number[],
    eosId: number,
    padId: number,
  ): Promise<number[]> {
    const { Tensor } = await loadTransformers();
    let end = sequenceIds.length;
    while (end > 1 && (sequenceIds[end - 1] === eosId || sequenceIds[end - 1] === padId)) {
      end -= 1;
    }
    if (end <= 1) return [];
    const decoderInput = new Tensor(
      "int64",
      BigInt64Array.from(sequenceIds.slice(0, end).map(BigInt)),
      [1, end],
    );
    const output = await this.model({ ...inputs, decoder_input_ids: decoderInput });
    const logits = output.logits; // [1, end, vocab]
    const vocabSize = logits.dims[logits.dims.length - 1];
    const logProbs: number[] = [];
    for (let pos = 1; pos < end; pos++) {
      const rowStart = (pos - 1) * vocabSize;
      const row = logits.data.slice(rowStart, rowStart + vocabSize);
      logProbs.push(logSoftmaxAt(row, sequenceIds[pos]));
    }
    return logProbs;
  }
}

export class TransformersPassageEncoder implements PassageEncoder {
  readonly dimension: number;

  private constructor(private readonly extractor: any, dimension: number) {
    this.dimension = dimension;
  }

  static async load(modelId: string, device?: DeviceType): Promise<TransformersPassageEncoder> {
    const { pipeline } = await loadTransformers();
    try {
      const extractor = await pipeline("feature-extraction", modelId, {
        dtype: "fp32",
        ...(device ? { device } : {}),
      } as any);
      const probe = await extractor("dimension probe", { pooling: "mean", normalize: true });
      const dimension = probe.dims[probe.dims.length - 1];
      return new TransformersPassageEncoder(extractor, dimension);
    } catch (err) {
      throw new Error(`failed to load encoder model ${modelId}: ${(err as Error).message}`);
    }
  }

  async encode(texts: string[]): Promise<Float32Array[]> {
    if (texts.length === 0) return [];
    const output = await this.extractor(texts, { pooling: "mean", normalize: true });
    const [rows, dim] = output.dims;
    const data: Float32Array = output.data;
    const vectors: Float32Array[] = [];
    for (let row = 0; row < rows; row++) {
      vectors.push(Float32Array.from(data.subarray(row * dim, (row + 1) * dim)));
    }
    return vectors;
  }
}
