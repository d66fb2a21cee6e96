/** Shared types for the rewriter and encoder clients. */

export interface ConversationTurn {
  turn_index: number;
  raw_query: string;
  system_response?: string | null;
}

export interface ConversationRecord {
  conversation_id: string;
  turns: ConversationTurn[];
}

/** One line of the engine's rewrite JSONL contract. */
export interface RewriteRecord {
  conversation_id: string;
  turn_index: number;
  rewrites: { text: string; score: number }[];
}

/** A single beam hypothesis with the model's per-token log-probabilities. */
export interface BeamOutput {
  text: string;
  tokenLogProbs: number[];
}

/**
 * A sequence-to-sequence rewriting model. `generate` must return every beam
 * with its per-token log-probabilities; the client recomputes the rewrite
 * score itself and never trusts a framework-internal beam score.
 */
export interface RewriteModel {
  readonly maxInputTokens: number;
  countTokens(text: string): Promise<number>;
  generate(input: string, beamWidth: number, maxNewTokens: number): Promise<BeamOutput[]>;
}

/** A batch text encoder with a fixed output dimension. */
export interface PassageEncoder {
  readonly dimension: number;
  encode(texts: string[]): Promise<Float32Array[]>;
}

export interface RewriterClientConfig {
  model: string;
  beamWidth: number;
  numRewrites: number;
  maxInputTokens: number;
  maxNewTokens: number;
  device?: string;
}

export interface EncoderClientConfig {
  model: string;
  batchSize: number;
  /** Expected output dimension; the model's actual output must match. */
  dimension?: number;
  device?: string;
}

export function validateRewriterConfig(config: RewriterClientConfig): void {
  if (config.beamWidth < 1) {
    throw new Error(`beam width must be >= 1, got ${config.beamWidth}`);
  }
  if (config.numRewrites < 1 || config.numRewrites > config.beamWidth) {
    throw new Error(
      `num rewrites must be in 1..beam width (${config.beamWidth}), got ${config.numRewrites}`,
    );
  }
  if (config.maxInputTokens < 1) {
    throw new Error(`max input tokens must be >= 1, got ${config.maxInputTokens}`);
  }
  if (config.maxNewTokens < 1) {
    throw new Error(`max new tokens must be >= 1, got ${config.maxNewTokens}`);
  }
}
