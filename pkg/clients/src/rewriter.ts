/** Rewrite generation: beam outputs to the engine's rewrite file contract. */

import { assembleContext } from "./context.js";
import { rewriteScore } from "./rs.js";
import type {
  ConversationRecord,
  RewriteModel,
  RewriteRecord,
  RewriterClientConfig,
} from "./types.js";
import { validateRewriterConfig } from "./types.js";

function normalizeText(text: string): string {
  return text.split(/\s+/).filter(Boolean).join(" ");
}

/**
 * Turn raw beams into the emitted rewrite list: recompute each score from
 * the per-token log-probabilities (never the decoder's internal score),
 * drop empty strings, deduplicate identical texts keeping the higher score,
 * sort by score descending with ascending text as the tie-break, and keep
 * the top `numRewrites`.
 */
export function beamsToRewrites(
  beams: { text: string; tokenLogProbs: number[] }[],
  numRewrites: number,
): { text: string; score: number }[] {
  const best = new Map<string, number>();
  for (const beam of beams) {
    const text = normalizeText(beam.text);
    if (text === "" || beam.tokenLogProbs.length === 0) continue;
    const score = rewriteScore(beam.tokenLogProbs);
    const prev = best.get(text);
    if (prev === undefined || score > prev) {
      best.set(text, score);
    }
  }
  const rewrites = [...best.entries()].map(([text, score]) => ({ text, score }));
  rewrites.sort((a, b) => (b.score - a.score) || (a.text < b.text ? -1 : 1));
  return rewrites.slice(0, numRewrites);
}

function validateConversation(record: ConversationRecord, index: number): void {
  if (typeof record.conversation_id !== "string" || record.conversation_id === "") {
    throw new Error(`conversation ${index}: missing conversation_id`);
  }
  if (!Array.isArray(record.turns) || record.turns.length === 0) {
    throw new Error(`conversation ${record.conversation_id}: no turns`);
  }
  record.turns.forEach((turn, i) => {
    if (turn.turn_index !== i + 1) {
      throw new Error(
        `conversation ${record.conversation_id}: turn indices must be contiguous from 1`,
      );
    }
    if (typeof turn.raw_query !== "string" || turn.raw_query.trim() === "") {
      throw new Error(
        `conversation ${record.conversation_id}: turn ${turn.turn_index}: empty raw_query`,
      );
    }
  });
}

/**
 * Rewrite every turn of every conversation. The first turn passes through
 * verbatim with score 1.0; later turns condition on the top-1 rewrites of
 * the earlier turns plus the last system response, capped at the model's
 * input budget.
 */
export async function generateRewrites(
  conversations: ConversationRecord[],
  model: RewriteModel,
  config: RewriterClientConfig,
): Promise<RewriteRecord[]> {
  validateRewriterConfig(config);
  const records: RewriteRecord[] = [];
  for (let c = 0; c < conversations.length; c++) {
    const conversation = conversations[c];
    validateConversation(conversation, c);
    const chosen: string[] = [];
    for (const turn of conversation.turns) {
      let rewrites: { text: string; score: number }[];
      if (turn.turn_index === 1) {
        rewrites = [{ text: normalizeText(turn.raw_query), score: 1.0 }];
      } else {
        const lastResponse =
          conversation.turns[turn.turn_index - 2].system_response ?? null;
        const input = await assembleContext(chosen, lastResponse, turn.raw_query, model);
        const beams = await model.generate(input, config.beamWidth, config.maxNewTokens);
        rewrites = beamsToRewrites(beams, config.numRewrites);
        if (rewrites.length === 0) {
          throw new Error(
            `conversation ${conversation.conversation_id}: turn ${turn.turn_index}: ` +
              "model produced no usable rewrites",
          );
        }
      }
      chosen.push(rewrites[0].text);
      records.push({
        conversation_id: conversation.conversation_id,
        turn_index: turn.turn_index,
        rewrites,
      });
    }
  }
  return records;
}
