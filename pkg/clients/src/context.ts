/** Rewriting context assembly with the engine's truncation policy. */

import type { RewriteModel } from "./types.js";

export const CONTEXT_SEPARATOR = " ||| ";

/**
 * Build the model input for one turn: the chosen (top-1) rewrites of all
 * earlier turns, the last system response, and the current raw query,
 * separator-joined. When the tokenized length exceeds the budget, whole
 * items drop oldest-first (earliest rewrites, then the last response);
 * the current raw query is never dropped.
 */
export async function assembleContext(
  priorRewrites: string[],
  lastResponse: string | null | undefined,
  currentQuery: string,
  model: RewriteModel,
): Promise<string> {
  const items = [...priorRewrites];
  if (lastResponse != null && lastResponse.trim() !== "") {
    items.push(lastResponse);
  }
  items.push(currentQuery);

  const counts = await Promise.all(items.map((item) => model.countTokens(item)));
  // One separator between adjacent items counts as one token of budget.
  let total = counts.reduce((a, b) => a + b, 0) + (items.length - 1);
  let start = 0;
  while (items.length - start > 1 && total > model.maxInputTokens) {
    total -= counts[start] + 1;
    start += 1;
  }
  return items.slice(start).join(CONTEXT_SEPARATOR);
}
