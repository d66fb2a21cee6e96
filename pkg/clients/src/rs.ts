/** Rewrite scoring: the geometric mean of per-token probabilities. */

/**
 * exp(mean of token log-probabilities). Log-probs above 0 are clamped to 0
 * (rounding slop from some runtimes); the result is always in (0, 1].
 */
export function rewriteScore(tokenLogProbs: number[]): number {
  if (tokenLogProbs.length === 0) {
    throw new Error("rewrite score needs at least one token log-probability");
  }
  let sum = 0;
  for (const lp of tokenLogProbs) {
    if (!Number.isFinite(lp)) {
      throw new Error(`token log-probability must be finite, got ${lp}`);
    }
    sum += Math.min(lp, 0);
  }
  return Math.exp(sum / tokenLogProbs.length);
}
