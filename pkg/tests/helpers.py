"""Independent oracles and fixture builders shared by the test modules.

Everything here deliberately avoids the library's own code paths: scores are
recomputed from first principles (exhaustive enumeration, full-corpus scans,
naive loops) so the tests check the implementation against something that
cannot share its bugs.
"""

from __future__ import annotations

import math
import random
from collections import Counter

import numpy as np

from cmqr.rewriting import EOS_TOKEN, Hypothesis, NGramLM, RewriteSet, TokenProbModel
from cmqr.text import tokenize


class TableModel(TokenProbModel):
    """Hand-specified conditional distributions keyed by the generated prefix.

    ``tables`` maps a prefix tuple to {token: probability}; prefixes not
    listed fall back to ``default``. The conversation context is ignored,
    which keeps hand-built examples small.
    """

    def __init__(self, vocabulary, tables, default=None):
        self._vocabulary = tuple(vocabulary)
        self.tables = {tuple(k): dict(v) for k, v in tables.items()}
        self.default = dict(default) if default else None

    @property
    def vocabulary(self):
        return self._vocabulary

    def next_token_distribution(self, context, prefix):
        table = self.tables.get(tuple(prefix), self.default)
        if table is None:
            raise KeyError(f"no table for prefix {tuple(prefix)!r}")
        return np.array([table.get(tok, 0.0) for tok in self._vocabulary], dtype=np.float64)


def greedy_decode(model: TokenProbModel, context, max_length: int) -> tuple[str, ...]:
    """Greedy decoding oracle: argmax token per step, EOS wins exact ties,
    content ties break on the smaller token. EOS is not allowed at step 1."""
    tokens: tuple[str, ...] = ()
    vocab = model.vocabulary
    eos = model.eos_token
    while len(tokens) < max_length:
        dist = np.asarray(model.next_token_distribution(context, tokens), dtype=np.float64)
        best_tok = None
        best_p = -1.0
        for idx, tok in enumerate(vocab):
            p = float(dist[idx])
            if tok == eos and not tokens:
                continue
            if p > best_p:
                best_tok, best_p = tok, p
            elif p == best_p and best_tok is not None:
                # EOS (the shorter sequence) beats any continuation; among
                # content tokens the lexicographically smaller one wins.
                if tok == eos:
                    best_tok = tok
                elif best_tok != eos and tok < best_tok:
                    best_tok = tok
        if best_tok == eos or best_tok is None:
            break
        tokens = tokens + (best_tok,)
    return tokens


def enumerate_hypotheses(model: TokenProbModel, context, max_length: int):
    """Brute-force oracle: every reachable content sequence of length <=
    max_length, scored by the geometric mean of its step probabilities.

    A sequence shorter than max_length counts only if EOS has positive
    probability after it; a sequence at max_length always counts.
    """
    vocab = model.vocabulary
    eos = model.eos_token
    content = [t for t in vocab if t != eos]
    results = []

    def walk(prefix: tuple[str, ...], log_sum: float) -> None:
        # Invariant: len(prefix) < max_length, so prefix can still be expanded.
        dist = np.asarray(model.next_token_distribution(context, prefix), dtype=np.float64)
        probs = {tok: float(dist[i]) for i, tok in enumerate(vocab)}
        if prefix and probs.get(eos, 0.0) > 0.0:
            results.append((prefix, log_sum))  # finishes via EOS
        for tok in content:
            p = probs.get(tok, 0.0)
            if p <= 0.0:
                continue
            new_prefix = prefix + (tok,)
            new_sum = log_sum + math.log(min(p, 1.0))
            if len(new_prefix) == max_length:
                results.append((new_prefix, new_sum))  # finishes at the cap
            else:
                walk(new_prefix, new_sum)

    walk((), 0.0)
    scored = [
        (tokens, math.exp(log_sum / len(tokens)), log_sum) for tokens, log_sum in results
    ]
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored


def random_ngram_model(rng: random.Random, vocab_size=None, order=None) -> NGramLM:
    """An NGramLM fitted on a random synthetic corpus."""
    vocab_size = vocab_size or rng.randint(4, 25)
    order = order or rng.randint(1, 3)
    words = [f"w{i}" for i in range(vocab_size)]
    corpus = []
    for _ in range(rng.randint(10, 60)):
        length = rng.randint(1, 8)
        corpus.append([rng.choice(words) for _ in range(length)])
    return NGramLM(order=order, smoothing_alpha=0.1).fit(corpus)


def make_rewrite_set(pairs, conversation_id="c1", turn_index=2) -> RewriteSet:
    """Build a RewriteSet from (text, score) pairs, sorting them properly."""
    hyps = [Hypothesis.from_text(text, score) for text, score in pairs]
    hyps.sort(key=lambda h: (-h.rs_score, h.tokens))
    return RewriteSet(conversation_id, turn_index, hyps)


# ---------------------------------------------------------------------------
# Sparse oracle: score every document by scanning the raw corpus
# ---------------------------------------------------------------------------


def brute_force_sparse(passages, weights, top_k, k1, b):
    """Full-scan BM25 scorer over (passage_id, text) pairs; no index."""
    docs = [(pid, Counter(tokenize(text))) for pid, text in passages]
    lengths = {pid: sum(counts.values()) for pid, counts in docs}
    n_docs = len(docs)
    avgdl = sum(lengths.values()) / n_docs if n_docs else 0.0
    df = Counter()
    for _, counts in docs:
        for term in counts:
            df[term] += 1
    scored = []
    for pid, counts in docs:
        score = 0.0
        for term in sorted(weights):
            tf = counts.get(term, 0)
            if tf == 0:
                continue
            idf = math.log(1.0 + (n_docs - df[term] + 0.5) / (df[term] + 0.5))
            denom = tf + k1 * (1.0 - b + b * lengths[pid] / avgdl)
            score += weights[term] * idf * tf * (k1 + 1.0) / denom
        if score > 0.0:
            scored.append((pid, score))
    scored.sort(key=lambda item: (-item[1], item[0]))
    return scored[:top_k]


def random_corpus(rng: random.Random, max_docs=500, max_vocab=200):
    words = [f"t{i}" for i in range(rng.randint(10, max_vocab))]
    n_docs = rng.randint(5, max_docs)
    return [
        (f"d{i:04d}", " ".join(rng.choice(words) for _ in range(rng.randint(1, 30))))
        for i in range(n_docs)
    ], words


# ---------------------------------------------------------------------------
# Dense oracle: naive per-row scalar dot product
# ---------------------------------------------------------------------------


def naive_dense_search(store, query, top_k):
    """Naive loop oracle: float64 left-to-right accumulation per row."""
    q = [float(x) for x in np.asarray(query, dtype=np.float64)]
    results = []
    for row in range(store.count):
        acc = 0.0
        for j in range(store.dimension):
            acc += float(store.matrix[row, j]) * q[j]
        results.append((store.ids[row], acc))
    results.sort(key=lambda item: (-item[1], item[0]))
    return results[:top_k]


# ---------------------------------------------------------------------------
# Metric oracles: deliberately naive re-implementations
# ---------------------------------------------------------------------------


def naive_rr(ranking, relevant):
    for k in range(1, len(ranking) + 1):
        if ranking[k - 1] in relevant:
            return 1.0 / k
    return 0.0


def naive_ap(ranking, relevant):
    # precision@r recomputed by re-scanning the prefix each time (O(n^2))
    total = 0.0
    for r in range(1, len(ranking) + 1):
        if ranking[r - 1] in relevant:
            hits = sum(1 for x in ranking[:r] if x in relevant)
            total += hits / r
    return total / len(relevant)


def naive_recall_at(ranking, relevant, k):
    return len(set(ranking[:k]) & set(relevant)) / len(relevant)


def random_run_and_qrels(rng: random.Random, n_queries=None):
    """A random run plus qrels where every query has >= 1 relevant passage."""
    n_queries = n_queries or rng.randint(1, 20)
    pool = [f"p{i:03d}" for i in range(40)]
    run = {}
    judgments = {}
    for qi in range(n_queries):
        qid = f"q{qi:03d}"
        relevant = rng.sample(pool, rng.randint(1, 6))
        judgments[qid] = {pid: 1 for pid in relevant}
        for pid in rng.sample(pool, rng.randint(0, 5)):
            judgments[qid].setdefault(pid, 0)
        depth = rng.randint(0, 25)
        retrieved = rng.sample(pool, depth)
        run[qid] = [
            (pid, float(depth - i), i + 1) for i, pid in enumerate(retrieved)
        ]
    return run, judgments
