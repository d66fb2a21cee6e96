"""Multi-query rewriting: conversation types, context assembly, beam search.

Each conversation turn is rewritten by running beam search over a pluggable
token-probability model and keeping *all* surviving hypotheses, not just the
best one. Every hypothesis carries a rewrite score: the geometric mean of its
per-token probabilities, so rewrites of different lengths compete fairly.
Downstream retrieval consumes the whole scored set.

Determinism rules (they matter for reproducible run files):
- all probability products are accumulated in log space;
- ties in beam pruning and in final ordering break lexicographically on the
  token sequence;
- the end-of-sequence token ends a hypothesis but never counts toward its
  length or its score product.
"""

from __future__ import annotations

import json
import math
from abc import ABC, abstractmethod
from collections import Counter
from dataclasses import dataclass, field
from typing import IO, Iterable, Iterator, Sequence

import numpy as np

from .text import BOS_TOKEN, EOS_TOKEN, SEP_TOKEN, tokenize

# Tolerance for "this distribution sums to 1".
_DIST_TOL = 1e-9


# ---------------------------------------------------------------------------
# Conversation data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Turn:
    """One user utterance and the system's (optional) response to it."""

    turn_index: int
    raw_query: str
    system_response: str | None = None

    def __post_init__(self) -> None:
        if self.turn_index < 1:
            raise ValueError(f"turn_index must be >= 1, got {self.turn_index}")


@dataclass(frozen=True)
class Hypothesis:
    """A finished beam hypothesis: tokens, log-probability sum, rewrite score.

    ``tokens`` never includes the end-of-sequence token, ``log_prob_sum`` is the
    sum of the log-probabilities of exactly those tokens, and ``rs_score`` is
    their geometric mean ``exp(log_prob_sum / len(tokens))``.
    """

    tokens: tuple[str, ...]
    log_prob_sum: float
    rs_score: float

    def __post_init__(self) -> None:
        if len(self.tokens) < 1:
            raise ValueError("hypothesis must contain at least one token")
        if not (0.0 < self.rs_score <= 1.0):
            raise ValueError(f"rs_score must be in (0, 1], got {self.rs_score}")
        expected = math.exp(self.log_prob_sum / len(self.tokens))
        if abs(expected - self.rs_score) > 1e-9:
            raise ValueError(
                f"rs_score {self.rs_score} inconsistent with log_prob_sum "
                f"{self.log_prob_sum} over {len(self.tokens)} tokens"
            )

    @property
    def text(self) -> str:
        return " ".join(self.tokens)

    @classmethod
    def from_text(cls, text: str, score: float) -> "Hypothesis":
        """Rebuild a hypothesis from its serialized (text, score) form."""
        tokens = tuple(text.split())
        if not tokens:
            raise ValueError("rewrite text must contain at least one token")
        if not (0.0 < score <= 1.0):
            raise ValueError(f"rewrite score must be in (0, 1], got {score}")
        return cls(tokens=tokens, log_prob_sum=len(tokens) * math.log(score), rs_score=score)


@dataclass
class RewriteSet:
    """The scored rewrites kept for one turn, best first.

    Invariants enforced at construction: sorted by rs_score descending with
    lexicographic token-sequence tie-breaks, and no duplicate token sequences.
    """

    conversation_id: str
    turn_index: int
    rewrites: list[Hypothesis]

    def __post_init__(self) -> None:
        if not self.rewrites:
            raise ValueError("rewrite set must contain at least one rewrite")
        seen = set()
        for hyp in self.rewrites:
            if hyp.tokens in seen:
                raise ValueError(f"duplicate rewrite {hyp.text!r}")
            seen.add(hyp.tokens)
        for a, b in zip(self.rewrites, self.rewrites[1:]):
            if a.rs_score < b.rs_score:
                raise ValueError("rewrites must be sorted by rs_score descending")
            if a.rs_score == b.rs_score and a.tokens > b.tokens:
                raise ValueError("equal-score rewrites must be in lexicographic order")

    @property
    def top(self) -> Hypothesis:
        return self.rewrites[0]


@dataclass
class Conversation:
    """An ordered sequence of turns plus the rewrites accumulated so far."""

    conversation_id: str
    turns: list[Turn]
    rewrites: dict[int, RewriteSet] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for position, turn in enumerate(self.turns, start=1):
            if turn.turn_index != position:
                raise ValueError(
                    f"conversation {self.conversation_id!r}: turn indices must be "
                    f"contiguous from 1, found {turn.turn_index} at position {position}"
                )

    def turn(self, turn_index: int) -> Turn:
        if not 1 <= turn_index <= len(self.turns):
            raise ValueError(
                f"turn_index {turn_index} out of range 1..{len(self.turns)} "
                f"for conversation {self.conversation_id!r}"
            )
        return self.turns[turn_index - 1]

    def add_rewrites(self, rewrite_set: RewriteSet) -> None:
        """Attach a turn's rewrites; earlier turns must already have theirs."""
        i = rewrite_set.turn_index
        self.turn(i)  # range check
        missing = [j for j in range(1, i) if j not in self.rewrites]
        if missing:
            raise ValueError(
                f"cannot add rewrites for turn {i}: turns {missing} have no rewrites yet"
            )
        self.rewrites[i] = rewrite_set


# ---------------------------------------------------------------------------
# Token-probability models
# ---------------------------------------------------------------------------


class TokenProbModel(ABC):
    """A conditional next-token distribution over a finite vocabulary.

    The vocabulary includes a dedicated end-of-sequence token. Instances must
    be safe for concurrent read-only queries once constructed.
    """

    @property
    @abstractmethod
    def vocabulary(self) -> tuple[str, ...]:
        """All tokens the model can emit, end-of-sequence included."""

    @property
    def eos_token(self) -> str:
        return EOS_TOKEN

    @abstractmethod
    def next_token_distribution(
        self, context: Sequence[str], prefix: Sequence[str]
    ) -> np.ndarray:
        """Probability of each vocabulary token following ``context + prefix``.

        Returns a float array aligned with :attr:`vocabulary`, summing to 1.
        """


class NGramLM(TokenProbModel):
    """Order-``n`` n-gram model with Laplace smoothing.

    A desk-scale stand-in for a neural rewriter: cheap, deterministic, and
    non-uniform. Smoothing keeps every vocabulary token strictly positive in
    every context. Read-only after :meth:`fit`.
    """

    def __init__(self, order: int = 3, smoothing_alpha: float = 0.1):
        if order < 1:
            raise ValueError(f"order must be >= 1, got {order}")
        if smoothing_alpha <= 0:
            raise ValueError(f"smoothing_alpha must be positive, got {smoothing_alpha}")
        self.order = order
        self.smoothing_alpha = smoothing_alpha
        self._vocabulary: tuple[str, ...] = (EOS_TOKEN,)
        self._index: dict[str, int] = {EOS_TOKEN: 0}
        self._counts: dict[tuple[str, ...], Counter] = {}

    @property
    def vocabulary(self) -> tuple[str, ...]:
        return self._vocabulary

    def fit(self, sequences: Iterable[Sequence[str]]) -> "NGramLM":
        """Count n-grams over token sequences; each sequence ends in EOS."""
        tokens_seen: set[str] = set()
        materialized = [list(seq) for seq in sequences if len(seq) > 0]
        for seq in materialized:
            tokens_seen.update(seq)
        if EOS_TOKEN in tokens_seen or BOS_TOKEN in tokens_seen:
            raise ValueError("training sequences must not contain reserved tokens")
        self._vocabulary = tuple(sorted(tokens_seen)) + (EOS_TOKEN,)
        self._index = {tok: i for i, tok in enumerate(self._vocabulary)}
        self._counts = {}
        pad = [BOS_TOKEN] * (self.order - 1)
        for seq in materialized:
            padded = pad + seq + [EOS_TOKEN]
            for pos in range(len(pad), len(padded)):
                key = tuple(padded[pos - self.order + 1 : pos])
                self._counts.setdefault(key, Counter())[padded[pos]] += 1
        return self

    def next_token_distribution(
        self, context: Sequence[str], prefix: Sequence[str]
    ) -> np.ndarray:
        vocab_size = len(self._vocabulary)
        window = [BOS_TOKEN] * (self.order - 1) + list(context) + list(prefix)
        key = tuple(window[len(window) - self.order + 1 :]) if self.order > 1 else ()
        counts = np.zeros(vocab_size, dtype=np.float64)
        observed = self._counts.get(key)
        if observed is not None:
            for token, count in observed.items():
                counts[self._index[token]] = count
        total = counts.sum()
        return (counts + self.smoothing_alpha) / (total + self.smoothing_alpha * vocab_size)


# ---------------------------------------------------------------------------
# Scoring and decoding
# ---------------------------------------------------------------------------


def compute_rs(token_probs: Sequence[float]) -> float:
    """Geometric mean of per-token probabilities: ``(prod p)^(1/L)``.

    Computed in log space as ``exp(mean(log p))`` for underflow safety.
    """
    if len(token_probs) == 0:
        raise ValueError("token_probs must be nonempty")
    for p in token_probs:
        if not (0.0 < p <= 1.0):
            raise ValueError(f"token probability must be in (0, 1], got {p}")
    return math.exp(math.fsum(math.log(p) for p in token_probs) / len(token_probs))


def _check_distribution(dist: np.ndarray, vocab_size: int) -> None:
    if dist.shape != (vocab_size,):
        raise ValueError(
            f"model distribution has shape {dist.shape}, expected ({vocab_size},)"
        )
    if np.any(dist < 0):
        raise ValueError("model distribution contains negative probabilities")
    total = float(dist.sum())
    if abs(total - 1.0) > _DIST_TOL:
        raise ValueError(f"model distribution sums to {total}, not 1")


def beam_search(
    model: TokenProbModel,
    context: Sequence[str],
    beam_width: int,
    max_length: int,
) -> list[Hypothesis]:
    """Beam-decode up to ``beam_width`` scored hypotheses, best first.

    At each step every active partial expands over the full vocabulary; the
    ``beam_width`` highest-scoring candidates survive, ranked by cumulative
    log-probability (end-of-sequence probability included, so finishing
    competes with continuing exactly as in greedy decoding). Surviving
    end-of-sequence candidates move to the finished pool; partials reaching
    ``max_length`` finish there. Finished hypotheses are scored by the
    geometric mean of their content-token probabilities only, deduplicated,
    and ordered by (rs_score desc, tokens asc).

    With ``beam_width`` of at least ``V**max_length`` (vocabulary size ``V``)
    nothing is ever pruned and the result equals brute-force enumeration.
    """
    if beam_width < 1:
        raise ValueError(f"beam_width must be >= 1, got {beam_width}")
    if max_length < 1:
        raise ValueError(f"max_length must be >= 1, got {max_length}")
    vocab = model.vocabulary
    eos = model.eos_token
    if len([t for t in vocab if t != eos]) == 0:
        raise ValueError("model vocabulary has no content tokens")

    context = list(context)
    # Active partials as (content_log_prob_sum, tokens); start from the empty prefix.
    actives: list[tuple[float, tuple[str, ...]]] = [(0.0, ())]
    finished: list[tuple[float, tuple[str, ...]]] = []

    while actives:
        at_cap = [item for item in actives if len(item[1]) == max_length]
        finished.extend(at_cap)
        actives = [item for item in actives if len(item[1]) < max_length]
        if not actives:
            break
        # (pruning_score, tokens, is_eos, content_log_prob_sum)
        candidates: list[tuple[float, tuple[str, ...], bool, float]] = []
        for log_sum, tokens in actives:
            dist = np.asarray(
                model.next_token_distribution(context, tokens), dtype=np.float64
            )
            _check_distribution(dist, len(vocab))
            for idx, token in enumerate(vocab):
                p = float(dist[idx])
                if p <= 0.0:
                    continue
                # Distribution checks allow rounding slop just above 1.
                step = math.log(min(p, 1.0))
                if token == eos:
                    if not tokens:
                        continue  # an empty rewrite is not a rewrite
                    candidates.append((log_sum + step, tokens, True, log_sum))
                else:
                    extended = tokens + (token,)
                    candidates.append((log_sum + step, extended, False, log_sum + step))
        if not candidates:
            break
        candidates.sort(key=lambda c: (-c[0], c[1]))
        actives = []
        for _, tokens, is_eos, content_sum in candidates[:beam_width]:
            if is_eos:
                finished.append((content_sum, tokens))
            else:
                actives.append((content_sum, tokens))

    # Duplicates cannot arise (each content sequence finishes via exactly one
    # route), but the contract requires keeping the higher score if they did.
    best: dict[tuple[str, ...], float] = {}
    for log_sum, tokens in finished:
        if tokens not in best or log_sum > best[tokens]:
            best[tokens] = log_sum
    hypotheses = [
        Hypothesis(tokens=tokens, log_prob_sum=log_sum,
                   rs_score=math.exp(log_sum / len(tokens)))
        for tokens, log_sum in best.items()
    ]
    hypotheses.sort(key=lambda h: (-h.rs_score, h.tokens))
    return hypotheses[:beam_width]


# ---------------------------------------------------------------------------
# Context assembly and per-turn rewriting
# ---------------------------------------------------------------------------


def assemble_context(
    conversation: Conversation, turn_index: int, max_tokens: int
) -> list[str]:
    """Build the rewriting context for a turn, capped at ``max_tokens``.

    The context is the chosen (top-1) rewrite of every earlier turn, the last
    system response, and the current raw query, separated by a separator
    token. When over budget, whole items drop oldest-first: earliest rewrites
    before the last response, the last response before the current query. The
    current raw query is never dropped; if it alone exceeds the budget, only
    its trailing ``max_tokens`` tokens are kept.
    """
    if max_tokens < 1:
        raise ValueError(f"max_tokens must be >= 1, got {max_tokens}")
    current = conversation.turn(turn_index)
    items: list[list[str]] = []
    for j in range(1, turn_index):
        prior = conversation.rewrites.get(j)
        if prior is None:
            raise ValueError(
                f"turn {turn_index} needs a chosen rewrite for turn {j}, none present"
            )
        items.append(list(prior.top.tokens))
    if turn_index > 1:
        last_response = conversation.turn(turn_index - 1).system_response
        if last_response is not None:
            response_tokens = tokenize(last_response)
            if response_tokens:
                items.append(response_tokens)
    items.append(tokenize(current.raw_query))

    def total_length(parts: list[list[str]]) -> int:
        return sum(len(p) for p in parts) + (len(parts) - 1)  # separators

    while len(items) > 1 and total_length(items) > max_tokens:
        items.pop(0)
    if len(items) == 1 and len(items[0]) > max_tokens:
        items[0] = items[0][len(items[0]) - max_tokens :]

    out: list[str] = []
    for pos, part in enumerate(items):
        if pos > 0:
            out.append(SEP_TOKEN)
        out.extend(part)
    return out


def rewrite_turn(
    conversation: Conversation,
    turn_index: int,
    model: TokenProbModel,
    beam_width: int,
    num_rewrites: int,
    max_length: int,
    max_context_tokens: int = 512,
) -> RewriteSet:
    """Produce the scored rewrite set for one turn.

    The first turn is assumed self-contained and passes through verbatim with
    score 1.0; every later turn runs beam search over the assembled context
    and keeps the top ``num_rewrites`` hypotheses.
    """
    if num_rewrites < 1:
        raise ValueError(f"num_rewrites must be >= 1, got {num_rewrites}")
    if num_rewrites > beam_width:
        raise ValueError(
            f"num_rewrites ({num_rewrites}) must not exceed beam_width ({beam_width})"
        )
    turn = conversation.turn(turn_index)
    if turn_index == 1:
        tokens = tuple(tokenize(turn.raw_query))
        if not tokens:
            raise ValueError(
                f"conversation {conversation.conversation_id!r}: first turn "
                "tokenizes to nothing"
            )
        passthrough = Hypothesis(tokens=tokens, log_prob_sum=0.0, rs_score=1.0)
        return RewriteSet(conversation.conversation_id, turn_index, [passthrough])
    context = assemble_context(conversation, turn_index, max_context_tokens)
    hypotheses = beam_search(model, context, beam_width, max_length)
    if not hypotheses:
        raise ValueError(f"beam search produced no hypotheses for turn {turn_index}")
    return RewriteSet(conversation.conversation_id, turn_index, hypotheses[:num_rewrites])


# ---------------------------------------------------------------------------
# File formats: conversations in, rewrites in/out (JSON lines)
# ---------------------------------------------------------------------------


def load_conversations(path: str) -> list[Conversation]:
    """Read conversations from a JSON-lines file.

    Each line: ``{"conversation_id": str, "turns": [{"turn_index": int,
    "raw_query": str, "system_response": str|null}, ...]}``.
    """
    conversations = []
    seen_ids: set[str] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                conv_id = record["conversation_id"]
                turns = [
                    Turn(
                        turn_index=int(t["turn_index"]),
                        raw_query=str(t["raw_query"]),
                        system_response=(
                            None if t.get("system_response") is None
                            else str(t["system_response"])
                        ),
                    )
                    for t in record["turns"]
                ]
                conversation = Conversation(conversation_id=str(conv_id), turns=turns)
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            if conversation.conversation_id in seen_ids:
                raise ValueError(
                    f"{path}: line {lineno}: duplicate conversation_id "
                    f"{conversation.conversation_id!r}"
                )
            seen_ids.add(conversation.conversation_id)
            conversations.append(conversation)
    return conversations


def rewrite_set_to_record(rewrite_set: RewriteSet) -> dict:
    return {
        "conversation_id": rewrite_set.conversation_id,
        "turn_index": rewrite_set.turn_index,
        "rewrites": [
            {"text": hyp.text, "score": hyp.rs_score} for hyp in rewrite_set.rewrites
        ],
    }


def write_rewrites(rewrite_sets: Iterable[RewriteSet], handle: IO[str]) -> None:
    """Write rewrite sets as JSON lines, one turn per line."""
    for rewrite_set in rewrite_sets:
        handle.write(json.dumps(rewrite_set_to_record(rewrite_set)))
        handle.write("\n")


def save_rewrites(rewrite_sets: Iterable[RewriteSet], path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as handle:
        write_rewrites(rewrite_sets, handle)


def load_rewrites(path: str) -> list[RewriteSet]:
    """Read and validate a rewrite JSON-lines file.

    Enforces the full contract: schema, scores in (0, 1], descending order
    with lexicographic tie-breaks, no duplicate rewrites per turn.
    """
    out: list[RewriteSet] = []
    seen: set[tuple[str, int]] = set()
    with open(path, "r", encoding="utf-8") as handle:
        for lineno, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                rewrites = [
                    Hypothesis.from_text(str(r["text"]), float(r["score"]))
                    for r in record["rewrites"]
                ]
                rewrite_set = RewriteSet(
                    conversation_id=str(record["conversation_id"]),
                    turn_index=int(record["turn_index"]),
                    rewrites=rewrites,
                )
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}: line {lineno}: {exc}") from exc
            key = (rewrite_set.conversation_id, rewrite_set.turn_index)
            if key in seen:
                raise ValueError(f"{path}: line {lineno}: duplicate turn {key}")
            seen.add(key)
            out.append(rewrite_set)
    return out


def iter_rewrite_query_ids(rewrite_sets: Sequence[RewriteSet]) -> Iterator[str]:
    """Query id for each turn: ``<conversation_id>_<turn_index>``."""
    for rewrite_set in rewrite_sets:
        yield f"{rewrite_set.conversation_id}_{rewrite_set.turn_index}"
