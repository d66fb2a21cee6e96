"""Conversational multi-query rewriting (CMQR) passage retrieval engine.

Beam search over a token-probability model yields every turn's top rewrites
with length-normalized scores; sparse retrieval folds them into one weighted
BM25 query and dense retrieval pools them into one weighted-centroid vector.
"""

from .config import PipelineConfig
from .dense import (
    Encoder,
    HashProjectionEncoder,
    VectorStore,
    build_store,
    pool_rewrites,
    read_embeddings,
    search_dense,
    write_embeddings,
)
from .evaluation import (
    MetricsReport,
    Qrels,
    average_precision,
    evaluate,
    recall_at_k,
    reciprocal_rank,
)
from .rewriting import (
    Conversation,
    Hypothesis,
    NGramLM,
    RewriteSet,
    TokenProbModel,
    Turn,
    assemble_context,
    beam_search,
    compute_rs,
    rewrite_turn,
)
from .sparse import (
    InvertedIndex,
    Passage,
    WeightedQuery,
    aggregate_rewrites,
    bm25_term_weight,
    build_index,
    search_sparse,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "Encoder",
    "HashProjectionEncoder",
    "VectorStore",
    "build_store",
    "pool_rewrites",
    "read_embeddings",
    "search_dense",
    "write_embeddings",
    "MetricsReport",
    "Qrels",
    "average_precision",
    "evaluate",
    "recall_at_k",
    "reciprocal_rank",
    "Conversation",
    "Hypothesis",
    "NGramLM",
    "RewriteSet",
    "TokenProbModel",
    "Turn",
    "assemble_context",
    "beam_search",
    "compute_rs",
    "rewrite_turn",
    "InvertedIndex",
    "Passage",
    "WeightedQuery",
    "aggregate_rewrites",
    "bm25_term_weight",
    "build_index",
    "search_sparse",
    "tokenize",
]
