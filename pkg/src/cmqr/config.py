"""Pipeline configuration: flat JSON file with command-line overrides.

Defaults match the reference setup: beam width 10, 10 rewrites per turn,
BM25 k1=0.82 / b=0.68, a 512-token rewriting context, 100 results per query.
Flags always win over the config file.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields


@dataclass
class PipelineConfig:
    beam_width: int = 10
    num_rewrites: int = 10
    bm25_k1: float = 0.82
    bm25_b: float = 0.68
    max_context_tokens: int = 512
    top_k_results: int = 100
    dense_normalize_rs: bool = False
    encoder: str = "hash"
    # Plumbing for the built-in hash encoder and the toy rewriter.
    encoder_dim: int = 256
    encoder_seed: int = 42
    max_rewrite_tokens: int = 24
    # Artifact paths; subcommand arguments override these.
    collection: str | None = None
    rewrites: str | None = None
    embeddings: str | None = None
    index_dir: str | None = None
    qrels: str | None = None
    output: str | None = None

    def validate(self) -> None:
        if self.beam_width < 1:
            raise ValueError(f"beam_width must be >= 1, got {self.beam_width}")
        if not 1 <= self.num_rewrites <= self.beam_width:
            raise ValueError(
                f"num_rewrites must be in 1..beam_width ({self.beam_width}), "
                f"got {self.num_rewrites}"
            )
        if self.bm25_k1 <= 0:
            raise ValueError(f"bm25_k1 must be > 0, got {self.bm25_k1}")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ValueError(f"bm25_b must be in [0, 1], got {self.bm25_b}")
        if self.max_context_tokens < 1:
            raise ValueError(
                f"max_context_tokens must be >= 1, got {self.max_context_tokens}"
            )
        if self.top_k_results < 1:
            raise ValueError(f"top_k_results must be >= 1, got {self.top_k_results}")
        if self.encoder not in ("hash", "external"):
            raise ValueError(f"encoder must be 'hash' or 'external', got {self.encoder!r}")
        if self.encoder_dim < 1:
            raise ValueError(f"encoder_dim must be >= 1, got {self.encoder_dim}")
        if self.max_rewrite_tokens < 1:
            raise ValueError(
                f"max_rewrite_tokens must be >= 1, got {self.max_rewrite_tokens}"
            )

    def as_dict(self) -> dict:
        return asdict(self)


def load_config(path: str) -> PipelineConfig:
    """Read a flat JSON config file; unknown keys are rejected."""
    with open(path, "r", encoding="utf-8") as handle:
        try:
            raw = json.load(handle)
        except json.JSONDecodeError as exc:
            raise ValueError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a JSON object")
    known = {f.name for f in fields(PipelineConfig)}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ValueError(f"{path}: unknown config keys: {', '.join(unknown)}")
    config = PipelineConfig(**raw)
    config.validate()
    return config


def resolve_config(path: str | None, overrides: dict) -> PipelineConfig:
    """Load the config file (if any) and apply non-None overrides on top."""
    config = load_config(path) if path else PipelineConfig()
    for key, value in overrides.items():
        if value is not None:
            setattr(config, key, value)
    config.validate()
    return config
