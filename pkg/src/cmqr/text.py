"""Shared text utilities: the deterministic tokenizer and reserved tokens."""

import re

_TOKEN_RE = re.compile(r"[a-z0-9]+")

# Reserved tokens used by the rewriting side. They survive tokenization of
# normal text only as their alphanumeric core, so they cannot be forged by
# passage or query content.
EOS_TOKEN = "</s>"
BOS_TOKEN = "<s>"
SEP_TOKEN = "<sep>"


def tokenize(text: str) -> list[str]:
    """Lowercase, then split on non-alphanumeric characters.

    No stemming, no stopword removal; empty input yields an empty list.
    """
    return _TOKEN_RE.findall(text.lower())
