"""Subject-token selection for cross-attention aggregation.

The generator's cross-attention is aggregated only over the tokens of the
prompt's head noun phrase, so the heatmap tracks the described object rather
than the whole sentence.
"""
from __future__ import annotations

import re

_ARTICLES = {"a", "an", "the", "one", "its", "his", "her", "their"}
# words that end the head noun phrase of a descriptive prompt
_PHRASE_BREAKERS = {
    "with",
    "without",
    "that",
    "which",
    "who",
    "and",
    "or",
    "on",
    "in",
    "at",
    "of",
    "near",
    "under",
    "over",
    "behind",
    "beside",
    "against",
    "sitting",
    "standing",
    "lying",
    "looking",
    "rising",
    "is",
    "are",
    "was",
    "has",
    "have",
}

_WORD_RE = re.compile(r"[A-Za-z0-9'-]+")


def tokenize(prompt: str) -> list[str]:
    return [w.lower() for w in _WORD_RE.findall(prompt)]


def subject_token_indices(prompt: str) -> list[int]:
    """Indices (into ``tokenize(prompt)``) of the head noun phrase tokens.

    Leading articles are skipped; the phrase ends at the first breaker word.
    Falls back to the first token when nothing qualifies.
    """
    tokens = tokenize(prompt)
    indices: list[int] = []
    started = False
    for i, token in enumerate(tokens):
        if not started:
            if token in _ARTICLES:
                continue
            started = True
        if token in _PHRASE_BREAKERS:
            break
        indices.append(i)
    if not indices and tokens:
        indices = [0]
    return indices
