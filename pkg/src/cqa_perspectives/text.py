"""Shared word tokenizer for metrics and the stub backends."""
from __future__ import annotations

import re

_TOKEN = re.compile(r"\w+|[^\w\s]")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on whitespace, punctuation marks as their own tokens.

    >>> tokenize("Drink tea, twice!")
    ['drink', 'tea', ',', 'twice', '!']
    """
    return _TOKEN.findall(text.lower())
