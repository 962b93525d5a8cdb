"""Perspective label set and integer codes.

Labels are ordered EXPERIENCE, INFORMATION, CAUSE, SUGGESTION, QUESTION.
That order fixes the integer code of each label (0..4) and is the
tie-break order everywhere an argmax is taken.
"""
from __future__ import annotations

from enum import Enum

import numpy as np

ABSTAIN = -1
N_LABELS = 5


class Perspective(str, Enum):
    EXPERIENCE = "EXPERIENCE"
    INFORMATION = "INFORMATION"
    CAUSE = "CAUSE"
    SUGGESTION = "SUGGESTION"
    QUESTION = "QUESTION"

    @property
    def code(self) -> int:
        return _CODES[self]

    @classmethod
    def from_code(cls, code: int) -> "Perspective":
        if not 0 <= code < N_LABELS:
            raise ValueError(f"label code out of range: {code}")
        return LABELS[code]

    @classmethod
    def parse(cls, value) -> "Perspective":
        """Accept a Perspective, its string name, or its integer code."""
        if isinstance(value, Perspective):
            return value
        if isinstance(value, (int, np.integer)) and not isinstance(value, bool):
            return cls.from_code(int(value))
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown perspective label: {value!r}") from None

    def __str__(self) -> str:
        return self.value


LABELS: tuple[Perspective, ...] = tuple(Perspective)
_CODES = {label: i for i, label in enumerate(LABELS)}


class Provenance(str, Enum):
    """Which cascade stage produced a label."""

    RULE = "RULE"
    SVM = "SVM"
    ZSL = "ZSL"

    def __str__(self) -> str:
        return self.value


def argmax_label(scores) -> int:
    """Index of the largest score; ties go to the lowest label code."""
    return int(np.argmax(np.asarray(scores)))
