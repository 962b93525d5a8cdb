"""Per-sentence label decision (rules, then SVM, then zero-shot) and span merging."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .data import PerspectiveSpan, Sentence
from .errors import ConfigError, PipelineError
from .labels import LABELS, Perspective, Provenance
from .weak_supervision import ProbabilisticLabel

DEFAULT_MARGIN_THRESHOLD = 0.25


class UnclassifiableError(PipelineError):
    pass


@dataclass(frozen=True)
class CascadeConfig:
    svm_margin_threshold: float = DEFAULT_MARGIN_THRESHOLD
    svm_enabled: bool = True
    zsl_enabled: bool = True

    def __post_init__(self):
        if not math.isfinite(self.svm_margin_threshold) or self.svm_margin_threshold < 0:
            raise ConfigError("svm_margin_threshold must be a finite number >= 0")


@dataclass(frozen=True)
class LabeledSentence:
    sentence: Sentence
    label: Perspective
    provenance: Provenance
    confidence: float


def classify_sentence(
    sentence: Sentence,
    lm_out: ProbabilisticLabel,
    svm_out: tuple[Perspective, float] | None,
    zsl: Callable[[str], Sequence[float]] | None,
    cfg: CascadeConfig = CascadeConfig(),
) -> LabeledSentence:
    """Pick the label for one sentence.

    The rule label wins whenever some rule fired. Otherwise the SVM answers
    if its margin reaches the threshold, and zero-shot answers the rest. With
    zero-shot disabled the SVM answers regardless of margin. `zsl` is only
    called when its answer is used.
    """
    label = lm_out.label
    if label is not None:
        return LabeledSentence(sentence, label, Provenance.RULE, float(lm_out.posterior[label.code]))

    use_svm = cfg.svm_enabled and svm_out is not None
    if use_svm and (svm_out[1] >= cfg.svm_margin_threshold or not cfg.zsl_enabled):
        return LabeledSentence(sentence, Perspective.parse(svm_out[0]), Provenance.SVM, float(svm_out[1]))

    if cfg.zsl_enabled:
        if zsl is None:
            raise ConfigError("zero-shot stage enabled but no classifier supplied")
        probs = np.asarray(zsl(sentence.text), dtype=float)
        top = int(np.argmax(probs))
        return LabeledSentence(sentence, LABELS[top], Provenance.ZSL, float(probs[top]))

    raise UnclassifiableError(
        f"sentence [{sentence.start}, {sentence.end}) of answer {sentence.answer_id}: "
        "rules abstained and no SVM or zero-shot stage is available"
    )


_RANK = {Provenance.RULE: 0, Provenance.SVM: 1, Provenance.ZSL: 2}


def merge_spans(labeled: Sequence[LabeledSentence]) -> list[PerspectiveSpan]:
    """Merge runs of consecutive same-label sentences of one answer into spans.

    Span confidence is the mean of member confidences; provenance is the
    strongest member stage (RULE over SVM over ZSL).
    """
    spans: list[PerspectiveSpan] = []
    run: list[LabeledSentence] = []

    def flush():
        if run:
            prov = min((r.provenance for r in run), key=_RANK.__getitem__)
            conf = float(np.mean([r.confidence for r in run]))
            spans.append(PerspectiveSpan(run[0].sentence.answer_id, run[0].sentence.start,
                                         run[-1].sentence.end, run[0].label, prov, conf))
            run.clear()

    prev = None
    for item in labeled:
        s = item.sentence
        if prev is not None and prev.answer_id == s.answer_id and s.start < prev.end:
            raise ValueError(f"overlapping sentences in answer {s.answer_id} at offset {s.start}")
        if run and (run[-1].sentence.answer_id != s.answer_id or run[-1].label != item.label):
            flush()
        run.append(item)
        prev = s
    flush()
    return spans
