"""Evaluation for span classification and perspective summaries.

Text metrics share one tokenizer (:func:`cqa_perspectives.text.tokenize`).
Span metrics work on character offsets.
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .data import PerspectiveSpan, Sentence, Thread
from .embeddings import EmbeddingBackend, EmbeddingCache, embed_batch
from .errors import DataError
from .labels import LABELS, Perspective
from .text import tokenize

TASK_A_FIELDS = ("Cls-MF1", "Cls-WF1", "SMP", "SMR", "SMF1", "PMP", "PMR", "PMF1")
TASK_B_FIELDS = ("R1", "R2", "RL", "BS", "MET", "BLEU")
REPORT_FIELDS = TASK_A_FIELDS + TASK_B_FIELDS

Scores = tuple[float, float, float]


def f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def _prf(overlap: float, n_cand: float, n_ref: float) -> Scores:
    if n_cand == 0 and n_ref == 0:
        return 1.0, 1.0, 1.0
    if n_cand == 0 or n_ref == 0:
        return 0.0, 0.0, 0.0
    p, r = overlap / n_cand, overlap / n_ref
    return p, r, f1(p, r)


# ---------------------------------------------------------------------------
# classification


def classification_f1(pred: Sequence[Perspective | None], gold: Sequence[Perspective]) -> tuple[float, float]:
    """Macro and support-weighted F1 over the labels present in `gold`.

    A None prediction counts as a miss for the gold label only.
    """
    if len(pred) != len(gold):
        raise ValueError(f"{len(pred)} predictions for {len(gold)} gold labels")
    if not gold:
        raise ValueError("classification_f1 needs at least one item")
    tp, fp = Counter(), Counter()
    for p, g in zip(pred, gold):
        if p == g:
            tp[g] += 1
        elif p is not None:
            fp[p] += 1
    support = Counter(gold)
    per_class = {}
    for label in support:
        prec = tp[label] / (tp[label] + fp[label]) if tp[label] + fp[label] else 0.0
        rec = tp[label] / support[label]
        per_class[label] = f1(prec, rec)
    macro = sum(per_class.values()) / len(per_class)
    weighted = sum(per_class[k] * support[k] for k in per_class) / len(gold)
    return macro, weighted


def majority_span_labels(sentences: Sequence[Sentence], spans: Sequence[PerspectiveSpan]) -> list[Perspective | None]:
    """Per sentence, the label covering most of its characters (None if uncovered).

    Coverage ties go to the lowest label code.
    """
    by_answer: dict[str, list[PerspectiveSpan]] = {}
    for s in spans:
        by_answer.setdefault(s.answer_id, []).append(s)
    out = []
    for sent in sentences:
        cover = Counter()
        for sp in by_answer.get(sent.answer_id, ()):
            ov = min(sent.end, sp.end) - max(sent.start, sp.start)
            if ov > 0:
                cover[sp.label] += ov
        out.append(max(LABELS, key=lambda lab: (cover[lab], -lab.code)) if cover else None)
    return out


# ---------------------------------------------------------------------------
# span matching


def _span_key(s: PerspectiveSpan):
    return s.answer_id, s.start, s.end, s.label


def strict_counts(pred: Sequence[PerspectiveSpan], gold: Sequence[PerspectiveSpan]) -> tuple[int, int, int]:
    """(true positives, |pred|, |gold|) with one-to-one exact matches."""
    tp = sum((Counter(map(_span_key, pred)) & Counter(map(_span_key, gold))).values())
    return tp, len(pred), len(gold)


def strict_matching(pred: Sequence[PerspectiveSpan], gold: Sequence[PerspectiveSpan]) -> Scores:
    tp, n_pred, n_gold = strict_counts(pred, gold)
    return _prf(tp, n_pred, n_gold)


def _overlap(a: PerspectiveSpan, b: PerspectiveSpan) -> int:
    return max(0, min(a.end, b.end) - max(a.start, b.start))


def _best_credit(span: PerspectiveSpan, others: Iterable[PerspectiveSpan]) -> float:
    best = 0
    for o in others:
        if o.label == span.label and o.answer_id == span.answer_id:
            best = max(best, _overlap(span, o))
    return best / len(span)


def proportional_credits(pred: Sequence[PerspectiveSpan], gold: Sequence[PerspectiveSpan]) -> tuple[float, int, float, int]:
    """(sum of precision credits, |pred|, sum of recall credits, |gold|)."""
    p_credit = sum(_best_credit(p, gold) for p in pred)
    r_credit = sum(_best_credit(g, pred) for g in gold)
    return p_credit, len(pred), r_credit, len(gold)


def proportional_matching(pred: Sequence[PerspectiveSpan], gold: Sequence[PerspectiveSpan]) -> Scores:
    p_credit, n_pred, r_credit, n_gold = proportional_credits(pred, gold)
    return _pooled_proportional(p_credit, n_pred, r_credit, n_gold)


def _pooled_proportional(p_credit, n_pred, r_credit, n_gold) -> Scores:
    if n_pred == 0 and n_gold == 0:
        return 1.0, 1.0, 1.0
    if n_pred == 0 or n_gold == 0:
        return 0.0, 0.0, 0.0
    p, r = p_credit / n_pred, r_credit / n_gold
    return p, r, f1(p, r)


# ---------------------------------------------------------------------------
# text overlap metrics


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 1) -> Scores:
    cand, ref = _ngrams(tokenize(candidate), n), _ngrams(tokenize(reference), n)
    overlap = sum((cand & ref).values())
    return _prf(overlap, sum(cand.values()), sum(ref.values()))


def lcs_length(a: Sequence[str], b: Sequence[str]) -> int:
    if len(b) > len(a):
        a, b = b, a
    row = [0] * (len(b) + 1)
    for x in a:
        diag = 0
        for j, y in enumerate(b, start=1):
            up = row[j]
            row[j] = diag + 1 if x == y else max(row[j], row[j - 1])
            diag = up
    return row[-1]


def rouge_l(candidate: str, reference: str) -> Scores:
    cand, ref = tokenize(candidate), tokenize(reference)
    return _prf(lcs_length(cand, ref), len(cand), len(ref))


def bleu(candidate: str, reference: str, max_order: int = 4) -> float:
    """Sentence BLEU with add-one smoothing on orders >= 2 and a brevity penalty.

    Candidates shorter than `max_order` tokens use orders up to their length.
    """
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand:
        return 0.0
    order = min(max_order, len(cand))
    log_sum = 0.0
    for n in range(1, order + 1):
        c, r = _ngrams(cand, n), _ngrams(ref, n)
        matches = sum((c & r).values())
        total = len(cand) - n + 1
        if n == 1:
            if matches == 0:
                return 0.0
            log_sum += math.log(matches / total)
        else:
            log_sum += math.log((matches + 1) / (total + 1))
    bp = 1.0 if len(cand) >= len(ref) else math.exp(1 - len(ref) / len(cand))
    return bp * math.exp(log_sum / order)


def meteor(candidate: str, reference: str) -> float:
    """Exact-match METEOR: harmonic F-mean (recall-weighted 9:1) times a fragmentation penalty.

    Unigrams align greedily to the leftmost unused equal reference token.
    Identical token sequences score 1.0 (no fragmentation penalty).
    """
    cand, ref = tokenize(candidate), tokenize(reference)
    if cand and cand == ref:
        return 1.0
    used = [False] * len(ref)
    alignment = []
    for i, tok in enumerate(cand):
        for j, rtok in enumerate(ref):
            if not used[j] and rtok == tok:
                used[j] = True
                alignment.append((i, j))
                break
    m = len(alignment)
    if m == 0:
        return 0.0
    chunks = 1
    for (i0, j0), (i1, j1) in zip(alignment, alignment[1:]):
        if i1 != i0 + 1 or j1 != j0 + 1:
            chunks += 1
    p, r = m / len(cand), m / len(ref)
    f_mean = 10 * p * r / (r + 9 * p)
    penalty = 0.5 * (chunks / m) ** 3
    return f_mean * (1 - penalty)


def bertscore(candidate: str, reference: str, backend: EmbeddingBackend,
              cache: EmbeddingCache | None = None) -> Scores:
    """Greedy token matching by embedding cosine; per-token maxima are floored at 0."""
    cand, ref = tokenize(candidate), tokenize(reference)
    if not cand and not ref:
        return 1.0, 1.0, 1.0
    if not cand or not ref:
        return 0.0, 0.0, 0.0
    vocab = sorted(set(cand) | set(ref))
    index = {w: k for k, w in enumerate(vocab)}
    vecs = embed_batch(vocab, backend, cache)
    C, R = vecs[[index[w] for w in cand]], vecs[[index[w] for w in ref]]
    sims = np.clip(C @ R.T, -1.0, 1.0)
    same = np.array(cand)[:, None] == np.array(ref)[None, :]
    sims[same] = 1.0
    p = float(np.clip(sims.max(axis=1), 0.0, 1.0).mean())
    r = float(np.clip(sims.max(axis=0), 0.0, 1.0).mean())
    return p, r, f1(p, r)


# ---------------------------------------------------------------------------
# run report


@dataclass
class TaskAReport:
    cls_macro_f1: float
    cls_weighted_f1: float
    strict: Scores
    proportional: Scores

    def to_dict(self) -> dict:
        return dict(zip(TASK_A_FIELDS, (self.cls_macro_f1, self.cls_weighted_f1, *self.strict, *self.proportional)))


@dataclass
class TaskBReport:
    rouge1: float
    rouge2: float
    rougeL: float
    bertscore: float
    meteor: float
    bleu: float
    factuality: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return dict(zip(TASK_B_FIELDS, (self.rouge1, self.rouge2, self.rougeL, self.bertscore, self.meteor, self.bleu)))


@dataclass
class RunReport:
    task_a: TaskAReport
    task_b: TaskBReport
    avg_score: float
    per_thread: list[dict] = field(default_factory=list)

    def scalars(self) -> dict[str, float]:
        return {**self.task_a.to_dict(), **self.task_b.to_dict()}

    def to_dict(self, fingerprint: str | None = None) -> dict:
        out = {"task_a": self.task_a.to_dict(), "task_b": self.task_b.to_dict(), "avg_score": self.avg_score}
        if self.task_b.factuality:
            out["factuality"] = dict(self.task_b.factuality)
        out["per_thread"] = self.per_thread
        if fingerprint is not None:
            out["config_fingerprint"] = fingerprint
        return out

    def to_json(self, fingerprint: str | None = None) -> str:
        return json.dumps(self.to_dict(fingerprint), indent=2, ensure_ascii=False) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([*REPORT_FIELDS, "avg_score"])
        values = self.scalars()
        writer.writerow([f"{values[k]:.6f}" for k in REPORT_FIELDS] + [f"{self.avg_score:.6f}"])
        return buf.getvalue()


def average_score(values: dict[str, float], weights: dict[str, float] | None = None) -> float:
    """Mean of the scalar report fields, optionally weighted."""
    weights = weights or {k: 1.0 for k in REPORT_FIELDS}
    unknown = set(weights) - set(REPORT_FIELDS)
    if unknown:
        raise ValueError(f"unknown metric weights: {sorted(unknown)}")
    total = sum(weights.values())
    if total <= 0:
        raise ValueError("metric weights must sum to a positive number")
    return sum(values[k] * w for k, w in weights.items()) / total


FactualityScorer = Callable[[str, str], dict[str, float]]


def evaluate_run(
    threads: Sequence[Thread],
    predictions: dict[str, Sequence[PerspectiveSpan]],
    summaries: dict[str, dict[Perspective, str]],
    embedder: EmbeddingBackend,
    cache: EmbeddingCache | None = None,
    abbreviations=None,
    weights: dict[str, float] | None = None,
    factuality: FactualityScorer | None = None,
) -> RunReport:
    """Score predicted spans and final summaries against gold threads.

    Span metrics pool counts over the corpus. Summary metrics average over
    the (thread, label) pairs that have a gold summary; a missing predicted
    summary scores as an empty string.
    """
    if not threads:
        raise DataError("empty evaluation set")
    pred_labels, gold_labels = [], []
    strict_tot = np.zeros(3)
    prop_tot = np.zeros(4)
    text_scores: list[dict[str, float]] = []
    fact_scores: list[dict[str, float]] = []
    per_thread = []
    for t in threads:
        if t.gold is None:
            raise DataError(f"thread {t.id} has no gold annotation")
        pred = list(predictions.get(t.id, ()))
        gold = list(t.gold.spans)
        sents = t.sentences(abbreviations)
        for p, g in zip(majority_span_labels(sents, pred), majority_span_labels(sents, gold)):
            if g is not None:
                pred_labels.append(p)
                gold_labels.append(g)
        sc = strict_counts(pred, gold)
        pc = proportional_credits(pred, gold)
        strict_tot += sc
        prop_tot += pc
        thread_text = []
        for label, ref in t.gold.summaries.items():
            cand = summaries.get(t.id, {}).get(label, "")
            row = {
                "R1": rouge_n(cand, ref, 1)[2],
                "R2": rouge_n(cand, ref, 2)[2],
                "RL": rouge_l(cand, ref)[2],
                "BS": bertscore(cand, ref, embedder, cache)[2],
                "MET": meteor(cand, ref),
                "BLEU": bleu(cand, ref),
            }
            text_scores.append(row)
            thread_text.append({"label": label.value, **row})
            if factuality is not None:
                fact_scores.append(factuality(cand, ref))
        per_thread.append({
            "thread_id": t.id,
            "strict": dict(zip(("P", "R", "F1"), _prf(*sc))),
            "proportional": dict(zip(("P", "R", "F1"), _pooled_proportional(*pc))),
            "summaries": thread_text,
        })

    if gold_labels:
        macro, weighted = classification_f1(pred_labels, gold_labels)
    else:
        macro = weighted = 0.0
    strict = tuple(float(x) for x in _prf(*strict_tot))
    proportional = tuple(float(x) for x in _pooled_proportional(*prop_tot))
    task_a = TaskAReport(float(macro), float(weighted), strict, proportional)

    def mean(key):
        return float(np.mean([r[key] for r in text_scores])) if text_scores else 0.0

    fact = {}
    if fact_scores:
        for key in sorted(set().union(*fact_scores)):
            fact[key] = float(np.mean([r[key] for r in fact_scores if key in r]))
    task_b = TaskBReport(mean("R1"), mean("R2"), mean("RL"), mean("BS"), mean("MET"), mean("BLEU"), fact)
    values = {**task_a.to_dict(), **task_b.to_dict()}
    return RunReport(task_a, task_b, average_score(values, weights), per_thread)
