"""CQA threads, gold annotations, sentence segmentation and corpus I/O.

All offsets are character offsets into the raw answer text, end-exclusive.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import DataError, SchemaError
from .labels import Perspective, Provenance

logger = logging.getLogger(__name__)

_TERMINATORS = ".!?"
_LEADING_PUNCT = "([{\"'"


@dataclass(frozen=True)
class Answer:
    id: str
    text: str


@dataclass(frozen=True)
class Sentence:
    answer_id: str
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class PerspectiveSpan:
    answer_id: str
    start: int
    end: int
    label: Perspective
    provenance: Provenance | None = None
    confidence: float | None = None

    def __len__(self) -> int:
        return self.end - self.start


@dataclass(frozen=True)
class GoldAnnotation:
    spans: tuple[PerspectiveSpan, ...] = ()
    summaries: dict[Perspective, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Thread:
    id: str
    question: str
    answers: tuple[Answer, ...]
    context: str = ""
    gold: GoldAnnotation | None = None

    def answer(self, answer_id: str) -> Answer:
        for a in self.answers:
            if a.id == answer_id:
                return a
        raise KeyError(f"thread {self.id} has no answer {answer_id!r}")

    def answer_index(self, answer_id: str) -> int:
        for i, a in enumerate(self.answers):
            if a.id == answer_id:
                return i
        raise KeyError(f"thread {self.id} has no answer {answer_id!r}")

    def span_text(self, span: PerspectiveSpan) -> str:
        return self.answer(span.answer_id).text[span.start:span.end]

    def sentences(self, abbreviations: Iterable[str] | None = None) -> list[Sentence]:
        """All answer sentences in answer order, then offset order."""
        guard = _guard_set(abbreviations)
        out = []
        for a in self.answers:
            for start, end in sentence_split(a.text, guard):
                out.append(Sentence(a.id, start, end, a.text[start:end]))
        return out


@dataclass(frozen=True)
class Violation:
    thread_id: str
    answer_id: str | None
    message: str

    def __str__(self) -> str:
        where = f"thread {self.thread_id}"
        if self.answer_id is not None:
            where += f", answer {self.answer_id}"
        return f"{where}: {self.message}"


# ---------------------------------------------------------------------------
# sentence segmentation


def load_abbreviations(path: str | Path | None = None) -> frozenset[str]:
    """Abbreviations that never end a sentence. `path` overrides the shipped list."""
    if path is None:
        raw = resources.files(__package__).joinpath("resources/abbreviations.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    items = json.loads(raw)
    if not isinstance(items, list) or not all(isinstance(s, str) for s in items):
        raise SchemaError(f"abbreviation file must be a JSON array of strings: {path}")
    return frozenset(s.lower() for s in items)


_DEFAULT_GUARD: frozenset[str] | None = None


def _guard_set(abbreviations: Iterable[str] | None) -> frozenset[str]:
    global _DEFAULT_GUARD
    if abbreviations is None:
        if _DEFAULT_GUARD is None:
            _DEFAULT_GUARD = load_abbreviations()
        return _DEFAULT_GUARD
    if isinstance(abbreviations, frozenset):
        return abbreviations
    return frozenset(s.lower() for s in abbreviations)


def sentence_split(text: str, abbreviations: Iterable[str] | None = None) -> list[tuple[int, int]]:
    """Split `text` into sentence offsets.

    A sentence ends at '.', '!' or '?' when the next character is whitespace
    (or the text ends), unless the word carrying the terminator is a guarded
    abbreviation such as "Dr.". Leading and trailing whitespace is excluded
    from every sentence.

    >>> sentence_split("Dr. Smith rested. Try tea.")
    [(0, 17), (18, 26)]
    """
    guard = _guard_set(abbreviations)
    n = len(text)
    cuts = []
    word_start = 0
    for i, ch in enumerate(text):
        if ch.isspace():
            word_start = i + 1
            continue
        if ch in _TERMINATORS and (i + 1 == n or text[i + 1].isspace()):
            word = text[word_start:i + 1].lstrip(_LEADING_PUNCT).lower()
            if word not in guard:
                cuts.append(i + 1)
    if not cuts or cuts[-1] != n:
        cuts.append(n)

    out = []
    prev = 0
    for cut in cuts:
        start, end = prev, cut
        while start < end and text[start].isspace():
            start += 1
        while end > start and text[end - 1].isspace():
            end -= 1
        if start < end:
            out.append((start, end))
        prev = cut
    return out


# ---------------------------------------------------------------------------
# validation


def validate_dataset(threads: Sequence[Thread]) -> list[Violation]:
    """Every invariant violation in `threads`; an empty list means valid."""
    out: list[Violation] = []
    seen_threads: set[str] = set()
    for t in threads:
        if t.id in seen_threads:
            out.append(Violation(t.id, None, "duplicate thread id"))
        seen_threads.add(t.id)
        if not t.answers:
            out.append(Violation(t.id, None, "thread has no answers"))
        lengths: dict[str, int] = {}
        for a in t.answers:
            if a.id in lengths:
                out.append(Violation(t.id, a.id, "duplicate answer id"))
            lengths.setdefault(a.id, len(a.text))
            if not a.text.strip():
                out.append(Violation(t.id, a.id, "answer text is empty"))
        if t.gold is None:
            continue
        labels_with_spans = set()
        for k, span in enumerate(t.gold.spans):
            labels_with_spans.add(span.label)
            if span.answer_id not in lengths:
                out.append(Violation(t.id, span.answer_id, f"gold span {k} references unknown answer"))
                continue
            n = lengths[span.answer_id]
            if not 0 <= span.start < span.end <= n:
                out.append(Violation(
                    t.id, span.answer_id,
                    f"gold span {k} has invalid offsets [{span.start}, {span.end}) for answer length {n}",
                ))
        for label in t.gold.summaries:
            if label not in labels_with_spans:
                out.append(Violation(t.id, None, f"gold summary for {label} has no gold span of that label"))
    return out


# ---------------------------------------------------------------------------
# (de)serialization


def _require(obj: dict, key: str, kind, where: str):
    if not isinstance(obj, dict):
        raise SchemaError(f"{where}: expected an object")
    if key not in obj:
        raise SchemaError(f"{where}: missing field {key!r}")
    value = obj[key]
    if not isinstance(value, kind) or isinstance(value, bool):
        raise SchemaError(f"{where}: field {key!r} has wrong type {type(value).__name__}")
    return value


def _parse_label(value, where: str) -> Perspective:
    try:
        return Perspective(value)
    except ValueError:
        raise SchemaError(f"{where}: unknown label {value!r}") from None


def thread_from_dict(obj: dict, index: int = 0) -> Thread:
    where = f"thread #{index}"
    tid = _require(obj, "id", str, where)
    where = f"thread {tid}"
    question = _require(obj, "question", str, where)
    context = obj.get("context", "")
    if not isinstance(context, str):
        raise SchemaError(f"{where}: field 'context' has wrong type {type(context).__name__}")
    answers = []
    for j, a in enumerate(_require(obj, "answers", list, where)):
        aw = f"{where}, answer #{j}"
        aid = _require(a, "id", str, aw)
        answers.append(Answer(aid, _require(a, "text", str, f"{where}, answer {aid}")))

    gold = None
    if obj.get("gold") is not None:
        g = obj["gold"]
        gw = f"{where}, gold"
        spans = []
        texts = []
        for k, s in enumerate(_require(g, "spans", list, gw)):
            sw = f"{gw} span #{k}"
            spans.append(PerspectiveSpan(
                answer_id=_require(s, "answer_id", str, sw),
                start=_require(s, "start", int, sw),
                end=_require(s, "end", int, sw),
                label=_parse_label(_require(s, "label", str, sw), sw),
            ))
            text = s.get("text")
            if text is not None and not isinstance(text, str):
                raise SchemaError(f"{sw}: field 'text' has wrong type {type(text).__name__}")
            texts.append(text)
        raw_summaries = g.get("summaries", {})
        if not isinstance(raw_summaries, dict):
            raise SchemaError(f"{gw}: field 'summaries' must be an object")
        summaries = {}
        for key, value in raw_summaries.items():
            if not isinstance(value, str):
                raise SchemaError(f"{gw}: summary {key!r} must be a string")
            summaries[_parse_label(key, gw)] = value
        gold = GoldAnnotation(tuple(spans), summaries)
        # stored span text is redundant; it must agree with the offsets
        by_id = {a.id: a.text for a in answers}
        for k, (span, text) in enumerate(zip(spans, texts)):
            body = by_id.get(span.answer_id)
            if text is None or body is None or not 0 <= span.start < span.end <= len(body):
                continue
            if body[span.start:span.end] != text:
                raise DataError(f"{gw} span #{k}: text does not match answer {span.answer_id} at [{span.start}, {span.end})")
    return Thread(tid, question, tuple(answers), context, gold)


def thread_to_dict(thread: Thread) -> dict:
    out = {
        "id": thread.id,
        "question": thread.question,
        "context": thread.context,
        "answers": [{"id": a.id, "text": a.text} for a in thread.answers],
    }
    if thread.gold is not None:
        by_id = {a.id: a.text for a in thread.answers}
        out["gold"] = {
            "spans": [
                {
                    "answer_id": s.answer_id,
                    "start": s.start,
                    "end": s.end,
                    "label": s.label.value,
                    "text": by_id.get(s.answer_id, "")[s.start:s.end],
                }
                for s in thread.gold.spans
            ],
            "summaries": {label.value: text for label, text in thread.gold.summaries.items()},
        }
    return out


def parse_dataset(items) -> list[Thread]:
    if not isinstance(items, list):
        raise SchemaError("corpus file must contain a top-level JSON array")
    threads = [thread_from_dict(obj, i) for i, obj in enumerate(items)]
    violations = validate_dataset(threads)
    if violations:
        detail = "; ".join(str(v) for v in violations)
        raise DataError(f"{len(violations)} corpus violation(s): {detail}")
    return threads


def load_dataset(path: str | Path) -> list[Thread]:
    """Read and validate a corpus file."""
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as e:
        raise DataError(f"cannot read corpus {path}: {e}") from e
    try:
        items = json.loads(raw)
    except json.JSONDecodeError as e:
        raise SchemaError(f"{path} is not valid JSON: {e}") from e
    threads = parse_dataset(items)
    logger.info("loaded %d threads from %s", len(threads), path)
    return threads


def dump_dataset(threads: Sequence[Thread]) -> str:
    return json.dumps([thread_to_dict(t) for t in threads], ensure_ascii=False, indent=2) + "\n"


def save_dataset(threads: Sequence[Thread], path: str | Path) -> None:
    Path(path).write_text(dump_dataset(threads), encoding="utf-8")


def toy_corpus_path() -> Path:
    """Path of the bundled 10-thread corpus."""
    return Path(str(resources.files(__package__).joinpath("resources/toy_corpus.json")))
