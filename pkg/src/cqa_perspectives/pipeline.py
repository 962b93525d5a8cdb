"""Staged end-to-end run: ingest through evaluation, with persisted artifacts.

Each stage reads the artifacts of earlier stages from the output directory
and writes its own. `run_pipeline` skips a stage whose recorded config
fingerprint matches and whose outputs are newer than its inputs.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from filelock import FileLock, Timeout

from . import data as data_mod
from .cascade import classify_sentence, merge_spans
from .config import PipelineConfig
from .data import PerspectiveSpan, Sentence, Thread
from .embeddings import EmbeddingCache, embed_batch
from .errors import ConfigError, DataError, MissingArtifactError, PipelineError
from .labels import LABELS, Perspective, Provenance
from .metrics import evaluate_run, majority_span_labels
from .summarization import AuditLog, dump_summaries, load_summaries, summarize_corpus
from .svm import load_model, save_model, svm_predict_batch, train_svm
from .weak_supervision import (
    apply_rules,
    label_model_predict,
    load_label_matrix,
    load_label_model,
    load_rules,
    save_label_matrix,
    save_label_model,
    train_label_model,
)
from .zero_shot import HttpNLIZeroShot, SimilarityZeroShot, load_descriptions, zsl_classify

logger = logging.getLogger(__name__)

CORPUS = "corpus.json"
SENTENCES = "sentences.json"
LABEL_MATRIX = "label_matrix.tsv"
LABEL_MODEL = "label_model.json"
SVM_DIR = "svm_model"
PREDICTIONS = "predictions.json"
SUMMARIES = "summaries.json"
AUDIT = "summarization_audit.jsonl"
REPORT = "report.json"
REPORT_CSV = "report.csv"
STATE = "stages.json"

STAGES = ("ingest", "apply-rules", "train-label-model", "train-svm", "classify", "summarize", "evaluate")
PRODUCER = {
    CORPUS: "ingest", SENTENCES: "ingest", LABEL_MATRIX: "apply-rules", LABEL_MODEL: "train-label-model",
    SVM_DIR: "train-svm", PREDICTIONS: "classify", SUMMARIES: "summarize",
}


class StageError(PipelineError):
    def __init__(self, stage: str, cause: Exception):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 5)
        super().__init__(f"stage {stage} failed: {cause}")


def _json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


@dataclass
class Workspace:
    """Output directory of one run, and the config that owns it."""

    cfg: PipelineConfig

    def __post_init__(self):
        self.root = self.cfg.paths.output_dir
        self.root.mkdir(parents=True, exist_ok=True)
        self.fingerprint = self.cfg.fingerprint()

    def path(self, name: str) -> Path:
        return self.root / name

    def need(self, name: str) -> Path:
        p = self.path(name)
        marker = p / "manifest.json" if name == SVM_DIR else p
        if not marker.exists():
            raise MissingArtifactError(p, PRODUCER[name])
        return p

    # -- shared loaders

    def threads(self) -> list[Thread]:
        return data_mod.load_dataset(self.need(CORPUS))

    def sentences(self) -> list[tuple[str, int, Sentence]]:
        obj = json.loads(self.need(SENTENCES).read_text(encoding="utf-8"))
        return [(r["thread_id"], r["index"], Sentence(r["answer_id"], r["start"], r["end"], r["text"]))
                for r in obj["sentences"]]

    def embedder(self):
        backend = self.cfg.embedding.build()
        cache = EmbeddingCache(self.cfg.paths.cache_dir / backend.model_id.replace("/", "__"),
                               backend.model_id, backend.dimension)
        return backend, cache


# ---------------------------------------------------------------------------
# stages


def stage_ingest(ws: Workspace) -> None:
    threads = data_mod.load_dataset(ws.cfg.paths.corpus)
    abbreviations = data_mod.load_abbreviations(ws.cfg.paths.abbreviations)
    rows = []
    for t in threads:
        per_answer: dict[str, int] = {}
        for s in t.sentences(abbreviations):
            idx = per_answer.get(s.answer_id, 0)
            per_answer[s.answer_id] = idx + 1
            rows.append({"thread_id": t.id, "answer_id": s.answer_id, "index": idx,
                         "start": s.start, "end": s.end, "text": s.text})
    ws.path(CORPUS).write_text(data_mod.dump_dataset(threads), encoding="utf-8")
    ws.path(SENTENCES).write_text(_json({"config_fingerprint": ws.fingerprint, "sentences": rows}),
                                  encoding="utf-8")
    logger.info("ingest: %d threads, %d sentences", len(threads), len(rows))


def stage_apply_rules(ws: Workspace) -> None:
    rows = ws.sentences()
    rules = load_rules(ws.cfg.paths.rules)
    matrix = apply_rules(rules, [s for _, _, s in rows], [(t, s.answer_id, i) for t, i, s in rows])
    save_label_matrix(matrix, ws.path(LABEL_MATRIX), ws.fingerprint)
    logger.info("apply-rules: %d x %d matrix, coverage %.3f", *matrix.shape,
                float((matrix.cells != -1).any(axis=1).mean()) if matrix.shape[0] else 0.0)


def stage_train_label_model(ws: Workspace) -> None:
    matrix = load_label_matrix(ws.need(LABEL_MATRIX))
    params = train_label_model(matrix, ws.cfg.label_model.epochs, ws.cfg.label_model.seed)
    save_label_model(params, ws.path(LABEL_MODEL), ws.fingerprint)


def _svm_training_set(ws: Workspace, rows, threads) -> tuple[list[int], list[Perspective]]:
    source = ws.cfg.svm.train_source
    if source == "gold":
        by_id = {t.id: t for t in threads}
        idx, labels = [], []
        for k, (tid, _, s) in enumerate(rows):
            gold = by_id[tid].gold
            if gold is None:
                continue
            label = majority_span_labels([s], gold.spans)[0]
            if label is not None:
                idx.append(k)
                labels.append(label)
        if len(set(labels)) >= 2:
            return idx, labels
        logger.warning("train-svm: fewer than two gold labels available, training on label-model output")
    matrix = load_label_matrix(ws.need(LABEL_MATRIX))
    params = load_label_model(ws.need(LABEL_MODEL))
    idx, labels = [], []
    for k, pl in enumerate(label_model_predict(params, matrix)):
        if pl.label is not None:
            idx.append(k)
            labels.append(pl.label)
    return idx, labels


def stage_train_svm(ws: Workspace) -> None:
    if not ws.cfg.cascade.svm_enabled:
        logger.info("train-svm: SVM disabled, nothing to do")
        return
    rows = ws.sentences()
    threads = ws.threads()
    idx, labels = _svm_training_set(ws, rows, threads)
    backend, cache = ws.embedder()
    X = embed_batch([s.text for _, _, s in rows], backend, cache)
    model = train_svm(X[idx], labels, ws.cfg.svm.lam, ws.cfg.svm.epochs, ws.cfg.svm.seed)
    save_model(model, ws.path(SVM_DIR), ws.fingerprint)


def _zero_shot(ws: Workspace, backend, cache) -> Callable[[str], np.ndarray]:
    zcfg = ws.cfg.zero_shot
    descriptions = load_descriptions(ws.cfg.paths.hypotheses)
    similarity = SimilarityZeroShot(backend, zcfg.temperature, cache)
    if zcfg.kind == "external-model":
        if not zcfg.endpoint:
            raise ConfigError("[zero_shot] external-model needs an endpoint")
        primary = HttpNLIZeroShot(zcfg.endpoint, zcfg.model_id)
        fallback = similarity if zcfg.fallback else None
    else:
        primary, fallback = similarity, None
    return lambda text: zsl_classify(text, descriptions, primary, fallback)


def stage_classify(ws: Workspace) -> None:
    rows = ws.sentences()
    matrix = load_label_matrix(ws.need(LABEL_MATRIX))
    lm_out = label_model_predict(load_label_model(ws.need(LABEL_MODEL)), matrix)
    if len(lm_out) != len(rows):
        raise DataError("label matrix rows do not match sentences; rerun apply-rules")
    cascade = ws.cfg.cascade
    backend, cache = ws.embedder()
    svm_out = [None] * len(rows)
    if cascade.svm_enabled:
        model = load_model(ws.need(SVM_DIR))
        X = embed_batch([s.text for _, _, s in rows], backend, cache)
        svm_out = svm_predict_batch(model, X)
    zsl = _zero_shot(ws, backend, cache) if cascade.zsl_enabled else None

    by_thread: dict[str, list] = {}
    for (tid, _, s), lm, sv in zip(rows, lm_out, svm_out):
        by_thread.setdefault(tid, []).append(classify_sentence(s, lm, sv, zsl, cascade))
    records = []
    for tid, labeled in by_thread.items():
        for span in merge_spans(labeled):
            records.append({"thread_id": tid, "answer_id": span.answer_id, "start": span.start, "end": span.end,
                            "label": span.label.value, "provenance": span.provenance.value,
                            "confidence": span.confidence})
    ws.path(PREDICTIONS).write_text(_json(records), encoding="utf-8")
    counts = {p.value: sum(r["provenance"] == p.value for r in records) for p in Provenance}
    logger.info("classify: %d spans %s", len(records), counts)


def load_predictions(path: str | Path) -> dict[str, list[PerspectiveSpan]]:
    """Predictions file -> spans per thread id."""
    try:
        records = json.loads(Path(path).read_text(encoding="utf-8"))
        out: dict[str, list[PerspectiveSpan]] = {}
        for r in records:
            prov = r.get("provenance")
            out.setdefault(r["thread_id"], []).append(PerspectiveSpan(
                r["answer_id"], int(r["start"]), int(r["end"]), Perspective(r["label"]),
                Provenance(prov) if prov else None, r.get("confidence"),
            ))
    except (KeyError, TypeError, ValueError) as e:
        raise DataError(f"bad predictions file {path}: {e}") from e
    return out


def stage_summarize(ws: Workspace) -> None:
    threads = ws.threads()
    spans = load_predictions(ws.need(PREDICTIONS))
    extractive = ws.cfg.extractive.build()
    abstractive = ws.cfg.abstractive.build() if ws.cfg.summarize.stage2_enabled else None
    audit = AuditLog()
    sets = summarize_corpus(threads, spans, extractive, abstractive, ws.cfg.summarize, audit)
    ws.path(SUMMARIES).write_text(dump_summaries(sets), encoding="utf-8")
    audit.write_jsonl(ws.path(AUDIT))


def stage_evaluate(ws: Workspace) -> None:
    threads = ws.threads()
    preds = load_predictions(ws.need(PREDICTIONS))
    sets = load_summaries(ws.need(SUMMARIES))
    finals = {s.thread_id: {label: v.final for label, v in s.summaries.items()} for s in sets}
    backend, cache = ws.embedder()
    abbreviations = data_mod.load_abbreviations(ws.cfg.paths.abbreviations)
    report = evaluate_run(threads, preds, finals, backend, cache, abbreviations, ws.cfg.metric_weights)
    ws.path(REPORT).write_text(report.to_json(ws.fingerprint), encoding="utf-8")
    ws.path(REPORT_CSV).write_text(report.to_csv(), encoding="utf-8")
    logger.info("evaluate: avg_score %.4f", report.avg_score)


@dataclass(frozen=True)
class Stage:
    name: str
    run: Callable[[Workspace], None]
    inputs: Callable[[Workspace], list[Path]]
    outputs: Callable[[Workspace], list[Path]]


def _optional(*paths):
    return [p for p in paths if p is not None]


STAGE_TABLE = {
    s.name: s for s in (
        Stage("ingest", stage_ingest,
              lambda ws: _optional(ws.cfg.paths.corpus, ws.cfg.paths.abbreviations),
              lambda ws: [ws.path(CORPUS), ws.path(SENTENCES)]),
        Stage("apply-rules", stage_apply_rules,
              lambda ws: _optional(ws.path(SENTENCES), ws.cfg.paths.rules),
              lambda ws: [ws.path(LABEL_MATRIX)]),
        Stage("train-label-model", stage_train_label_model,
              lambda ws: [ws.path(LABEL_MATRIX)],
              lambda ws: [ws.path(LABEL_MODEL)]),
        Stage("train-svm", stage_train_svm,
              lambda ws: [ws.path(SENTENCES), ws.path(CORPUS), ws.path(LABEL_MODEL)],
              lambda ws: [ws.path(SVM_DIR) / "manifest.json"] if ws.cfg.cascade.svm_enabled else []),
        Stage("classify", stage_classify,
              lambda ws: _optional(ws.path(LABEL_MATRIX), ws.path(LABEL_MODEL),
                                   ws.path(SVM_DIR) / "manifest.json" if ws.cfg.cascade.svm_enabled else None,
                                   ws.cfg.paths.hypotheses),
              lambda ws: [ws.path(PREDICTIONS)]),
        Stage("summarize", stage_summarize,
              lambda ws: [ws.path(CORPUS), ws.path(PREDICTIONS)],
              lambda ws: [ws.path(SUMMARIES), ws.path(AUDIT)]),
        Stage("evaluate", stage_evaluate,
              lambda ws: [ws.path(CORPUS), ws.path(PREDICTIONS), ws.path(SUMMARIES)],
              lambda ws: [ws.path(REPORT), ws.path(REPORT_CSV)]),
    )
}


def _load_state(ws: Workspace) -> dict:
    p = ws.path(STATE)
    if not p.exists():
        return {}
    try:
        return json.loads(p.read_text(encoding="utf-8"))
    except ValueError:
        return {}


def _up_to_date(ws: Workspace, stage: Stage, state: dict) -> bool:
    if state.get(stage.name) != ws.fingerprint:
        return False
    outputs = stage.outputs(ws)
    if not all(p.exists() for p in outputs):
        return False
    inputs = [p for p in stage.inputs(ws) if p.exists()]
    if not outputs or not inputs:
        return True
    return min(p.stat().st_mtime_ns for p in outputs) >= max(p.stat().st_mtime_ns for p in inputs)


def run_stage(ws: Workspace, name: str) -> None:
    stage = STAGE_TABLE[name]
    try:
        stage.run(ws)
    except PipelineError as e:
        raise StageError(name, e) from e
    except Exception as e:  # noqa: BLE001 - reported as an internal error with the stage name
        raise StageError(name, e) from e
    state = _load_state(ws)
    state[name] = ws.fingerprint
    ws.path(STATE).write_text(_json(state), encoding="utf-8")


def _locked(ws: Workspace) -> FileLock:
    lock = FileLock(str(ws.path(".lock")), timeout=0)
    try:
        lock.acquire()
    except Timeout:
        raise PipelineError(f"output directory {ws.root} is in use by another run") from None
    return lock


def run_single(cfg: PipelineConfig, name: str) -> None:
    """Run one stage unconditionally."""
    if name not in STAGE_TABLE:
        raise ConfigError(f"unknown stage {name!r}")
    ws = Workspace(cfg)
    lock = _locked(ws)
    try:
        run_stage(ws, name)
    finally:
        lock.release()


def run_pipeline(cfg: PipelineConfig, force: bool = False) -> dict[str, str]:
    """Run every stage in order; returns {stage: "ran" | "skipped"}."""
    ws = Workspace(cfg)
    lock = _locked(ws)
    status = {}
    try:
        rerun = force
        for name in STAGES:
            stage = STAGE_TABLE[name]
            if not rerun and _up_to_date(ws, stage, _load_state(ws)):
                status[name] = "skipped"
                logger.info("%s: up to date", name)
                continue
            run_stage(ws, name)
            status[name] = "ran"
            # later stages consume what this one rewrote
            rerun = True
    finally:
        lock.release()
    return status
