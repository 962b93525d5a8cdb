"""Regex labeling rules, label matrices, and an EM-trained label model.

The label model treats rules as conditionally independent voters given the
true label y ~ Categorical(prior). Rule j fires with probability
`propensity[j]`; a firing rule emits y with probability `accuracy[j]`
and otherwise one of the four remaining labels uniformly at random.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import re
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .data import Sentence
from .errors import DataError, SchemaError
from .labels import ABSTAIN, LABELS, N_LABELS, Perspective

logger = logging.getLogger(__name__)

EPS = 1e-4
MIN_ACCURACY = 1.0 / N_LABELS + EPS
MAX_ACCURACY = 1.0 - EPS
TOLERANCE = 1e-6
# relative size of the summation noise in the log-likelihood, about 450 ulps
ROUNDING = 1e-13

RowKey = tuple[str, str, int]


@dataclass(frozen=True)
class LabelingRule:
    name: str
    pattern: str
    label: Perspective

    @cached_property
    def regex(self) -> re.Pattern:
        return re.compile(self.pattern, re.IGNORECASE)

    def __call__(self, text: str) -> int:
        return self.label.code if self.regex.search(text) else ABSTAIN


def parse_rules(items) -> list[LabelingRule]:
    if not isinstance(items, list):
        raise SchemaError("rule file must contain a JSON array")
    rules = []
    names = set()
    for k, obj in enumerate(items):
        if not isinstance(obj, dict) or not all(isinstance(obj.get(f), str) for f in ("name", "pattern", "label")):
            raise SchemaError(f"rule #{k}: needs string fields 'name', 'pattern', 'label'")
        name = obj["name"]
        if name in names:
            raise SchemaError(f"rule {name!r}: duplicate name")
        names.add(name)
        try:
            label = Perspective(obj["label"])
        except ValueError:
            raise SchemaError(f"rule {name!r}: unknown label {obj['label']!r}") from None
        rule = LabelingRule(name, obj["pattern"], label)
        try:
            rule.regex
        except re.error as e:
            raise SchemaError(f"rule {name!r}: pattern does not compile: {e}") from e
        rules.append(rule)
    return rules


def load_rules(path: str | Path | None = None) -> list[LabelingRule]:
    """Load a rule file; with no path, the shipped default rule set."""
    if path is None:
        raw = resources.files(__package__).joinpath("resources/default_rules.json").read_text("utf-8")
    else:
        raw = Path(path).read_text(encoding="utf-8")
    return parse_rules(json.loads(raw))


# ---------------------------------------------------------------------------
# label matrix


@dataclass
class LabelMatrix:
    """Votes of `m` rules on `n` sentences; ABSTAIN is -1, labels are 0..4."""

    cells: np.ndarray
    rule_names: tuple[str, ...]
    row_keys: list[RowKey] = field(default_factory=list)

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int64)
        if self.cells.ndim != 2:
            raise ValueError("label matrix must be 2-dimensional")
        n, m = self.cells.shape
        if len(self.rule_names) != m:
            raise ValueError(f"{len(self.rule_names)} rule names for {m} columns")
        if not self.row_keys:
            self.row_keys = [("", "", i) for i in range(n)]
        if len(self.row_keys) != n:
            raise ValueError(f"{len(self.row_keys)} row keys for {n} rows")
        if self.cells.size and (self.cells.min() < ABSTAIN or self.cells.max() >= N_LABELS):
            raise ValueError("label matrix cells must be in -1..4")

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def coverage(self) -> np.ndarray:
        """Fraction of rows each rule votes on."""
        return (self.cells != ABSTAIN).mean(axis=0)


def apply_rules(
    rules: Sequence[LabelingRule],
    sentences: Sequence[Sentence],
    row_keys: Sequence[RowKey] | None = None,
) -> LabelMatrix:
    if row_keys is None:
        counters: dict[str, int] = {}
        row_keys = []
        for s in sentences:
            i = counters.get(s.answer_id, 0)
            counters[s.answer_id] = i + 1
            row_keys.append(("", s.answer_id, i))
    cells = np.full((len(sentences), len(rules)), ABSTAIN, dtype=np.int64)
    for j, rule in enumerate(rules):
        for i, s in enumerate(sentences):
            cells[i, j] = rule(s.text)
    return LabelMatrix(cells, tuple(r.name for r in rules), list(row_keys))


def save_label_matrix(matrix: LabelMatrix, path: str | Path, fingerprint: str | None = None) -> None:
    buf = io.StringIO()
    if fingerprint is not None:
        buf.write(f"# config_fingerprint={fingerprint}\n")
    writer = csv.writer(buf, delimiter="\t", lineterminator="\n")
    writer.writerow(["thread_id", "answer_id", "sentence_index", *matrix.rule_names])
    for key, row in zip(matrix.row_keys, matrix.cells):
        writer.writerow([key[0], key[1], key[2], *(int(c) for c in row)])
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def load_label_matrix(path: str | Path) -> LabelMatrix:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    lines = [ln for ln in lines if not ln.startswith("#")]
    reader = csv.reader(lines, delimiter="\t")
    try:
        header = next(reader)
    except StopIteration:
        raise SchemaError(f"{path}: empty label matrix file") from None
    if header[:3] != ["thread_id", "answer_id", "sentence_index"]:
        raise SchemaError(f"{path}: bad label matrix header")
    keys, rows = [], []
    for line_no, rec in enumerate(reader, start=2):
        if len(rec) != len(header):
            raise SchemaError(f"{path}: row {line_no} has {len(rec)} fields, expected {len(header)}")
        keys.append((rec[0], rec[1], int(rec[2])))
        rows.append([int(c) for c in rec[3:]])
    cells = np.array(rows, dtype=np.int64).reshape(len(rows), len(header) - 3)
    return LabelMatrix(cells, tuple(header[3:]), keys)


def majority_vote(matrix: LabelMatrix) -> np.ndarray:
    """Most frequent non-abstain vote per row; ABSTAIN for silent rows."""
    out = np.full(matrix.shape[0], ABSTAIN, dtype=np.int64)
    for i, row in enumerate(matrix.cells):
        votes = row[row != ABSTAIN]
        if votes.size:
            out[i] = int(np.argmax(np.bincount(votes, minlength=N_LABELS)))
    return out


# ---------------------------------------------------------------------------
# label model


@dataclass
class LabelModelParams:
    class_prior: np.ndarray
    accuracy: np.ndarray
    propensity: np.ndarray
    epochs_run: int = 0
    log_likelihood: list[float] = field(default_factory=list)

    @property
    def n_rules(self) -> int:
        return len(self.accuracy)

    def to_dict(self) -> dict:
        return {
            "class_prior": [float(x) for x in self.class_prior],
            "accuracy": [float(x) for x in self.accuracy],
            "propensity": [float(x) for x in self.propensity],
            "epochs_run": self.epochs_run,
            "log_likelihood": [float(x) for x in self.log_likelihood],
            "label_order": [label.value for label in LABELS],
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "LabelModelParams":
        try:
            return cls(
                class_prior=np.array(obj["class_prior"], dtype=float),
                accuracy=np.array(obj["accuracy"], dtype=float),
                propensity=np.array(obj["propensity"], dtype=float),
                epochs_run=int(obj.get("epochs_run", 0)),
                log_likelihood=list(obj.get("log_likelihood", [])),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise SchemaError(f"bad label model file: {e}") from e


@dataclass(frozen=True)
class ProbabilisticLabel:
    posterior: np.ndarray
    hard_label: int

    @property
    def label(self) -> Perspective | None:
        return None if self.hard_label == ABSTAIN else LABELS[self.hard_label]


def _vote_terms(cells: np.ndarray, accuracy: np.ndarray):
    fires = cells != ABSTAIN
    onehot = (cells[:, :, None] == np.arange(N_LABELS)).astype(float)
    log_right = np.log(accuracy)
    log_wrong = np.log((1.0 - accuracy) / (N_LABELS - 1))
    # per-row log p(votes | y=k), excluding the label-independent firing term
    base = fires.astype(float) @ log_wrong
    return base[:, None] + onehot.transpose(0, 2, 1) @ (log_right - log_wrong)


def _firing_term(cells: np.ndarray, propensity: np.ndarray) -> np.ndarray:
    fires = cells != ABSTAIN
    log_fire = np.log(propensity)
    with np.errstate(divide="ignore"):
        log_silent = np.log1p(-propensity)
    return np.where(fires, log_fire, log_silent).sum(axis=1)


def _e_step(cells: np.ndarray, params: LabelModelParams) -> tuple[np.ndarray, float]:
    with np.errstate(divide="ignore"):
        log_prior = np.log(params.class_prior)
    joint = log_prior[None, :] + _vote_terms(cells, params.accuracy)
    norm = logsumexp(joint, axis=1)
    posterior = np.exp(joint - norm[:, None])
    ll = float(norm.sum() + _firing_term(cells, params.propensity).sum())
    return posterior, ll


def _rounding_dip(before: float, after: float) -> bool:
    """True when `after` is below `before` by no more than summation rounding."""
    return before - ROUNDING * abs(before) <= after < before


def train_label_model(matrix: LabelMatrix, epochs: int = 500, seed: int = 0,
                      tol: float = TOLERANCE) -> LabelModelParams:
    """Fit prior, accuracies and propensities by expectation-maximization.

    Stops after `epochs` iterations or once no parameter moves by more than
    `tol` (pass 0 to always run every epoch). The seed only jitters the
    initial accuracies (by at most 1e-3).

    Near the optimum the floating-point update can cycle between neighbouring
    parameter values whose log-likelihoods differ only by rounding. A step
    that lowers the log-likelihood by no more than that resolution is treated
    as having reached the fixed point, and the previous parameters are kept.
    Larger decreases are recorded as they are.
    """
    cells = matrix.cells
    n, m = cells.shape
    fires = cells != ABSTAIN
    n_fires = fires.sum(axis=0)
    if n == 0 or not fires.any():
        raise DataError("no signal: every rule abstains on every row")
    if epochs < 1:
        raise ValueError("epochs must be >= 1")

    rng = np.random.default_rng(seed)
    params = LabelModelParams(
        class_prior=np.full(N_LABELS, 1.0 / N_LABELS),
        accuracy=np.clip(0.7 + rng.uniform(-1e-3, 1e-3, size=m), MIN_ACCURACY, MAX_ACCURACY),
        propensity=np.clip(n_fires / n, EPS, 1.0),
    )
    onehot = cells[:, :, None] == np.arange(N_LABELS)

    previous = None
    for epoch in range(1, epochs + 1):
        posterior, ll = _e_step(cells, params)
        if previous is not None and _rounding_dip(previous[2], ll):
            params.class_prior, params.accuracy, ll, posterior = previous
        previous = (params.class_prior, params.accuracy, ll, posterior)
        params.log_likelihood.append(ll)

        prior = posterior.mean(axis=0)
        prior /= prior.sum()
        # posterior mass on the label each firing rule voted for
        agree = (onehot * posterior[:, None, :]).sum(axis=2)
        accuracy = params.accuracy.copy()
        active = n_fires > 0
        accuracy[active] = agree.sum(axis=0)[active] / n_fires[active]
        accuracy = np.clip(accuracy, MIN_ACCURACY, MAX_ACCURACY)

        delta = max(np.abs(prior - params.class_prior).max(), np.abs(accuracy - params.accuracy).max())
        params.class_prior, params.accuracy = prior, accuracy
        params.epochs_run = epoch
        if delta < tol:
            break

    posterior, ll = _e_step(cells, params)
    if _rounding_dip(previous[2], ll):
        params.class_prior, params.accuracy, ll, _ = previous
    params.log_likelihood.append(ll)
    logger.info("label model: %d epochs, log-likelihood %.4f", params.epochs_run, params.log_likelihood[-1])
    return params


def predict_proba(params: LabelModelParams, matrix: LabelMatrix) -> np.ndarray:
    if matrix.shape[1] != params.n_rules:
        raise ValueError(f"label model has {params.n_rules} rules, matrix has {matrix.shape[1]} columns")
    return _e_step(matrix.cells, params)[0]


def label_model_predict(params: LabelModelParams, matrix: LabelMatrix) -> list[ProbabilisticLabel]:
    posterior = predict_proba(params, matrix)
    silent = (matrix.cells == ABSTAIN).all(axis=1)
    return [
        ProbabilisticLabel(p, ABSTAIN if s else int(np.argmax(p)))
        for p, s in zip(posterior, silent)
    ]


def save_label_model(params: LabelModelParams, path: str | Path, fingerprint: str | None = None) -> None:
    obj = params.to_dict()
    if fingerprint is not None:
        obj["config_fingerprint"] = fingerprint
    Path(path).write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


def load_label_model(path: str | Path) -> LabelModelParams:
    return LabelModelParams.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))
