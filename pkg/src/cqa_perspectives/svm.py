"""One-vs-rest linear SVM trained with Pegasos stochastic subgradient steps.

The bias is learned as the weight of a constant input feature, so it is
regularized together with the other weights.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
import numpy as np

from .errors import DataError, SchemaError
from .labels import LABELS, N_LABELS, Perspective

logger = logging.getLogger(__name__)

DEFAULT_LAMBDA = 1e-4
DEFAULT_EPOCHS = 20
DEFAULT_SEED = 42


@dataclass
class LinearModel:
    weights: np.ndarray
    biases: np.ndarray
    hyperparams: dict = field(default_factory=dict)
    trained_on: str = ""
    objective: list[float] = field(default_factory=list)

    @property
    def dimension(self) -> int:
        return self.weights.shape[1]


def _codes(y) -> np.ndarray:
    return np.array([Perspective.parse(v).code for v in y], dtype=np.int64)


def fingerprint_data(X: np.ndarray, codes: np.ndarray) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(X, dtype="<f8").tobytes())
    h.update(np.ascontiguousarray(codes, dtype="<i8").tobytes())
    return h.hexdigest()


def svm_objective(weights: np.ndarray, biases: np.ndarray, X: np.ndarray, codes: np.ndarray, lam: float) -> float:
    """Sum over labels of  lam/2 * ||[w, b]||^2 + mean hinge loss."""
    signs = np.where(codes[:, None] == np.arange(N_LABELS), 1.0, -1.0)
    scores = X @ weights.T + biases
    hinge = np.maximum(0.0, 1.0 - signs * scores).mean(axis=0)
    reg = 0.5 * lam * ((weights ** 2).sum(axis=1) + biases ** 2)
    return float((reg + hinge).sum())


def train_svm(X, y, lam: float = DEFAULT_LAMBDA, epochs: int = DEFAULT_EPOCHS,
              seed: int = DEFAULT_SEED) -> LinearModel:
    """Train five binary hinge-loss classifiers (label vs rest) on `X`.

    Step size at update t is 1 / (lam * t); each epoch visits every row once
    in a seeded random order. The returned weights are the average of the
    iterates over the last half of the epochs (suffix averaging), and
    `objective` records that averaged model's objective after every epoch.
    Results are bit-reproducible for a fixed seed.
    """
    X = np.asarray(X, dtype=float)
    codes = _codes(y)
    if X.ndim != 2:
        raise ValueError("X must be a 2-d array")
    if len(X) != len(codes):
        raise DataError(f"{len(X)} embeddings but {len(codes)} labels")
    if len(X) < 2 or len(np.unique(codes)) < 2:
        raise DataError("SVM training needs at least two rows and two distinct labels")
    if lam <= 0 or epochs < 1:
        raise ValueError("need lam > 0 and epochs >= 1")

    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    signs = np.where(codes[:, None] == np.arange(N_LABELS), 1.0, -1.0)
    W = np.zeros((N_LABELS, d + 1))
    rng = np.random.default_rng(seed)
    epoch_sums = []
    history = []
    t = 0
    for epoch in range(1, epochs + 1):
        total = np.zeros_like(W)
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * t)
            xi, si = Xa[i], signs[i]
            active = si * (W @ xi) < 1.0
            W *= 1.0 - eta * lam
            W += (eta * si * active)[:, None] * xi[None, :]
            total += W
        epoch_sums.append(total)
        # the reported model averages the iterates of the latter half of the epochs run so far
        first = epoch // 2
        avg = sum(epoch_sums[first:]) / (n * (epoch - first))
        history.append(svm_objective(avg[:, :d], avg[:, d], X, codes, lam))

    model = LinearModel(
        weights=avg[:, :d].astype(np.float32),
        biases=avg[:, d].astype(np.float32),
        hyperparams={"lambda": lam, "epochs": epochs, "seed": seed},
        trained_on=fingerprint_data(X, codes),
        objective=history,
    )
    logger.info("svm: %d rows, d=%d, final objective %.4f", n, d, history[-1])
    return model


def svm_decision(model: LinearModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.dimension:
        raise ValueError(f"embedding dimension {x.shape[-1]} != model dimension {model.dimension}")
    return x @ model.weights.astype(float).T + model.biases.astype(float)


def margin_of(scores) -> tuple[int, float]:
    """Top label code (ties to the lowest code) and top-minus-second score."""
    scores = np.asarray(scores, dtype=float)
    top = int(np.argmax(scores))
    ordered = np.sort(scores)
    return top, float(ordered[-1] - ordered[-2])


def svm_predict(model: LinearModel, x) -> tuple[Perspective, float]:
    top, margin = margin_of(svm_decision(model, x))
    return LABELS[top], margin


def svm_predict_batch(model: LinearModel, X) -> list[tuple[Perspective, float]]:
    scores = svm_decision(model, np.atleast_2d(X))
    return [(LABELS[c], m) for c, m in map(margin_of, scores)]


def accuracy(model: LinearModel, X, y) -> float:
    pred = np.argmax(svm_decision(model, X), axis=1)
    return float((pred == _codes(y)).mean())


def save_model(model: LinearModel, path: str | Path, fingerprint: str | None = None) -> None:
    """Write a model directory: manifest.json, weights.bin, biases.bin (little-endian float32)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    manifest = {
        "dimension": model.dimension,
        "hyperparams": model.hyperparams,
        "label_order": [label.value for label in LABELS],
        "trained_on": model.trained_on,
        "objective": model.objective,
    }
    if fingerprint is not None:
        manifest["config_fingerprint"] = fingerprint
    (path / "weights.bin").write_bytes(np.ascontiguousarray(model.weights, dtype="<f4").tobytes())
    (path / "biases.bin").write_bytes(np.ascontiguousarray(model.biases, dtype="<f4").tobytes())
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> LinearModel:
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
        d = int(manifest["dimension"])
        if manifest["label_order"] != [label.value for label in LABELS]:
            raise SchemaError(f"{path}: unexpected label order {manifest['label_order']}")
        weights = np.frombuffer((path / "weights.bin").read_bytes(), dtype="<f4").reshape(N_LABELS, d)
        biases = np.frombuffer((path / "biases.bin").read_bytes(), dtype="<f4").reshape(N_LABELS)
    except (KeyError, ValueError) as e:
        raise SchemaError(f"bad SVM model directory {path}: {e}") from e
    return LinearModel(weights.astype(np.float32), biases.astype(np.float32),
                       manifest.get("hyperparams", {}), manifest.get("trained_on", ""),
                       manifest.get("objective", []))
