"""Synthetic data with known ground truth, for benchmarking the trainable stages."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .labels import ABSTAIN, N_LABELS
from .weak_supervision import LabelMatrix


@dataclass
class LabelBenchmark:
    matrix: LabelMatrix
    truth: np.ndarray
    accuracy: np.ndarray
    coverage: np.ndarray


def label_benchmark(
    n: int = 1000,
    n_rules: int = 8,
    accuracy_range: tuple[float, float] = (0.55, 0.9),
    coverage_range: tuple[float, float] = (0.3, 0.8),
    seed: int = 42,
    accuracy=None,
    coverage=None,
    prior=None,
) -> LabelBenchmark:
    """Sample a label matrix from the label model's own generative story.

    Explicit `accuracy`/`coverage` arrays override the sampled ranges.
    """
    rng = np.random.default_rng(seed)
    acc = np.asarray(accuracy, float) if accuracy is not None else rng.uniform(*accuracy_range, size=n_rules)
    cov = np.asarray(coverage, float) if coverage is not None else rng.uniform(*coverage_range, size=n_rules)
    m = len(acc)
    prior = np.full(N_LABELS, 1.0 / N_LABELS) if prior is None else np.asarray(prior, float)
    truth = rng.choice(N_LABELS, size=n, p=prior)

    fires = rng.random((n, m)) < cov
    correct = rng.random((n, m)) < acc
    # a wrong vote is uniform over the other four labels
    offset = rng.integers(1, N_LABELS, size=(n, m))
    wrong = (truth[:, None] + offset) % N_LABELS
    cells = np.where(correct, truth[:, None], wrong)
    cells = np.where(fires, cells, ABSTAIN)
    names = tuple(f"rule_{j}" for j in range(m))
    return LabelBenchmark(LabelMatrix(cells, names), truth, acc, cov)


def gaussian_blobs(
    n: int,
    n_classes: int = 2,
    dim: int = 16,
    separation: float = 0.5,
    radius: float | None = None,
    seed: int = 42,
) -> tuple[np.ndarray, np.ndarray]:
    """Truncated Gaussian clusters whose means are `separation` apart.

    Each point lies within `radius` (default 0.45 * separation) of its
    class mean, so any two classes are linearly separable by construction.
    """
    if n_classes > dim:
        raise ValueError("need dim >= n_classes")
    rng = np.random.default_rng(seed)
    radius = 0.45 * separation if radius is None else radius
    if n_classes == 2:
        u = rng.standard_normal(dim)
        u /= np.linalg.norm(u)
        means = np.stack([u, -u]) * separation / 2
    else:
        # orthogonal directions, pairwise distance = separation
        q, _ = np.linalg.qr(rng.standard_normal((dim, n_classes)))
        means = q.T * separation / np.sqrt(2)
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    noise = rng.standard_normal((n, dim)) * (radius / 2)
    norms = np.linalg.norm(noise, axis=1, keepdims=True)
    noise = np.where(norms > radius, noise * (radius / norms), noise)
    return means[y] + noise, y
