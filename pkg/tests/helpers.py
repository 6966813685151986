"""Shared data generators for the test suite."""
from __future__ import annotations

import numpy as np

from defer_causal.data import EvaluationDataset

JUMP = 0.3


def smooth_rd_sample(n: int, seed: int, jump: float = JUMP) -> tuple[np.ndarray, np.ndarray]:
    """Running variable U(-1, 1), cutoff 0, binary outcome with a known jump at 0."""
    rng = np.random.default_rng(seed)
    k = rng.uniform(-1.0, 1.0, n)
    p = 0.4 + 0.15 * k + 0.1 * k * k + jump * (k >= 0)
    t = (rng.random(n) < p).astype(float)
    return k, t


def random_s1_dataset(rng: np.random.Generator, n: int, n_labels: int = 3,
                      min_deferred: int = 0) -> EvaluationDataset:
    """Scenario-1 dataset with random predictions; label codes 0..n_labels-1."""
    labels = tuple(str(i) for i in range(n_labels))
    scores = rng.normal(size=n)
    deferred = rng.random(n) < rng.uniform(0.05, 0.95)
    if deferred.sum() < min_deferred:
        deferred[rng.choice(n, min_deferred, replace=False)] = True
    y = rng.integers(0, n_labels, n)
    m = min(n, n_labels)
    y[:m] = np.arange(m)
    model = np.where(rng.random(n) < 0.6, y, rng.integers(0, n_labels, n))
    human = np.where(rng.random(n) < 0.7, y, rng.integers(0, n_labels, n))
    groups = {"g": rng.choice(["a", "b", "c"], n).astype(object)}
    return EvaluationDataset(labels, scores, deferred, model, human, y, groups)
