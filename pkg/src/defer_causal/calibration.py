"""Coverage calibration of the reject-score cutoff and the threshold deferral policy."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .data import MISSING, EvaluationDataset
from .errors import PolicyError

NEVER_DEFER = math.inf


@dataclass(frozen=True)
class Cutoff:
    value: float
    target_coverage: float
    achieved_coverage: float

    @property
    def defers_nothing(self) -> bool:
        return math.isinf(self.value) and self.value > 0


def _check_scores(scores: Sequence[float]) -> np.ndarray:
    arr = np.asarray(scores, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("need a non-empty 1-d list of scores")
    if not np.isfinite(arr).all():
        raise ValueError("scores must be finite")
    return arr


def _order_statistic(sorted_scores: np.ndarray, q: float) -> float:
    # lower order statistic s[floor(q*n)]; the epsilon keeps 0.29*100 from landing on 28
    idx = min(math.floor(q * sorted_scores.size + 1e-9), sorted_scores.size - 1)
    return float(sorted_scores[idx])


def _cutoff_from_sorted(sorted_scores: np.ndarray, c: float) -> Cutoff:
    if not 0.0 <= c <= 1.0:
        raise ValueError(f"coverage must lie in [0, 1], got {c}")
    if c == 1.0:
        return Cutoff(NEVER_DEFER, c, 1.0)
    value = _order_statistic(sorted_scores, c)
    achieved = np.searchsorted(sorted_scores, value, side="left") / sorted_scores.size
    return Cutoff(value, c, float(achieved))


def estimate_cutoff(val_scores: Sequence[float], c: float) -> Cutoff:
    """Cutoff for target coverage ``c`` from validation reject scores.

    The cutoff is the lower order statistic ``s[floor(c * n)]`` of the sorted
    scores, so roughly a fraction ``c`` of the validation scores fall strictly
    below it and are kept by the model. ``c == 1`` returns ``+inf`` (defer
    nothing). Achieved coverage is the validation fraction strictly below the
    cutoff; ties at the cutoff can push it below ``c``.
    """
    return _cutoff_from_sorted(np.sort(_check_scores(val_scores)), c)


def coverage_grid(val_scores: Sequence[float], cs: Sequence[float]) -> list[Cutoff]:
    if len(cs) == 0:
        return []
    s = np.sort(_check_scores(val_scores))
    return [_cutoff_from_sorted(s, float(c)) for c in cs]


def achieved_coverage(scores: Sequence[float], cutoff: Cutoff | float) -> float:
    value = cutoff.value if isinstance(cutoff, Cutoff) else float(cutoff)
    arr = np.asarray(scores, dtype=float)
    return float(np.mean(arr < value)) if arr.size else math.nan


def apply_policy(ds: EvaluationDataset, cutoff: Cutoff | float) -> EvaluationDataset:
    """Re-flag every record as deferred iff its reject score is >= the cutoff."""
    value = cutoff.value if isinstance(cutoff, Cutoff) else float(cutoff)
    flags = ds.scores >= value
    lacking_human = flags & (ds.human_code == MISSING)
    if lacking_human.any():
        raise PolicyError(
            f"{int(lacking_human.sum())} records would be deferred without a human prediction "
            f"(first at row {int(np.argmax(lacking_human))})")
    lacking_model = ~flags & (ds.model_code == MISSING)
    if lacking_model.any():
        raise PolicyError(
            f"{int(lacking_model.sum())} records would be kept without a model prediction "
            f"(first at row {int(np.argmax(lacking_model))})")
    return ds.replace(deferred=flags)
