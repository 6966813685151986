"""Scenario-1 estimators: individual effects, ATD, CATD, accuracy gaps."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any

import numpy as np

from .data import EvaluationDataset, Scenario, correctness
from .errors import DataError, InsufficientDataError
from .stats import wald_inference


@dataclass(frozen=True)
class EffectEstimate:
    point: float
    se: float
    ci_low: float
    ci_high: float
    p_value: float
    n_used: int
    method: str

    @classmethod
    def from_point_se(cls, point: float, se: float, n_used: int, method: str,
                      level: float = 0.95) -> "EffectEstimate":
        lo, hi, p = wald_inference(point, se, level)
        return cls(point, se, lo, hi, p, n_used, method)

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class Unavailable:
    """A CATD cell that cannot carry inference (fewer than two deferred records)."""

    n_used: int
    point: float | None = None
    reason: str = "fewer than 2 deferred records"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


def individual_effects(ds: EvaluationDataset) -> np.ndarray:
    """Per deferred record: human correctness minus model correctness, in record order."""
    ds.require(Scenario.S1)
    if ds.n_deferred == 0:
        raise InsufficientDataError("no deferred records")
    _, t0, t1 = correctness(ds)
    return (t1 - t0)[ds.deferred]


def _mean_effect(effects: np.ndarray, level: float, method: str) -> EffectEstimate:
    n1 = effects.size
    if n1 < 2:
        raise InsufficientDataError(f"need at least 2 deferred records, got {n1}")
    # integer sum is exact, so this equals a plain loop-and-divide
    point = int(effects.sum()) / n1
    se = float(np.std(effects, ddof=1)) / math.sqrt(n1)
    return EffectEstimate.from_point_se(point, se, n1, method, level)


def estimate_atd(ds: EvaluationDataset, level: float = 0.95) -> EffectEstimate:
    """Average effect of deferring on the deferred (paired difference in means).

    The standard error is the sample standard deviation of the paired
    per-record effects over ``sqrt(n1)``.
    """
    return _mean_effect(individual_effects(ds), level, "atd")


def estimate_catd(ds: EvaluationDataset, group_attr: str,
                  level: float = 0.95) -> dict[str, EffectEstimate | Unavailable]:
    """ATD restricted to each category of ``group_attr``.

    Every category present in the dataset gets an entry; those with fewer
    than two deferred records come back as :class:`Unavailable`.
    """
    if group_attr not in ds.groups:
        raise DataError(f"unknown group attribute {group_attr!r}; have {sorted(ds.groups)}")
    ds.require(Scenario.S1)
    _, t0, t1 = correctness(ds)
    cats = ds.groups[group_attr]
    out: dict[str, EffectEstimate | Unavailable] = {}
    for cat in sorted(set(cats.tolist())):
        mask = ds.deferred & (cats == cat)
        eff = (t1 - t0)[mask]
        if eff.size < 2:
            point = float(eff[0]) if eff.size == 1 else None
            out[cat] = Unavailable(int(eff.size), point)
        else:
            out[cat] = _mean_effect(eff, level, f"catd[{group_attr}={cat}]")
    return out


def system_accuracy(ds: EvaluationDataset) -> float:
    if len(ds) == 0:
        raise InsufficientDataError("accuracy of an empty dataset")
    t, _, _ = correctness(ds)
    return float(t.mean())


def model_accuracy(ds: EvaluationDataset) -> float:
    ds.require(Scenario.S1)
    _, t0, _ = correctness(ds)
    return float(t0.mean())


def tau_delta(ds: EvaluationDataset) -> float:
    """Accuracy of the human-AI team minus accuracy of the model alone."""
    ds.require(Scenario.S1)
    return system_accuracy(ds) - model_accuracy(ds)


def reweight_tau_delta(tau_d: float, n: int, n1: int) -> float:
    """Horvitz-Thompson style rescaling of the accuracy gap into an ATD estimate."""
    if n1 < 1:
        raise InsufficientDataError("cannot reweight with zero deferred records")
    if n < n1:
        raise ValueError(f"n ({n}) must be at least n1 ({n1})")
    return (n / n1) * tau_d
