"""Falsification checks for the continuity assumption behind the RD estimate.

* placebo cutoffs inside each true side, where no treatment change happens;
* placebo outcomes drawn independently of everything else;
* a count-balance test for bunching of reject scores at the cutoff.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import Any, Sequence

import numpy as np

from .calibration import estimate_cutoff
from .data import EvaluationDataset, correctness
from .errors import InsufficientDataError
from .rd import RdEstimate, rd_from_arrays
from .stats import binomial_test_half

PLACEBO_LOW_QUANTILE = 0.75
PLACEBO_HIGH_QUANTILE = 0.25
MIN_PER_SIDE = 4
HISTOGRAM_BINS = 10


@dataclass(frozen=True)
class PlaceboCutoffs:
    kappa_low: float
    kappa_high: float


@dataclass(frozen=True)
class DensityTestResult:
    cutoff: float
    window: float
    n_left: int
    n_right: int
    p_value: float
    histogram: tuple[tuple[float, float, int], ...]

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        d["histogram"] = [list(b) for b in self.histogram]
        return d


def placebo_cutoffs(scores: Sequence[float], cutoff: float) -> PlaceboCutoffs:
    """Upper quartile of the scores below the cutoff and lower quartile of those at or above it.

    Uses the same order-statistic rule as :func:`estimate_cutoff`.
    """
    s = np.asarray(scores, dtype=float)
    below, above = s[s < cutoff], s[s >= cutoff]
    if below.size < MIN_PER_SIDE or above.size < MIN_PER_SIDE:
        raise InsufficientDataError(
            f"placebo cutoffs need {MIN_PER_SIDE} scores per side; "
            f"got below={below.size}, above={above.size}")
    return PlaceboCutoffs(
        kappa_low=estimate_cutoff(below, PLACEBO_LOW_QUANTILE).value,
        kappa_high=estimate_cutoff(above, PLACEBO_HIGH_QUANTILE).value,
    )


def placebo_side_test(
    ds: EvaluationDataset,
    cutoff: float,
    side: str,
    level: float = 0.95,
    kernel: str = "triangular",
) -> tuple[float, RdEstimate]:
    """RD estimate at the placebo cutoff on one side of the true cutoff.

    Only records from that side enter (``"low"``: kept by the model,
    ``"high"``: deferred), so the true effect at the placebo point is zero by
    construction. Returns the placebo cutoff and the estimate.
    """
    if side not in ("low", "high"):
        raise ValueError(f"side must be 'low' or 'high', got {side!r}")
    t, _, _ = correctness(ds)
    k = ds.scores
    pc = placebo_cutoffs(k, cutoff)
    mask = k < cutoff if side == "low" else k >= cutoff
    at = pc.kappa_low if side == "low" else pc.kappa_high
    return at, rd_from_arrays(k[mask], t[mask], at, level=level, kernel=kernel)


def placebo_cutoff_test(
    ds: EvaluationDataset,
    cutoff: float,
    level: float = 0.95,
    kernel: str = "triangular",
) -> tuple[RdEstimate, RdEstimate]:
    """RD estimates at the low and high placebo cutoffs (see :func:`placebo_side_test`)."""
    _, low = placebo_side_test(ds, cutoff, "low", level, kernel)
    _, high = placebo_side_test(ds, cutoff, "high", level, kernel)
    return low, high


def placebo_outcome_test(
    ds: EvaluationDataset,
    cutoff: float,
    p: float = 0.5,
    seed: int = 0,
    level: float = 0.95,
    kernel: str = "triangular",
) -> RdEstimate:
    """RD estimate after replacing every outcome with an independent Bernoulli(p) draw.

    Draws come from NumPy's PCG64 generator seeded with ``seed``, which yields
    the same stream on every platform.
    """
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"placebo probability must lie in [0, 1], got {p}")
    rng = np.random.default_rng(seed)
    fake = (rng.random(len(ds)) < p).astype(float)
    return rd_from_arrays(ds.scores, fake, cutoff, level=level, kernel=kernel)


def density_test(
    scores: Sequence[float],
    cutoff: float,
    window: float | None = None,
    bins: int = HISTOGRAM_BINS,
) -> DensityTestResult:
    """Exact binomial test for balanced score counts in a symmetric window.

    Counts ``cutoff - window <= k < cutoff`` against ``cutoff <= k <= cutoff + window``;
    under a continuous density the right count is Binomial(total, 1/2) as the
    window shrinks. ``window`` defaults to 10% of the score range.
    """
    s = np.asarray(scores, dtype=float)
    if s.size == 0:
        raise InsufficientDataError("no scores")
    if window is None:
        window = 0.1 * float(s.max() - s.min())
    if not window > 0:
        raise ValueError(f"window must be positive, got {window}")
    lo, hi = cutoff - window, cutoff + window
    left = s[(s >= lo) & (s < cutoff)]
    right = s[(s >= cutoff) & (s <= hi)]
    n_left, n_right = int(left.size), int(right.size)
    if n_left + n_right == 0:
        raise InsufficientDataError(f"no scores within {window:g} of the cutoff")
    p_value = binomial_test_half(n_right, n_left + n_right)

    hist: list[tuple[float, float, int]] = []
    for side_vals, a, b, closed_right in ((left, lo, cutoff, False), (right, cutoff, hi, True)):
        edges = np.linspace(a, b, bins + 1)
        # half-open bins [e_i, e_{i+1}); the outermost right bin also keeps cutoff + window
        idx = np.searchsorted(edges, side_vals, side="right") - 1
        if closed_right:
            idx = np.minimum(idx, bins - 1)
        counts = np.bincount(idx, minlength=bins)[:bins]
        hist.extend((float(edges[i]), float(edges[i + 1]), int(counts[i])) for i in range(bins))
    return DensityTestResult(float(cutoff), float(window), n_left, n_right, p_value, tuple(hist))
