"""Numerical primitives: normal distribution, Wald inference, exact binomial test."""
from __future__ import annotations

import math
from statistics import NormalDist

_STD_NORMAL = NormalDist()


def normal_cdf(z: float) -> float:
    """Standard normal CDF.

    Uses the complementary error function so both tails keep full relative
    precision (``1 - cdf`` is never formed by subtraction).
    """
    return 0.5 * math.erfc(-z / math.sqrt(2.0))


def normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def normal_quantile(p: float) -> float:
    if not 0.0 < p < 1.0:
        raise ValueError(f"quantile probability must be in (0, 1), got {p}")
    return _STD_NORMAL.inv_cdf(p)


def wald_inference(point: float, se: float, level: float = 0.95) -> tuple[float, float, float]:
    """Two-sided normal-approximation interval and p-value for H0: effect = 0.

    Returns ``(ci_low, ci_high, p_value)``. A zero standard error gives a
    degenerate interval at ``point`` and a p-value of 1 when ``point == 0``
    and 0 otherwise.
    """
    if not se >= 0.0:
        raise ValueError(f"standard error must be non-negative, got {se}")
    if not 0.0 < level < 1.0:
        raise ValueError(f"confidence level must be in (0, 1), got {level}")
    if se == 0.0:
        return point, point, (1.0 if point == 0.0 else 0.0)
    z_crit = normal_quantile(1.0 - (1.0 - level) / 2.0)
    half = z_crit * se
    # 2 * (1 - Phi(|z|)) written via the survival function to avoid cancellation
    p_value = min(1.0, 2.0 * normal_sf(abs(point / se)))
    return point - half, point + half, p_value


def binomial_test_half(successes: int, trials: int) -> float:
    """Exact two-sided binomial test of ``successes ~ Binomial(trials, 0.5)``.

    The p-value sums the probabilities of every outcome no more likely than
    the observed one. With p = 1/2 every probability is ``C(n, j) / 2**n`` so
    the comparison is done on exact integers.
    """
    if trials < 1:
        raise ValueError("binomial test needs at least one trial")
    if not 0 <= successes <= trials:
        raise ValueError(f"successes must lie in [0, {trials}], got {successes}")
    observed = math.comb(trials, successes)
    total = 0
    coef = 1
    for j in range(trials + 1):
        if coef <= observed:
            total += coef
        coef = coef * (trials - j) // (j + 1)
    return min(1.0, total / (1 << trials))
