"""Sharp regression discontinuity at the deferral cutoff.

One-sided local-linear kernel regressions estimate the limit of the expected
outcome from each side of the cutoff; their difference is the local effect
of deferring. Records with a score exactly at the cutoff are on the right
(deferred) side.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Any, Literal, Sequence

import numpy as np

from .data import EvaluationDataset, correctness
from .effects import EffectEstimate
from .errors import InsufficientDataError, InsufficientSupportError, SingularFitError

Side = Literal["left", "right"]
KERNELS = ("triangular", "uniform")
MIN_DISTINCT = 3
MIN_POINTS_PER_SIDE = 10
GRID_SIZE = 25
GRID_SHRINK = 0.85


@dataclass(frozen=True)
class RdFit:
    side: str
    intercept: float
    slope: float
    intercept_variance: float
    n_effective: int
    bandwidth: float
    kernel: str

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class BandwidthChoice:
    h: float
    criterion_value: float | None
    method: str  # "cross_validation" or "manual"

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


@dataclass(frozen=True)
class RdEstimate:
    estimate: EffectEstimate
    left: RdFit
    right: RdFit
    bandwidth: BandwidthChoice

    def to_dict(self) -> dict[str, Any]:
        return {
            "estimate": self.estimate.to_dict(),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
            "bandwidth": self.bandwidth.to_dict(),
        }


def kernel_weight(distance, h: float, kernel: str = "triangular"):
    """Kernel weight for a non-negative distance; scalar in, scalar out.

    ``triangular`` is ``max(0, 1 - d/h)``; ``uniform`` is 1 for ``d < h``.
    """
    if not h > 0:
        raise ValueError(f"bandwidth must be positive, got {h}")
    d = np.asarray(distance, dtype=float)
    if (d < 0).any():
        raise ValueError("kernel distance must be non-negative")
    if kernel == "triangular":
        w = np.maximum(0.0, 1.0 - d / h)
    elif kernel == "uniform":
        w = (d < h).astype(float)
    else:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    return float(w) if w.ndim == 0 else w


def _side_mask(k: np.ndarray, cutoff: float, side: Side) -> np.ndarray:
    if side == "left":
        return k < cutoff
    if side == "right":
        return k >= cutoff
    raise ValueError(f"side must be 'left' or 'right', got {side!r}")


def local_linear_fit(
    k: Sequence[float],
    t: Sequence[float],
    cutoff: float,
    h: float,
    side: Side,
    kernel: str = "triangular",
) -> RdFit:
    """Kernel-weighted least squares of ``t`` on ``(1, k - cutoff)`` for one side.

    The intercept estimates the boundary limit of ``E[t | k]`` at the cutoff.
    Its variance is the HC0 sandwich ``A^-1 B A^-1`` with ``A = X'WX`` and
    ``B = sum w_i^2 e_i^2 x_i x_i'``.
    """
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    if k.shape != t.shape:
        raise ValueError("scores and outcomes must have the same length")
    mask = _side_mask(k, cutoff, side)
    u = k[mask] - cutoff
    w = kernel_weight(np.abs(u), h, kernel)
    if np.ndim(w) == 0:
        w = np.atleast_1d(w)
    keep = w > 0
    u, y, w = u[keep], t[mask][keep], w[keep]
    n_distinct = np.unique(u).size
    if n_distinct < MIN_DISTINCT:
        raise InsufficientSupportError(
            f"{side} side has {n_distinct} distinct scores within bandwidth {h:g}; "
            f"need {MIN_DISTINCT}")

    s0, s1, s2 = w.sum(), (w * u).sum(), (w * u * u).sum()
    t0, t1 = (w * y).sum(), (w * u * y).sum()
    det = s0 * s2 - s1 * s1
    if not det > 1e-12 * s0 * s2:
        raise SingularFitError(f"{side} side normal equations are singular (det={det:g})")
    intercept = (s2 * t0 - s1 * t1) / det
    slope = (s0 * t1 - s1 * t0) / det

    resid = y - intercept - slope * u
    g = (w * resid) ** 2
    b00, b01, b11 = g.sum(), (g * u).sum(), (g * u * u).sum()
    # first row of A^-1 is (s2, -s1) / det
    var = (s2 * s2 * b00 - 2.0 * s2 * s1 * b01 + s1 * s1 * b11) / (det * det)
    return RdFit(side, float(intercept), float(slope), float(max(var, 0.0)),
                 int(keep.sum()), float(h), kernel)


# bandwidth selection -------------------------------------------------------


class _SideCV:
    """Leave-boundary cross-validation for one side of the cutoff.

    Works in distance-from-cutoff coordinates ``r >= 0`` (scaled to [0, 1]).
    Each evaluation point (the half of the side nearest the cutoff) is
    predicted by a local-linear fit on the points strictly farther from the
    cutoff within bandwidth ``h``, mimicking estimation at a boundary.
    Window moments come from prefix sums so one candidate costs O(n log n).
    """

    def __init__(self, r: np.ndarray, t: np.ndarray, kernel: str):
        order = np.argsort(r, kind="stable")
        self.r = r[order]
        self.t = t[order]
        self.kernel = kernel
        n = self.r.size
        self.n_eval = n // 2
        zero = np.zeros(1)
        self.pm = [np.concatenate([zero, np.cumsum(self.r ** p)]) for p in range(4)]
        self.pn = [np.concatenate([zero, np.cumsum(self.r ** p * self.t)]) for p in range(3)]
        new_value = np.ones(n, dtype=np.int64)
        new_value[1:] = self.r[1:] != self.r[:-1]
        self.new_prefix = np.concatenate([[0], np.cumsum(new_value)])
        ev = self.r[: self.n_eval]
        self.start = np.searchsorted(self.r, ev, side="right")
        self.t_eval = self.t[: self.n_eval]

    def error(self, h: float) -> float | None:
        a = self.r[: self.n_eval]
        s = self.start
        e = np.searchsorted(self.r, a + h, side="left")
        nonempty = e > s
        distinct = np.where(nonempty, 1 + self.new_prefix[np.maximum(e, s)]
                            - self.new_prefix[np.minimum(s + 1, e)], 0)
        if (distinct < MIN_DISTINCT).any():
            return None

        m0, m1, m2, m3 = (p[e] - p[s] for p in self.pm)
        n0, n1, n2 = (p[e] - p[s] for p in self.pn)
        if self.kernel == "triangular":
            alpha, beta = 1.0 + a / h, -1.0 / h
        else:
            alpha, beta = np.ones_like(a), 0.0
        # weight w_j = alpha + beta r_j, local regressor x_j = r_j - a
        c1 = m1 - a * m0
        c2 = m2 - 2.0 * a * m1 + a * a * m0
        c3 = m3 - 2.0 * a * m2 + a * a * m1
        s0 = alpha * m0 + beta * m1
        s1 = alpha * c1 + beta * (m2 - a * m1)
        s2 = alpha * c2 + beta * c3
        q0 = alpha * n0 + beta * n1
        q1 = alpha * (n1 - a * n0) + beta * (n2 - a * n1)
        det = s0 * s2 - s1 * s1
        if not (det > 1e-12 * s0 * s2).all():
            return None
        pred = (s2 * q0 - s1 * q1) / det
        return float(np.sum((self.t_eval - pred) ** 2))


def bandwidth_grid(h_max: float, n: int = GRID_SIZE, shrink: float = GRID_SHRINK) -> np.ndarray:
    return h_max * shrink ** np.arange(n)


def _cv_sides(k: np.ndarray, t: np.ndarray, cutoff: float, kernel: str):
    left = k < cutoff
    r = np.abs(k - cutoff)
    h_max = float(r.max())
    sides = (_SideCV(r[left] / h_max, t[left], kernel), _SideCV(r[~left] / h_max, t[~left], kernel))
    return sides, h_max


def cv_profile(k, t, cutoff: float, kernel: str = "triangular") -> list[tuple[float, float | None]]:
    """(h, total CV error) for every grid candidate; ``None`` marks inadmissible ones."""
    sides, h_max = _cv_sides(np.asarray(k, dtype=float), np.asarray(t, dtype=float), cutoff, kernel)
    return _profile(sides, h_max)


def _profile(sides, h_max: float) -> list[tuple[float, float | None]]:
    out = []
    for h_scaled, h in zip(bandwidth_grid(1.0), bandwidth_grid(h_max)):
        errs = [sd.error(h_scaled) for sd in sides]
        out.append((float(h), None if None in errs else errs[0] + errs[1]))
    return out


def select_bandwidth(
    k: Sequence[float],
    t: Sequence[float],
    cutoff: float,
    kernel: str = "triangular",
) -> BandwidthChoice:
    """Cross-validated common bandwidth for both sides (Ludwig-Miller style).

    Candidates are ``h_max * 0.85**j`` for ``j = 0..24`` with ``h_max`` the
    largest distance to the cutoff. A candidate is admissible only if every
    required fit has at least three distinct scores. The admissible candidate
    with the smallest total squared prediction error wins; ties (within a
    relative 1e-9 of the outcome scale) go to the largest bandwidth.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}; expected one of {KERNELS}")
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    n_left = int((k < cutoff).sum())
    n_right = k.size - n_left
    if min(n_left, n_right) < MIN_POINTS_PER_SIDE:
        raise InsufficientDataError(
            f"bandwidth selection needs {MIN_POINTS_PER_SIDE} points per side; "
            f"got left={n_left}, right={n_right}")
    sides, h_max = _cv_sides(k, t, cutoff, kernel)
    profile = _profile(sides, h_max)
    valid = [cv for _, cv in profile if cv is not None]
    if not valid:
        raise InsufficientSupportError("no candidate bandwidth leaves 3 distinct points in every fit")
    tol = 1e-9 * float(sum(np.sum(sd.t_eval ** 2) for sd in sides))
    floor = min(valid)
    # profile runs from the largest h down, so the first hit is the largest tied h
    h, cv = next((h, cv) for h, cv in profile if cv is not None and cv <= floor + tol)
    return BandwidthChoice(h, cv, "cross_validation")


# estimation -----------------------------------------------------------------


def rd_from_arrays(
    k: Sequence[float],
    t: Sequence[float],
    cutoff: float,
    h: float | None = None,
    level: float = 0.95,
    kernel: str = "triangular",
) -> RdEstimate:
    """Jump in ``E[t | k]`` at ``cutoff``: right-side limit minus left-side limit."""
    k = np.asarray(k, dtype=float)
    t = np.asarray(t, dtype=float)
    if not (k < cutoff).any() or not (k >= cutoff).any():
        raise InsufficientDataError("need observations on both sides of the cutoff")
    if h is None:
        bw = select_bandwidth(k, t, cutoff, kernel)
    else:
        if not h > 0:
            raise ValueError(f"bandwidth must be positive, got {h}")
        bw = BandwidthChoice(float(h), None, "manual")
    left = local_linear_fit(k, t, cutoff, bw.h, "left", kernel)
    right = local_linear_fit(k, t, cutoff, bw.h, "right", kernel)
    point = right.intercept - left.intercept
    se = math.sqrt(left.intercept_variance + right.intercept_variance)
    est = EffectEstimate.from_point_se(point, se, left.n_effective + right.n_effective, "rd", level)
    return RdEstimate(est, left, right, bw)


def estimate_rd(
    ds: EvaluationDataset,
    cutoff: float,
    h: float | None = None,
    level: float = 0.95,
    kernel: str = "triangular",
) -> RdEstimate:
    """Local effect of deferring at the cutoff using only the active predictor's correctness."""
    t, _, _ = correctness(ds)
    return rd_from_arrays(ds.scores, t, cutoff, h, level, kernel)
