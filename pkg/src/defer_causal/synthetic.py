"""Synthetic human-AI team benchmark with known ground truth.

Features come from a mixture of Gaussians. One random hyperplane splits the
space into a region where the model should predict (``g_star = 0``) and one
where the human should (``g_star = 1``); a second hyperplane is the optimal
binary classifier ``f_star``. Labels follow ``f_star`` with noise on the model
region and are coin flips on the human region; the human errs at a
region-specific rate.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .data import EvaluationDataset
from .errors import CalibrationError, DataError, DivergenceError

LABELS = ("0", "1")
MEAN_RANGE = (-5.0, 5.0)
VAR_RANGE = (0.5, 2.0)
MAX_CALIBRATION_TRIES = 10


@dataclass(frozen=True)
class SynthConfig:
    d: int = 10
    n: int = 50_000
    p_h0: float = 0.10
    p_h1: float = 0.10
    p_ml: float = 0.40
    defer_frac_range: tuple[float, float] = (0.20, 0.80)
    seed: int = 0
    cutoff: float = 0.0  # deferral threshold on the initial (oracle) reject score

    def __post_init__(self):
        if self.d < 1:
            raise ValueError(f"d must be at least 1, got {self.d}")
        if self.n < 0:
            raise ValueError(f"n must be non-negative, got {self.n}")
        for name in ("p_h0", "p_h1", "p_ml"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        lo, hi = self.defer_frac_range
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"defer_frac_range must satisfy 0 <= lo <= hi <= 1, got {(lo, hi)}")


@dataclass(frozen=True)
class SyntheticDataset:
    dataset: EvaluationDataset
    features: np.ndarray
    g_star: np.ndarray
    f_star_pred: np.ndarray  # label strings
    human_correct_prob: np.ndarray
    model_correct_prob: np.ndarray  # for f_star
    component: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    model_region_fraction: float
    config: SynthConfig = field(repr=False, default_factory=SynthConfig)

    def oracle_atd(self, deferred: np.ndarray | None = None,
                   model_correct_prob: np.ndarray | None = None) -> float:
        """True ATD on the deferred records from the region-level correctness probabilities.

        ``model_correct_prob`` overrides the f_star probabilities when the
        model in the dataset is a different predictor.
        """
        mask = self.dataset.deferred if deferred is None else np.asarray(deferred, dtype=bool)
        mp = self.model_correct_prob if model_correct_prob is None else model_correct_prob
        if not mask.any():
            raise DataError("no deferred records")
        return float(np.mean(self.human_correct_prob[mask] - mp[mask]))


def _calibrate_offset(proj: np.ndarray, frac: float) -> float:
    idx = math.floor(frac * proj.size)
    if idx >= proj.size:
        return math.inf
    return float(np.sort(proj)[idx])


def generate_synth(cfg: SynthConfig) -> SyntheticDataset:
    """Draw one benchmark dataset; identical configs give identical datasets."""
    if cfg.n == 0:
        raise DataError("cannot generate an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    d, n = cfg.d, cfg.n
    means = rng.uniform(*MEAN_RANGE, size=(d, d))
    variances = rng.uniform(*VAR_RANGE, size=d)
    comp = rng.integers(0, d, size=n)
    x = means[comp] + np.sqrt(variances[comp])[:, None] * rng.standard_normal((n, d))

    target = float(rng.uniform(*cfg.defer_frac_range))
    want = math.floor(target * n)
    for _ in range(MAX_CALIBRATION_TRIES):
        normal = rng.standard_normal(d)
        normal /= np.linalg.norm(normal)
        proj = x @ normal
        offset = _calibrate_offset(proj, target)
        g_star = proj >= offset
        if int((~g_star).sum()) == want:
            break
    else:
        raise CalibrationError(
            f"could not place the policy hyperplane at fraction {target:.4f} "
            f"after {MAX_CALIBRATION_TRIES} tries (tied projections)")
    signed_dist = proj - offset

    f_normal = rng.standard_normal(d)
    f_proj = x @ f_normal
    f_star = (f_proj >= np.median(f_proj)).astype(np.int64)

    m = len(LABELS)
    follow = rng.random(n) < (1.0 - cfg.p_ml)
    coin = rng.integers(0, m, size=n)
    y = np.where(~g_star & follow, f_star, coin)

    err_rate = np.where(g_star, cfg.p_h1, cfg.p_h0)
    human_wrong = rng.random(n) < err_rate
    # wrong label uniform over the m-1 alternatives
    shift = rng.integers(1, m, size=n)
    human = np.where(human_wrong, (y + shift) % m, y)

    ds = EvaluationDataset(
        LABELS, signed_dist, signed_dist >= cfg.cutoff, f_star, human, y,
        {"component": comp.astype(str)},
    )
    human_p = 1.0 - err_rate
    model_p = np.where(g_star, 1.0 / m, (1.0 - cfg.p_ml) + cfg.p_ml / m)
    return SyntheticDataset(
        dataset=ds,
        features=x,
        g_star=g_star.astype(np.int64),
        f_star_pred=np.asarray(LABELS, dtype=object)[f_star],
        human_correct_prob=human_p,
        model_correct_prob=model_p,
        component=comp,
        means=means,
        variances=variances,
        model_region_fraction=target,
        config=cfg,
    )


# surrogate predictors -------------------------------------------------------


@dataclass(frozen=True)
class LinearModel:
    """Binary logistic model; ``weights[0]`` is the bias."""

    weights: np.ndarray
    classes: tuple[str, str] = LABELS

    def __post_init__(self):
        if not np.isfinite(self.weights).all():
            raise DivergenceError("model weights are not finite")

    def decision(self, features: np.ndarray) -> np.ndarray:
        return self.weights[0] + np.asarray(features, dtype=float) @ self.weights[1:]

    def predict_proba(self, features: np.ndarray) -> np.ndarray:
        """Probability of ``classes[1]``."""
        return _sigmoid(self.decision(features))

    def predict(self, features: np.ndarray) -> np.ndarray:
        return np.asarray(self.classes, dtype=object)[(self.predict_proba(features) >= 0.5).astype(int)]


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def logistic_loss_grad(weights: np.ndarray, features: np.ndarray,
                       targets: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean log-loss and its gradient; ``weights[0]`` is the bias."""
    z = weights[0] + features @ weights[1:]
    loss = float(np.mean(np.logaddexp(0.0, z) - targets * z))
    r = (_sigmoid(z) - targets) / z.size
    grad = np.concatenate([[r.sum()], features.T @ r])
    return loss, grad


def fit_logistic_sgd(
    features: np.ndarray,
    targets: Sequence[int],
    epochs: int = 20,
    step: float = 0.1,
    seed: int = 0,
    batch_size: int = 256,
    classes: tuple[str, str] = LABELS,
) -> LinearModel:
    """Logistic regression by seeded mini-batch gradient descent.

    Features are standardised internally and the scaling is folded back into
    the returned weights, so the model applies to raw features.
    """
    x = np.asarray(features, dtype=float)
    y = np.asarray(targets, dtype=float)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ValueError("features must be a non-empty 2-d array")
    if y.shape != (x.shape[0],):
        raise ValueError("targets must have one entry per row")
    if not step > 0:
        raise ValueError(f"step must be positive, got {step}")
    if not np.isfinite(x).all():
        raise DataError("features contain non-finite values")
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    z = (x - mu) / sd
    n, d = z.shape
    w = np.zeros(d + 1)
    rng = np.random.default_rng(seed)
    for epoch in range(epochs):
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            b = order[start:start + batch_size]
            _, g = logistic_loss_grad(w, z[b], y[b])
            w -= step * g
        loss, _ = logistic_loss_grad(w, z, y)
        if not math.isfinite(loss):
            raise DivergenceError(f"log-loss became non-finite at epoch {epoch}")
    raw = np.empty_like(w)
    raw[1:] = w[1:] / sd
    raw[0] = w[0] - float(np.sum(w[1:] * mu / sd))
    return LinearModel(raw, tuple(classes))


def _unit_interval(name: str, v):
    arr = np.asarray(v, dtype=float)
    if not ((arr >= 0.0) & (arr <= 1.0)).all():
        raise ValueError(f"{name} must lie in [0, 1]")
    return arr


def reject_score_sp(model_prob_max):
    """Selective-prediction reject score ``1 - max class probability`` (high means defer)."""
    out = 1.0 - _unit_interval("model_prob_max", model_prob_max)
    return float(out) if out.ndim == 0 else out


def reject_score_cc(human_correct_prob, model_prob_max):
    """Compare-confidence reject score: expert-model confidence minus classifier confidence."""
    out = (_unit_interval("human_correct_prob", human_correct_prob)
           - _unit_interval("model_prob_max", model_prob_max))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SurrogateSystem:
    """A trained deferring system applied to every record of a synthetic dataset."""

    dataset: EvaluationDataset
    model: LinearModel
    expert: LinearModel | None
    model_prob_max: np.ndarray
    model_correct_prob: np.ndarray  # oracle correctness probability of the trained model


def build_surrogate(
    synth: SyntheticDataset,
    train_idx: np.ndarray,
    system: str = "sp",
    epochs: int = 20,
    step: float = 0.1,
    seed: int = 0,
) -> SurrogateSystem:
    """Train the surrogate on ``train_idx`` and rescore every record.

    ``system`` is ``"sp"`` (model confidence only), ``"cc"`` (adds a logistic
    model of human correctness) or ``"oracle"`` (keeps the signed distance to
    the policy hyperplane). Deferral flags are left at the dataset's current
    cutoff; callers re-flag with :func:`apply_policy`.
    """
    ds = synth.dataset
    x = synth.features
    y01 = ds.label_code.astype(float)
    model = fit_logistic_sgd(x[train_idx], y01[train_idx], epochs, step, seed)
    p1 = model.predict_proba(x)
    pmax = np.maximum(p1, 1.0 - p1)
    pred_code = (p1 >= 0.5).astype(np.int64)

    expert = None
    if system == "sp":
        scores = reject_score_sp(pmax)
    elif system == "cc":
        human_ok = (ds.human_code == ds.label_code).astype(float)
        expert = fit_logistic_sgd(x[train_idx], human_ok[train_idx], epochs, step, seed + 1)
        scores = reject_score_cc(expert.predict_proba(x), pmax)
    elif system == "oracle":
        scores = ds.scores
    else:
        raise ValueError(f"unknown deferring system {system!r}; expected sp, cc or oracle")

    # the trained model's true accuracy given x: follows f_star on the model region
    agree = pred_code == ds.model_code
    region_acc = synth.model_correct_prob
    mcp = np.where(synth.g_star == 1, region_acc, np.where(agree, region_acc, 1.0 - region_acc))

    new = ds.replace(model_code=pred_code, scores=scores)
    return SurrogateSystem(new, model, expert, pmax, mcp)
