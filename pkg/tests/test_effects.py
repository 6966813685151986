import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from defer_causal.data import EvaluationDataset, correctness
from defer_causal.effects import (Unavailable, estimate_atd, estimate_catd, individual_effects,
                                  model_accuracy, reweight_tau_delta, system_accuracy, tau_delta)
from defer_causal.errors import DataError, InsufficientDataError, ScenarioError

from helpers import random_s1_dataset


def small():
    #        score  deferred model human label
    rows = [(0.1, False, "a", "a", "a"),
            (0.2, False, "b", "a", "a"),
            (0.7, True, "a", "b", "b"),
            (0.8, True, "a", "a", "a"),
            (0.9, True, "b", "a", "b")]
    cols = list(zip(*rows))
    return EvaluationDataset.from_columns(*cols, groups={"sex": ["f", "m", "f", "m", "m"]})


def test_individual_effects_in_order():
    assert individual_effects(small()).tolist() == [1, 0, -1]


def test_atd_hand_values():
    est = estimate_atd(small())
    assert est.point == 0.0
    # effects (1, 0, -1): sample sd 1, se 1/sqrt(3)
    assert est.se == pytest.approx(1 / np.sqrt(3))
    assert est.n_used == 3 and est.method == "atd"
    assert est.p_value == 1.0


def test_accuracies_and_gap():
    ds = small()
    assert system_accuracy(ds) == pytest.approx(3 / 5)
    assert model_accuracy(ds) == pytest.approx(3 / 5)
    assert tau_delta(ds) == pytest.approx(0.0)


def test_catd_cells():
    res = estimate_catd(small(), "sex")
    assert list(res) == ["f", "m"]
    assert isinstance(res["f"], Unavailable) and res["f"].n_used == 1 and res["f"].point == 1.0
    assert res["m"].point == pytest.approx(-0.5)


def test_catd_unknown_attribute():
    with pytest.raises(DataError):
        estimate_catd(small(), "age")


def test_atd_needs_two_deferred():
    ds = small().replace(deferred=np.array([False, False, False, False, True]))
    with pytest.raises(InsufficientDataError):
        estimate_atd(ds)
    with pytest.raises(InsufficientDataError):
        individual_effects(ds.replace(deferred=np.zeros(5, dtype=bool)))


def test_scenario2_rejected():
    ds = EvaluationDataset.from_columns([0.1, 0.9, 0.8], [False, True, True], ["a", None, None],
                                        [None, "a", "b"], ["a", "b", "b"])
    for fn in (estimate_atd, individual_effects, model_accuracy, tau_delta):
        with pytest.raises(ScenarioError):
            fn(ds)
    assert system_accuracy(ds) == pytest.approx(2 / 3)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 300))
def test_gap_identity_and_reweighting(seed, n):
    ds = random_s1_dataset(np.random.default_rng(seed), n, min_deferred=2)
    n1 = ds.n_deferred
    atd = estimate_atd(ds).point
    gap = tau_delta(ds)
    assert abs(gap - n1 / n * atd) <= 1e-12
    assert reweight_tau_delta(gap, n, n1) == pytest.approx(atd, abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(4, 200))
def test_atd_is_loop_mean_and_ci_brackets(seed, n):
    ds = random_s1_dataset(np.random.default_rng(seed), n, min_deferred=2)
    _, t0, t1 = correctness(ds)
    effects = [int(t1[i]) - int(t0[i]) for i in range(n) if ds.deferred[i]]
    est = estimate_atd(ds, level=0.9)
    assert est.point == sum(effects) / len(effects)
    assert est.ci_low <= est.point <= est.ci_high
    assert -1.0 <= est.point <= 1.0


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(10, 200))
def test_catd_weighted_mean_recovers_atd(seed, n):
    ds = random_s1_dataset(np.random.default_rng(seed), n, min_deferred=2)
    cells = estimate_catd(ds, "g")
    total = 0.0
    for cat, cell in cells.items():
        m = int((ds.deferred & (ds.groups["g"] == cat)).sum())
        if m:
            total += m * cell.point
    assert total / ds.n_deferred == pytest.approx(estimate_atd(ds).point, abs=1e-12)


def test_reweight_validation():
    with pytest.raises(InsufficientDataError):
        reweight_tau_delta(0.1, 10, 0)
    with pytest.raises(ValueError):
        reweight_tau_delta(0.1, 3, 5)
