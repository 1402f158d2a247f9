import math

import numpy as np
import pytest

from conftest import linear_scm
from deconlab.errors import CollinearityError, ConfigError
from deconlab.estimators import (COLLINEARITY_THRESHOLD, Estimand, ci_test, collinearity_report, estimate_adjusted,
                                 estimate_naive, estimate_substitute, overlap_diagnostic)
from deconlab.factors import FactorModelSpec, SubstituteConfounder, fit
from deconlab.scenarios import build_scenario
from deconlab.scm import Dataset, mask_observed, sample_full_data

TRIANGLE = [("U", "A"), ("A", "Y"), ("U", "Y")]
EFFECT_A = Estimand(("A",), truth=1.0)


def triangle(n, gamma=2.0, replicate=0):
    scm = linear_scm(TRIANGLE, weights={("U", "Y"): gamma}, latents=("U",))
    full = sample_full_data(scm, n, replicate=replicate)
    return mask_observed(full), full["U"]


def scenario_data(sid, n, replicate=0, **kw):
    sc = build_scenario(sid, **kw)
    full = sample_full_data(sc.scm, n, replicate=replicate)
    return sc, full, mask_observed(full)


# --------------------------------------------------------------------------
# estimand


def test_estimand_defaults_and_validation():
    e = Estimand(("A1", "A2"))
    assert e.a == (1.0, 1.0) and e.a_prime == (0.0, 0.0) and e.name == "A1+A2"
    with pytest.raises(ConfigError):
        Estimand(("A1",), a=(1.0, 2.0))
    with pytest.raises(ConfigError):
        Estimand(("A1",), regressors=("A2",))


# --------------------------------------------------------------------------
# oracle and naive on the confounded triangle


def test_oracle_adjustment_recovers_effect():
    data, u = triangle(20_000)
    est = estimate_adjusted(data, u, EFFECT_A, n_boot=200, seed=3)
    assert abs(est.point - 1.0) <= 3 * est.se
    assert est.bias == est.point - est.truth
    assert est.se >= 0 and est.estimator == "oracle-adjusted"


def test_naive_slope_follows_regression_algebra():
    # beta + gamma Cov(U,A)/Var(A) = 1 + 2 * 1/2
    data, _ = triangle(20_000)
    est = estimate_naive(data, EFFECT_A, n_boot=200, seed=3)
    assert abs(est.point - 2.0) <= 3 * est.se
    assert est.estimator == "naive"


def test_naive_unbiased_without_confounding():
    data, _ = triangle(20_000, gamma=0.0)
    est = estimate_naive(data, EFFECT_A, n_boot=200)
    assert abs(est.point - 1.0) <= 3 * est.se


def test_empty_covariates_reduce_to_naive():
    data, _ = triangle(2000)
    naive = estimate_naive(data, EFFECT_A, n_boot=50, seed=9)
    adj = estimate_adjusted(data, np.empty((data.n, 0)), EFFECT_A, n_boot=50, seed=9)
    assert (adj.point, adj.se) == (naive.point, naive.se)


def test_zero_bootstrap_gives_nan_se():
    data, u = triangle(500)
    assert math.isnan(estimate_adjusted(data, u, EFFECT_A, n_boot=0).se)


def test_covariates_must_be_row_aligned():
    data, u = triangle(500)
    with pytest.raises(ConfigError, match="row-aligned"):
        estimate_adjusted(data, u[:-1], EFFECT_A, n_boot=0)


def test_bootstrap_se_matches_replicate_spread():
    points, ses = [], []
    for r in range(100):
        data, u = triangle(1000, replicate=r)
        est = estimate_adjusted(data, u, EFFECT_A, n_boot=100, seed=r)
        points.append(est.point)
        ses.append(est.se)
    sd, mean_se = np.std(points, ddof=1), np.mean(ses)
    assert abs(sd - mean_se) <= 0.25 * mean_se


def test_oracle_soundness_over_replicates():
    # the adjustment set {U} is certified valid; bias averages to zero
    biases = [estimate_adjusted(*triangle(5000, replicate=r), EFFECT_A, n_boot=0).bias for r in range(60)]
    assert abs(np.mean(biases)) <= 3 * np.std(biases, ddof=1) / math.sqrt(len(biases))


# --------------------------------------------------------------------------
# scenario examples


def test_mediator_adjustment_biased_in_scenario_a():
    sc, full, data = scenario_data("a", 100_000)
    est = estimate_adjusted(data, full["R"], sc.estimand, n_boot=50)
    assert abs(est.bias) > 5 * est.se


def test_naive_unbiased_in_scenario_d():
    sc, _, data = scenario_data("d", 100_000)
    est = estimate_naive(data, sc.estimand, n_boot=50)
    assert abs(est.bias) <= 3 * est.se


def test_interaction_flag_handles_heterogeneous_effects(rng):
    # effect 1 + 2U with U-dependent cause variance: an additive fit weights strata unequally
    n = 20_000
    u = (rng.random(n) < 0.5).astype(float)
    a = u + (1 + 2 * u) * rng.standard_normal(n)
    y = a * (1 + 2 * u) + u + rng.standard_normal(n)
    data = Dataset(a[:, None], y, ("A",))
    estimand = Estimand(("A",), truth=2.0)
    additive = estimate_adjusted(data, u, estimand, n_boot=100)
    inter = estimate_adjusted(data, u, estimand, n_boot=100, interaction=True)
    assert abs(additive.bias) > 5 * additive.se
    assert abs(inter.bias) <= 3 * inter.se


# --------------------------------------------------------------------------
# substitute confounders and collinearity


def test_substitute_equal_to_cause_is_collinear():
    data, _ = triangle(1000)
    sub = SubstituteConfounder.given(data.causes[:, 0], data.causes)
    with pytest.raises(CollinearityError) as info:
        estimate_substitute(data, sub, EFFECT_A, n_boot=0)
    report = info.value.report
    assert report.rank_deficient
    assert report.condition_number > COLLINEARITY_THRESHOLD
    assert "zhat[0]" in report.columns


def test_substitute_matches_adjusted_bit_for_bit(rng):
    sc, _, data = scenario_data("f", 3000)
    sub = fit(data.causes, FactorModelSpec("mixture", 2))
    s = estimate_substitute(data, sub, sc.estimand, n_boot=30, seed=11)
    a = estimate_adjusted(data, sub.adjustment_columns(), sc.estimand, n_boot=30, seed=11)
    assert (s.point, s.se) == (a.point, a.se)
    assert s.provenance["family"] == "mixture" and s.provenance["k"] == 2


def test_substitute_requires_matching_causes():
    data, _ = triangle(200)
    other, _ = triangle(200, replicate=1)
    sub = SubstituteConfounder.given(np.ones(200), other.causes)
    with pytest.raises(ConfigError, match="not fitted"):
        estimate_substitute(data, sub, EFFECT_A, n_boot=0)


def test_ppca_substitute_collinear_when_linear_in_causes():
    sc, _, data = scenario_data("g", 5000, m=10)
    sub = fit(data.causes, FactorModelSpec("ppca", 1))
    with pytest.raises(CollinearityError):
        estimate_substitute(data, sub, sc.estimand, n_boot=0)


@pytest.mark.parametrize("eps, deficient", [(1e-3, False), (1e-13, True)])
def test_collinearity_threshold(rng, eps, deficient):
    x = rng.standard_normal(500)
    design = np.column_stack([np.ones(500), x, x + eps * rng.standard_normal(500)])
    rep = collinearity_report(design, ["1", "x", "x2"])
    assert rep.rank_deficient == deficient
    assert rep.rank_deficient == (rep.condition_number > rep.threshold)
    assert rep.condition_number >= 1
    assert set(rep.vif) == {"x", "x2"}


# --------------------------------------------------------------------------
# overlap


def binary_data(rng, n):
    causes = (rng.random((n, 2)) < 0.5).astype(float)
    return Dataset(causes, rng.standard_normal(n), ("A1", "A2"))


def test_overlap_passes_under_independence(rng):
    data = binary_data(rng, 4000)
    sub = SubstituteConfounder.given(rng.standard_normal(4000), data.causes)
    rep = overlap_diagnostic(data, sub, ["A1", "A2"])
    assert rep.passed
    assert rep.counts.sum() == data.n
    assert rep.counts.shape == (4, 4)


def test_overlap_fails_when_strata_determine_cause(rng):
    data = binary_data(rng, 4000)
    a1 = data.cause("A1")
    sub = SubstituteConfounder.given(np.column_stack([1 - a1, a1]), data.causes)
    rep = overlap_diagnostic(data, sub, ["A1"])
    assert not rep.passed
    assert rep.witness == (0, (1,))
    assert rep.counts.sum() == data.n


def test_overlap_passes_for_mixture_in_scenario_f():
    sc, _, data = scenario_data("f", 5000)
    sub = fit(data.causes, FactorModelSpec("mixture", 2))
    assert overlap_diagnostic(data, sub, ["A1"]).passed


# --------------------------------------------------------------------------
# conditional independence test


def test_ci_test_detects_confounder():
    data, u = triangle(10_000)
    stat, p, verdict = ci_test(data.outcome, u, data.causes)
    assert p < 0.001 and verdict == "dependent"


def test_ci_test_null_calibration(rng):
    alpha, reps = 0.05, 500
    rejections = 0
    for _ in range(reps):
        a = rng.standard_normal((200, 2))
        y = a @ [1.0, -1.0] + rng.standard_normal(200)
        rejections += ci_test(y, rng.standard_normal(200), a, alpha).verdict == "dependent"
    assert abs(rejections / reps - alpha) <= 3 * math.sqrt(alpha * (1 - alpha) / reps)


def test_ci_test_collinear_is_a_verdict(rng):
    a = rng.standard_normal((300, 3))
    res = ci_test(rng.standard_normal(300), a @ [1.0, 2.0, -0.5] + 4.0, a)
    assert res.verdict == "degenerate: collinear"
    assert math.isnan(res.pvalue)


def test_ci_test_needs_enough_rows(rng):
    with pytest.raises(ConfigError):
        ci_test(rng.standard_normal(5), rng.standard_normal(5), rng.standard_normal((5, 2)))
