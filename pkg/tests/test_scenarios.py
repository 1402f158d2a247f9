import math

import numpy as np
import pytest
from scipy import stats

from deconlab import scmfile
from deconlab.errors import ConfigError
from deconlab.estimators import estimate_substitute
from deconlab.factors import FactorModelSpec, fit
from deconlab.scenarios import (DEFAULT_M, SCENARIO_IDS, build_scenario, catalog, contrast, expected_verdict,
                                export_scenarios, shipped_scenario_text)
from deconlab.scm import mask_observed, sample_full_data, true_ace


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_catalog_entries_are_consistent(sid):
    sc = build_scenario(sid)
    assert sc.m == DEFAULT_M[sid]
    assert sc.truth == true_ace(sc.scm, *contrast(sc.estimand)).value
    assert set(sc.expected.values()) <= {"unbiased", "biased", "degenerate"}
    assert set(sc.oracle) <= set(sc.scm.graph.names)
    assert all(sc.scm.graph.roles[v] != "latent" for v in sc.observed)


@pytest.mark.parametrize("sid", SCENARIO_IDS)
def test_shipped_files_match_builder(sid):
    text = shipped_scenario_text(sid)
    assert text == scmfile.dumps(build_scenario(sid).scm)
    assert scmfile.dumps(scmfile.loads(text)) == text


def test_export_writes_every_scenario(tmp_path):
    paths = export_scenarios(tmp_path)
    assert [p.name for p in paths] == [f"scenario_{i}.json" for i in SCENARIO_IDS]
    assert paths[0].read_text() == shipped_scenario_text("a")


def test_scenario_e_confounder_is_uniform():
    full = sample_full_data(build_scenario("e").scm, 100_000)
    assert stats.kstest(full["U"], "uniform").statistic < 0.01


def test_scenario_a_truth_is_sum_of_paths():
    sc = build_scenario("a", overrides={"A1->R": 0.5, "R->Y": 2.0, "R->A2": 1.5, "R->A3": -1.0,
                                        "A2->Y": 0.7, "A3->Y": 3.0})
    paths = 0.5 * 2.0 + 0.5 * 1.5 * 0.7 + 0.5 * -1.0 * 3.0
    assert sc.truth == pytest.approx(paths, abs=1e-12)
    assert build_scenario("a").truth == pytest.approx(3.0, abs=1e-12)


def test_scenario_d_truth_is_zero():
    sc = build_scenario("d")
    assert sc.truth == 0.0
    assert not any(c == "Y" and p.startswith("A") for p, c in sc.scm.graph.edges)


def test_overrides_recompute_truth():
    assert build_scenario("f", overrides={"A1->Y": 2.5}).truth == pytest.approx(2.5)
    assert build_scenario("b", m=3, overrides={"D->Y": 0.0}).truth == pytest.approx(3.0)


@pytest.mark.parametrize("key, value", [("A1->D", 1.0), ("Y->A1", 1.0), ("sd:Q", 1.0), ("colour", 1.0),
                                        ("sd:A1", -1.0), ("A1->Y", float("nan"))])
def test_invalid_overrides(key, value):
    with pytest.raises(ConfigError) as info:
        build_scenario("b", overrides={key: value})
    assert info.value.path == f"overrides.{key}"


def test_invalid_build_arguments():
    with pytest.raises(ConfigError):
        build_scenario("h")
    with pytest.raises(ConfigError):
        build_scenario("a", m=4)
    with pytest.raises(ConfigError):
        build_scenario("e", m=3)
    with pytest.raises(ConfigError):
        build_scenario("a", dashed=True)
    with pytest.raises(ConfigError):
        build_scenario("f", variant="stratified")


@pytest.mark.parametrize("sid, node", [("b", "D"), ("c", "C")])
def test_dashed_edge(sid, node):
    assert not build_scenario(sid).scm.graph.has_edge("U", node)
    assert build_scenario(sid, dashed=True).scm.graph.has_edge("U", node)


def test_scenario_e_stratified_separation():
    n = 100_000
    full = sample_full_data(build_scenario("e", variant="stratified").scm, n)
    a1, a2, z = full["A1"], full["A2"], full["Z"]
    r = np.corrcoef(a1, a2)[0, 1]
    assert abs(r) > 5 * (1 - r**2) / math.sqrt(n)
    res = [x - np.polyval(np.polyfit(z, x, 1), z) for x in (a1, a2)]
    partial = np.corrcoef(*res)[0, 1]
    assert abs(partial) <= 3 / math.sqrt(n - 3)


def test_scenario_e_default_causes_uncorrelated():
    full = sample_full_data(build_scenario("e").scm, 100_000)
    assert abs(np.corrcoef(full["A1"], full["A2"])[0, 1]) <= 3 / math.sqrt(100_000)


def test_scenario_f_bias_shrinks_with_m():
    means, ses = [], []
    for m in (2, 5, 10, 25, 50):
        sc = build_scenario("f", m=m)
        biases = []
        for r in range(20):
            data = mask_observed(sample_full_data(sc.scm, 2000, replicate=r))
            sub = fit(data.causes, FactorModelSpec("mixture", 2))
            biases.append(abs(estimate_substitute(data, sub, sc.estimand, n_boot=0).bias))
        means.append(np.mean(biases))
        ses.append(np.std(biases, ddof=1) / math.sqrt(len(biases)))
    for i in range(1, len(means)):
        assert means[i] <= means[i - 1] + 2 * math.hypot(ses[i], ses[i - 1])
    assert means[-1] < means[0]


def test_expected_verdict_lookup():
    assert expected_verdict("a", "substitute-adjusted-capturing-R") == "biased"
    assert expected_verdict("f", "substitute-adjusted:mixture") == "unbiased"
    assert expected_verdict("e", "oracle-adjusted") == "unbiased"
    assert expected_verdict("e", "substitute-adjusted:mixture") is None
    assert expected_verdict("e", "substitute-adjusted:mixture", variant="stratified") == "biased"
    assert expected_verdict("g", "substitute-adjusted:ppca") == "degenerate"
    assert expected_verdict("d", "bogus") is None


def test_catalog_is_complete():
    assert tuple(catalog()) == SCENARIO_IDS
