"""Sensitivity, moment, and gradient oracles.

The exhaustive sensitivity numbers here are regressions frozen from runs of
this oracle; the interesting facts they pin down are (a) graphs up to four
nodes never exceed either mode's bound, (b) five nodes with overlapping
endpoints push adaptive clipping past its bound (threshold drift), while
standard clipping stays exactly at saturation, and (c) the quotient
enumeration reproduces the full enumeration's maxima at a fraction of the
cases.
"""

import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from reldp.errors import EnumerationOverflowError
from reldp.graph import Graph
from reldp.models import LossSpec, init_model
from reldp.oracle import SensitivityReport, check_sensitivity, mc_psi


def graph(n, edges, features=None):
    return Graph(num_nodes=n, edges=np.array(edges), features=features)


TRIANGLE = graph(3, [[0, 1], [1, 2], [0, 2]])
PATH4 = graph(4, [[0, 1], [1, 2], [2, 3]])
# two hubs (0 and 1) sharing neighbor 2: the smallest graph found where
# removing a node loosens surviving adaptive thresholds enough to violate
OVERLAP5 = graph(5, [[0, 2], [0, 4], [1, 2], [1, 3]])
COMPLETE5 = graph(5, [[a, b] for a in range(5) for b in range(a + 1, 5)])


def run(g, mode, source="adversarial", **kw):
    kw.setdefault("k_neg", 1)
    return check_sensitivity(g, mode, 1.0, source, seed=7, **kw)


class TestExhaustiveAdversarial:
    @pytest.mark.parametrize("mode", ["adaptive", "standard"])
    def test_triangle_saturates_exactly(self, mode):
        rep = run(TRIANGLE, mode, exhaustive=True)
        assert rep.cases_checked == 375
        assert rep.max_ratio == 1.0
        assert rep.violations == 0
        assert rep.passed

    def test_single_edge_adaptive_stays_at_half(self):
        # one tuple, occurrence 2 everywhere: clipped norm c/4, and the
        # neighbor rewrite doubles it, so the worst shift is c/2
        rep = run(graph(2, [[0, 1]]), "adaptive", exhaustive=True)
        assert rep.cases_checked == 10
        assert rep.max_ratio == 0.5

    @pytest.mark.parametrize("mode", ["adaptive", "standard"])
    def test_path4_clean(self, mode):
        rep = run(PATH4, mode, exhaustive=True)
        assert (rep.cases_checked, rep.max_ratio, rep.violations) == \
            (1612, 1.0, 0)

    @pytest.mark.parametrize("mode", ["adaptive", "standard"])
    def test_path4_two_negatives_clean(self, mode):
        rep = run(PATH4, mode, exhaustive=True, k_neg=2)
        assert (rep.cases_checked, rep.max_ratio, rep.violations) == \
            (3028, 1.0, 0)

    def test_overlap5_adaptive_violates(self):
        rep = run(OVERLAP5, "adaptive", exhaustive=True)
        assert rep.cases_checked == 26485
        assert rep.violations == 640
        assert_allclose(rep.max_ratio, 4.0 / 3.0, rtol=1e-15)
        assert not rep.passed
        assert "ratio" in rep.worst_case and "removed" in rep.worst_case

    def test_overlap5_standard_clean(self):
        rep = run(OVERLAP5, "standard", exhaustive=True)
        assert (rep.max_ratio, rep.violations) == (1.0, 0)

    @pytest.mark.parametrize("g,mode,kw", [
        (TRIANGLE, "adaptive", {}),
        (PATH4, "standard", {}),
        (PATH4, "adaptive", {"k_neg": 2}),
        (OVERLAP5, "adaptive", {}),
        (OVERLAP5, "standard", {}),
    ])
    def test_quotient_reproduces_full_maximum(self, g, mode, kw):
        full = run(g, mode, exhaustive=True, **kw)
        quot = run(g, mode, exhaustive=True, quotient=True, **kw)
        assert quot.max_ratio == full.max_ratio
        assert (quot.violations == 0) == (full.violations == 0)
        assert quot.cases_checked < full.cases_checked

    def test_overlap5_quotient_counts(self):
        rep = run(OVERLAP5, "adaptive", exhaustive=True, quotient=True)
        assert (rep.cases_checked, rep.violations) == (3261, 64)


class TestSampledSources:
    def test_complete5_adversarial(self):
        rep = run(COMPLETE5, "adaptive", gamma=0.6, num_batches=24)
        assert rep.cases_checked == 28
        assert rep.violations == 1
        assert_allclose(rep.max_ratio, 1.25, rtol=1e-15)

    def test_complete5_random_gradients_also_violate(self):
        # drift is not an adversary artifact: plain Gaussian gradients
        # cross the adaptive bound on the same sampled batches
        rep = run(COMPLETE5, "adaptive", "random", gamma=0.6,
                  num_batches=24, trials=300)
        assert rep.violations == 1
        assert_allclose(rep.max_ratio, 1.0288539852142151, rtol=1e-12)

    def test_model_gradients_on_triangle(self):
        feats = np.random.default_rng(0).normal(size=(3, 4))
        g = graph(3, [[0, 1], [1, 2], [0, 2]], features=feats)
        rep = run(g, "adaptive", "model", exhaustive=True,
                  model=init_model("linear", 4, 3, seed=2),
                  loss=LossSpec("infonce"))
        assert rep.passed
        assert_allclose(rep.max_ratio, 0.8063431048831275, rtol=1e-12)

    def test_seed_determinism(self):
        a = run(COMPLETE5, "adaptive", "random", gamma=0.6, num_batches=8,
                trials=50)
        b = run(COMPLETE5, "adaptive", "random", gamma=0.6, num_batches=8,
                trials=50)
        assert a.max_ratio == b.max_ratio
        assert a.cases_checked == b.cases_checked


class TestValidation:
    def test_graph_too_large(self):
        big = graph(11, [[0, 1]])
        with pytest.raises(ValueError, match="n <= 10"):
            run(big, "adaptive")

    def test_exhaustive_needs_small_active_set(self):
        seven = graph(7, [[i, i + 1] for i in range(6)])
        with pytest.raises(ValueError, match="n <= 6"):
            run(seven, "adaptive", exhaustive=True)

    def test_unknown_mode_and_source(self):
        with pytest.raises(ValueError, match="clip_mode"):
            run(TRIANGLE, "soft")
        with pytest.raises(ValueError, match="grad_source"):
            run(TRIANGLE, "adaptive", "autograd")

    def test_model_source_needs_model(self):
        with pytest.raises(ValueError, match="model"):
            run(TRIANGLE, "adaptive", "model")

    def test_model_source_needs_features(self):
        with pytest.raises(ValueError, match="features"):
            run(TRIANGLE, "adaptive", "model",
                model=init_model("linear", 4, 3, seed=2),
                loss=LossSpec("infonce"))

    def test_enumeration_cap(self):
        with pytest.raises(EnumerationOverflowError):
            run(TRIANGLE, "adaptive", exhaustive=True, cap=10)


class TestSensitivityReport:
    def test_passed_property(self):
        ok = SensitivityReport(max_ratio=1.0, violations=0,
                               cases_checked=5, worst_case="")
        bad = SensitivityReport(max_ratio=1.5, violations=2,
                                cases_checked=5, worst_case="x")
        assert ok.passed and not bad.passed

    def test_to_text_fields(self):
        rep = SensitivityReport(max_ratio=0.5, violations=0,
                                cases_checked=3, worst_case="ratio = 0.5")
        text = rep.to_text()
        for token in ("max_ratio", "violations = 0", "cases_checked = 3",
                      "passed = True"):
            assert token in text


class TestMcPsi:
    def test_matches_closed_form(self):
        # alpha=2, sigma=1: moment = 1 + q^2 (e - 1)
        q = 0.01
        expected = 1.0 + q * q * (math.e - 1.0)
        mean, se = mc_psi(q, 1.0, 2, 10**6, seed=20260817)
        assert abs(mean - expected) <= 4.0 * se
        assert se < 1e-4

    def test_seed_determinism(self):
        assert mc_psi(0.1, 1.0, 2, 10**4, seed=5) == \
            mc_psi(0.1, 1.0, 2, 10**4, seed=5)

    def test_validation(self):
        with pytest.raises(ValueError):
            mc_psi(1.5, 1.0, 2, 10**4, seed=0)
        with pytest.raises(ValueError):
            mc_psi(0.1, 0.0, 2, 10**4, seed=0)
        with pytest.raises(ValueError):
            mc_psi(0.1, 1.0, 1.0, 10**4, seed=0)
        with pytest.raises(ValueError):
            mc_psi(0.1, 1.0, 2, 100, seed=0)
