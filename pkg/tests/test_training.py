"""Noisy clipped SGD loop, privacy ledger, and ranking evaluation."""

import dataclasses
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from reldp import accountant
from reldp.accountant import AccountantParams
from reldp.errors import CapacityError, NumericError
from reldp.graph import Graph
from reldp.models import EncoderModel, LossSpec, init_model, tuple_loss_grad
from reldp.sampling import EdgeTuple
from reldp.training import (
    LearningRate,
    PrivacyLedger,
    TrainConfig,
    dp_train,
    evaluate_ranking,
    write_metrics_csv,
)


def ring_graph(n, d):
    """n-cycle with seeded features, enough mass for real gradients."""
    edges = np.array([[i, (i + 1) % n] for i in range(n)])
    feats = np.random.default_rng(99).normal(size=(n, d))
    return Graph(num_nodes=n, edges=edges, features=feats)


class TestLearningRate:
    def test_constant(self):
        lr = LearningRate(0.1)
        assert lr.at(0) == lr.at(500) == 0.1

    def test_step_decay(self):
        lr = LearningRate(1.0, decay_every=10, decay_factor=0.5)
        assert lr.at(9) == 1.0
        assert lr.at(10) == 0.5
        assert lr.at(25) == 0.25

    def test_validation(self):
        with pytest.raises(ValueError):
            LearningRate(0.0)
        with pytest.raises(ValueError):
            LearningRate(1.0, decay_factor=1.5)


class TestTrainConfig:
    def test_float_learning_rate_coerced(self):
        cfg = TrainConfig(batch_size=4, iterations=1, learning_rate=0.2)
        assert isinstance(cfg.learning_rate, LearningRate)
        assert cfg.learning_rate.base == 0.2

    def test_noisy_training_needs_finite_clip(self):
        with pytest.raises(ValueError, match="clip_norm"):
            TrainConfig(batch_size=4, iterations=1, sigma=0.5,
                        clip_norm=math.inf)

    def test_field_checks(self):
        with pytest.raises(ValueError):
            TrainConfig(batch_size=0, iterations=1)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1, iterations=1, delta=1.0)
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1, iterations=1, clip_mode="soft")
        with pytest.raises(ValueError):
            TrainConfig(batch_size=1, iterations=1, momentum=1.0)


class TestPrivacyLedger:
    def params(self):
        return AccountantParams(num_edges=100, num_nodes=40, max_degree=5,
                                gamma=0.1, k_neg=2, sigma=1.0)

    def test_zero_iterations_costs_nothing(self):
        ledger = PrivacyLedger(delta=1e-5)
        ledger.per_iteration_curve = accountant.rdp_curve(self.params(),
                                                          "adaptive")
        ledger.advance(0)
        assert ledger.dp_at_delta.eps == 0.0

    def test_composition_scales_linearly(self):
        ledger = PrivacyLedger(delta=1e-5)
        ledger.per_iteration_curve = accountant.rdp_curve(self.params(),
                                                          "adaptive")
        ledger.advance(7)
        assert_allclose(ledger.composed_curve.eps,
                        7.0 * ledger.per_iteration_curve.eps, rtol=1e-15)
        direct = accountant.rdp_to_dp(ledger.composed_curve, 1e-5, 7)
        assert ledger.dp_at_delta.eps == direct.eps

    def test_non_private_reports_inf(self):
        ledger = PrivacyLedger(delta=1e-5)
        ledger.advance(3)
        assert ledger.dp_at_delta.eps == math.inf
        assert "eps = inf" in ledger.to_text()

    def test_write_emits_curves(self, tmp_path):
        ledger = PrivacyLedger(delta=1e-5)
        ledger.per_iteration_curve = accountant.rdp_curve(self.params(),
                                                          "standard")
        ledger.advance(4)
        paths = ledger.write(str(tmp_path / "ledger"))
        assert len(paths) == 3
        back = accountant.read_curve_csv(paths[2])
        assert_allclose(back.eps, ledger.composed_curve.eps, rtol=1e-15)
        assert f"delta = {1e-5:.17g}" in (tmp_path / "ledger.txt").read_text()


class TestDpTrain:
    def cfg(self, **kw):
        base = dict(batch_size=4, iterations=5, k_neg=2, max_degree=5,
                    clip_norm=1.0, sigma=0.5, learning_rate=0.1, seed=3)
        base.update(kw)
        return TrainConfig(**base)

    def test_bitwise_reproducible(self):
        g = ring_graph(30, 3)
        m1, _ = dp_train(g, self.cfg(momentum=0.5), LossSpec("infonce"))
        m2, _ = dp_train(g, self.cfg(momentum=0.5), LossSpec("infonce"))
        assert np.array_equal(m1.weights, m2.weights)

    def test_seed_changes_outcome(self):
        g = ring_graph(30, 3)
        m1, _ = dp_train(g, self.cfg(seed=3), LossSpec("infonce"))
        m2, _ = dp_train(g, self.cfg(seed=4), LossSpec("infonce"))
        assert not np.array_equal(m1.weights, m2.weights)

    def test_input_model_not_mutated(self):
        g = ring_graph(30, 3)
        model = init_model("linear", 3, 3, seed=8)
        before = model.weights.copy()
        dp_train(g, self.cfg(), LossSpec("infonce"), model=model)
        assert np.array_equal(model.weights, before)

    def test_requires_features(self):
        g = Graph(num_nodes=3, edges=np.array([[0, 1]]))
        with pytest.raises(ValueError, match="features"):
            dp_train(g, self.cfg(), LossSpec("infonce"))

    def test_zero_iterations_returns_init(self):
        g = ring_graph(30, 3)
        model, ledger = dp_train(g, self.cfg(iterations=0),
                                 LossSpec("infonce"))
        ref = init_model("linear", 3, 3, seed=3)
        assert np.array_equal(model.weights, ref.weights)
        assert ledger.dp_at_delta.eps == 0.0

    def test_zero_features_make_training_a_no_op(self):
        # embeddings collapse to the zero bias, so every gradient vanishes
        g = Graph(num_nodes=12,
                  edges=np.array([[i, (i + 1) % 12] for i in range(12)]),
                  features=np.zeros((12, 3)))
        model, _ = dp_train(g, self.cfg(batch_size=2, k_neg=1, sigma=0.0,
                                        clip_norm=math.inf),
                            LossSpec("infonce"))
        ref = init_model("linear", 3, 3, seed=3)
        assert np.array_equal(model.weights, ref.weights)

    def test_ledger_matches_direct_accounting(self):
        g = ring_graph(30, 3)
        cfg = self.cfg(iterations=6, max_degree=2)
        _, ledger = dp_train(g, cfg, LossSpec("infonce"))
        # the cap leaves a 30-cycle intact, so gamma = 4/30
        params = AccountantParams(num_edges=30, num_nodes=30, max_degree=2,
                                  gamma=4.0 / 30.0, k_neg=2, sigma=0.5)
        curve = accountant.rdp_curve(params, "adaptive")
        expect = accountant.rdp_to_dp(accountant.compose(curve, 6),
                                      1.0 / 30.0, 6)
        assert ledger.iterations_so_far == 6
        assert_allclose(ledger.dp_at_delta.eps, expect.eps, rtol=1e-15)
        assert ledger.delta == 1.0 / 30.0

    def test_privacy_cost_grows_with_iterations(self):
        g = ring_graph(30, 3)
        _, short = dp_train(g, self.cfg(iterations=2), LossSpec("infonce"))
        _, long = dp_train(g, self.cfg(iterations=9), LossSpec("infonce"))
        assert long.dp_at_delta.eps > short.dp_at_delta.eps

    def test_callback_sees_every_iteration(self):
        g = ring_graph(30, 3)
        seen = []
        dp_train(g, self.cfg(iterations=4), LossSpec("hinge", margin=0.5),
                 callback=lambda t, v: seen.append((t, v)))
        assert [t for t, _ in seen] == [0, 1, 2, 3]
        assert all(isinstance(v, float) and math.isfinite(v) for _, v in seen)

    def test_capacity_error_names_iteration(self):
        g = ring_graph(4, 2)
        with pytest.raises(CapacityError, match="iteration 0"):
            dp_train(g, self.cfg(batch_size=4, k_neg=4), LossSpec("infonce"))

    def test_nonfinite_loss_raises(self):
        g = Graph(num_nodes=2, edges=np.array([[0, 1]]),
                  features=np.full((2, 1), 1e308))
        cfg = self.cfg(batch_size=1, k_neg=1, sigma=0.0, clip_norm=math.inf)
        with pytest.raises(NumericError, match="iteration 0"):
            dp_train(g, cfg, LossSpec("infonce"))

    def test_fixed_batch_descent(self):
        # pure gradient descent on a frozen tuple set: the summed loss must
        # fall strictly for 50 small steps
        rng = np.random.default_rng(1)
        base = init_model("linear", 2, 2, seed=0)
        feats = rng.normal(size=(5, 2))
        tuples = [EdgeTuple(positive=(0, 1), negatives=((0, 2), (1, 3))),
                  EdgeTuple(positive=(2, 3), negatives=((2, 4),)),
                  EdgeTuple(positive=(1, 4), negatives=((4, 0),))]
        loss = LossSpec("infonce")
        w = base.weights.copy()
        prev = math.inf
        for _ in range(50):
            model = dataclasses.replace(base, weights=w.copy())
            pairs = [tuple_loss_grad(model, feats, t, loss) for t in tuples]
            total = float(sum(v for v, _ in pairs))
            assert total < prev
            prev = total
            w = w - 0.05 * np.sum([g for _, g in pairs], axis=0)


class TestEvaluateRanking:
    def two_pair_graph(self, features):
        edges = np.array([[0, 1], [2, 3]])
        return Graph(num_nodes=4, edges=edges,
                     features=np.asarray(features, dtype=np.float64))

    def identity_model(self):
        return EncoderModel(kind="linear", in_dim=2, out_dim=2,
                            weights=[1, 0, 0, 1, 0, 0])

    def test_separable_features_rank_first(self):
        g = self.two_pair_graph([[1, 0], [1, 0], [0, 1], [0, 1]])
        prec, mrr = evaluate_ranking(self.identity_model(), g,
                                     n_candidates=3, seed=0)
        assert (prec, mrr) == (1.0, 1.0)

    def test_ties_break_toward_smaller_id(self):
        # identical features tie every score; edge (2,3) loses to both
        # smaller-id candidates, edge (0,1) to none
        g = self.two_pair_graph([[1, 0]] * 4)
        prec, mrr = evaluate_ranking(self.identity_model(), g,
                                     n_candidates=3, seed=0)
        assert_allclose([prec, mrr], [0.5, (1.0 + 1.0 / 3.0) / 2.0])

    def test_candidate_pool_too_small(self):
        g = self.two_pair_graph([[1, 0]] * 4)
        with pytest.raises(CapacityError, match="non-neighbors"):
            evaluate_ranking(self.identity_model(), g, n_candidates=4, seed=0)

    def test_n_candidates_validated(self):
        g = self.two_pair_graph([[1, 0]] * 4)
        with pytest.raises(ValueError):
            evaluate_ranking(self.identity_model(), g, n_candidates=1, seed=0)


class TestWriteMetricsCsv:
    def test_layout(self, tmp_path):
        path = tmp_path / "metrics.csv"
        write_metrics_csv(path, {"final_loss": 0.25, "eps": 2.0})
        assert path.read_text() == "metric,value\nfinal_loss,0.25\neps,2\n"
