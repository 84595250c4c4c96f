"""Frequency-aware and flat per-tuple clipping."""

import numpy as np
import pytest
from numpy.testing import assert_allclose

from reldp.clipping import freq_clip, standard_clip
from reldp.sampling import EdgeTuple, build_batch


def tup(u, v, *negs):
    return EdgeTuple(positive=(u, v), negatives=tuple(negs))


class TestFreqClip:
    def test_hand_worked_scales(self):
        # node 0 occurs in both tuples, so both see max_freq = 2
        batch = build_batch([tup(0, 1, (0, 3)), tup(0, 2, (2, 4))])
        g1 = np.array([3.0, 0.0])   # norm 3, threshold c/(2*2) = 0.25
        g2 = np.array([0.0, 0.1])   # norm 0.1 is already under 0.25
        out = freq_clip(batch, [g1, g2], 1.0)
        assert_allclose(out, [0.25, 0.1])

    def test_saturated_norm_exact(self):
        batch = build_batch([tup(0, 1, (0, 2))])
        g = np.array([5.0, 12.0])  # norm 13
        out = freq_clip(batch, [g], 2.0)
        assert_allclose(np.linalg.norm(out), 1.0, rtol=1e-15)
        assert_allclose(out, g / 13.0, rtol=1e-15)

    def test_small_gradients_pass_through(self):
        batch = build_batch([tup(0, 1, (0, 2)), tup(3, 4, (4, 5))])
        g = [np.array([0.01, 0.0]), np.array([0.0, 0.02])]
        assert_allclose(freq_clip(batch, g, 1.0), [0.01, 0.02])

    def test_infinite_clip_norm_sums_raw(self):
        batch = build_batch([tup(0, 1, (0, 2))])
        g = np.array([100.0, -40.0])
        assert_allclose(freq_clip(batch, [g], np.inf), g)

    def test_count_mismatch(self):
        batch = build_batch([tup(0, 1, (0, 2))])
        with pytest.raises(ValueError, match="gradients"):
            freq_clip(batch, [], 1.0)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            freq_clip(build_batch([]), [], 1.0)

    def test_nonfinite_gradient_rejected(self):
        batch = build_batch([tup(0, 1, (0, 2))])
        with pytest.raises(ValueError, match="NaN"):
            freq_clip(batch, [np.array([np.nan, 0.0])], 1.0)

    def test_per_node_contribution_bounded(self):
        # three tuples all touching node 0: each clipped to c/6, sum <= c/2
        batch = build_batch([tup(0, 1, (0, 4)), tup(0, 2, (0, 5)),
                             tup(0, 3, (0, 6))])
        grads = [np.array([10.0, 0.0])] * 3
        out = freq_clip(batch, grads, 1.0)
        assert np.linalg.norm(out) <= 0.5 + 1e-12


class TestStandardClip:
    def test_norms_capped_at_c(self):
        g = [np.array([3.0, 4.0]), np.array([0.3, 0.4])]
        out = standard_clip(g, 1.0)
        assert_allclose(out, [3.0 / 5 + 0.3, 4.0 / 5 + 0.4])

    def test_zero_gradient_unchanged(self):
        assert_allclose(standard_clip([np.zeros(3)], 1.0), np.zeros(3))

    def test_clip_norm_validated(self):
        with pytest.raises(ValueError):
            standard_clip([np.ones(2)], 0.0)
