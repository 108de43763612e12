"""Cost models, slope fitting, and the benchmark harness plumbing."""

import numpy as np
import pytest

from attnlab import attention as at
from attnlab import bench
from attnlab.kernels import identity
from attnlab.tensor import Rng


class TestBlockedSoftmaxKernel:
    def test_matches_reference_attention(self):
        rng = Rng(0)
        q, k, v = rng.gaussian(300, 8), rng.gaussian(300, 8), rng.gaussian(300, 8)
        blocked = bench.softmax_attention_explicit(q, k, v)
        reference = at.attend_explicit(at.softmax_scores(q, k), v)
        np.testing.assert_allclose(blocked, reference, atol=1e-12)


class TestModeledCosts:
    def test_softmax_quadruples_when_n_doubles(self):
        c1 = at.madds_softmax_explicit(1000, 16)
        c2 = at.madds_softmax_explicit(2000, 16)
        assert c2 == 4 * c1

    def test_inline_doubles_when_n_doubles(self):
        c1 = at.madds_inline_fast(1000, 16)
        c2 = at.madds_inline_fast(2000, 16)
        assert c2 == 2 * c1

    def test_counts_are_exact_integers(self):
        assert at.madds_inline_fast(128, 16) == 2 * 128 * 16 * 16 + 128 * 16
        assert at.madds_residual(128, 16) == 128 * 16 + 16 * 16 + 9 * 128 * 16
        assert isinstance(at.madds_inline_fast(128, 16), int)


class TestFitSlope:
    def _records(self, times, variant="inline_fast"):
        return [bench.BenchRecord(variant, n, 16, 1, None, t, 0, 5)
                for n, t in times]

    def test_linear_synthetic_slope(self):
        recs = self._records([(n, 2e-7 * n) for n in (256, 512, 1024, 2048, 4096)])
        fit = bench.fit_slope(recs)
        assert fit.slope == pytest.approx(1.0, abs=1e-9)
        assert fit.r_squared >= 0.999999

    def test_quadratic_synthetic_slope(self):
        recs = self._records([(n, 3e-10 * n * n) for n in (256, 512, 1024, 2048)])
        fit = bench.fit_slope(recs)
        assert fit.slope == pytest.approx(2.0, abs=1e-9)

    def test_needs_four_records(self):
        with pytest.raises(ValueError):
            bench.fit_slope(self._records([(256, 1.0), (512, 2.0), (1024, 4.0)]))

    def test_rejects_mixed_variants(self):
        recs = (self._records([(256, 1.0), (512, 2.0)])
                + self._records([(1024, 4.0), (2048, 8.0)], variant="softmax_explicit"))
        with pytest.raises(ValueError):
            bench.fit_slope(recs)

    def test_skipped_records_excluded(self):
        recs = self._records([(n, 1e-7 * n) for n in (256, 512, 1024, 2048)])
        recs.append(bench.BenchRecord("inline_fast", 4096, 16, 1, None, 0.0, 0,
                                      5, skipped=True))
        fit = bench.fit_slope(recs)
        assert fit.slope == pytest.approx(1.0, abs=1e-6)


class TestSweeps:
    def test_sequence_sweep_requires_increasing_n(self):
        with pytest.raises(ValueError):
            bench.sweep_sequence_length(["inline_fast"], [256, 256], 8, Rng(1))

    def test_sequence_sweep_records(self):
        recs = bench.sweep_sequence_length(["inline_fast"], [64, 128], 8,
                                           Rng(2), repetitions=5)
        assert [r.n for r in recs] == [64, 128]
        assert all(r.median_seconds > 0 for r in recs)
        assert recs[0].modeled_madds == at.madds_inline_fast(64, 8)

    def test_window_sweep_modeled_costs(self):
        recs = bench.sweep_window_size([4, 8], (8, 8), 4, Rng(3),
                                       repetitions=5,
                                       variants=("softmax_explicit",
                                                 "inline_fast"))
        by = {(r.variant, r.window): r for r in recs}
        # divisive/subtractive fast paths: window-independent modeled cost
        assert (by[("inline_fast", 4)].modeled_madds
                == by[("inline_fast", 8)].modeled_madds
                == at.madds_inline_fast(64, 4))
        # explicit softmax: per-window quadratic times window count
        assert (by[("softmax_explicit", 4)].modeled_madds
                == 4 * at.madds_softmax_explicit(16, 4))
        assert (by[("softmax_explicit", 8)].modeled_madds
                == at.madds_softmax_explicit(64, 4))

    def test_repetition_floor(self):
        with pytest.raises(ValueError):
            bench.time_kernel(lambda: None, lambda: (), repetitions=3)


class TestMeasuredWindowSweep:
    """Wall-clock behavior at fixed N; slow-ish, single measurement pass."""

    def test_softmax_window_cost_ratio_exceeds_ten(self):
        # N = 56^2 tokens; quadratic per-window cost makes w=56 dwarf w=7
        recs = bench.sweep_window_size([7, 56], (56, 56), 16, Rng(4),
                                       repetitions=5,
                                       variants=("softmax_explicit",))
        by = {r.window: r.median_seconds for r in recs}
        assert by[56] / by[7] > 10.0

    def test_inline_timing_monotone_in_n(self):
        recs = bench.sweep_sequence_length(["inline_fast"],
                                           [512, 1024, 2048, 4096], 16, Rng(5),
                                           repetitions=5)
        times = [r.median_seconds for r in recs]
        for earlier, later in zip(times, times[1:]):
            assert later >= 0.8 * earlier  # nondecreasing with 20% slack
