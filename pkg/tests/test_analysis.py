"""Collision counting, witnesses, confusion maps, local mass, masking."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from attnlab import analysis as an
from attnlab import attention as at
from attnlab.errors import DegenerateRowError, ShapeError
from attnlab.kernels import (
    exponential,
    identity,
    leaky_relu,
    make_affine_relu,
    relu,
)
from attnlab.tensor import Rng


def softmax_fn(q, k):
    return at.softmax_scores(q, k)


def linear_fn(kernel):
    return lambda q, k: at.linear_scores(q, k, kernel)


def inline_fn(kernel):
    return lambda q, k: at.inline_scores(q, k, kernel)


class TestCountCollisions:
    def test_identical_queries_are_excluded_by_separation(self):
        q = np.tile(Rng(0).gaussian(1, 4), (6, 1))
        k = Rng(1).gaussian(10, 4)
        rep = an.count_collisions(softmax_fn, q, k)
        assert rep.total_collisions == 0
        assert rep.pairs_separated == 0
        assert rep.pairs_tested == 15

    def test_collinear_quadruple_relu_linear_collides_in_all_six_pairs(self):
        rng = Rng(2)
        base = np.abs(rng.gaussian(1, 6))[0] + 0.1
        base /= np.linalg.norm(base)
        queries = np.stack([s * base for s in (1.0, 2.0, 3.0, 4.0)])
        keys = np.abs(rng.gaussian(12, 6)) + 0.1
        rep = an.count_collisions(linear_fn(relu()), queries, keys)
        assert rep.total_collisions == 6
        assert [c for _, c in rep.per_sample_counts] == [3, 3, 3, 3]

    def test_gaussian_inline_identity_has_no_collisions(self):
        rng = Rng(3)
        queries = rng.gaussian(40, 16)
        keys = rng.gaussian(197, 16)
        rep = an.count_collisions(inline_fn(identity()), queries, keys)
        assert rep.total_collisions == 0
        assert rep.rank_preconditions_met

    def test_rank_precondition_recorded(self):
        rng = Rng(4)
        keys = rng.gaussian(197, 16)
        rep = an.count_collisions(softmax_fn, rng.gaussian(8, 16), keys)
        assert rep.key_rank == 16
        assert rep.key_rank_augmented == 17

    def test_histogram_totals_equal_samples(self):
        rng = Rng(5)
        rep = an.count_collisions(softmax_fn, rng.gaussian(25, 4),
                                  rng.gaussian(30, 4))
        assert sum(rep.histogram_counts) == 25

    @given(st.integers(0, 2**31))
    @settings(max_examples=20, deadline=None)
    def test_query_permutation_permutes_counts(self, seed):
        rng = Rng(seed)
        queries = np.concatenate([
            np.abs(rng.gaussian(2, 4)) + 0.1,
        ] * 2 * 2)  # duplicated rays induce collisions under relu
        keys = np.abs(rng.gaussian(9, 4)) + 0.1
        scale = np.linspace(1.0, 4.0, queries.shape[0])[:, None]
        queries = queries * scale
        rep = an.count_collisions(linear_fn(relu()), queries, keys)
        perm = Rng(seed + 1).permutation(queries.shape[0])
        rep_p = an.count_collisions(linear_fn(relu()), queries[perm], keys)
        counts = np.array([c for _, c in rep.per_sample_counts])
        counts_p = np.array([c for _, c in rep_p.per_sample_counts])
        assert rep_p.total_collisions == rep.total_collisions
        np.testing.assert_array_equal(counts_p, counts[perm])


class TestPower2Histogram:
    def test_bin_edges_double(self):
        bins, counts = an.power2_histogram(np.array([0, 1, 2, 3, 5, 9, 16]))
        assert bins == [(0, 0), (1, 2), (3, 4), (5, 8), (9, 16)]
        assert counts == [1, 2, 1, 1, 2]

    def test_all_zero(self):
        bins, counts = an.power2_histogram(np.zeros(4, dtype=int))
        assert counts[0] == 4 and sum(counts) == 4


class TestCollinearWitness:
    @pytest.mark.parametrize("kernel", [relu(), identity(), leaky_relu()],
                             ids=lambda k: k.kind)
    def test_homogeneous_kernels_get_doubling_witness(self, kernel):
        wit = an.find_collinear_witness(kernel, Rng(6), 5)
        assert wit.alpha == pytest.approx(2.0)
        np.testing.assert_allclose(wit.q, 2.0 * wit.p)
        assert wit.residual <= 1e-10
        assert np.linalg.norm(wit.p - wit.q) >= 0.1

    def test_affine_relu_witness_found_and_verified_by_sweep_oracle(self):
        kernel = make_affine_relu(Rng(7), 2)
        wit = an.find_collinear_witness(kernel, Rng(8), 2)
        assert wit.residual <= 1e-10
        # independent dense angular sweep confirms collinear images exist
        from attnlab.kernels import apply_kernel

        angles = np.linspace(0.0, 2 * np.pi, 5000, endpoint=False)
        pts = np.stack([np.cos(angles), np.sin(angles)], axis=1)
        images = np.asarray(apply_kernel(kernel, pts))
        norms = np.linalg.norm(images, axis=1)
        ok = norms > 1e-9
        unit = images[ok] / norms[ok][:, None]
        gram = np.clip(unit @ unit.T, -1.0, 1.0)
        np.fill_diagonal(gram, 0.0)
        assert gram.max() > 1.0 - 1e-9

    def test_exponential_witness(self):
        kernel = exponential()
        wit = an.find_collinear_witness(kernel, Rng(9), 4)
        assert wit.residual <= 1e-10
        assert wit.alpha != 0.0
        assert np.linalg.norm(wit.p - wit.q) >= 0.1

    @pytest.mark.parametrize("kernel_maker", [
        lambda: relu(),
        lambda: exponential(),
        lambda: make_affine_relu(Rng(10), 3),
    ], ids=["relu", "exponential", "affine_relu"])
    def test_witness_implies_score_collision(self, kernel_maker):
        kernel = kernel_maker()
        wit = an.find_collinear_witness(kernel, Rng(11), 3)
        keys = Rng(12).gaussian(20, 3)
        gap = np.linalg.norm(
            at.linear_scores(wit.p[None, :], keys, kernel)
            - at.linear_scores(wit.q[None, :], keys, kernel)
        )
        assert gap <= 10 * 1e-10  # score collision within 10x witness tolerance


class TestApplyConfusion:
    def test_f1_fixes_unit_nonnegative_queries(self):
        q = np.array([[0.6, 0.8]])
        np.testing.assert_allclose(an.apply_confusion(an.confusion_f1(), q), q,
                                   atol=1e-15)

    def test_f1_collapses_scaled_queries(self):
        q = Rng(13).gaussian(4, 5)
        out1 = an.apply_confusion(an.confusion_f1(), q)
        out2 = an.apply_confusion(an.confusion_f1(), 2.0 * q)
        np.testing.assert_allclose(out1, out2, atol=1e-15)

    def test_f2_with_identity_params_equals_f1(self):
        q = Rng(14).gaussian(4, 3)
        f2 = an.confusion_f2(np.eye(3), np.zeros(3))
        np.testing.assert_array_equal(an.apply_confusion(f2, q),
                                      an.apply_confusion(an.confusion_f1(), q))

    def test_rows_are_unit_norm_or_zero(self):
        q = Rng(15).gaussian(50, 4)
        out = an.apply_confusion(an.confusion_f1(), q)
        norms = np.linalg.norm(out, axis=1)
        assert np.all((np.abs(norms - 1.0) < 1e-12) | (norms == 0.0))

    def test_all_negative_row_maps_to_zero(self):
        q = np.array([[-1.0, -2.0]])
        out = an.apply_confusion(an.confusion_f1(), q)
        np.testing.assert_array_equal(out, [[0.0, 0.0]])


class Test197TokenLayout:
    def test_grid_ids_skip_cls(self):
        ids = an.grid_token_ids(197, (14, 14), cls_index=0)
        assert len(ids) == 196 and ids[0] == 1 and ids[-1] == 196

    def test_bad_layout_rejected(self):
        with pytest.raises(ShapeError):
            an.grid_token_ids(196, (14, 14), cls_index=0)


class TestLocalMass:
    def test_uniform_197_gives_exact_baseline(self):
        scores = np.full((197, 197), 1.0 / 197)
        mass = an.local_mass(scores, (14, 14), cls_index=0)
        assert mass == pytest.approx(9.0 / 197, abs=5e-17)
        assert an.uniform_local_mass_baseline(197) == 9.0 / 197

    def test_identity_scores_give_unit_mass(self):
        scores = np.eye(16)
        assert an.local_mass(scores, (4, 4)) == pytest.approx(1.0, abs=1e-15)

    def test_matches_nine_term_scalar_oracle(self):
        rng = Rng(16)
        scores = at.softmax_scores(rng.gaussian(64, 8), rng.gaussian(64, 8))
        grid = (8, 8)
        nbr = at.neighbor_indices(grid)
        per_query = np.zeros(64)
        for i in range(64):
            for j in range(9):
                if nbr[i, j] >= 0:
                    per_query[i] += scores[i, nbr[i, j]]
        interior = [i for i in range(64)
                    if 1 <= i // 8 <= 6 and 1 <= i % 8 <= 6]
        expected = per_query[interior].mean()
        assert an.local_mass(scores, grid) == pytest.approx(expected, abs=1e-12)

    def test_local_mass_zero_after_local3_masking(self):
        rng = Rng(17)
        scores = at.softmax_scores(rng.gaussian(64, 8), rng.gaussian(64, 8))
        masked = an.masked_scores(scores, (8, 8), an.mask_local(3), Rng(18))
        assert an.local_mass(masked, (8, 8)) == pytest.approx(0.0, abs=1e-15)


class TestMaskedScores:
    def test_none_returns_equal_copy(self):
        rng = Rng(19)
        scores = at.softmax_scores(rng.gaussian(9, 4), rng.gaussian(9, 4))
        out = an.masked_scores(scores, (3, 3), an.mask_none())
        np.testing.assert_array_equal(out, scores)
        assert out is not scores

    def test_all_but_one_key_gets_full_weight(self):
        scores = np.full((4, 4), 0.25)
        keep = np.zeros((4, 4), dtype=bool)
        keep[:, 2] = True
        out = an.renormalize_masked(scores, keep)
        np.testing.assert_allclose(out[:, 2], np.ones(4), atol=1e-15)
        assert np.abs(out.sum(axis=1) - 1.0).max() <= 1e-12

    def test_local3_on_uniform_14x14_interior_rows(self):
        n = 196
        scores = np.full((n, n), 1.0 / n)
        out = an.masked_scores(scores, (14, 14), an.mask_local(3))
        interior = 14 + 1  # row 1, col 1
        row = out[interior]
        nonzero = row[row > 0]
        np.testing.assert_allclose(nonzero, 1.0 / 187, atol=1e-15)
        assert (row == 0).sum() == 9

    def test_corner_query_small_grid_renormalizes_over_survivors(self):
        scores = np.full((16, 16), 1.0 / 16)
        out = an.masked_scores(scores, (4, 4), an.mask_local(3))
        # the 3x3 patch of the corner query covers 4 cells; 12 survive
        np.testing.assert_allclose(out[0][out[0] > 0], 1.0 / 12, atol=1e-15)

    def test_random_mask_drops_outside_neighborhood_only(self):
        rng = Rng(20)
        scores = at.softmax_scores(rng.gaussian(64, 8), rng.gaussian(64, 8))
        out = an.masked_scores(scores, (8, 8), an.mask_random(9), Rng(21))
        nbr = at.neighbor_indices((8, 8))
        for i in range(64):
            zeroed = set(np.flatnonzero(out[i] == 0.0).tolist())
            assert len(zeroed) == 9
            patch = set(nbr[i][nbr[i] >= 0].tolist())
            assert not (zeroed & patch)

    def test_rows_sum_to_one_for_every_mask(self):
        rng = Rng(22)
        scores = at.softmax_scores(rng.gaussian(64, 8), rng.gaussian(64, 8))
        for spec in (an.mask_none(), an.mask_local(3), an.mask_local(5),
                     an.mask_local(7), an.mask_random(0), an.mask_random(25)):
            out = an.masked_scores(scores, (8, 8), spec, Rng(23))
            assert np.abs(out.sum(axis=1) - 1.0).max() <= 1e-9

    def test_cls_row_untouched_and_cls_key_never_masked(self):
        rng = Rng(24)
        scores = at.softmax_scores(rng.gaussian(197, 8), rng.gaussian(197, 8))
        out = an.masked_scores(scores, (14, 14), an.mask_local(3),
                               cls_index=0)
        np.testing.assert_allclose(out[0], scores[0], atol=1e-15)
        assert np.all(out[:, 0] > 0)

    def test_degenerate_row_raises(self):
        scores = np.zeros((9, 9))
        scores[:, 4] = 1.0  # all mass on the center key
        with pytest.raises(DegenerateRowError):
            an.masked_scores(scores, (3, 3), an.mask_local(3))

    def test_mask_spec_validation(self):
        with pytest.raises(ValueError):
            an.mask_local(4)
        with pytest.raises(ValueError):
            an.mask_random(-1)
        with pytest.raises(ValueError):
            an.MaskSpec("banana")

    def test_random_mask_needs_rng(self):
        with pytest.raises(ValueError):
            an.masked_scores(np.full((9, 9), 1 / 9), (3, 3), an.mask_random(2))
