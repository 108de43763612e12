"""Randomized fast-vs-explicit equivalence suite behavior."""

from attnlab.equiv import equivalence_suite, worst_case


class TestEquivalenceSuite:
    def test_deterministic_given_seed(self):
        a = equivalence_suite(11, cases=20)
        b = equivalence_suite(11, cases=20)
        assert [(c.variant, c.kernel, c.n, c.d, c.max_abs_diff) for c in a] \
            == [(c.variant, c.kernel, c.n, c.d, c.max_abs_diff) for c in b]

    def test_all_cases_within_tolerance(self):
        cases = equivalence_suite(3, cases=60)
        assert len(cases) == 60
        assert worst_case(cases) <= 1e-9

    def test_covers_both_variants_and_many_kernels(self):
        cases = equivalence_suite(5, cases=80)
        assert {c.variant for c in cases} == {"linear", "inline"}
        assert len({c.kernel for c in cases}) >= 4

    def test_perturbation_trips_the_gate(self):
        cases = equivalence_suite(7, cases=10, perturb=1e-6)
        assert worst_case(cases) > 1e-9
