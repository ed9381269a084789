import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from abkd.divergence import DivergenceSpec, Family
from abkd.dynamics import bound_check, delta, first_order_delta, gradient_bound, normalizer_spread, step
from abkd.errors import InputValidationError, ParameterError
from abkd.prob import softmax
from conftest import logits, simplex

FKLD = DivergenceSpec(Family.FKLD)
RKLD = DivergenceSpec(Family.RKLD)
SPECS = [
    FKLD,
    RKLD,
    DivergenceSpec(Family.WSD, wsd_forward_weight=0.5, wsd_reverse_weight=0.5),
    DivergenceSpec(Family.JSD),
    DivergenceSpec(Family.HELLINGER),
    DivergenceSpec(Family.ALPHA, alpha=0.4),
    DivergenceSpec.ab(0.3, 0.8),
    DivergenceSpec.ab(0.0, 0.5),
    DivergenceSpec.ab(1.2, 0.0),
    DivergenceSpec.ab(0.6, -0.6),
]
# frozen from exact softmax arithmetic in mpmath
Q_AFTER = [0.51998934015558179, 0.48001065984441821]
LOG_R = [0.039200213242355299, -0.040799786757644701]


class TestStep:
    def test_fkld_example(self):
        tr = step([0.9, 0.1], [0.0, 0.0], FKLD, 0.1)
        np.testing.assert_allclose(tr.grad, [-0.4, 0.4], atol=1e-15)
        np.testing.assert_allclose(tr.q_after, Q_AFTER, rtol=1e-14)
        np.testing.assert_allclose(tr.q_after, [0.519989, 0.480011], atol=1e-6)
        np.testing.assert_allclose(tr.log_r, LOG_R, rtol=1e-12)
        assert delta(tr, 0, 1) == pytest.approx(0.08, abs=1e-15)

    def test_p_equals_q(self):
        f = np.array([0.3, -1.0, 0.2])
        tr = step(softmax(f), f, DivergenceSpec.ab(0.5, 0.5), 0.1)
        np.testing.assert_allclose(tr.grad, 0.0, atol=1e-15)
        np.testing.assert_allclose(tr.log_r, 0.0, atol=1e-15)
        assert tr.normalizer == pytest.approx(0.0, abs=1e-15)
        assert delta(tr, 0, 2) == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(np.abs(tr.log_r) - tr.bound_rhs, -tr.bound_rhs, atol=1e-15)

    def test_bad_eta(self):
        for eta in (0.0, -0.1):
            with pytest.raises(ParameterError):
                step([0.5, 0.5], [0.0, 0.0], FKLD, eta)

    def test_batch_logits_rejected(self):
        with pytest.raises(InputValidationError):
            step([0.5, 0.5], [[0.0, 0.0]], FKLD, 0.1)

    def test_q_after_normalized(self, rng):
        for spec in SPECS:
            tr = step(rng.dirichlet(np.ones(7)), rng.normal(size=7), spec, 0.3)
            assert abs(tr.q_after.sum() - 1.0) <= 1e-12


class TestDelta:
    def test_antisymmetric(self, rng):
        tr = step(rng.dirichlet(np.ones(4)), rng.normal(size=4), RKLD, 0.1)
        assert delta(tr, 0, 2) == -delta(tr, 2, 0)

    @pytest.mark.parametrize("pair", [(0, 0), (0, 5), (-1, 0)])
    def test_bad_indices(self, pair):
        tr = step([0.5, 0.3, 0.2], [0.0, 0.0, 0.0], FKLD, 0.1)
        with pytest.raises(InputValidationError):
            delta(tr, *pair)

    def test_matches_exact_oracle(self, rng):
        for _ in range(5):
            p, f = rng.dirichlet(np.ones(5)), rng.normal(size=5)
            tr = step(p, f, RKLD, 0.2)
            ref = oracles.step_delta([oracles.mp.mpf(x) for x in p], f, oracles.rkld_grad, oracles.mp.mpf(0.2), 1, 3)
            assert delta(tr, 1, 3) == pytest.approx(float(ref), rel=1e-12, abs=1e-15)

    @pytest.mark.parametrize("eta", [0.4, 0.1, 0.025])
    def test_first_order_form_is_exact(self, rng, eta):
        # the shared normalizer cancels, so -eta (g1 - g2) is Delta itself at
        # every step size, not only to first order
        for spec in SPECS:
            tr = step(rng.dirichlet(np.ones(6)), rng.normal(scale=2, size=6), spec, eta)
            assert abs(delta(tr, 0, 1) - first_order_delta(tr, 0, 1)) <= 1e-12 * max(1.0, abs(delta(tr, 0, 1)))

    def test_fkld_equal_allocation(self, rng):
        # with q(y1) = q(y2), FKLD's Delta depends on p(y1) - p(y2) only
        for _ in range(200):
            f = rng.normal(size=5)
            f[1] = f[0]
            p = rng.dirichlet(np.ones(5))
            tr = step(p, f, FKLD, 0.1)
            assert delta(tr, 0, 1) == pytest.approx(0.1 * (p[0] - p[1]), abs=1e-10)


class TestInvariants:
    @given(simplex(n=6), logits(6), st.floats(0.01, 1.0), st.sampled_from(SPECS))
    def test_log_ratio_identity(self, p, f, eta, spec):
        tr = step(p, f, spec, eta)
        assert normalizer_spread(tr) <= 1e-10

    @given(simplex(n=6), logits(6), st.floats(0.01, 1.0), st.sampled_from(SPECS))
    def test_bound(self, p, f, eta, spec):
        assert bound_check(step(p, f, spec, eta)) <= 1e-10

    @given(simplex(n=5), logits(5), st.floats(0.1, 1.5), st.floats(0.0, 1.5))
    def test_ab_bound(self, p, f, a, b):
        assert bound_check(step(p, f, DivergenceSpec.ab(a, b), 0.2)) <= 1e-10

    def test_bound_nonnegative(self, rng):
        for spec in SPECS:
            b = gradient_bound(rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5)), spec)
            assert np.all(b >= 0)

    def test_bound_dominates_gradient(self, rng):
        from abkd.gradient import logit_gradient

        for spec in SPECS:
            for _ in range(50):
                p, q = rng.dirichlet(np.ones(5)), rng.dirichlet(np.ones(5))
                assert np.all(np.abs(logit_gradient(p, q, spec)) <= gradient_bound(p, q, spec) + 1e-12)
