import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmon import nn

LAMBDA = 1.0507009873554805
ALPHA = 1.6732632423543772


def central_diff(f, x, h=1e-5):
    grad = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (f(xp) - f(xm)) / (2 * h)
    return grad


def max_rel_err(a, b, floor=1e-8):
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


class TestSelu:

    def test_zero(self):
        assert nn.selu(np.array([0.0]))[0] == 0.0

    def test_one(self):
        assert nn.selu(np.array([1.0]))[0] == pytest.approx(LAMBDA, rel=1e-15)

    def test_negative_limit(self):
        assert nn.selu(np.array([-800.0]))[0] == pytest.approx(-LAMBDA * ALPHA, rel=1e-15)
        assert -LAMBDA * ALPHA == pytest.approx(-1.75809, abs=1e-5)

    def test_against_torch_constants(self):
        torch = pytest.importorskip("torch")
        x = np.linspace(-4, 4, 81)
        expected = torch.nn.functional.selu(torch.tensor(x, dtype=torch.float64)).numpy()
        np.testing.assert_allclose(nn.selu(x), expected, rtol=1e-14, atol=1e-15)

    def test_backward_branches(self):
        assert nn.selu_backward(np.array([1.0]), np.array([1.0]))[0] == pytest.approx(LAMBDA)
        assert nn.selu_backward(np.array([0.0]), np.array([1.0]))[0] == pytest.approx(LAMBDA * ALPHA)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 3))
        up = rng.standard_normal((4, 3))
        numeric = central_diff(lambda z: np.sum(nn.selu(z) * up), x)
        assert max_rel_err(nn.selu_backward(x, up), numeric) <= 1e-6

    def test_backward_shape_mismatch(self):
        with pytest.raises(ValueError):
            nn.selu_backward(np.zeros((2, 2)), np.zeros((2, 3)))


class TestSoftmax:

    def test_uniform(self):
        np.testing.assert_allclose(nn.softmax_rows(np.zeros((1, 3))), [[1 / 3] * 3])

    def test_no_overflow(self):
        out = nn.softmax_rows(np.array([[1000.0, 0.0]]))
        np.testing.assert_array_equal(out, [[1.0, 0.0]])

    @settings(max_examples=100, deadline=None)
    @given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 6)),
                  elements=st.floats(-50, 50)))
    def test_row_stochastic_and_positive(self, x):
        s = nn.softmax_rows(x)
        np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(s > 0)

    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal((5, 4))
        up = rng.standard_normal((5, 4))
        numeric = central_diff(lambda z: np.sum(nn.softmax_rows(z) * up), x)
        analytic = nn.softmax_rows_backward(nn.softmax_rows(x), up)
        assert max_rel_err(analytic, numeric) <= 1e-6


class TestDropout:

    def test_rate_zero_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        out, mask = nn.dropout(x, 0.0, np.random.default_rng(0))
        assert out is x and mask is None

    def test_eval_is_identity(self):
        x = np.arange(6.0).reshape(2, 3)
        out, _ = nn.dropout(x, 0.9, None, training=False)
        assert out is x

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            nn.dropout(np.ones(3), 1.0, np.random.default_rng(0))

    def test_unbiased_in_expectation(self):
        rng = np.random.default_rng(0)
        x = np.array([[1.0, -2.0, 3.0]])
        total = np.zeros_like(x)
        trials = 10_000
        for _ in range(trials):
            total += nn.dropout(x, 0.5, rng)[0]
        np.testing.assert_allclose(total / trials, x, rtol=0.02)

    def test_backward_uses_mask(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((4, 4))
        out, mask = nn.dropout(x, 0.5, rng)
        assert set(np.unique(mask)) <= {0.0, 2.0}
        np.testing.assert_array_equal(nn.dropout_backward(mask, np.ones_like(x)), mask)


class TestAdam:

    def test_zero_gradient_keeps_params(self):
        p = {"w": np.array([1.0, -2.0])}
        opt = nn.Adam(lr=0.1)
        for _ in range(5):
            opt.step(p, {"w": np.zeros(2)})
        np.testing.assert_array_equal(p["w"], [1.0, -2.0])

    @pytest.mark.parametrize("g", [3.0, -0.25])
    def test_first_step_is_lr_sign(self, g):
        p = {"w": np.array([0.0])}
        nn.Adam(lr=0.01).step(p, {"w": np.array([g])})
        # m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        assert p["w"][0] == pytest.approx(-0.01 * np.sign(g), rel=1e-7)

    def test_quadratic_bowl(self):
        p = {"w": np.array([1.0])}
        opt = nn.Adam(lr=0.1)
        path = []
        for _ in range(200):
            opt.step(p, {"w": 2 * p["w"]})
            path.append(abs(p["w"][0]))
        # bias-corrected Adam oscillates around the minimum; the envelope shrinks
        assert path[-1] < 0.05
        assert max(path[100:]) < max(path[:100])
        assert all(b < a for a, b in zip(path[:9], path[1:10]))

    def test_non_finite_gradient_aborts(self):
        p = {"w": np.array([1.0])}
        with pytest.raises(nn.NonFiniteError, match="'w'"):
            nn.Adam().step(p, {"w": np.array([np.nan])})
        assert p["w"][0] == 1.0


def test_glorot_bounds():
    w = nn.glorot_uniform(30, 10, np.random.default_rng(0))
    assert w.shape == (30, 10)
    assert np.abs(w).max() <= np.sqrt(6 / 40)
