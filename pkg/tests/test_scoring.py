#!/usr/bin/env python3

import math
import unittest

import numpy as np
from pydantic import ValidationError
from scipy.integrate import quad

from src.processors.covariance import CovarianceKernel
from src.processors.scoring import (LOG_FLOOR, SeriesMatrix, SparsityParams, default_lambda2, f1, f2,
                                    geometry_penalty, log_p_value, penalized_score, penalized_scores,
                                    sl_score, sl_term, sl_terms, window_mean, z_statistic)


class TestSeriesMatrix(unittest.TestCase):
    def test_prefix_sums(self):
        m = SeriesMatrix([[1.0, 1.0, 3.0, 3.0], [2.0, 0.0, 0.0, 1.0]])
        self.assertEqual((m.N, m.T), (2, 4))
        np.testing.assert_array_equal(m.prefix[0], [0.0, 1.0, 2.0, 5.0, 8.0])
        self.assertEqual(m.names, ["s1", "s2"])

    def test_rejects_bad_shapes(self):
        with self.assertRaises(ValueError):
            SeriesMatrix([[1.0]])
        with self.assertRaises(ValueError):
            SeriesMatrix([[1.0, np.nan]])

    def test_window_mean(self):
        m = SeriesMatrix([[1.0, 1.0, 3.0, 3.0], [2.0, 4.0, 6.0, 0.0]])
        self.assertEqual(window_mean(m, 0, 0, 2), 1.0)
        self.assertEqual(window_mean(m, 0, 2, 4), 3.0)
        self.assertEqual(window_mean(m, 1, 0, 3), 4.0)
        with self.assertRaises(ValueError):
            window_mean(m, 0, 2, 2)


class TestZStatistic(unittest.TestCase):
    def test_examples(self):
        m = SeriesMatrix([[1.0, 1.0, 3.0, 3.0]])
        self.assertAlmostEqual(z_statistic(m, 0, CovarianceKernel.independence(), (0, 2, 4)), 2.0, places=12)
        flat = SeriesMatrix([[5.0, 5.0, 5.0]])
        self.assertEqual(z_statistic(flat, 0, CovarianceKernel.stationary_ar1(0.3), (0, 1, 3)), 0.0)
        rw = SeriesMatrix([[0.0, 2.0]])
        self.assertAlmostEqual(z_statistic(rw, 0, CovarianceKernel.random_walk(1.0), (0, 1, 2)), 2.0, places=12)

    def test_invalid_window(self):
        m = SeriesMatrix([[1.0, 2.0, 3.0]])
        with self.assertRaises(ValueError):
            z_statistic(m, 0, CovarianceKernel.independence(), (1, 1, 3))
        with self.assertRaises(ValueError):
            z_statistic(m, 0, CovarianceKernel.independence(), (0, 1, 4))


class TestLogPValue(unittest.TestCase):
    def test_examples(self):
        self.assertEqual(log_p_value(0.0), 0.0)
        self.assertAlmostEqual(log_p_value(2.0), math.log(0.04550026), places=5)
        self.assertAlmostEqual(log_p_value(-2.0), log_p_value(2.0), places=15)
        self.assertAlmostEqual(log_p_value(40.0), -803.9153, places=3)

    def test_tail_switch_is_continuous(self):
        below = log_p_value(np.nextafter(37.0, 0.0))
        above = log_p_value(np.nextafter(37.0, 100.0))
        self.assertLess(abs(below - above) / abs(below), 1e-12)

    def test_monotone_and_finite(self):
        z = np.arange(0.0, 50.5, 0.5)
        lp = log_p_value(z)
        self.assertEqual(lp.shape, z.shape)
        self.assertTrue(np.all(lp <= 0.0))
        self.assertTrue(np.all(np.diff(lp) < 0))
        big = log_p_value(np.array([1e3, 1e6, 1e8, -1e8]))
        self.assertTrue(np.all(np.isfinite(big)))

    def test_rejects_non_finite(self):
        with self.assertRaises(ValueError):
            log_p_value(np.inf)
        with self.assertRaises(ValueError):
            log_p_value(np.array([0.0, np.nan]))


class TestTransforms(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(f1(1.0), -0.25, places=14)
        self.assertEqual(f2(1.0), -1.0)
        self.assertAlmostEqual(f2(0.25), 0.0, places=14)
        self.assertAlmostEqual(f1(log_p=-2.0), math.exp(2.0) / 16.0 - 0.5, places=12)
        self.assertAlmostEqual(f1(log_p=-2.0), -0.0381840, places=7)

    def test_domain(self):
        with self.assertRaises(ValueError):
            f1(0.0)
        with self.assertRaises(ValueError):
            f2(1.5)
        with self.assertRaises(ValueError):
            f1(log_p=0.1)

    def test_integrate_to_zero(self):
        # p = exp(-x), dp = exp(-x) dx; the f1 tail beyond x0 is 1/(2 + x0) - exp(-x0)/2
        x0 = 600.0
        body, _ = quad(lambda x: f1(log_p=-x) * math.exp(-x), 0.0, x0, limit=400)
        tail = 1.0 / (2.0 + x0) - 0.5 * math.exp(-x0)
        self.assertLess(abs(body + tail), 1e-6)
        body, _ = quad(lambda x: f2(log_p=-x) * math.exp(-x), 0.0, 200.0, limit=400)
        self.assertLess(abs(body), 1e-6)


class TestSlTerm(unittest.TestCase):
    def setUp(self):
        self.params = SparsityParams(lambda1=1.0, lambda2=2.0, N=100)

    def test_examples(self):
        zero = SparsityParams(lambda1=0.0, lambda2=1.5, N=100)
        self.assertAlmostEqual(sl_term(math.log(0.25), zero), 0.0, places=12)
        self.assertAlmostEqual(sl_term(0.0, self.params), math.log(0.8952889542), places=9)
        self.assertAlmostEqual(sl_term(0.0, self.params), -0.110609, places=6)
        self.assertAlmostEqual(sl_term(math.log(1e-12), self.params), 17.777, places=2)

    def test_matches_direct_formula(self):
        w1, w2 = self.params.weight1, self.params.weight2
        for p in (1e-300, 1e-50, 1e-5, 0.3, 0.9):
            direct = math.log(1.0 + w1 * f1(p) + w2 * f2(p))
            self.assertAlmostEqual(sl_term(math.log(p), self.params), direct, places=9)

    def test_no_overflow_for_tiny_p(self):
        value = sl_term(-1000.0, self.params)
        expected = math.log(self.params.weight1) + 1000.0 - 2.0 * math.log(1002.0)
        self.assertTrue(math.isfinite(value))
        self.assertAlmostEqual(value, expected, places=6)
        values, floored = sl_terms(log_p_value(np.array([1e8, 1e4])), self.params)
        self.assertTrue(np.all(np.isfinite(values)))
        self.assertEqual(floored, 0)

    def test_monotone_in_p(self):
        lp = np.linspace(math.log(1e-300), math.log(1e-2), 2000)
        values, _ = sl_terms(lp, self.params)
        self.assertTrue(np.all(np.diff(values) <= 1e-12))

    def test_guard_floor(self):
        params = SparsityParams(lambda1=1.0, lambda2=1.4, N=2)
        values, floored = sl_terms(np.array([0.0, -30.0]), params)
        self.assertEqual(floored, 1)
        self.assertEqual(values[0], LOG_FLOOR)
        self.assertTrue(values[1] > 0)

    def test_unit_mean_by_quadrature(self):
        # E[exp(l(p))] = 1 for uniform p; beyond x0 only the f1 term contributes noticeably
        params = SparsityParams(lambda1=1.0, lambda2=1.94, N=500)
        x0 = 600.0
        body, _ = quad(lambda x: math.exp(sl_term(-x, params) - x), 0.0, x0, limit=400)
        tail = params.weight1 / (2.0 + x0)
        self.assertLess(abs(body + tail - 1.0), 1e-6)

    def test_truncated_mean_by_simulation(self):
        params = SparsityParams(lambda1=1.0, lambda2=1.94, N=500)
        p0 = 1e-4
        rng = np.random.default_rng(5)
        p = rng.uniform(0.0, 1.0, size=200000)
        values, _ = sl_terms(np.log(p[p > p0]), params)
        observed = np.exp(values).sum() / p.size
        int_f1 = 0.5 - 1.0 / (2.0 - math.log(p0)) - 0.5 * (1.0 - p0)
        int_f2 = 2.0 * (1.0 - math.sqrt(p0)) - 2.0 * (1.0 - p0)
        expected = (1.0 - p0) + params.weight1 * int_f1 + params.weight2 * int_f2
        self.assertAlmostEqual(observed, expected, delta=0.01)


class TestSlScore(unittest.TestCase):
    def test_examples(self):
        params = SparsityParams(lambda1=0.0, lambda2=1.0, N=10)
        self.assertAlmostEqual(sl_score(np.full(10, math.log(0.25)), params), 0.0, places=12)
        pair = SparsityParams(lambda1=1.0, lambda2=1.0, N=2)
        self.assertAlmostEqual(sl_score(np.array([-1.0, -1.0]), pair), 2.0 * sl_term(-1.0, pair), places=14)

    def test_length_mismatch(self):
        params = SparsityParams(lambda1=1.0, lambda2=1.0, N=3)
        with self.assertRaises(ValueError):
            sl_score(np.zeros(2), params)


class TestPenalty(unittest.TestCase):
    def test_examples(self):
        self.assertAlmostEqual(penalized_score(3.5, 2000, (0, 1000, 2000)), 3.5, places=14)
        self.assertAlmostEqual(penalized_score(3.5, 2000, (0, 100, 200)), 3.5 - math.log(10.0), places=12)
        a = float(geometry_penalty(1000, 0, 10, 30))
        b = float(geometry_penalty(1000, 0, 20, 60))
        self.assertAlmostEqual(a - b, math.log(2.0), places=12)

    def test_default_lambda2(self):
        self.assertEqual(round(default_lambda2(2000), 2), 1.94)
        self.assertEqual(round(default_lambda2(3849), 2), 1.98)
        self.assertAlmostEqual(default_lambda2(math.exp(math.e)), math.sqrt(math.e), places=12)
        with self.assertRaises(ValueError):
            default_lambda2(2)


class TestPenalizedScores(unittest.TestCase):
    def test_matches_scalar_path(self):
        rng = np.random.default_rng(2)
        m = SeriesMatrix(rng.normal(size=(6, 40)))
        kernel = CovarianceKernel.stationary_ar1(0.4, 1.0)
        params = SparsityParams(lambda1=1.0, lambda2=1.2, N=6)
        s = np.array([0, 5, 10, 0, 30])
        t = np.array([1, 15, 20, 20, 35])
        u = np.array([2, 25, 40, 40, 40])
        scores, floored = penalized_scores(m, kernel, params, 40, s, t, u)
        self.assertEqual(floored, 0)
        for j in range(len(s)):
            w = (int(s[j]), int(t[j]), int(u[j]))
            lp = np.array([log_p_value(z_statistic(m, n, kernel, w)) for n in range(m.N)])
            expected = penalized_score(sl_score(lp, params), 40, w)
            self.assertAlmostEqual(scores[j], expected, places=9)

    def test_empty(self):
        m = SeriesMatrix(np.zeros((2, 5)))
        params = SparsityParams(lambda1=1.0, lambda2=1.0, N=2)
        scores, floored = penalized_scores(m, CovarianceKernel.independence(), params, 5, [], [], [])
        self.assertEqual(scores.size, 0)
        self.assertEqual(floored, 0)


class TestSparsityParams(unittest.TestCase):
    def test_validation(self):
        with self.assertRaises(ValidationError):
            SparsityParams(lambda1=-1.0, lambda2=1.0, N=10)
        with self.assertRaises(ValidationError):
            SparsityParams(lambda2=0.0, N=10)
        with self.assertRaises(ValidationError):
            SparsityParams(lambda2=1.0, N=1)

    def test_large_lambda2_warns(self):
        with self.assertLogs('src.processors.scoring', level='WARNING'):
            SparsityParams(lambda2=5.0, N=4)

    def test_weights(self):
        params = SparsityParams(lambda1=1.0, lambda2=2.0, N=100)
        self.assertAlmostEqual(params.weight1, 0.0460517, places=6)
        self.assertAlmostEqual(params.weight2, 0.0931981, places=6)


if __name__ == '__main__':
    unittest.main()
