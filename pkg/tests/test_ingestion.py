#!/usr/bin/env python3

import math
import tempfile
import unittest
from pathlib import Path

import numpy as np

from src.processors.ingestion import (Ar1Fit, Dataset, correlation_diagnostic, estimate_ar1, log_difference,
                                      log_difference_dataset, preprocess, read_csv, skewness_filter,
                                      standardize)
from src.processors.simulation import Ar1Params, gen_ar1
from src.processors.windows import build_schedule
from src.utils.file_utils import DataError


class TestReadCsv(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def _write(self, name, text):
        path = self.dir / name
        path.write_text(text)
        return path

    def test_rows_time_with_header(self):
        data = read_csv(self._write("p.csv", "a,b\n1,2\n3,4\n5,6\n"))
        self.assertEqual((data.N, data.T), (2, 3))
        self.assertEqual(data.names, ["a", "b"])
        np.testing.assert_array_equal(data.values, [[1, 3, 5], [2, 4, 6]])
        self.assertEqual(data.provenance, ["raw"])

    def test_rows_series_without_header(self):
        data = read_csv(self._write("s.csv", "1,2,3\n4,5,6\n"), layout="rows=series", header=False)
        self.assertEqual((data.N, data.T), (2, 3))
        self.assertEqual(data.names, ["s1", "s2"])
        np.testing.assert_array_equal(data.to_matrix().values, [[1, 2, 3], [4, 5, 6]])

    def test_full_precision(self):
        data = read_csv(self._write("f.csv", "a,b\n0.1,1e-300\n0.30000000000000004,2.5\n"))
        self.assertEqual(data.values[0, 1], 0.30000000000000004)
        self.assertEqual(data.values[1, 0], 1e-300)

    def test_ragged_row(self):
        with self.assertRaisesRegex(DataError, "line 3"):
            read_csv(self._write("r.csv", "a,b\n1,2\n3\n"))

    def test_non_numeric(self):
        with self.assertRaisesRegex(DataError, "line 3: non-numeric"):
            read_csv(self._write("n.csv", "a,b\n1,2\n3,x\n"))

    def test_missing_values(self):
        path = self._write("m.csv", "a,b\n1,2\n3,\n5,6\n")
        with self.assertRaisesRegex(DataError, "line 3 has missing values"):
            read_csv(path)
        data = read_csv(path, drop_missing=True)
        np.testing.assert_array_equal(data.values, [[1, 5], [2, 6]])

    def test_empty_and_bad_layout(self):
        with self.assertRaises(DataError):
            read_csv(self._write("e.csv", ""))
        with self.assertRaises(ValueError):
            read_csv(self._write("ok.csv", "1,2\n3,4\n"), layout="columns")
        with self.assertRaises(FileNotFoundError):
            read_csv(self.dir / "absent.csv")


class TestLogDifference(unittest.TestCase):
    def test_examples(self):
        np.testing.assert_allclose(log_difference([1.0, math.e, math.e ** 2]), [1.0, 1.0], rtol=1e-14)
        np.testing.assert_allclose(log_difference([1.0, 2.0, 4.0]), [0.693147, 0.693147], atol=1e-6)
        np.testing.assert_array_equal(log_difference([3.0, 3.0, 3.0]), [0.0, 0.0])

    def test_price_scale_cancels(self):
        prices = np.exp(np.cumsum(np.random.default_rng(2).normal(0, 0.01, size=200)))
        np.testing.assert_allclose(log_difference(37.5 * prices), log_difference(prices), atol=1e-12)

    def test_nonpositive(self):
        with self.assertRaises(DataError):
            log_difference([1.0, 0.0, 2.0])

    def test_dataset(self):
        data = Dataset(names=["a"], values=np.full((1, 3850), 10.0))
        diffed = log_difference_dataset(data)
        self.assertEqual(diffed.T, 3849)
        self.assertEqual(diffed.provenance, ["raw", "log-diff"])
        self.assertEqual(build_schedule(diffed.T).i_T, 68)


class TestSkewnessFilter(unittest.TestCase):
    def test_filter(self):
        rng = np.random.default_rng(4)
        values = np.vstack([np.tile([-2.0, -1.0, 0.0, 1.0, 2.0], 1000),
                            np.ones(5000),
                            rng.exponential(size=5000)])
        data = Dataset(names=["sym", "flat", "exp"], values=values)
        kept = skewness_filter(data, 1.0)
        self.assertEqual(kept.names, ["sym"])
        self.assertEqual(kept.dropped["flat"], "zero variance")
        self.assertTrue(kept.dropped["exp"].startswith("skewness"))
        self.assertEqual(kept.provenance[-1], "skew<=1")

    def test_nothing_left(self):
        data = Dataset(names=["flat"], values=np.ones((1, 10)))
        with self.assertRaises(DataError):
            skewness_filter(data)
        with self.assertRaises(ValueError):
            skewness_filter(data, 0.0)


class TestEstimateAr1(unittest.TestCase):
    def test_exact_line(self):
        fit = estimate_ar1([1.0, 2.0, 3.0, 4.0])
        self.assertAlmostEqual(fit.phi_hat, 1.0, places=10)
        self.assertAlmostEqual(fit.c_hat, 1.0, places=10)
        self.assertAlmostEqual(fit.sigma_eps_hat, 0.0, places=10)

    def test_white_noise(self):
        fit = estimate_ar1(np.random.default_rng(8).normal(size=100000))
        self.assertLess(abs(fit.phi_hat), 0.02)
        self.assertLess(abs(fit.sigma_eps_hat - 1.0), 0.02)

    def test_recovers_simulated_parameters(self):
        fit = estimate_ar1(gen_ar1(Ar1Params(phi=0.5, sigma_eps=2.0), 1, 100000, 9).values[0])
        self.assertLess(abs(fit.phi_hat - 0.5), 0.02)
        self.assertLess(abs(fit.sigma_eps_hat - 2.0), 0.04)

        params = Ar1Params(c=0.5, phi=0.5)
        fits = [estimate_ar1(row) for row in gen_ar1(params, 20, 10000, 10).values]
        se = math.sqrt((1 - 0.5 ** 2) / 10000) / math.sqrt(len(fits))
        self.assertLess(abs(np.mean([f.phi_hat for f in fits]) - 0.5), 4 * se)
        self.assertLess(abs(np.mean([f.c_hat for f in fits]) - 0.5), 0.02)

    def test_degenerate(self):
        with self.assertRaises(DataError):
            estimate_ar1([1.0, 1.0, 1.0, 5.0])
        with self.assertRaises(DataError):
            estimate_ar1([1.0, 2.0])


class TestStandardize(unittest.TestCase):
    def test_pooling(self):
        data = Dataset(names=["a", "b"], values=np.arange(20.0).reshape(2, 10))
        scaled, pooled = standardize(data, [Ar1Fit(0.0, 0.4, 1.0), Ar1Fit(0.0, 0.6, 1.0)])
        self.assertAlmostEqual(pooled.phi, 0.5, places=14)
        self.assertEqual(pooled.sigma_eps, 1.0)
        np.testing.assert_array_equal(scaled.values, data.values)
        self.assertEqual(scaled.provenance[-1], "standardized")

    def test_scaled_twin(self):
        row = gen_ar1(Ar1Params(phi=0.3), 1, 500, 12).values[0]
        data = Dataset(names=["x", "x3"], values=np.vstack([row, 3.0 * row]))
        fits = [estimate_ar1(r) for r in data.values]
        scaled, pooled = standardize(data, fits)
        np.testing.assert_allclose(scaled.values[0], scaled.values[1], rtol=1e-10)
        self.assertAlmostEqual(fits[0].phi_hat, fits[1].phi_hat, places=10)

    def test_heterogeneity_warning(self):
        data = Dataset(names=list("abcd"), values=np.arange(40.0).reshape(4, 10))
        fits = [Ar1Fit(0.0, phi, 1.0) for phi in (0.0, 0.0, 0.9, 0.9)]
        with self.assertLogs("src.processors.ingestion", level="WARNING"):
            _, pooled = standardize(data, fits)
        self.assertAlmostEqual(pooled.phi, 0.45, places=14)

    def test_boundaries(self):
        data = Dataset(names=["a", "b"], values=np.arange(20.0).reshape(2, 10))
        _, pooled = standardize(data, [Ar1Fit(0.0, 1.02, 1.0), Ar1Fit(0.0, 1.04, 1.0)])
        self.assertEqual(pooled.phi, 1.0)
        self.assertTrue(pooled.is_random_walk)
        with self.assertRaises(DataError):
            standardize(data, [Ar1Fit(0.0, -1.2, 1.0), Ar1Fit(0.0, -1.0, 1.0)])
        with self.assertRaises(DataError):
            standardize(data, [Ar1Fit(0.0, 0.5, 0.0), Ar1Fit(0.0, 0.5, 1.0)])
        with self.assertRaises(ValueError):
            standardize(data, [Ar1Fit(0.0, 0.5, 1.0)])


class TestPipeline(unittest.TestCase):
    def test_correlation_diagnostic(self):
        x = np.random.default_rng(1).normal(size=50)
        self.assertAlmostEqual(correlation_diagnostic(Dataset(["a", "b", "c"], np.vstack([x, -x, np.ones(50)]))),
                               1.0, places=12)
        self.assertEqual(correlation_diagnostic(Dataset(["a"], x[None, :])), 0.0)

    def test_preprocess(self):
        rng = np.random.default_rng(6)
        prices = 100.0 * np.exp(np.cumsum(rng.normal(0.0, 0.01, size=(3, 400)), axis=1))
        data = Dataset(names=["p", "q", "r"], values=prices)
        out, pooled = preprocess(data, log_diff=True, skew_threshold=1.0, estimate=True)
        self.assertEqual(out.T, 399)
        self.assertEqual(out.provenance, ["raw", "log-diff", "skew<=1", "standardized"])
        self.assertIsNotNone(pooled)
        self.assertLess(abs(pooled.phi), 0.3)

        untouched, none = preprocess(data)
        self.assertIsNone(none)
        np.testing.assert_array_equal(untouched.values, prices)

    def test_dataset_validation(self):
        with self.assertRaises(DataError):
            Dataset(names=["a"], values=np.ones((2, 5)))
        with self.assertRaises(DataError):
            Dataset(names=["a"], values=np.array([[1.0, np.nan, 2.0]]))
        with self.assertRaises(DataError):
            Dataset(names=["a"], values=np.ones((1, 1)))


if __name__ == '__main__':
    unittest.main()
