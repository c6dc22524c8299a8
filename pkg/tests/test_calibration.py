import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import norm

from bayescfme import (GaussianScalar, InputError, SweepResult, SweepRow, coverage,
                       credible_interval, run_sweep)
from bayescfme.calibration import Hyper, excluded_counts, normal_quantile
from bayescfme.kernels import SolveConfig

Z95 = 1.959963984540054


def row(alpha=0.0, method="cfmp", seed=0, mean=0.0, var=1.0, truth=0.0, status="ok", level=0.95):
    half = normal_quantile(0.5 + level / 2) * math.sqrt(var)
    return SweepRow("A", alpha, method, seed, mean, var, mean - half, mean + half, truth, status)


@pytest.fixture(scope="module")
def small_sweep():
    return run_sweep("A", [-1.0, 0.0, 1.0], ["cfmp", "bayes_cfmp"], [0, 1], N=40, M=40, L=20,
                     mc_samples=10**4)


class TestQuantile:
    @given(st.floats(1e-12, 1 - 1e-12))
    def test_matches_scipy(self, p):
        assert normal_quantile(p) == pytest.approx(norm.ppf(p), abs=1e-8)

    def test_known_values(self):
        assert normal_quantile(0.975) == pytest.approx(Z95, abs=1e-12)
        assert normal_quantile(0.5) == 0.0

    @pytest.mark.parametrize("p", [0.0, 1.0, -0.1, 2.0])
    def test_domain(self, p):
        with pytest.raises(InputError):
            normal_quantile(p)


class TestCredibleInterval:
    def test_standard(self):
        lo, hi = credible_interval(GaussianScalar(0.0, 1.0, 1.0), 0.95)
        assert lo == pytest.approx(-1.959964, abs=1e-6) and hi == pytest.approx(1.959964, abs=1e-6)

    def test_degenerate(self):
        for level in (0.5, 0.95, 0.999):
            assert credible_interval(GaussianScalar(3.0, 0.0, 0.0), level) == (3.0, 3.0)

    def test_scaled(self):
        lo, hi = credible_interval(GaussianScalar(1.0, 4.0, 4.0), 0.95)
        np.testing.assert_allclose([lo, hi], [1 - 2 * Z95, 1 + 2 * Z95], rtol=1e-12)

    def test_bad_level(self):
        with pytest.raises(InputError):
            credible_interval(GaussianScalar(0.0, 1.0, 1.0), 1.0)

    @given(st.floats(-1e3, 1e3), st.floats(0, 1e3))
    def test_nested_levels(self, mean, var):
        g = GaussianScalar(mean, var, var)
        lo95, hi95 = credible_interval(g, 0.95)
        lo99, hi99 = credible_interval(g, 0.99)
        assert lo99 <= lo95 <= mean <= hi95 <= hi99
        assert hi95 - mean == pytest.approx(mean - lo95, rel=1e-9, abs=1e-9)


class TestCoverage:
    def test_all_covering(self):
        assert coverage(SweepResult((row(), row(seed=1)))) == {"cfmp": 1.0}

    def test_half(self):
        rows = (row(truth=0.0), row(seed=1, truth=10.0))
        assert coverage(SweepResult(rows)) == {"cfmp": 0.5}

    def test_truth_at_mean(self):
        rows = tuple(row(seed=s, mean=s * 0.3, truth=s * 0.3, var=0.0) for s in range(4))
        for level in (0.01, 0.5, 0.99):
            assert coverage(SweepResult(rows), level) == {"cfmp": 1.0}

    def test_empty(self):
        with pytest.raises(InputError):
            coverage(SweepResult(()))

    def test_failed_rows_excluded(self):
        rows = (row(), row(seed=1, truth=10.0), row(seed=2, mean=math.nan, var=math.nan,
                                                    status="failed: NumericalError"))
        res = SweepResult(rows)
        assert coverage(res) == {"cfmp": 0.5}
        assert excluded_counts(res) == {"cfmp": 1}

    def test_per_method(self):
        rows = (row(method="cfmp", truth=5.0), row(method="bayes_cfmp"))
        assert coverage(SweepResult(rows)) == {"cfmp": 0.0, "bayes_cfmp": 1.0}

    def test_permutation_and_concatenation(self, rng):
        rows = [row(seed=s, truth=float(t)) for s, t in enumerate(rng.normal(scale=2, size=30))]
        a, b = SweepResult(tuple(rows[:10])), SweepResult(tuple(rows[10:]))
        full = coverage(SweepResult(tuple(rows)))["cfmp"]
        shuffled = [rows[i] for i in rng.permutation(30)]
        assert coverage(SweepResult(tuple(shuffled)))["cfmp"] == full
        weighted = (10 * coverage(a)["cfmp"] + 20 * coverage(b)["cfmp"]) / 30
        assert full == pytest.approx(weighted, rel=1e-15)
        assert coverage(a + b)["cfmp"] == full

    def test_level_monotone(self, small_sweep):
        lo, hi = coverage(small_sweep, 0.5), coverage(small_sweep, 0.99)
        assert all(lo[m] <= hi[m] for m in lo)


class TestSweep:
    def test_row_count_and_order(self, small_sweep):
        assert len(small_sweep) == 12
        keys = [r.sort_key() for r in small_sweep.rows]
        assert keys == sorted(keys)
        assert small_sweep.methods == ["cfmp", "bayes_cfmp"]

    def test_rows_are_consistent(self, small_sweep):
        for r in small_sweep.rows:
            assert r.ok
            assert r.ci_low <= r.mean <= r.ci_high
            assert r.ci_high - r.mean == pytest.approx(r.mean - r.ci_low, rel=1e-9, abs=1e-12)

    def test_truth_shared_per_alpha(self, small_sweep):
        by_alpha = {}
        for r in small_sweep.rows:
            by_alpha.setdefault(r.alpha, set()).add(r.true_eta)
        assert all(len(v) == 1 for v in by_alpha.values())

    def test_deterministic(self, small_sweep):
        again = run_sweep("A", [-1.0, 0.0, 1.0], ["cfmp", "bayes_cfmp"], [0, 1], N=40, M=40,
                          L=20, mc_samples=10**4)
        assert again == small_sweep

    def test_parallel_matches_serial(self, small_sweep):
        par = run_sweep("A", [-1.0, 0.0, 1.0], ["cfmp", "bayes_cfmp"], [0, 1], N=40, M=40,
                        L=20, mc_samples=10**4, jobs=2)
        assert par == small_sweep

    def test_validation(self):
        with pytest.raises(InputError):
            run_sweep("A", [], ["cfmp"], [0])
        with pytest.raises(InputError):
            run_sweep("A", [0.0], ["ipw"], [0])
        with pytest.raises(InputError):
            run_sweep("A", [0.0], ["cfmp"], [0], N=10, L=11)

    def test_failures_are_recorded(self):
        # a zero jitter ceiling with no ridge makes every factorization fail
        hyper = Hyper(lam=0.0, solve=SolveConfig(jitter_start=1e-300, jitter_max=1e-300,
                                                 min_rcond=0.5))
        res = run_sweep("A", [0.0, 1.0], ["cfmp"], [0], N=20, M=20, L=10, hyper=hyper,
                        mc_samples=100)
        assert len(res) == 2 and not any(r.ok for r in res.rows)
        assert all(r.status.startswith("failed: NumericalError") for r in res.rows)
        assert excluded_counts(res) == {"cfmp": 2}
        assert math.isnan(coverage(res)["cfmp"])

    def test_setting_a_desk_check(self):
        res = run_sweep("A", [-1.0], ["cfmp", "bayes_rcfme", "bayes_cfmp"], [0], N=200, M=200,
                        mc_samples=10**6)
        for r in res.rows:
            assert abs(r.true_eta) <= 0.01
            assert abs(r.mean - r.true_eta) <= 3 * math.sqrt(r.variance) + 0.05, r.method


class TestSerialization:
    def test_csv_round_trip(self, small_sweep, tmp_path):
        text = small_sweep.to_csv(tmp_path / "s.csv")
        assert text.splitlines()[0] == ("setting,alpha,method,seed,mean,variance,ci_low,ci_high,"
                                        "true_eta,status")
        assert SweepResult.from_csv(tmp_path / "s.csv") == small_sweep
        assert SweepResult.from_csv(text) == small_sweep

    def test_json_round_trip(self, small_sweep, tmp_path):
        small_sweep.to_json(tmp_path / "s.json")
        assert SweepResult.from_json(tmp_path / "s.json") == small_sweep

    def test_nan_rows_round_trip(self, tmp_path):
        res = SweepResult((row(), row(seed=1, mean=math.nan, var=math.nan, status="failed: x")))
        back = SweepResult.from_json(res.to_json())
        assert math.isnan(back.rows[1].mean) and back.rows[0] == res.rows[0]
        back = SweepResult.from_csv(res.to_csv())
        assert math.isnan(back.rows[1].ci_low) and back.rows[1].status == "failed: x"

    def test_plot_data(self, small_sweep):
        pts = small_sweep.plot_data("bayes_cfmp")
        assert [p[0] for p in pts] == [-1.0, 0.0, 1.0]
        assert all(p[2] <= p[1] <= p[3] for p in pts)
        assert small_sweep.plot_data("plugin") == []
