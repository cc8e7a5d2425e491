import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from contraction import harness as hv


def _spec(**kw):
    base = dict(model="white-noise", n_grid=[64, 256, 1024], replicates=5, posterior_draws=500, seed=42)
    base.update(kw)
    return hv.ExperimentSpec(**base)


def _synthetic(radius_of_n, grid=(100, 200, 400, 800, 1600), reps=5):
    return [{"n": n, "replicate": r, "radius": radius_of_n(n), "status": "ok"} for n in grid for r in range(reps)]


class TestSpec:
    @pytest.mark.parametrize("grid", [[10, 20], [10, 10, 20], [30, 20, 10], [0, 1, 2]])
    def test_bad_grid(self, grid):
        with pytest.raises(ValueError):
            _spec(n_grid=grid)

    def test_bad_replicates_and_model(self):
        with pytest.raises(ValueError):
            _spec(replicates=4)
        with pytest.raises(ValueError):
            _spec(model="nope")

    def test_from_json(self):
        text = json.dumps({"model": "white-noise", "model_config": {"alpha": 1.0}, "n_grid": [8, 16, 32],
                           "replicates": 5, "posterior_draws": 100, "quantile": 0.9, "seed": 1,
                           "tolerances": {"exponent": 0.1}})
        spec = hv.ExperimentSpec.from_json(text)
        assert spec.tolerance == 0.1
        with pytest.raises(ValueError):
            hv.ExperimentSpec.from_json(json.dumps({"model": "white-noise", "n_grid": [1, 2, 3], "bogus": 1}))


class TestRunExperiment:
    def test_row_count_and_order(self):
        rows = hv.run_experiment(_spec())
        assert len(rows) == 15
        assert [(r["n"], r["replicate"]) for r in rows] == sorted((r["n"], r["replicate"]) for r in rows)
        assert all(r["status"] == "ok" for r in rows)
        assert len({r["seed"] for r in rows}) == 15

    def test_rerun_identical_bytes(self, tmp_path):
        a = hv.rows_to_csv(hv.run_experiment(_spec()))
        b = hv.rows_to_csv(hv.run_experiment(_spec()))
        assert a == b
        assert a.splitlines()[0] == ",".join(hv.COLUMNS)

    def test_worker_count_irrelevant(self):
        spec = _spec(model="parametric-grid", n_grid=[50, 100, 200])
        assert hv.rows_to_csv(hv.run_experiment(spec, workers=1)) == hv.rows_to_csv(hv.run_experiment(spec, workers=2))

    def test_whitenoise_contracts(self):
        rows = hv.run_experiment(_spec(n_grid=[256, 2048, 16384]))
        med = hv.fit_rate(rows, include_smallest=True).medians
        assert med[-1] < med[0]

    def test_errors_recorded_per_row(self):
        # binary importance sampling refuses n > 500; those rows fail, the rest run
        rows = hv.run_experiment(_spec(model="binary-dp", n_grid=[20, 40, 600]))
        assert len(rows) == 15
        assert all(r["status"].startswith("error") for r in rows if r["n"] == 600)
        assert all(not r["status"].startswith("error") for r in rows if r["n"] < 600)
        assert all(r["radius"] is None for r in rows if r["n"] == 600)

    def test_timing_column(self):
        rows = hv.run_experiment(_spec(), timing=True)
        assert all(r["elapsed_ms"] >= 0 for r in rows)
        assert all(r["elapsed_ms"] is None for r in hv.run_experiment(_spec()))

    def test_csv_roundtrip(self, tmp_path):
        rows = hv.run_experiment(_spec(output=str(tmp_path / "r.csv")))
        back = hv.read_csv(tmp_path / "r.csv")
        assert [r["radius"] for r in back] == [r["radius"] for r in rows]
        assert hv.rows_to_csv(back) == hv.rows_to_csv(rows)

    def test_mass_columns_ordered(self):
        for r in hv.run_experiment(_spec()):
            assert 0 <= r["mass_outside_5eps"] <= r["mass_outside_2eps"] <= 1


class TestFitRate:
    def test_square_root_law(self):
        fit = hv.fit_rate(_synthetic(lambda n: n ** -0.5))
        assert fit.exponent == pytest.approx(-0.5, abs=1e-10)
        assert fit.residual_rms == pytest.approx(0.0, abs=1e-10)

    def test_intercept(self):
        fit = hv.fit_rate(_synthetic(lambda n: 3 * n ** (-1 / 3)))
        assert fit.exponent == pytest.approx(-1 / 3, abs=1e-10)
        assert fit.intercept == pytest.approx(math.log(3), abs=1e-10)

    def test_log_term(self):
        fit = hv.fit_rate(_synthetic(lambda n: n ** (-1 / 3) * math.sqrt(math.log(n))), with_log_term=True)
        assert fit.exponent == pytest.approx(-1 / 3, abs=0.02)
        assert fit.log_coeff == pytest.approx(0.5, abs=1e-8)

    @settings(max_examples=30, deadline=None)
    @given(st.floats(-2.0, -0.05), st.floats(-3.0, 3.0))
    def test_noiseless_power_laws(self, slope, log_c):
        fit = hv.fit_rate(_synthetic(lambda n: math.exp(log_c) * n ** slope))
        assert abs(fit.exponent - slope) < 1e-10
        assert fit.ci_lo <= fit.exponent <= fit.ci_hi

    def test_ci_contains_estimate_on_noise(self):
        rng = np.random.default_rng(42)
        rows = [{"n": n, "replicate": r, "radius": n ** -0.4 * math.exp(0.3 * rng.standard_normal()), "status": "ok"}
                for n in (100, 200, 400, 800) for r in range(10)]
        fit = hv.fit_rate(rows)
        assert fit.ci_lo <= fit.exponent <= fit.ci_hi
        assert fit.ci_hi > fit.ci_lo

    def test_smallest_excluded_by_default(self):
        rows = _synthetic(lambda n: n ** -0.5)
        rows = [dict(r, radius=1.0) if r["n"] == 100 else r for r in rows]
        assert hv.fit_rate(rows).exponent == pytest.approx(-0.5, abs=1e-10)
        assert hv.fit_rate(rows, include_smallest=True).exponent != pytest.approx(-0.5, abs=1e-3)

    def test_degenerate(self):
        with pytest.raises(ValueError):
            hv.fit_rate(_synthetic(lambda n: 0.0))
        with pytest.raises(ValueError):
            hv.fit_rate(_synthetic(lambda n: n ** -0.5, grid=(10, 20)))

    def test_json_keys(self):
        out = json.loads(hv.fit_rate(_synthetic(lambda n: n ** -0.5)).to_json())
        assert list(out) == ["exponent", "intercept", "log_coeff", "ci_lo", "ci_hi", "residual_rms", "verdict"]


class TestTheoreticalRate:
    def test_values(self):
        assert hv.theoretical_rate("white-noise", {"alpha": 1}) == pytest.approx((-1 / 3, 0))
        assert hv.theoretical_rate("spline-regression", {"alpha": 2}) == pytest.approx((-0.4, 0))
        assert hv.theoretical_rate("binary-dp") == pytest.approx((-1 / 3, 1 / 3))
        assert hv.theoretical_rate("nl-autoregression") == pytest.approx((-1 / 3, 0.5))
        assert hv.theoretical_rate("poisson-sieve") == pytest.approx((-1 / 3, 0))
        assert hv.theoretical_rate("whittle") == pytest.approx((-1 / 3, 1 / 3))
        assert hv.theoretical_rate("parametric-grid", {"family": "uniform-endpoint"}) == pytest.approx((-1, 0))
        assert hv.theoretical_rate("parametric-grid", {"family": "normal-location"}) == pytest.approx((-0.5, 0))

    def test_unknown(self):
        with pytest.raises(ValueError):
            hv.theoretical_rate("ghost")


class TestVerdict:
    def _fit(self, est, half):
        return hv.RateFit(est, 0.0, None, est - half, est + half, 0.0)

    def test_pass(self):
        assert hv.verdict(self._fit(-0.34, 0.03), -1 / 3, 0.08) == "PASS"

    def test_fail(self):
        assert hv.verdict(self._fit(-0.10, 0.03), -1 / 3, 0.08) == "FAIL"

    def test_inconclusive(self):
        assert hv.verdict(self._fit(-0.34, 0.15), -1 / 3, 0.08) == "INCONCLUSIVE"

    def test_property_verdict(self):
        rows = [{"n": n, "replicate": r, "radius": 1 / n, "ess": 100.0, "status": "ok"}
                for n in (10, 20, 40) for r in range(5)]
        assert hv.property_verdict(rows)[0] == "PASS"
        rows[0]["ess"] = rows[1]["ess"] = rows[2]["ess"] = rows[3]["ess"] = 10.0
        assert hv.property_verdict(rows)[0] == "FAIL"

    def test_report_is_models_carry_note(self):
        rows = [{"n": n, "replicate": r, "radius": n ** -0.3, "ess": 500.0, "status": "ok"}
                for n in (50, 100, 200) for r in range(5)]
        out = hv.report(rows, "binary-dp")
        assert out["verdict"] == "PASS"
        assert "importance" in out["note"]
        assert hv.report(_synthetic(lambda n: n ** (-1 / 3)), "white-noise")["verdict"] == "PASS"
