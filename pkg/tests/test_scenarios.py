"""Delay distribution, sampling, and timeline tests."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import optimize

from resupply.config import config_from_dict
from resupply.fixtures import load_fixture
from resupply.network import build_network
from resupply.scenarios import (
    DegenerateSamples,
    HorizonExceeded,
    LaunchTimeline,
    OutOfRange,
    Scenario,
    ScenarioSet,
    TruncExpCdf,
    build_time_windows,
    fit_delay_cdf,
    inverse_transform,
    load_delay_samples,
    sample_scenario_set,
)


class TestTruncExpCdf:
    def test_endpoints(self):
        cdf = TruncExpCdf(rate=0.05, max_delay=90.0)
        assert cdf.cdf(0.0) == 0.0
        assert cdf.cdf(90.0) == 1.0
        assert cdf.cdf(200.0) == 1.0

    def test_strictly_increasing(self):
        cdf = TruncExpCdf(rate=0.05)
        days = np.linspace(0.0, 90.0, 200)
        values = [cdf.cdf(d) for d in days]
        assert all(b > a for a, b in zip(values, values[1:]))

    def test_mean_matches_quadrature(self):
        cdf = TruncExpCdf(rate=0.05, max_delay=90.0)
        from scipy import integrate

        # E[D] = integral of (1 - F) over [0, max]
        est, _ = integrate.quad(lambda d: 1.0 - cdf.cdf(d), 0.0, 90.0)
        assert cdf.mean() == pytest.approx(est, abs=1e-8)


class TestInverseTransform:
    def test_lower_endpoint(self):
        assert inverse_transform(TruncExpCdf(0.05), 0.0) == 0.0

    def test_upper_endpoint_limit(self):
        d = inverse_transform(TruncExpCdf(0.05), 1.0 - 1e-13)
        assert d == pytest.approx(90.0, abs=1e-6)

    def test_median_frozen_value(self):
        # independent check: root-find F(d) = 0.5 directly
        cdf = TruncExpCdf(0.05)
        root = optimize.brentq(lambda d: cdf.cdf(d) - 0.5, 0.0, 90.0, xtol=1e-12)
        d = inverse_transform(cdf, 0.5)
        assert d == pytest.approx(root, abs=1e-9)
        assert d == pytest.approx(13.642, abs=1e-3)

    def test_point_mass(self):
        assert inverse_transform(TruncExpCdf(math.inf), 0.7) == 0.0

    @given(st.floats(min_value=0.0, max_value=1.0, exclude_max=True))
    @settings(max_examples=200, deadline=None)
    def test_round_trip_property(self, u):
        cdf = TruncExpCdf(0.05)
        assert cdf.cdf(inverse_transform(cdf, u)) == pytest.approx(u, abs=1e-12)

    def test_round_trip_thousand_points(self):
        cdf = TruncExpCdf(0.037, max_delay=90.0)
        rng = np.random.default_rng(5)
        for u in rng.random(1000):
            assert cdf.cdf(inverse_transform(cdf, float(u))) == pytest.approx(u, abs=1e-12)


class TestFitDelayCdf:
    def test_recovers_known_rate(self):
        cdf = TruncExpCdf(0.05)
        rng = np.random.default_rng(1234)
        samples = [inverse_transform(cdf, float(u)) for u in rng.random(100_000)]
        fitted = fit_delay_cdf(samples, max_delay=90.0)
        assert 0.048 <= fitted.rate <= 0.052

    def test_fitted_mean_matches_sample_mean(self):
        samples = [3.0, 8.0, 21.0, 2.0, 40.0, 11.0]
        fitted = fit_delay_cdf(samples, max_delay=90.0)
        assert fitted.mean() == pytest.approx(np.mean(samples), abs=1e-6)

    def test_two_samples_score_equation(self):
        fitted = fit_delay_cdf([10.0, 20.0], max_delay=90.0)
        # independent bisection on truncated-mean(rate) = 15
        def mean_of(lam):
            return 1.0 / lam - 90.0 / math.expm1(lam * 90.0)

        lo, hi = 1e-8, 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if mean_of(mid) > 15.0:
                lo = mid
            else:
                hi = mid
        assert fitted.rate == pytest.approx(0.5 * (lo + hi), rel=1e-6)
        assert fitted.mean() == pytest.approx(15.0, abs=1e-6)

    def test_all_at_truncation_returns_minimal_rate(self):
        with pytest.warns(RuntimeWarning):
            fitted = fit_delay_cdf([90.0] * 10, max_delay=90.0)
        assert fitted.rate == pytest.approx(1e-6)

    def test_all_zero_rejected(self):
        with pytest.raises(DegenerateSamples):
            fit_delay_cdf([0.0, 0.0, 0.0])

    def test_out_of_range_rejected(self):
        with pytest.raises(OutOfRange):
            fit_delay_cdf([5.0, 95.0], max_delay=90.0)


class TestSampling:
    def test_deterministic_given_seed(self):
        cdf = TruncExpCdf(0.05)
        a = sample_scenario_set(cdf, n_launches=4, n_scenarios=16, seed=77)
        b = sample_scenario_set(cdf, n_launches=4, n_scenarios=16, seed=77)
        assert a.to_json() == b.to_json()

    def test_equiprobable_exactly(self):
        sset = sample_scenario_set(TruncExpCdf(0.05), 3, 7, seed=3)
        expected = 1.0 / 7
        assert max(abs(s.probability - expected) for s in sset) == 0.0

    def test_point_mass_yields_no_delay_scenario(self):
        sset = sample_scenario_set(TruncExpCdf(math.inf), 3, 1, seed=1)
        assert sset.scenarios[0].delays == (0, 0, 0)
        assert sset.scenarios[0].probability == 1.0

    def test_delays_are_whole_days_within_cap(self):
        sset = sample_scenario_set(TruncExpCdf(0.05), 4, 500, seed=9)
        mat = sset.delays_matrix()
        assert mat.dtype.kind == "i"
        assert mat.min() >= 0 and mat.max() <= 90

    def test_independence_between_launches(self):
        sset = sample_scenario_set(TruncExpCdf(0.05), 2, 100_000, seed=21)
        mat = sset.delays_matrix()
        r = np.corrcoef(mat[:, 0], mat[:, 1])[0, 1]
        assert abs(r) < 0.01

    def test_per_launch_distributions(self):
        cdfs = [TruncExpCdf(math.inf), TruncExpCdf(0.05)]
        sset = sample_scenario_set(cdfs, 2, 200, seed=4)
        mat = sset.delays_matrix()
        assert np.all(mat[:, 0] == 0)
        assert mat[:, 1].max() > 0

    def test_fit_recovers_rate_from_sampled_set(self):
        sset = sample_scenario_set(TruncExpCdf(0.05), 1, 100_000, seed=6)
        samples = sset.delays_matrix().ravel().astype(float)
        fitted = fit_delay_cdf(samples, max_delay=90.0)
        assert abs(fitted.rate - 0.05) / 0.05 < 0.05

    def test_json_round_trip(self):
        sset = sample_scenario_set(TruncExpCdf(0.05), 3, 5, seed=8, role="evaluation")
        again = ScenarioSet.from_json(sset.to_json())
        assert again == sset


class TestTimelineAndWindows:
    def test_realized_times(self):
        timeline = LaunchTimeline((0, 100, 200))
        scenario = Scenario(0, (0, 50, 50), 1.0)
        assert timeline.realized_times(scenario) == (0, 150, 250)

    def test_windows_zero_delay_at_nominal(self):
        config = load_fixture("fig1_toy")
        network = build_network(config)
        timeline = LaunchTimeline(tuple(l.day for l in config.launches))
        sset = ScenarioSet((Scenario(0, (0, 0, 0), 1.0),), seed=0)
        windows = build_time_windows(timeline, network, sset)
        for l, day in enumerate((0, 100, 200)):
            arc = network.launch_arc(l)
            assert windows.open_days(0, arc) == (day,)
            assert windows.is_open(0, arc, day)
            assert not windows.is_open(0, arc, day + 1)

    def test_fifty_day_delay_moves_window(self):
        config = load_fixture("fig1_toy")
        network = build_network(config)
        timeline = LaunchTimeline((0, 100, 200))
        sset = ScenarioSet((Scenario(0, (0, 50, 0), 1.0),), seed=0)
        windows = build_time_windows(timeline, network, sset)
        assert windows.open_days(0, network.launch_arc(1)) == (150,)

    def test_max_delay_on_final_launch_fits_horizon(self):
        config = load_fixture("fig1_toy")
        network = build_network(config)
        timeline = LaunchTimeline((0, 100, 200))
        sset = ScenarioSet((Scenario(0, (0, 0, 90), 1.0),), seed=0)
        windows = build_time_windows(timeline, network, sset)
        assert windows.open_days(0, network.launch_arc(2)) == (290,)
        assert 290 <= network.horizon_end

    def test_horizon_exceeded(self):
        config = load_fixture("fig1_toy")
        network = build_network(config)
        timeline = LaunchTimeline((0, 100, 350))
        sset = ScenarioSet((Scenario(0, (0, 0, 90), 1.0),), seed=0)
        with pytest.raises(HorizonExceeded):
            build_time_windows(timeline, network, sset)

    def test_holdover_always_open(self):
        config = load_fixture("fig1_toy")
        network = build_network(config)
        timeline = LaunchTimeline((0, 100, 200))
        sset = ScenarioSet((Scenario(0, (0, 0, 0), 1.0),), seed=0)
        windows = build_time_windows(timeline, network, sset)
        hold = network.holdover_arc("station")
        assert windows.open_days(0, hold) is None
        assert windows.is_open(0, hold, 123)


class TestDelaySampleCsv:
    def test_planning_window_filter(self, tmp_path):
        path = tmp_path / "delays.csv"
        path.write_text(
            "days_to_planned_launch,delay_days\n30,5\n90,12\n120,400\n60,0\n"
        )
        samples = load_delay_samples(path)
        assert samples == [5.0, 12.0, 0.0]

    def test_missing_columns_rejected(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("a,b\n1,2\n")
        with pytest.raises(ValueError):
            load_delay_samples(path)
