import numpy as np
import pandas as pd
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from humidmpc import envelope, equipment, forecast, optimizer, simkit
from humidmpc.exceptions import DataError, UsageError
from humidmpc.forecast import ConstantPredictor, GPRegressor
from oracles import dense_gp_posterior


def fixed_gp(ls, sf2, sn2):
    return GPRegressor(length_scales=ls, signal_variance=sf2, noise_variance=sn2, standardize=False)


def test_two_point_closed_form():
    X = np.array([[0.0], [1.0]])
    y = np.array([1.0, 3.0])
    sn2 = 0.01
    gp = fixed_gp(1.0, 1.0, sn2).fit(X, y)
    # K + sn2*I = [[a, b], [b, a]] with a = 1.01, b = exp(-1/2)
    a, b = 1.0 + sn2, np.exp(-0.5)
    ks = np.exp(-0.5 * np.array([0.25, 0.25]))  # test point at 0.5
    inv = np.array([[a, -b], [-b, a]]) / (a * a - b * b)
    yc = y - 2.0
    mean, var = gp.predict(np.array([[0.5]]), return_var=True)
    assert mean[0] == pytest.approx(2.0 + ks @ inv @ yc, abs=1e-12)
    assert var[0] == pytest.approx(1.0 - ks @ inv @ ks, abs=1e-12)
    # symmetric data about 0.5, so the mean sits on the average
    assert mean[0] == pytest.approx(2.0, abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 10), st.integers(1, 3), st.integers(0, 10**6))
def test_dense_oracle(n, d, seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (n, d))
    y = rng.normal(size=n)
    Xs = rng.uniform(-3, 3, (5, d))
    ls = rng.uniform(0.5, 2.0, d)
    gp = fixed_gp(ls, 1.3, 0.05).fit(X, y)
    mean, var = gp.predict(Xs, return_var=True)
    ref_mean, ref_var = dense_gp_posterior(X, y, Xs, ls, 1.3, 0.05)
    np.testing.assert_allclose(mean, ref_mean, atol=1e-8)
    np.testing.assert_allclose(var, ref_var, atol=1e-8)


def test_noiseless_interpolation():
    rng = np.random.default_rng(4)
    X = rng.uniform(0, 5, (8, 2))
    y = np.sin(X[:, 0]) + X[:, 1]
    gp = fixed_gp([1.0, 1.5], 2.0, 1e-12).fit(X, y)
    mean, var = gp.predict(X, return_var=True)
    np.testing.assert_allclose(mean, y, atol=1e-6)
    assert np.all(var < 1e-6)


def test_reverts_to_prior_far_away():
    X = np.array([[0.0], [0.5], [1.0]])
    y = np.array([20.0, 21.0, 23.0])
    gp = fixed_gp(0.3, 0.7, 0.01).fit(X, y)
    mean, var = gp.predict(np.array([[50.0]]), return_var=True)
    assert mean[0] == pytest.approx(y.mean(), abs=1e-9)
    assert var[0] == pytest.approx(0.7, abs=1e-9)


def test_duplicate_rows_get_jitter():
    X = np.array([[0.0], [0.0], [1.0]])
    gp = fixed_gp(1.0, 1.0, 0.0).fit(X, np.array([1.0, 1.0, 2.0]))
    assert gp.jitter_ > 0
    assert np.isfinite(gp.predict(np.array([[0.3]]))).all()


def test_refit_equals_fresh_fit_with_same_hyperparameters():
    rng = np.random.default_rng(1)
    X1, X2 = rng.uniform(0, 1, (30, 2)), rng.uniform(0, 1, (20, 2))
    y1, y2 = rng.normal(size=30), rng.normal(size=20)
    gp = fixed_gp([0.4, 0.6], 1.0, 0.1).fit(X1, y1)
    fresh = fixed_gp([0.4, 0.6], 1.0, 0.1).fit(X2, y2)
    Xs = rng.uniform(0, 1, (7, 2))
    np.testing.assert_allclose(gp.refit(X2, y2).predict(Xs), fresh.predict(Xs), atol=1e-12)
    # the original is untouched
    np.testing.assert_allclose(gp.predict(X1[:3]), fixed_gp([0.4, 0.6], 1.0, 0.1).fit(X1, y1).predict(X1[:3]))


def test_hyperparameter_search_is_deterministic_and_needs_rows():
    rng = np.random.default_rng(2)
    X = rng.uniform(0, 1, (60, 2))
    y = np.sin(4 * X[:, 0]) + 0.05 * rng.normal(size=60)
    a, b = forecast.gpr_fit(X, y), forecast.gpr_fit(X, y)
    np.testing.assert_array_equal(a.length_scales_, b.length_scales_)
    assert a.log_marginal_likelihood_ >= fixed_gp(1.0, y.var(), 0.1 * y.var()).fit(
        (X - X.mean(0)) / X.std(0), y).log_marginal_likelihood_ - 1e-9
    with pytest.raises(DataError):
        forecast.gpr_fit(X[:10], y[:10])


def test_gp_input_checks():
    gp = fixed_gp(1.0, 1.0, 0.1)
    with pytest.raises(UsageError):
        gp.predict(np.zeros((1, 1)))
    gp.fit(np.zeros((3, 2)) + np.arange(3)[:, None], np.arange(3.0))
    with pytest.raises(UsageError):
        gp.predict(np.zeros((1, 3)))


def test_constant_predictor():
    np.testing.assert_array_equal(ConstantPredictor().predict(np.zeros((4, 0))), np.full(4, 3.4))


def test_weather_features_periodic_hour():
    wx = simkit.weather_synth("mild_dry", days=1, seed=0)
    F = forecast.weather_features(wx)
    assert F.shape == (24, 6)
    np.testing.assert_allclose(F[6, 2:4], [1.0, 0.0], atol=1e-12)
    assert forecast.weather_features(wx, "raw").shape == (24, 5)
    with pytest.raises(UsageError):
        forecast.weather_features(wx, "weekly")


class FixedWetBulb:
    def __init__(self, value):
        self.value = value

    def predict(self, X):
        return np.full(len(X), self.value)


@pytest.fixture(scope="module")
def equip():
    return equipment.EquipmentModel.from_table()


@pytest.fixture(scope="module")
def horizon():
    return simkit.weather_synth("hot_humid", days=1, seed=0)


def test_sensible_bundle_uses_nominal_shr(equip, horizon):
    params = envelope.ThermalCircuitParams(alpha=0.86, r_out=1.04)
    bundle = forecast.assemble_bundle(horizon, params, equip, None, "sensible")
    np.testing.assert_array_equal(bundle.shr, 0.86)
    np.testing.assert_allclose(bundle.q_e, 3.4)
    np.testing.assert_allclose(bundle.t_eq, horizon["t_out_c"])
    assert np.all(np.isinf(bundle.p_lim))
    assert bundle.t_wb is None


def test_humid_air_lowers_latent_shr(equip, horizon):
    params = envelope.ThermalCircuitParams(alpha=0.86, r_out=1.04)
    dry = forecast.assemble_bundle(horizon, params, equip, FixedWetBulb(15.0), "latent")
    humid = forecast.assemble_bundle(horizon, params, equip, FixedWetBulb(20.0), "latent")
    assert np.all(humid.shr < dry.shr)
    assert np.all(humid.shr * humid.cop < dry.shr * dry.cop)


def test_bundle_limit_schedule(equip, horizon):
    params = envelope.ThermalCircuitParams(alpha=0.86, r_out=1.04)
    bundle = forecast.assemble_bundle(horizon, params, equip, None, "sensible",
                                      optimizer.power_limit_schedule)
    assert np.all(bundle.p_lim[16:20] == 2.5)
    assert np.all(np.isinf(np.delete(bundle.p_lim, range(16, 20))))


def test_bundle_validation():
    with pytest.raises(DataError):
        forecast.ForecastBundle(t_eq=[30.0], q_e=[1.0], cop=[4.0], shr=[1.2], p_lim=[np.inf])
    with pytest.raises(UsageError):
        forecast.ForecastBundle(t_eq=[30.0, 31.0], q_e=[1.0], cop=[4.0], shr=[0.8], p_lim=[np.inf])


def test_latent_bundle_needs_wet_bulb_model(equip, horizon):
    params = envelope.ThermalCircuitParams(alpha=0.86, r_out=1.04)
    with pytest.raises(UsageError):
        forecast.assemble_bundle(horizon, params, equip, None, "latent")


def test_unfitted_qe_predictor_rejected(equip, horizon):
    params = envelope.ThermalCircuitParams(alpha=0.86, r_out=1.04)
    with pytest.raises(UsageError):
        forecast.assemble_bundle(horizon, params, equip, None, "sensible", qe_predictor=GPRegressor())


def test_predict_qe_frame_input(horizon):
    assert isinstance(horizon, pd.DataFrame)
    np.testing.assert_allclose(forecast.predict_qe(horizon, ConstantPredictor(2.0)), 2.0)
