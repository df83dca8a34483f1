import warnings

import numpy as np
import pytest

from qfe.baseline import (
    LABEL_FLOOR,
    GateCountRegressor,
    RankDeficientWarning,
    fit_gate_count_regressor,
    predict_gate_count,
)
from qfe.errors import ParameterError
from qfe.lattice import FULL_PALETTE, H, X, LatticeCircuit, couplers, cx, gate_count_features, random_circuit
from qfe.noise import StochasticModel, product_fidelity


def test_recovers_exact_log_linear_model():
    rng = np.random.default_rng(0)
    f = rng.integers(0, 5, size=(200, 6)).astype(float)
    coef = np.array([-0.01, -0.02, -0.03, -0.005, -0.04, -0.01])
    y = np.exp(-0.001 + f @ coef)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        reg = fit_gate_count_regressor(f, y)
    assert np.allclose(reg.coef, coef, atol=1e-12)
    assert reg.intercept == pytest.approx(-0.001, abs=1e-12)
    assert not reg.ridge
    assert np.allclose(reg.predict(f), y, rtol=1e-12)


def test_matches_numpy_polyfit_in_one_dimension():
    rng = np.random.default_rng(1)
    x = rng.integers(0, 20, size=50).astype(float)
    y = np.clip(np.exp(-0.03 * x + rng.normal(scale=0.01, size=50)), 0, 1)
    reg = fit_gate_count_regressor(x[:, None], y)
    slope, intercept = np.polyfit(x, np.log(y), 1)
    assert reg.coef[0] == pytest.approx(slope, abs=1e-10)
    assert reg.intercept == pytest.approx(intercept, abs=1e-10)


def test_uniform_stochastic_model_is_exactly_log_linear_in_counts():
    # under the uniform model log F = n1 log 0.99 + n2 log 0.95 for any circuit
    circuits = [random_circuit(3, 3, 5, FULL_PALETTE, 0.3, s) for s in range(300)]
    feats = np.array([gate_count_features(c) for c in circuits])
    y = np.array([product_fidelity(c, StochasticModel.numbered(1)) for c in circuits])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RankDeficientWarning)
        reg = fit_gate_count_regressor(feats, y)
    assert np.allclose(reg.predict(feats), y, rtol=1e-9)


def test_feature_layout():
    c = LatticeCircuit(2, 2, [{(0, 0): X, (1, 0): cx("E")}, {(0, 0): H}])
    f = gate_count_features(c)
    cps = couplers(2, 2)
    assert cps == [((0, 0), (0, 1)), ((0, 0), (1, 0)), ((0, 1), (1, 1)), ((1, 0), (1, 1))]
    assert f.tolist() == [2, 0, 0, 0, 0, 0, 0, 1]


def test_rank_deficient_falls_back_to_ridge():
    rng = np.random.default_rng(2)
    a = rng.integers(0, 5, size=(40, 2)).astype(float)
    f = np.hstack([a, a[:, :1]])  # duplicated column
    y = np.exp(-0.02 * a[:, 0] - 0.01 * a[:, 1])
    with pytest.warns(RankDeficientWarning, match="rank 3 < 4"):
        reg = fit_gate_count_regressor(f, y)
    assert reg.ridge
    assert reg.coef[0] + reg.coef[2] == pytest.approx(-0.02, abs=1e-6)
    assert np.allclose(reg.predict(f), y, rtol=1e-6)


def test_zero_labels_use_floor():
    reg = fit_gate_count_regressor(np.array([[0.0], [1.0], [2.0]]), np.array([1.0, 0.0, 0.0]))
    assert np.isfinite(reg.coef).all()
    assert reg.predict([[0.0]])[0] <= 1.0
    assert reg.predict([[50.0]])[0] > 0
    assert LABEL_FLOOR == 1e-12


def test_predictions_clamped_to_unit_interval():
    reg = GateCountRegressor(np.array([0.5]), 0.0)
    assert predict_gate_count(reg, [[3.0]])[0] == 1.0
    reg = GateCountRegressor(np.array([-1000.0]), 0.0)
    assert 0 < predict_gate_count(reg, [[3.0]])[0] < 1e-300


def test_errors():
    with pytest.raises(ParameterError):
        fit_gate_count_regressor(np.zeros((3, 2)), np.ones(4))
    with pytest.raises(ParameterError):
        fit_gate_count_regressor(np.zeros((0, 2)), np.ones(0))
    with pytest.raises(ParameterError):
        fit_gate_count_regressor(np.zeros((2, 1)), np.array([0.5, 1.5]))
    with pytest.raises(ParameterError, match="expected 2 features"):
        GateCountRegressor(np.zeros(2), 0.0).predict([[1.0, 2.0, 3.0]])


def test_save_load_roundtrip(tmp_path):
    reg = GateCountRegressor(np.array([-0.01, 0.002]), -0.3, ridge=True)
    reg.save(tmp_path / "b.json")
    back = GateCountRegressor.load(tmp_path / "b.json")
    assert np.array_equal(back.coef, reg.coef) and back.intercept == reg.intercept and back.ridge


def _model1_fit():
    circuits = [random_circuit(3, 3, 1, FULL_PALETTE, 0.3, s) for s in range(400)]
    feats = np.array([gate_count_features(c) for c in circuits])
    y = np.array([product_fidelity(c, StochasticModel.numbered(1)) for c in circuits])
    return fit_gate_count_regressor(feats, y)


def test_model1_fit_predicts_closed_form_product():
    reg = _model1_fit()
    c = LatticeCircuit(3, 3, [{(0, 0): X, (1, 1): H, (2, 2): X, (2, 0): cx("E")}])
    assert reg.predict([gate_count_features(c)])[0] == pytest.approx(0.92178405, abs=1e-6)
    assert reg.predict([np.zeros(reg.n_features)])[0] == pytest.approx(np.exp(reg.intercept))


def test_adding_a_two_qubit_gate_never_increases_prediction():
    reg = _model1_fit()
    assert np.all(reg.coef[9:] < 0)
    rng = np.random.default_rng(4)
    for _ in range(50):
        f = rng.integers(0, 3, size=reg.n_features).astype(float)
        g = f.copy()
        g[9 + rng.integers(reg.n_features - 9)] += 1
        assert reg.predict([g])[0] <= reg.predict([f])[0]
