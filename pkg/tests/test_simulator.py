import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfe.errors import CapacityError, CircuitValidationError, ParameterError
from qfe.lattice import (
    CLIFFORD_PALETTE,
    FULL_PALETTE,
    H,
    X,
    LatticeCircuit,
    Tiling,
    band_tilings,
    cx,
    random_circuit,
    tiled_circuit,
)
from qfe.noise import INCLUDE_NEIGHBORS, SimNoiseModel, compile_noisy_program
from qfe.simulator import (
    StateError,
    exact_fidelity,
    fidelity_pure,
    fidelity_uhlmann,
    simulate_density,
    simulate_ideal,
    simulate_trajectories,
    tiled_fidelity,
    trajectory_fidelity,
)


def _random_rho(rng, dim, rank=None):
    a = rng.normal(size=(dim, rank or dim)) + 1j * rng.normal(size=(dim, rank or dim))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def _random_unitary(rng, dim):
    q, r = np.linalg.qr(rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim)))
    return q * (np.diag(r) / np.abs(np.diag(r)))


def test_ideal_empty_is_all_zero():
    psi = simulate_ideal(LatticeCircuit(2, 2, [{}]))
    assert psi[0] == 1 and np.count_nonzero(psi) == 1


def test_ideal_bit_order_qubit0_most_significant():
    psi = simulate_ideal(LatticeCircuit(2, 2, [{(0, 0): X}]))
    assert np.argmax(np.abs(psi)) == 0b1000
    psi = simulate_ideal(LatticeCircuit(2, 2, [{(1, 0): X}]))
    assert np.argmax(np.abs(psi)) == 0b0010


def test_ideal_bell_state():
    psi = simulate_ideal(LatticeCircuit(1, 2, [{(0, 0): H}, {(0, 0): cx("E")}]))
    assert np.allclose(psi, np.array([1, 0, 0, 1]) / math.sqrt(2), atol=1e-15)


def test_ideal_cx_direction():
    # control is the anchor; a westward CX anchored at (0,1) controls qubit 1
    psi = simulate_ideal(LatticeCircuit(1, 2, [{(0, 1): X}, {(0, 1): cx("W")}]))
    assert np.argmax(np.abs(psi)) == 0b11


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_ideal_state_normalized(seed):
    psi = simulate_ideal(random_circuit(2, 3, 6, FULL_PALETTE, 0.3, seed))
    assert np.linalg.norm(psi) == pytest.approx(1.0, abs=1e-12)


def test_density_single_h_example():
    c = LatticeCircuit(1, 1, [{(0, 0): H}])
    rho = simulate_density(compile_noisy_program(c, SimNoiseModel(eps1=0.01)))
    plus = np.array([1, 1]) / math.sqrt(2)
    assert fidelity_pure(plus, rho) == pytest.approx(0.995, abs=1e-12)
    assert exact_fidelity(c, SimNoiseModel(eps1=0.01)) == pytest.approx(0.995, abs=1e-12)


def test_bell_crosstalk_phase_only():
    # noise-free depolarizing leaves only the ZZ phase: F = cos^2(pi zeta T)
    c = LatticeCircuit(1, 2, [{(0, 0): H}, {(0, 0): cx("E")}])
    m = SimNoiseModel(eps1=0.0, eps2=0.0)
    assert exact_fidelity(c, m) == pytest.approx(math.cos(math.pi * 1.5e-3) ** 2, abs=1e-13)


def test_noiseless_model_gives_one():
    c = random_circuit(2, 2, 5, FULL_PALETTE, 0.3, 7)
    m = SimNoiseModel(eps1=0.0, eps2=0.0, zeta=0.0)
    assert exact_fidelity(c, m) == pytest.approx(1.0, abs=1e-12)
    assert trajectory_fidelity(c, m, shots=16, seed=0).value == 1.0


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_density_is_a_state(seed):
    c = random_circuit(2, 2, 4, FULL_PALETTE, 0.4, seed)
    rho = simulate_density(compile_noisy_program(c, SimNoiseModel(eps1=0.05, eps2=0.1)))
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(rho, rho.conj().T, atol=1e-13)
    assert np.linalg.eigvalsh(rho).min() > -1e-12
    assert np.trace(rho @ rho).real <= 1 + 1e-12


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=10, deadline=None)
def test_partial_trace_path_matches_kraus_path(seed):
    c = random_circuit(2, 2, 3, FULL_PALETTE, 0.4, seed)
    p = compile_noisy_program(c, SimNoiseModel(eps1=0.05, eps2=0.1))
    assert np.allclose(simulate_density(p), simulate_density(p, use_kraus=True), atol=1e-13)


def test_uhlmann_example():
    rho = np.diag([1.0, 0.0])
    sigma = np.diag([0.8, 0.2])
    assert fidelity_uhlmann(rho, sigma) == pytest.approx(0.8, abs=1e-12)
    assert fidelity_uhlmann(sigma, rho) == pytest.approx(0.8, abs=1e-12)


def test_uhlmann_reduces_to_pure_overlap():
    rng = np.random.default_rng(1)
    psi = rng.normal(size=4) + 1j * rng.normal(size=4)
    psi /= np.linalg.norm(psi)
    sigma = _random_rho(rng, 4)
    assert fidelity_uhlmann(np.outer(psi, psi.conj()), sigma) == pytest.approx(fidelity_pure(psi, sigma), abs=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_uhlmann_unitary_invariance_and_symmetry(seed):
    rng = np.random.default_rng(seed)
    rho, sigma = _random_rho(rng, 4), _random_rho(rng, 4, rank=2)
    u = _random_unitary(rng, 4)
    f = fidelity_uhlmann(rho, sigma)
    assert 0 <= f <= 1
    assert fidelity_uhlmann(u @ rho @ u.conj().T, u @ sigma @ u.conj().T) == pytest.approx(f, abs=1e-10)
    assert fidelity_uhlmann(sigma, rho) == pytest.approx(f, abs=1e-10)
    assert fidelity_uhlmann(rho, rho) == pytest.approx(1.0, abs=1e-10)


def test_fidelity_input_validation():
    with pytest.raises(ParameterError):
        fidelity_uhlmann(np.eye(2) / 2, np.eye(4) / 4)
    with pytest.raises(StateError):
        fidelity_uhlmann(np.array([[0.5, 1.0], [0.0, 0.5]]), np.eye(2) / 2)
    with pytest.raises(StateError):
        fidelity_uhlmann(np.diag([1.5, -0.5]), np.eye(2) / 2)
    with pytest.raises(ParameterError):
        fidelity_pure(np.array([1, 0]), np.eye(4) / 4)


def test_capacity_errors():
    with pytest.raises(CapacityError, match="limit of 3"):
        simulate_ideal(LatticeCircuit(2, 2, [{}]), limit=3)
    with pytest.raises(CapacityError, match="density-matrix"):
        exact_fidelity(LatticeCircuit(3, 4, [{}]), SimNoiseModel())
    with pytest.raises(CapacityError):
        fidelity_uhlmann(np.eye(2**11) / 2**11, np.eye(2**11) / 2**11)


def test_trajectory_agrees_with_density():
    c = random_circuit(2, 2, 6, FULL_PALETTE, 0.3, 11)
    m = SimNoiseModel(eps1=0.02, eps2=0.05)
    exact = exact_fidelity(c, m)
    est = trajectory_fidelity(c, m, shots=4000, seed=3)
    assert est.shots == 4000 and not est.exact
    assert abs(est.value - exact) < 4 * est.stderr + 1e-3


def test_trajectory_deterministic_and_batching_invariant():
    p = compile_noisy_program(random_circuit(2, 2, 4, FULL_PALETTE, 0.3, 5), SimNoiseModel(eps1=0.05, eps2=0.1))
    a = simulate_trajectories(p, shots=300, seed=9)
    b = simulate_trajectories(p, shots=300, seed=9)
    assert a == b
    with pytest.raises(ParameterError):
        simulate_trajectories(p, shots=0)


@pytest.mark.parametrize("tiling_index", [0, 1, 2])
def test_tiled_product_equals_exact(tiling_index):
    tiling = band_tilings(3, 3, (1, 2))[tiling_index]
    c = tiled_circuit(3, 3, tiling, 4, CLIFFORD_PALETTE, 0.4, seed=tiling_index)
    m = SimNoiseModel()
    assert tiled_fidelity(c, tiling, m).value == pytest.approx(exact_fidelity(c, m), abs=1e-10)


def test_tiled_rejects_crossing_gates_and_neighbor_crosstalk():
    tiling = Tiling(((0, 0, 1, 2), (1, 0, 1, 2)))
    crossing = LatticeCircuit(2, 2, [{(0, 0): cx("S")}])
    with pytest.raises(CircuitValidationError):
        tiled_fidelity(crossing, tiling, SimNoiseModel())
    with pytest.raises(ParameterError):
        tiled_fidelity(LatticeCircuit(2, 2, [{}]), tiling, SimNoiseModel(crosstalk_scope=INCLUDE_NEIGHBORS))
