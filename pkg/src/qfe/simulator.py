"""Statevector, density-matrix and trajectory simulation of lattice circuits.

Qubit ``q`` is tensor axis ``q``; in flat vectors qubit 0 is the most
significant bit, so site ``(x, y)`` maps to bit ``x * cols + y``. Every
simulation starts from ``|0...0>``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from qfe.errors import CapacityError, CircuitValidationError, ParameterError, QfeError
from qfe.lattice import LatticeCircuit, Tiling
from qfe.noise import (
    GATE_MATRICES,
    GATE_PAIR_ONLY,
    DepolarizeOp,
    GateOp,
    NoisyProgram,
    SimNoiseModel,
    compile_noisy_program,
    depolarizing_kraus,
    depolarizing_weights,
    pauli_strings,
)

STATEVECTOR_LIMIT = 26
DENSITY_LIMIT = 10


class StateError(QfeError, ValueError):
    """A density matrix or state vector fails validation."""


@dataclass(frozen=True)
class FidelityEstimate:
    value: float
    stderr: float = 0.0
    shots: int = 0

    @property
    def exact(self) -> bool:
        return self.shots == 0


def _apply(tensor: np.ndarray, u: np.ndarray, axes: list[int]) -> np.ndarray:
    k = len(axes)
    ut = u.reshape((2,) * (2 * k))
    out = np.tensordot(ut, tensor, axes=(list(range(k, 2 * k)), axes))
    return np.moveaxis(out, list(range(k)), axes)


def _check_capacity(n: int, limit: int, what: str):
    if n > limit:
        raise CapacityError(f"{what} simulation of {n} qubits exceeds the configured limit of {limit}")


def simulate_ideal(c: LatticeCircuit, limit: int = STATEVECTOR_LIMIT) -> np.ndarray:
    """Noiseless final state as a flat vector of length ``2**n``."""
    n = c.n_qubits
    _check_capacity(n, limit, "statevector")
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for _, site, gate in c.all_gates():
        qs = [c.qubit(site)]
        if gate.is_two_qubit:
            qs.append(c.qubit(gate.direction.step(site)))
        psi = _apply(psi, GATE_MATRICES[gate.name], qs)
    return np.ascontiguousarray(psi).reshape(-1)


def run_ideal_program(p: NoisyProgram, limit: int = STATEVECTOR_LIMIT) -> np.ndarray:
    """Statevector of the program's non-noise gates."""
    n = p.n_qubits
    _check_capacity(n, limit, "statevector")
    psi = np.zeros((2,) * n, dtype=complex)
    psi[(0,) * n] = 1.0
    for op in p.ideal_ops():
        psi = _apply(psi, op.matrix, list(op.qubits))
    return np.ascontiguousarray(psi).reshape(-1)


def apply_unitary_density(rho: np.ndarray, u: np.ndarray, qubits, n: int) -> np.ndarray:
    rho = _apply(rho, u, list(qubits))
    return _apply(rho, u.conj(), [n + q for q in qubits])


def apply_kraus_density(rho: np.ndarray, kraus, qubits, n: int) -> np.ndarray:
    """sum_k K rho K^dagger on the listed qubits of a ``(2,)*2n`` tensor."""
    out = None
    for k in kraus:
        term = apply_unitary_density(rho, k, qubits, n)
        out = term if out is None else out + term
    return out


def apply_depolarizing_density(rho: np.ndarray, eps: float, qubits, n: int) -> np.ndarray:
    """(1 - eps) rho + eps Tr_q(rho) (x) I / 2**k, evaluated by partial trace."""
    if eps == 0.0:
        return rho
    k = len(qubits)
    src = list(qubits) + [n + q for q in qubits]
    moved = np.moveaxis(rho, src, list(range(2 * n - 2 * k, 2 * n)))
    shape = moved.shape
    block = moved.reshape(shape[: 2 * n - 2 * k] + (2**k, 2**k))
    tr = np.trace(block, axis1=-2, axis2=-1)
    out = (1.0 - eps) * block
    idx = np.arange(2**k)
    out[..., idx, idx] += (eps / 2**k) * tr[..., None]
    return np.moveaxis(out.reshape(shape), list(range(2 * n - 2 * k, 2 * n)), src)


def simulate_density(p: NoisyProgram, n_qubits: int | None = None, limit: int = DENSITY_LIMIT,
                     use_kraus: bool = False) -> np.ndarray:
    """Final density matrix (``2**n x 2**n``) of a noisy program.

    Depolarizing channels use the partial-trace form by default; ``use_kraus``
    switches to explicit Pauli-Kraus conjugation (slower, same channel).
    """
    n = p.n_qubits if n_qubits is None else n_qubits
    _check_capacity(n, limit, "density-matrix")
    rho = np.zeros((2,) * (2 * n), dtype=complex)
    rho[(0,) * (2 * n)] = 1.0
    for op in p.ops:
        if isinstance(op, GateOp):
            rho = apply_unitary_density(rho, op.matrix, op.qubits, n)
        elif use_kraus:
            rho = apply_kraus_density(rho, depolarizing_kraus(len(op.qubits), op.p), op.qubits, n)
        else:
            rho = apply_depolarizing_density(rho, op.p, op.qubits, n)
    return np.ascontiguousarray(rho).reshape(2**n, 2**n)


def fidelity_pure(psi: np.ndarray, rho: np.ndarray) -> float:
    """<psi|rho|psi> for a normalized pure target."""
    psi = np.asarray(psi).reshape(-1)
    rho = np.asarray(rho)
    if rho.shape != (psi.size, psi.size):
        raise ParameterError(f"dimension mismatch: state {psi.size}, density {rho.shape}")
    f = float(np.real(np.vdot(psi, rho @ psi)))
    if not -1e-9 <= f <= 1 + 1e-9:
        raise StateError(f"fidelity {f} outside [0, 1]")
    return min(max(f, 0.0), 1.0)


def _psd_sqrt(rho: np.ndarray, name: str) -> np.ndarray:
    if not np.allclose(rho, rho.conj().T, atol=1e-9):
        raise StateError(f"{name} is not Hermitian")
    w, v = np.linalg.eigh((rho + rho.conj().T) / 2)
    if w.min() < -1e-9:
        raise StateError(f"{name} has negative eigenvalue {w.min():.3e}")
    w = np.where(w < 1e-12, 0.0, w)
    return (v * np.sqrt(w)) @ v.conj().T


def fidelity_uhlmann(rho: np.ndarray, sigma: np.ndarray) -> float:
    """(tr |sqrt(rho) sqrt(sigma)|)**2, the squared nuclear norm of the root product.

    Singular values of ``sqrt(rho) sqrt(sigma)`` avoid the square roots of
    near-zero eigenvalues that ``tr sqrt(sqrt(rho) sigma sqrt(rho))`` takes
    for rank-deficient states.
    """
    rho = np.asarray(rho, dtype=complex)
    sigma = np.asarray(sigma, dtype=complex)
    if rho.shape != sigma.shape or rho.ndim != 2 or rho.shape[0] != rho.shape[1]:
        raise ParameterError(f"dimension mismatch: {rho.shape} vs {sigma.shape}")
    if rho.shape[0] > 2**DENSITY_LIMIT:
        raise CapacityError(f"Uhlmann fidelity limited to {DENSITY_LIMIT} qubits")
    sv = np.linalg.svd(_psd_sqrt(rho, "rho") @ _psd_sqrt(sigma, "sigma"), compute_uv=False)
    f = float(sv.sum() ** 2)
    return min(max(f, 0.0), 1.0)


def simulate_trajectories(p: NoisyProgram, n_qubits: int | None = None, shots: int = 4096, seed=None,
                          limit: int = STATEVECTOR_LIMIT, batch_amplitudes: int = 1 << 22) -> FidelityEstimate:
    """Monte Carlo fidelity by Pauli unraveling of every depolarizing channel.

    Each trajectory inserts, for each channel, the identity with its Kraus
    weight or a uniformly drawn non-identity Pauli. Trajectories that drew no
    error and met only identity noise unitaries have overlap exactly 1.
    """
    n = p.n_qubits if n_qubits is None else n_qubits
    if shots < 1:
        raise ParameterError("shots must be >= 1")
    _check_capacity(n, limit, "statevector")
    rng = np.random.default_rng(seed)
    target = run_ideal_program(p, limit).conj()
    paulis = {1: pauli_strings(1), 2: pauli_strings(2)}
    batch = max(1, min(shots, batch_amplitudes >> n))
    values = np.empty(shots)
    done = 0
    while done < shots:
        b = min(batch, shots - done)
        states = np.zeros((b,) + (2,) * n, dtype=complex)
        states[(slice(None),) + (0,) * n] = 1.0
        hit = np.zeros(b, dtype=bool)
        for op in p.ops:
            if isinstance(op, GateOp):
                states = _apply(states, op.matrix, [q + 1 for q in op.qubits])
                if op.noise and not np.array_equal(op.matrix, np.eye(len(op.matrix))):
                    hit[:] = True
                continue
            k = len(op.qubits)
            w = depolarizing_weights(k, op.p)
            if op.p == 0.0:
                continue
            draws = rng.choice(4**k, size=b, p=w)
            for j in np.unique(draws):
                if j == 0:
                    continue
                rows = np.nonzero(draws == j)[0]
                sub = _apply(states[rows], paulis[k][j], [q + 1 for q in op.qubits])
                states[rows] = sub
                hit[rows] = True
        flat = states.reshape(b, -1)
        overlap = np.abs(flat @ target) ** 2
        values[done:done + b] = np.where(hit, np.minimum(overlap, 1.0), 1.0)
        done += b
    mean = float(values.mean())
    stderr = float(values.std(ddof=1) / np.sqrt(shots)) if shots > 1 else 0.0
    return FidelityEstimate(mean, stderr, shots)


def exact_fidelity(c: LatticeCircuit, m: SimNoiseModel, limit: int = DENSITY_LIMIT) -> float:
    """Fidelity of the noisy circuit against its ideal state, by density matrix."""
    _check_capacity(c.n_qubits, limit, "density-matrix")
    program = compile_noisy_program(c, m)
    rho = simulate_density(program, limit=limit)
    return fidelity_pure(simulate_ideal(c), rho)


def trajectory_fidelity(c: LatticeCircuit, m: SimNoiseModel, shots: int = 4096, seed=None) -> FidelityEstimate:
    return simulate_trajectories(compile_noisy_program(c, m), shots=shots, seed=seed)


def tiled_fidelity(c: LatticeCircuit, tiling: Tiling, m: SimNoiseModel, limit: int = DENSITY_LIMIT) -> FidelityEstimate:
    """Product over tiles of each tile's exact density-matrix fidelity."""
    if m.crosstalk_scope != GATE_PAIR_ONLY:
        raise ParameterError("tiled fidelity requires gate-pair crosstalk scope")
    if not tiling.respects(c):
        raise CircuitValidationError("circuit has two-qubit gates crossing tile boundaries")
    f = 1.0
    for tile in tiling.tiles:
        f *= exact_fidelity(c.restrict(tile), m, limit)
    return FidelityEstimate(f, 0.0, 0)
