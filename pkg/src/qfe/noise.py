"""Stochastic product fidelity models and the depolarizing + crosstalk program compiler."""

from __future__ import annotations

import hashlib
import json
import math
from collections.abc import Mapping
from dataclasses import asdict, dataclass, field
from functools import reduce
from typing import Union

import numpy as np

from qfe.errors import ConfigError, ParameterError
from qfe.lattice import DIRECTIONS, GateKind, LatticeCircuit, Site

# Stochastic product models -------------------------------------------------

VARIANTS = ("uniform", "per-gate", "edge-inner", "per-gate-crosstalk")

# X is missing from the published per-gate list; 0.99 completes the sequence.
# T/TD never occur in single-moment data; they get the X value.
DEFAULT_GATE_TABLE = {
    "I": 1.0, "X": 0.99, "Y": 0.98, "Z": 0.97, "H": 0.96,
    "T": 0.99, "TD": 0.99, "CX": 0.95, "CZ": 0.94,
}


@dataclass(frozen=True)
class StochasticModel:
    """Per-gate success probabilities whose product is the fidelity proxy.

    ``uniform``: ``single`` / ``two`` for every one- / two-qubit gate.
    ``per-gate``: ``gate_table[name]``.
    ``edge-inner``: edge sites use ``edge_single`` / ``edge_two``, inner sites
    ``inner_single`` / ``inner_two``; a two-qubit gate touching any inner site
    gets the smaller (inner) value.
    ``per-gate-crosstalk``: ``per-gate`` times ``neighbor_penalty`` for each
    occupied site adjacent to the gate (4 for one-qubit, 6 for two-qubit gates).
    """

    variant: str = "uniform"
    single: float = 0.99
    two: float = 0.95
    gate_table: Mapping[str, float] = field(default_factory=lambda: dict(DEFAULT_GATE_TABLE))
    edge_single: float = 0.99
    edge_two: float = 0.95
    inner_single: float = 0.97
    inner_two: float = 0.93
    neighbor_penalty: float = 0.94

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ParameterError(f"unknown stochastic variant {self.variant!r}; expected one of {VARIANTS}")
        probs = [self.single, self.two, self.edge_single, self.edge_two, self.inner_single, self.inner_two,
                 self.neighbor_penalty, *self.gate_table.values()]
        if not all(0.0 < p <= 1.0 for p in probs):
            raise ParameterError("success probabilities must lie in (0, 1]")

    @classmethod
    def numbered(cls, k: int) -> "StochasticModel":
        """Stochastic models 1-4 with their published defaults."""
        if k not in (1, 2, 3, 4):
            raise ParameterError(f"stochastic model number must be 1-4, got {k}")
        return cls(VARIANTS[k - 1])

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gate_table"] = dict(self.gate_table)
        return d


def _neighbors(site: Site, rows: int, cols: int) -> list[Site]:
    out = []
    for d in DIRECTIONS:
        nb = d.step(site)
        if 0 <= nb[0] < rows and 0 <= nb[1] < cols:
            out.append(nb)
    return out


def _is_edge(site: Site, rows: int, cols: int) -> bool:
    return site[0] in (0, rows - 1) or site[1] in (0, cols - 1)


def gate_success(c: LatticeCircuit, m: int, site: Site, gate: GateKind, model: StochasticModel,
                 occupied: set | None = None) -> list[float]:
    """Factors contributed by one gate, in multiplication order."""
    if gate.is_identity:
        return []
    v = model.variant
    if v == "uniform":
        return [model.two if gate.is_two_qubit else model.single]
    if v == "edge-inner":
        sites = [site, gate.direction.step(site)] if gate.is_two_qubit else [site]
        edge = all(_is_edge(s, c.rows, c.cols) for s in sites)
        if gate.is_two_qubit:
            return [model.edge_two if edge else model.inner_two]
        return [model.edge_single if edge else model.inner_single]
    try:
        factors = [model.gate_table[gate.name]]
    except KeyError:
        raise ParameterError(f"no success probability for gate {gate.name}") from None
    if v == "per-gate-crosstalk":
        if occupied is None:
            occupied = c.occupied(m)
        own = {site, gate.direction.step(site)} if gate.is_two_qubit else {site}
        ring = set()
        for s in own:
            ring.update(_neighbors(s, c.rows, c.cols))
        ring -= own
        factors += [model.neighbor_penalty] * sum(1 for s in ring if s in occupied)
    return factors


def product_fidelity(c: LatticeCircuit, m: StochasticModel) -> float:
    """Product of gate success probabilities, moment-major then row-major."""
    f = 1.0
    for k in range(c.depth):
        occupied = c.occupied(k) if m.variant == "per-gate-crosstalk" else None
        for site, gate in c.gates(k):
            for p in gate_success(c, k, site, gate, m, occupied):
                f *= p
    return f


# Simulation noise ----------------------------------------------------------

GATE_PAIR_ONLY = "gate-pair"
INCLUDE_NEIGHBORS = "include-neighbors"


@dataclass(frozen=True)
class SimNoiseModel:
    """Depolarizing after every gate, ZZ crosstalk after two-qubit gates.

    ``eps2`` defaults to ``10 * eps1``. ``zeta`` (Hz) and ``t_time`` (s) set
    the |11> phase ``-2 pi zeta t_time``.
    """

    eps1: float = 0.001
    eps2: float | None = None
    zeta: float = 150000.0
    t_time: float = 1e-8
    crosstalk_scope: str = GATE_PAIR_ONLY

    def __post_init__(self):
        if self.eps2 is None:
            object.__setattr__(self, "eps2", 10 * self.eps1)
        for name in ("eps1", "eps2"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ParameterError(f"{name} must lie in [0, 1]")
        if not (math.isfinite(self.zeta) and math.isfinite(self.t_time)):
            raise ParameterError("crosstalk parameters must be finite")
        if self.crosstalk_scope not in (GATE_PAIR_ONLY, INCLUDE_NEIGHBORS):
            raise ParameterError(f"unknown crosstalk scope {self.crosstalk_scope!r}")

    @classmethod
    def noiseless(cls) -> "SimNoiseModel":
        return cls(eps1=0.0, eps2=0.0, zeta=0.0)

    def to_dict(self) -> dict:
        return asdict(self)


NoiseModel = Union[SimNoiseModel, StochasticModel]


def noise_to_dict(m: NoiseModel) -> dict:
    kind = "sim" if isinstance(m, SimNoiseModel) else "stochastic"
    return {"kind": kind, **m.to_dict()}


def noise_from_dict(d: Mapping) -> NoiseModel:
    """Build a noise model from its key-value form (see ``configs/noise_*.json``)."""
    d = dict(d)
    kind = d.pop("kind", None)
    try:
        if kind == "sim":
            return SimNoiseModel(**d)
        if kind == "stochastic":
            if "model" in d:
                base = StochasticModel.numbered(int(d.pop("model"))).to_dict()
                base.update(d)
                d = base
            return StochasticModel(**d)
    except TypeError as exc:
        raise ConfigError(f"bad noise configuration: {exc}") from exc
    raise ConfigError(f"noise 'kind' must be 'sim' or 'stochastic', got {kind!r}")


def load_noise_config(path) -> NoiseModel:
    with open(path) as fh:
        return noise_from_dict(json.load(fh))


def noise_digest(m: NoiseModel) -> str:
    blob = json.dumps(noise_to_dict(m), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


# Channels and gate matrices ------------------------------------------------

_PAULI = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

GATE_MATRICES = {
    "I": _PAULI["I"],
    "X": _PAULI["X"],
    "Y": _PAULI["Y"],
    "Z": _PAULI["Z"],
    "H": np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2),
    "T": np.diag([1, np.exp(1j * math.pi / 4)]),
    "TD": np.diag([1, np.exp(-1j * math.pi / 4)]),
    # basis |anchor partner>, anchor most significant; CX anchor is the control
    "CX": np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    "CZ": np.diag([1, 1, 1, -1]).astype(complex),
}


def pauli_strings(n: int) -> list[np.ndarray]:
    """All 4**n n-qubit Paulis, identity first, first qubit most significant."""
    out = []
    for labels in np.ndindex(*(4,) * n):
        mats = [_PAULI["IXYZ"[i]] for i in labels]
        out.append(reduce(np.kron, mats))
    return out


def depolarizing_weights(n: int, eps: float) -> np.ndarray:
    """Probabilities of the 4**n Pauli insertions, identity first."""
    if n not in (1, 2):
        raise ParameterError(f"depolarizing channel defined for 1 or 2 qubits, got {n}")
    if not 0.0 <= eps <= 1.0:
        raise ParameterError(f"depolarizing probability must lie in [0, 1], got {eps}")
    d2 = 4 ** n
    w = np.full(d2, eps / d2)
    w[0] = 1.0 - eps * (d2 - 1) / d2
    return w


def depolarizing_kraus(n: int, eps: float) -> list[np.ndarray]:
    """Kraus operators of D_n(rho, eps) = (1 - eps) rho + eps I / 2**n (Pauli twirl form)."""
    w = depolarizing_weights(n, eps)
    return [math.sqrt(wk) * p for wk, p in zip(w, pauli_strings(n))]


def crosstalk_unitary(zeta: float, t_time: float) -> np.ndarray:
    """diag(1, 1, 1, exp(-2 pi i zeta t_time))."""
    if not (math.isfinite(zeta) and math.isfinite(t_time)):
        raise ParameterError("crosstalk parameters must be finite")
    return np.diag([1, 1, 1, np.exp(-2j * math.pi * zeta * t_time)])


# Compiled programs ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class GateOp:
    """A unitary on 1-2 qubits. ``noise`` marks crosstalk (absent from the ideal circuit)."""

    name: str
    qubits: tuple[int, ...]
    matrix: np.ndarray
    noise: bool = False

    def __repr__(self):
        return f"GateOp({self.name}, {self.qubits})"


@dataclass(frozen=True)
class DepolarizeOp:
    qubits: tuple[int, ...]
    p: float


@dataclass(frozen=True)
class NoisyProgram:
    n_qubits: int
    ops: tuple

    def __len__(self):
        return len(self.ops)

    def ideal_ops(self) -> list[GateOp]:
        return [op for op in self.ops if isinstance(op, GateOp) and not op.noise]

    def is_noiseless(self) -> bool:
        for op in self.ops:
            if isinstance(op, DepolarizeOp) and op.p > 0:
                return False
            if isinstance(op, GateOp) and op.noise and not np.array_equal(op.matrix, np.eye(len(op.matrix))):
                return False
        return True


def ideal_program(c: LatticeCircuit) -> NoisyProgram:
    return compile_noisy_program(c, SimNoiseModel.noiseless(), include_noise=False)


def compile_noisy_program(c: LatticeCircuit, m: SimNoiseModel, include_noise: bool = True) -> NoisyProgram:
    """Gates in moment-major, row-major order, each followed by its noise.

    One-qubit gate: ``[U, D1(eps1)]``. Two-qubit gate: ``[U, D2(eps2), ZZ(pair)]``
    plus, under ``include-neighbors`` scope, ZZ between each gate qubit and
    each of its lattice neighbours outside the gate. Identity emits nothing.
    """
    ops: list = []
    uzz = crosstalk_unitary(m.zeta, m.t_time)
    for _, site, gate in c.all_gates():
        q = c.qubit(site)
        if gate.is_two_qubit:
            partner = gate.direction.step(site)
            pair = (q, c.qubit(partner))
            ops.append(GateOp(gate.name, pair, GATE_MATRICES[gate.name]))
            if not include_noise:
                continue
            ops.append(DepolarizeOp(pair, m.eps2))
            ops.append(GateOp("ZZ", pair, uzz, noise=True))
            if m.crosstalk_scope == INCLUDE_NEIGHBORS:
                for s in (site, partner):
                    for nb in _neighbors(s, c.rows, c.cols):
                        if nb not in (site, partner):
                            ops.append(GateOp("ZZ", (c.qubit(s), c.qubit(nb)), uzz, noise=True))
        else:
            ops.append(GateOp(gate.name, (q,), GATE_MATRICES[gate.name]))
            if include_noise:
                ops.append(DepolarizeOp((q,), m.eps1))
    return NoisyProgram(c.n_qubits, tuple(ops))
