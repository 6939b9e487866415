"""Statevector and density-matrix simulation.

Basis index i encodes the outcome of qubit q in bit q (qubit 0 is the least
significant bit). Bitstrings are written MSB-left, so qubit 0 is the
rightmost character.
"""
import logging
import math
from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Dict, List, Tuple

import numpy as np

from ..circuits import Circuit, Gate, GateKind
from ..errors import DomainError, EmptyCountsError, NumericError, ParameterError
from .channels import (
    NoiseChannelSet,
    amplitude_damping,
    depolarizing,
    phase_damping,
    readout_confusion,
)

logger = logging.getLogger(__name__)

TRACE_TOL = 1e-10
PROB_TOL = 1e-9
# statevector probabilities are snapped to this many decimals to drop roundoff
IDEAL_DECIMALS = 14

_H = np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


@dataclass
class Distribution:
    '''Probability vector over 2^n basis states'''
    probs: np.ndarray
    n_qubits: int

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.shape != (2 ** self.n_qubits,):
            raise DomainError(f"expected {2 ** self.n_qubits} probabilities, got shape {self.probs.shape}")
        if np.any(self.probs < 0) or not np.all(np.isfinite(self.probs)):
            raise DomainError("probabilities must be finite and non-negative")
        if abs(self.probs.sum() - 1.0) > PROB_TOL:
            raise DomainError(f"probabilities sum to {self.probs.sum()!r}, expected 1")


@dataclass
class CountsMap:
    '''Measurement histogram keyed by bitstring'''
    counts: Dict[str, int]
    shots: int
    n_qubits: int

    def __post_init__(self):
        for bits, count in self.counts.items():
            if len(bits) != self.n_qubits or set(bits) - {"0", "1"}:
                raise DomainError(f"bad bitstring {bits!r} for {self.n_qubits} qubits")
            if count < 0:
                raise DomainError(f"negative count for {bits}")
        if sum(self.counts.values()) != self.shots:
            raise DomainError(f"counts sum to {sum(self.counts.values())}, expected {self.shots} shots")


def bitstring(index: int, n_qubits: int) -> str:
    return format(index, f"0{n_qubits}b")


@lru_cache(maxsize=None)
def _embed_1q(op_key: bytes, qubit: int, n_qubits: int) -> np.ndarray:
    op = np.frombuffer(op_key, dtype=complex).reshape(2, 2)
    factors = [op if q == qubit else np.eye(2, dtype=complex) for q in range(n_qubits - 1, -1, -1)]
    return reduce(np.kron, factors)


def embed_single_qubit(op: np.ndarray, qubit: int, n_qubits: int) -> np.ndarray:
    '''Lift a 2x2 operator on `qubit` to the full 2^n space'''
    return _embed_1q(np.ascontiguousarray(op, dtype=complex).tobytes(), qubit, n_qubits)


@lru_cache(maxsize=None)
def _two_qubit_unitary(kind: GateKind, control: int, target: int, angle: float, n_qubits: int) -> np.ndarray:
    dim = 2 ** n_qubits
    if kind is GateKind.CX:
        u = np.zeros((dim, dim), dtype=complex)
        for i in range(dim):
            j = i ^ (1 << target) if (i >> control) & 1 else i
            u[j, i] = 1.0
        return u
    diag = np.ones(dim, dtype=complex)
    for i in range(dim):
        if (i >> control) & 1 and (i >> target) & 1:
            diag[i] = np.exp(1j * angle)
    return np.diag(diag)


def gate_unitary(gate: Gate, n_qubits: int) -> np.ndarray:
    if gate.kind is GateKind.H:
        return embed_single_qubit(_H, gate.qubits[0], n_qubits)
    if gate.kind is GateKind.X:
        return embed_single_qubit(_X, gate.qubits[0], n_qubits)
    control, target = gate.qubits
    return _two_qubit_unitary(gate.kind, control, target, gate.angle, n_qubits)


def _to_distribution(probs: np.ndarray, n_qubits: int) -> Distribution:
    if np.min(probs) < -TRACE_TOL:
        raise NumericError(f"negative probability {np.min(probs)} after simulation")
    probs = np.clip(probs, 0.0, None)
    return Distribution(probs / probs.sum(), n_qubits)


def ideal_distribution(c: Circuit) -> Distribution:
    '''Exact statevector evolution from |0...0>'''
    psi = np.zeros(2 ** c.n_qubits, dtype=complex)
    psi[0] = 1.0
    for gate in c.gates:
        psi = gate_unitary(gate, c.n_qubits) @ psi
    return _to_distribution(np.round(np.abs(psi) ** 2, IDEAL_DECIMALS), c.n_qubits)


def apply_kraus(rho: np.ndarray, kraus: List[np.ndarray], qubit: int, n_qubits: int) -> np.ndarray:
    out = np.zeros_like(rho)
    for k in kraus:
        full = embed_single_qubit(k, qubit, n_qubits)
        out += full @ rho @ full.conj().T
    return out


def _check_state(rho: np.ndarray, where: str) -> None:
    trace = np.trace(rho).real
    if abs(trace - 1.0) > TRACE_TOL:
        raise NumericError(f"trace drifted to {trace!r} after {where}")
    if np.max(np.abs(rho - rho.conj().T)) > TRACE_TOL:
        raise NumericError(f"density matrix lost hermiticity after {where}")


def apply_readout(probs: np.ndarray, p_readout: float, n_qubits: int) -> np.ndarray:
    '''Independent symmetric flip of every measured bit'''
    if p_readout == 0:
        return probs
    confusion = readout_confusion(p_readout)
    # axis a of the reshaped tensor holds qubit n-1-a
    tensor = probs.reshape([2] * n_qubits)
    for axis in range(n_qubits):
        tensor = np.moveaxis(np.tensordot(confusion, tensor, axes=([1], [axis])), 0, axis)
    return tensor.reshape(-1)


def _gate_channels(strengths: Dict[str, float]) -> List[Tuple[str, List[np.ndarray]]]:
    '''Non-trivial channels of one gate arity, in application order'''
    channels = [
        ("amplitude damping", strengths["gamma1"], amplitude_damping),
        ("dephasing", strengths["gamma_phi"], phase_damping),
        ("depolarizing", strengths["p_dep"], depolarizing),
    ]
    return [(label, build(strength)) for label, strength, build in channels if strength > 0]


def evolve_density_matrix(c: Circuit, ch: NoiseChannelSet) -> np.ndarray:
    '''Trace and hermiticity are checked after the unitary and after every channel'''
    dim = 2 ** c.n_qubits
    rho = np.zeros((dim, dim), dtype=complex)
    rho[0, 0] = 1.0
    for step, gate in enumerate(c.gates):
        where = f"gate {step} ({gate.kind.value}) of {c.id}"
        u = gate_unitary(gate, c.n_qubits)
        rho = u @ rho @ u.conj().T
        _check_state(rho, where)
        channels = _gate_channels(ch.for_arity(len(gate.qubits)))
        for qubit in gate.qubits:
            for label, kraus in channels:
                rho = apply_kraus(rho, kraus, qubit, c.n_qubits)
                _check_state(rho, f"{label} on qubit {qubit} at {where}")
    return rho


def noisy_distribution(c: Circuit, ch: NoiseChannelSet) -> Distribution:
    """Density-matrix evolution with per-gate noise, then readout confusion.

    After each gate unitary, every participating qubit passes through
    amplitude damping, pure dephasing and depolarizing of the gate's arity.
    """
    rho = evolve_density_matrix(c, ch)
    probs = np.real(np.diag(rho)).copy()
    probs = apply_readout(probs, ch.p_readout, c.n_qubits)
    return _to_distribution(probs, c.n_qubits)


def sample_counts(d: Distribution, shots: int, rng: np.random.Generator) -> CountsMap:
    '''Multinomial draw of `shots` outcomes'''
    if shots < 1:
        raise ParameterError(f"shots must be >= 1, got {shots}")
    p = np.clip(d.probs, 0.0, None)
    draws = rng.multinomial(shots, p / p.sum())
    counts = {bitstring(i, d.n_qubits): int(n) for i, n in enumerate(draws) if n > 0}
    return CountsMap(counts, shots, d.n_qubits)


def counts_to_distribution(cm: CountsMap, n_qubits: int) -> Distribution:
    if cm.shots <= 0:
        raise EmptyCountsError("counts map has zero shots")
    probs = np.zeros(2 ** n_qubits, dtype=np.float64)
    for bits, count in cm.counts.items():
        if len(bits) != n_qubits:
            raise DomainError(f"bitstring {bits!r} does not match {n_qubits} qubits")
        probs[int(bits, 2)] = count / cm.shots
    return Distribution(probs, n_qubits)
