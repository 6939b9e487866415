"""Calibration-driven Kraus channels.

Each channel function returns a list of Kraus operators {K_i} describing a
CPTP map rho -> sum_i K_i rho K_i^dagger on one qubit.
"""
import math
from dataclasses import asdict, dataclass
from typing import Dict, List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from ..device import DeviceProfile, validate_profile
from ..errors import InvalidProfileError, ParameterError

I2 = np.eye(2, dtype=complex)
PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)

SINGLE_QUBIT_DEPOL_RATIO = 0.1


class GateDurations(BaseModel):
    '''Gate durations in microseconds'''
    model_config = ConfigDict(frozen=True)

    t_1q: float = Field(default=0.05, gt=0)
    t_2q: float = Field(default=0.30, gt=0)


@dataclass(frozen=True)
class NoiseChannelSet:
    '''Per-gate channel strengths for single- and two-qubit gates, plus readout flip'''
    gamma1_1q: float = 0.0
    gamma_phi_1q: float = 0.0
    p_dep_1q: float = 0.0
    gamma1_2q: float = 0.0
    gamma_phi_2q: float = 0.0
    p_dep_2q: float = 0.0
    p_readout: float = 0.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not 0.0 <= value < 1.0:
                raise ParameterError(f"channel parameter {name}={value} outside [0, 1)")

    @classmethod
    def null(cls) -> "NoiseChannelSet":
        return cls()

    def for_arity(self, arity: int) -> Dict[str, float]:
        if arity == 1:
            return {"gamma1": self.gamma1_1q, "gamma_phi": self.gamma_phi_1q, "p_dep": self.p_dep_1q}
        return {"gamma1": self.gamma1_2q, "gamma_phi": self.gamma_phi_2q, "p_dep": self.p_dep_2q}


def amplitude_damping(gamma: float) -> List[np.ndarray]:
    '''|1> relaxes to |0> with probability gamma'''
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex)
    k1 = np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex)
    return [k0, k1]


def phase_damping(gamma_phi: float) -> List[np.ndarray]:
    '''Pure dephasing: off-diagonal elements shrink by sqrt(1 - gamma_phi)'''
    k0 = np.array([[1, 0], [0, math.sqrt(1 - gamma_phi)]], dtype=complex)
    k1 = np.array([[0, 0], [0, math.sqrt(gamma_phi)]], dtype=complex)
    return [k0, k1]


def depolarizing(p: float) -> List[np.ndarray]:
    '''rho -> (1 - p) rho + p I/2'''
    return [
        math.sqrt(1 - 3 * p / 4) * I2,
        math.sqrt(p / 4) * PAULI_X,
        math.sqrt(p / 4) * PAULI_Y,
        math.sqrt(p / 4) * PAULI_Z,
    ]


def readout_confusion(p: float) -> np.ndarray:
    '''Column-stochastic symmetric flip matrix, M[measured, true]'''
    return np.array([[1 - p, p], [p, 1 - p]], dtype=np.float64)


def kraus_completeness_error(kraus: List[np.ndarray]) -> float:
    '''max |sum K^dagger K - I|'''
    total = sum(k.conj().T @ k for k in kraus)
    return float(np.max(np.abs(total - np.eye(total.shape[0]))))


def _decay_probability(t_gate: float, rate: float) -> float:
    return float(-math.expm1(-t_gate * rate))


def build_channels(p: DeviceProfile, durations: GateDurations = GateDurations()) -> NoiseChannelSet:
    """Map calibration scalars to channel strengths.

    gamma1 = 1 - exp(-t/T1); 1/T_phi = 1/T2 - 1/(2 T1); gamma_phi = 1 - exp(-t/T_phi);
    depolarizing is cx_error for two-qubit gates and a tenth of it for single-qubit gates.
    """
    validate_profile(p)
    rate_1 = 1.0 / p.t1_us
    rate_phi = 1.0 / p.t2_us - 1.0 / (2.0 * p.t1_us)
    if rate_phi < 0:
        if rate_phi > -1e-15 * rate_1:
            rate_phi = 0.0
        else:
            raise InvalidProfileError(f"{p.name}: T2 > 2*T1 gives a negative dephasing rate")

    return NoiseChannelSet(
        gamma1_1q=_decay_probability(durations.t_1q, rate_1),
        gamma_phi_1q=_decay_probability(durations.t_1q, rate_phi),
        p_dep_1q=p.cx_error * SINGLE_QUBIT_DEPOL_RATIO,
        gamma1_2q=_decay_probability(durations.t_2q, rate_1),
        gamma_phi_2q=_decay_probability(durations.t_2q, rate_phi),
        p_dep_2q=p.cx_error,
        p_readout=p.readout_error,
    )
