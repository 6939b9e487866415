"""Device calibration profiles and the two synthetic presets."""
import logging
import math
from typing import Dict, List, NamedTuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .errors import InvalidProfileError, ParameterError

logger = logging.getLogger(__name__)

CALIBRATION_FIELDS = ("t1_us", "t2_us", "readout_error", "cx_error")


class DeviceProfile(BaseModel):
    '''Device-level mean calibration scalars'''
    model_config = ConfigDict(frozen=True)

    name: str
    t1_us: float = Field(gt=0)
    t2_us: float = Field(gt=0)
    readout_error: float = Field(ge=0, lt=0.5)
    cx_error: float = Field(ge=0, lt=1)

    @model_validator(mode="after")
    def _check_coherence(self) -> "DeviceProfile":
        if self.t2_us > 2 * self.t1_us:
            raise ValueError(f"T2 ({self.t2_us} us) must not exceed 2*T1 ({2 * self.t1_us} us)")
        return self


PRESETS: Dict[str, DeviceProfile] = {
    "SourceA": DeviceProfile(name="SourceA", t1_us=142.4, t2_us=104.1, readout_error=0.0285, cx_error=0.0328),
    "TargetB": DeviceProfile(name="TargetB", t1_us=192.8, t2_us=114.0, readout_error=0.0335, cx_error=0.0560),
}


def preset(name: str) -> DeviceProfile:
    try:
        return PRESETS[name]
    except KeyError:
        raise ParameterError(f"unknown device preset {name!r}; expected one of {sorted(PRESETS)}") from None


def calibration_features(p: DeviceProfile) -> np.ndarray:
    '''Raw [t1_us, t2_us, readout_error, cx_error]'''
    return np.array([p.t1_us, p.t2_us, p.readout_error, p.cx_error], dtype=np.float64)


def jitter_profile(p: DeviceProfile, sigma: float, rng: np.random.Generator) -> DeviceProfile:
    """Relative Gaussian perturbation of each calibration scalar.

    sigma == 0 returns `p` unchanged and draws nothing from `rng`. Perturbed
    values are clipped back into the profile's valid ranges.
    """
    if sigma < 0:
        raise ParameterError("jitter sigma must be >= 0")
    if sigma == 0:
        return p
    factors = 1.0 + sigma * rng.standard_normal(4)
    t1 = max(p.t1_us * factors[0], 1e-6)
    t2 = min(max(p.t2_us * factors[1], 1e-6), 2 * t1)
    readout = min(max(p.readout_error * factors[2], 0.0), 0.499)
    cx = min(max(p.cx_error * factors[3], 0.0), 0.999)
    return DeviceProfile(name=p.name, t1_us=t1, t2_us=t2, readout_error=readout, cx_error=cx)


class DriftRow(NamedTuple):
    property: str
    source: float
    target: float
    delta: float
    delta_pct: float


def calibration_drift(source: DeviceProfile, target: DeviceProfile) -> List[DriftRow]:
    '''Per-property difference target - source, absolute and relative to source'''
    rows = []
    for name, a, b in zip(CALIBRATION_FIELDS, calibration_features(source), calibration_features(target)):
        pct = (b - a) / a * 100.0 if a != 0 else math.nan
        rows.append(DriftRow(name, float(a), float(b), float(b - a), float(pct)))
    return rows


def validate_profile(p: DeviceProfile) -> DeviceProfile:
    '''Re-check invariants on profiles built without validation (model_construct)'''
    if not p.t1_us > 0:
        raise InvalidProfileError(f"{p.name}: T1 must be positive")
    if not 0 < p.t2_us <= 2 * p.t1_us:
        raise InvalidProfileError(f"{p.name}: require 0 < T2 <= 2*T1 (T1={p.t1_us}, T2={p.t2_us})")
    if not 0 <= p.readout_error < 0.5:
        raise InvalidProfileError(f"{p.name}: readout error must be in [0, 0.5)")
    if not 0 <= p.cx_error < 1:
        raise InvalidProfileError(f"{p.name}: CX error must be in [0, 1)")
    return p
