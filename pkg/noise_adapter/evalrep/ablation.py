"""Leave-one-out ablation of the standardized calibration features."""
import logging
from dataclasses import dataclass, replace
from typing import Any, Dict, List, Optional, Sequence

from ..dataset import CALIBRATION_INDICES, FEATURE_NAMES, Sample
from ..errors import ParameterError
from ..nn.model import RnaParams
from ..train.loop import evaluate_set
from .metrics import NOISE_THRESHOLD

logger = logging.getLogger(__name__)


@dataclass
class AblationRow:
    feature_index: int
    feature_name: str
    kl: float
    baseline_kl: float

    @property
    def delta(self) -> float:
        return self.kl - self.baseline_kl

    @property
    def within_noise(self) -> bool:
        return abs(self.delta) < NOISE_THRESHOLD

    def to_record(self) -> Dict[str, Any]:
        return {
            "feature_index": self.feature_index,
            "feature_name": self.feature_name,
            "kl": self.kl,
            "baseline_kl": self.baseline_kl,
            "delta": self.delta,
            "within_noise": self.within_noise,
        }


def zero_feature(samples: Sequence[Sample], feature_index: int) -> List[Sample]:
    '''Copies with x[feature_index] = 0, i.e. the source-train mean'''
    out = []
    for s in samples:
        x = s.x.copy()
        x[feature_index] = 0.0
        out.append(replace(s, x=x))
    return out


def ablate_feature(
    params: RnaParams,
    target_samples: Sequence[Sample],
    feature_index: int,
    baseline_kl: Optional[float] = None,
) -> AblationRow:
    if feature_index not in CALIBRATION_INDICES:
        raise ParameterError(f"ablation index must be one of {CALIBRATION_INDICES}, got {feature_index}")
    if baseline_kl is None:
        baseline_kl = evaluate_set(params, target_samples).kl
    kl = evaluate_set(params, zero_feature(target_samples, feature_index)).kl
    return AblationRow(feature_index, FEATURE_NAMES[feature_index], kl, baseline_kl)


def run_ablation(params: RnaParams, target_samples: Sequence[Sample]) -> List[AblationRow]:
    '''One row per calibration feature, all against the same zero-shot baseline'''
    baseline = evaluate_set(params, target_samples).kl
    rows = [ablate_feature(params, target_samples, i, baseline) for i in CALIBRATION_INDICES]
    for row in rows:
        note = " (within numerical noise)" if row.within_noise else ""
        logger.info(f"Ablate {row.feature_name}: KL {row.kl:.4f}, delta {row.delta:+.4f}{note}")
    return rows
