"""Distribution metrics and the derived improvement statistics."""
import logging
from typing import NamedTuple, Optional, Sequence, Tuple

import numpy as np
from scipy.special import xlogy

from ..errors import DomainError

logger = logging.getLogger(__name__)

KL_CLAMP = 1e-10
SUM_TOL = 1e-6
# differences below this are reported as "within numerical noise"
NOISE_THRESHOLD = 1e-3


class MetricPair(NamedTuple):
    kl: float
    tv: float


class ImprovementStats(NamedTuple):
    improvement_pct: Optional[float]
    gap_recovery_pct: Optional[float]


def _as_distribution(p: np.ndarray, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64)
    if p.ndim != 1 or not np.all(np.isfinite(p)) or np.any(p < 0):
        raise DomainError(f"{name} must be a finite non-negative vector")
    if abs(p.sum() - 1.0) > SUM_TOL:
        raise DomainError(f"{name} sums to {p.sum()!r}, expected 1")
    return p


def kl_metric(p_true: np.ndarray, q_pred: np.ndarray) -> float:
    """KL(p || q) with 0 ln 0 = 0.

    When q puts zero mass where p has support, q is clamped at 1e-10 and
    renormalized; strictly positive q is used as given.
    """
    p = _as_distribution(p_true, "p_true")
    q = _as_distribution(q_pred, "q_pred")
    if p.shape != q.shape:
        raise DomainError(f"shape mismatch {p.shape} vs {q.shape}")
    if np.any((q <= 0) & (p > 0)):
        q = np.maximum(q, KL_CLAMP)
        q = q / q.sum()
    kl = float(np.sum(xlogy(p, p) - xlogy(p, q)))
    # roundoff can leave a tiny negative value for near-identical inputs
    return max(kl, 0.0)


def tv_metric(p: np.ndarray, q: np.ndarray) -> float:
    '''Half the L1 distance'''
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape:
        raise DomainError(f"shape mismatch {p.shape} vs {q.shape}")
    return float(0.5 * np.abs(p - q).sum())


def metric_pair(p_true: np.ndarray, q_pred: np.ndarray) -> MetricPair:
    return MetricPair(kl_metric(p_true, q_pred), tv_metric(p_true, q_pred))


def mean_pair(pairs: Sequence[MetricPair]) -> MetricPair:
    return MetricPair(float(np.mean([p.kl for p in pairs])), float(np.mean([p.tv for p in pairs])))


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    '''Arithmetic mean and sample standard deviation (n - 1); std is 0 for one value'''
    arr = np.asarray(values, dtype=np.float64)
    if arr.size == 0:
        raise DomainError("cannot aggregate an empty set of values")
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def improvement_stats(kl_zero_shot: float, kl_few_shot: float, kl_in_domain: float) -> ImprovementStats:
    """improvement = (zs - fs) / zs; gap recovery = (zs - fs) / (zs - id); both in percent.

    Recovery is undefined (None, with a warning) when zs <= id.
    """
    improvement = None
    if kl_zero_shot > 0:
        improvement = (kl_zero_shot - kl_few_shot) / kl_zero_shot * 100.0
    else:
        logger.warning("Zero-shot KL is 0; improvement is undefined")
    recovery = None
    gap = kl_zero_shot - kl_in_domain
    if gap > 0:
        recovery = (kl_zero_shot - kl_few_shot) / gap * 100.0
    else:
        logger.warning(
            f"Zero-shot KL {kl_zero_shot:.4f} does not exceed in-domain KL {kl_in_domain:.4f}; "
            "gap recovery is undefined"
        )
    return ImprovementStats(improvement, recovery)
