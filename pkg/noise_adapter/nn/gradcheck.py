"""Central-difference verification of the analytic gradients."""
import logging
from dataclasses import dataclass, field
from typing import List, NamedTuple, Optional

import numpy as np

from .model import Gradients, RnaParams, backward, forward, kl_batchmean_loss

logger = logging.getLogger(__name__)

FD_EPS = 1e-5
REL_FLOOR = 1e-8


class CoordinateError(NamedTuple):
    name: str
    index: int
    analytic: float
    numeric: float
    rel_error: float


@dataclass
class GradCheckReport:
    passed: bool
    tolerance: float
    n_checked: int
    max_rel_error: float
    worst: List[CoordinateError] = field(default_factory=list)

    def summary(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status}: {self.n_checked} coordinates, max relative error {self.max_rel_error:.3e} (tol {self.tolerance:g})"


def relative_error(analytic: float, numeric: float) -> float:
    '''|a - n| / max(1e-8, |a| + |n|)'''
    return abs(analytic - numeric) / max(REL_FLOOR, abs(analytic) + abs(numeric))


def _sample_coordinates(params: RnaParams, n_coords: int, rng: np.random.Generator) -> List[tuple]:
    '''One coordinate from every tensor, the rest uniform over all parameters'''
    names = list(params.names())
    sizes = np.array([params[name].size for name in names])
    coords = [(name, int(rng.integers(params[name].size))) for name in names]
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    for flat in rng.integers(offsets[-1], size=max(n_coords - len(coords), 0)):
        t = int(np.searchsorted(offsets, flat, side="right") - 1)
        coords.append((names[t], int(flat - offsets[t])))
    return coords


def grad_check(
    params: RnaParams,
    x: np.ndarray,
    y: np.ndarray,
    tolerance: float = 1e-4,
    n_coords: int = 200,
    seed: int = 0,
    analytic: Optional[Gradients] = None,
    n_worst: int = 5,
) -> GradCheckReport:
    """Compare analytic gradients with central differences (eps = 1e-5).

    Dropout is disabled so the loss is a deterministic function of the
    parameters. `analytic` may be passed in to check externally produced
    gradients; otherwise they come from a train-mode forward at rate 0.
    """
    x = np.atleast_2d(x)
    y = np.atleast_2d(y)
    if analytic is None:
        _, trace = forward(params, x, mode="train", dropout_rate=0.0)
        analytic = backward(trace, y)

    shifted = params.copy()

    def loss() -> float:
        yhat, _ = forward(shifted, x, mode="eval")
        return kl_batchmean_loss(y, yhat)

    errors: List[CoordinateError] = []
    for name, index in _sample_coordinates(params, n_coords, np.random.default_rng(seed)):
        flat = shifted[name].reshape(-1)
        original = flat[index]
        flat[index] = original + FD_EPS
        plus = loss()
        flat[index] = original - FD_EPS
        minus = loss()
        flat[index] = original
        numeric = (plus - minus) / (2 * FD_EPS)
        ga = float(analytic[name].reshape(-1)[index])
        errors.append(CoordinateError(name, index, ga, numeric, relative_error(ga, numeric)))

    errors.sort(key=lambda e: e.rel_error, reverse=True)
    max_rel = errors[0].rel_error if errors else 0.0
    report = GradCheckReport(
        passed=max_rel < tolerance,
        tolerance=tolerance,
        n_checked=len(errors),
        max_rel_error=max_rel,
        worst=errors[:n_worst],
    )
    if report.passed:
        logger.debug(report.summary())
    else:
        logger.warning(report.summary())
    return report
