"""AdamW with decoupled weight decay, plateau LR scheduling and early stopping."""
import logging
import math
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Tuple

import numpy as np

from ..errors import ParameterError
from ..nn.model import Gradients, RnaParams

logger = logging.getLogger(__name__)


@dataclass
class AdamWState:
    '''First/second moments per tensor plus the shared step counter'''
    m: Dict[str, np.ndarray]
    v: Dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros(cls, params: RnaParams) -> "AdamWState":
        return cls(
            m={name: np.zeros_like(t) for name, t in params.items()},
            v={name: np.zeros_like(t) for name, t in params.items()},
        )


def adamw_step(
    params: RnaParams,
    grads: Gradients,
    state: AdamWState,
    lr: float,
    weight_decay: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    trainable: Optional[Iterable[str]] = None,
) -> Tuple[RnaParams, AdamWState]:
    """theta <- theta - lr * (m_hat / (sqrt(v_hat) + eps) + weight_decay * theta)

    Tensors outside `trainable` are skipped entirely: no moment update and no
    decay. Parameters are updated in place and their version is bumped.
    """
    beta1, beta2 = betas
    names = params.names() if trainable is None else [n for n in params.names() if n in set(trainable)]
    state.t += 1
    bias1 = 1.0 - beta1 ** state.t
    bias2 = 1.0 - beta2 ** state.t
    for name in names:
        g = grads[name]
        theta = params[name]
        if g.shape != theta.shape:
            raise ParameterError(f"gradient for {name} has shape {g.shape}, expected {theta.shape}")
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        m_hat = m / bias1
        v_hat = v / bias2
        theta -= lr * (m_hat / (np.sqrt(v_hat) + eps) + weight_decay * theta)
    params.bump()
    return params, state


@dataclass
class PlateauScheduler:
    '''Multiply lr by `factor` after `patience` consecutive epochs without relative improvement'''
    lr: float
    factor: float = 0.5
    patience: int = 12
    threshold: float = 1e-4
    best: float = math.inf
    num_bad_epochs: int = 0
    n_reductions: int = 0

    def step(self, val_loss: float) -> float:
        if val_loss < self.best * (1.0 - self.threshold):
            self.best = val_loss
            self.num_bad_epochs = 0
        else:
            self.num_bad_epochs += 1
        if self.num_bad_epochs >= self.patience:
            self.lr *= self.factor
            self.num_bad_epochs = 0
            self.n_reductions += 1
            logger.info(f"Validation loss plateaued; learning rate reduced to {self.lr:.3e}")
        return self.lr


def plateau_step(sched_state: PlateauScheduler, val_loss: float) -> float:
    return sched_state.step(val_loss)


@dataclass
class EarlyStopping:
    '''Tracks the best loss; improvement means loss < best - tol'''
    patience: int
    tol: float = 1e-6
    best: float = math.inf
    best_epoch: int = 0
    epochs_since_best: int = 0

    def update(self, loss: float, epoch: int) -> bool:
        if loss < self.best - self.tol:
            self.best = loss
            self.best_epoch = epoch
            self.epochs_since_best = 0
            return True
        self.epochs_since_best += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.epochs_since_best >= self.patience
