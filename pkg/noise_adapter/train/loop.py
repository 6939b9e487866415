"""Source-device training loop and set-level evaluation."""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ..dataset import Sample, SplitSpec, stack_features, stack_targets
from ..errors import ConfigError
from ..evalrep.metrics import MetricPair, mean_pair, metric_pair
from ..nn.model import RnaParams, backward, forward, init_params, kl_batchmean_loss, predict
from ..seeding import derive_rng
from .config import TrainConfig
from .optim import AdamWState, EarlyStopping, PlateauScheduler, adamw_step

logger = logging.getLogger(__name__)

TRAIN_LOG_COLUMNS = ["epoch", "train_kl", "val_kl", "lr"]


@dataclass
class TrainLog:
    '''Per-epoch losses and learning rate, plus the checkpointed epoch

    `initial_val_kl` is the validation loss of the untrained model, the
    starting point of the convergence curve.
    '''
    train_kl: List[float] = field(default_factory=list)
    val_kl: List[float] = field(default_factory=list)
    lr: List[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_epoch: int = 0
    stop_reason: str = ""
    initial_val_kl: float = float("nan")

    @property
    def best_val_kl(self) -> float:
        return self.val_kl[self.best_epoch - 1]

    @property
    def improvement_factor(self) -> float:
        '''How many times lower the checkpointed val loss is than the untrained one'''
        return self.initial_val_kl / self.best_val_kl

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {
                "epoch": np.arange(1, len(self.val_kl) + 1),
                "train_kl": self.train_kl,
                "val_kl": self.val_kl,
                "lr": self.lr,
            },
            columns=TRAIN_LOG_COLUMNS,
        )


def write_train_log(log: TrainLog, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    log.to_frame().to_csv(path, index=False, float_format="%.10g")
    return path


def batched_loss(params: RnaParams, x: np.ndarray, y: np.ndarray, batch_size: int) -> float:
    '''Eval-mode KL over a set, averaged per sample across batches'''
    total = 0.0
    for start in range(0, len(x), batch_size):
        xb, yb = x[start:start + batch_size], y[start:start + batch_size]
        yhat, _ = forward(params, xb, mode="eval")
        total += kl_batchmean_loss(yb, yhat) * len(xb)
    return total / len(x)


def train_source(
    samples: Sequence[Sample],
    split: SplitSpec,
    cfg: TrainConfig = TrainConfig(),
    seed: int = 42,
    init: Optional[RnaParams] = None,
) -> Tuple[RnaParams, TrainLog]:
    """Train on encoded source samples and return the min-val-loss checkpoint.

    Each epoch shuffles the train indices, steps AdamW on minibatches of
    `cfg.batch_train` (the last short batch is kept), then evaluates the
    validation set in eval mode. Shuffling and dropout draw from separate
    streams derived from `seed`.
    """
    if not split.train_idx or not split.val_idx:
        raise ConfigError("training needs non-empty train and validation splits")
    x_train = stack_features([samples[i] for i in split.train_idx])
    y_train = stack_targets([samples[i] for i in split.train_idx])
    x_val = stack_features([samples[i] for i in split.val_idx])
    y_val = stack_targets([samples[i] for i in split.val_idx])

    params = init.copy() if init is not None else init_params(seed)
    shuffle_rng = derive_rng(seed, "train-shuffle")
    dropout_rng = derive_rng(seed, "train-dropout")
    state = AdamWState.zeros(params)
    scheduler = PlateauScheduler(cfg.lr, cfg.plateau_factor, cfg.plateau_patience, cfg.plateau_threshold)
    stopper = EarlyStopping(cfg.early_stop_patience, cfg.early_stop_tol)
    best = params.copy()
    log = TrainLog(initial_val_kl=batched_loss(params, x_val, y_val, cfg.batch_val))

    logger.info(
        f"Training on {len(x_train)} samples, validating on {len(x_val)} "
        f"(max {cfg.max_epochs} epochs, lr {cfg.lr:g}, initial val KL {log.initial_val_kl:.6f})"
    )
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        lr = scheduler.lr
        order = shuffle_rng.permutation(len(x_train))
        running = 0.0
        for start in range(0, len(order), cfg.batch_train):
            idx = order[start:start + cfg.batch_train]
            yhat, trace = forward(params, x_train[idx], mode="train", rng=dropout_rng, dropout_rate=cfg.dropout)
            running += kl_batchmean_loss(y_train[idx], yhat) * len(idx)
            grads = backward(trace, y_train[idx])
            adamw_step(params, grads, state, lr, cfg.weight_decay)
        train_kl = running / len(x_train)
        val_kl = batched_loss(params, x_val, y_val, cfg.batch_val)

        log.train_kl.append(train_kl)
        log.val_kl.append(val_kl)
        log.lr.append(lr)
        logger.debug(f"epoch {epoch:3d} train_kl={train_kl:.6f} val_kl={val_kl:.6f} lr={lr:.3e}")

        if stopper.update(val_kl, epoch):
            best = params.copy()
        scheduler.step(val_kl)
        if stopper.should_stop:
            log.stop_reason = "early_stop"
            logger.info(f"Early stopping at epoch {epoch}; best val KL {stopper.best:.6f} at epoch {stopper.best_epoch}")
            break
    else:
        log.stop_reason = "max_epochs"

    log.best_epoch = stopper.best_epoch
    log.stopped_epoch = epoch
    logger.info(
        f"Best checkpoint: epoch {log.best_epoch}, val KL {log.best_val_kl:.6f} "
        f"({log.improvement_factor:.2f}x below the untrained model)"
    )
    return best, log


def per_sample_metrics(params: RnaParams, samples: Sequence[Sample]) -> List[MetricPair]:
    '''KL/TV of each prediction against its padded ideal distribution'''
    yhat = predict(params, stack_features(samples))
    return [metric_pair(s.y, q) for s, q in zip(samples, yhat)]


def evaluate_set(params: RnaParams, samples: Sequence[Sample]) -> MetricPair:
    '''Arithmetic mean of per-sample KL and TV in eval mode'''
    if len(samples) == 0:
        raise ConfigError("cannot evaluate an empty sample set")
    return mean_pair(per_sample_metrics(params, samples))
