"""Few-shot cross-device adaptation.

A source-trained model is fine-tuned on K target samples mixed with a fixed
replay set of source-train samples, with everything except the last layers
frozen. The K x seed grid is evaluated on the target samples held out from
each selection.
"""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Literal, Optional, Sequence, Tuple

from pydantic import BaseModel, ConfigDict, Field

from .dataset import Sample, stack_features, stack_targets
from .errors import ConfigError, InsufficientDataError, ParameterError
from .evalrep.metrics import MetricPair, mean_std
from .nn.model import (
    BLOCK3_AND_HEAD_TENSORS,
    DROPOUT_RATE,
    HEAD_TENSORS,
    RnaParams,
    backward,
    forward,
    kl_batchmean_loss,
    predict,
)
from .seeding import derive_rng
from .train.loop import evaluate_set
from .train.optim import AdamWState, EarlyStopping, adamw_step

logger = logging.getLogger(__name__)

DEFAULT_K_VALUES = (5, 10, 20)
DEFAULT_SEEDS = (0, 1, 2, 3, 4)
REPLAY_SIZE = 24
HEAD_ONLY_MAX_K = 10

ReplayTargets = Literal["source_model", "labels"]


class AdaptConfig(BaseModel):
    '''Fine-tuning settings for one K'''
    model_config = ConfigDict(frozen=True)

    k: int = Field(gt=0)
    trainable: Tuple[str, ...]
    lr: float = Field(gt=0)
    max_epochs: int = Field(gt=0)
    patience: int = Field(default=12, gt=0)
    tol: float = Field(default=1e-6, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    replay_size: int = Field(default=REPLAY_SIZE, ge=0)
    use_replay: bool = True
    dropout: float = Field(default=DROPOUT_RATE, ge=0, lt=1)
    replay_targets: ReplayTargets = "source_model"

    @classmethod
    def for_k(cls, k: int, replay_size: int = REPLAY_SIZE, use_replay: bool = True,
              dropout_during_finetune: bool = True,
              replay_targets: ReplayTargets = "source_model") -> "AdaptConfig":
        """K <= 10: head only, lr 1e-4, 60 epochs. Larger K: block3 + head, lr 5e-5, 80 epochs."""
        if k < 1:
            raise ParameterError(f"K must be positive, got {k}")
        dropout = DROPOUT_RATE if dropout_during_finetune else 0.0
        if k <= HEAD_ONLY_MAX_K:
            return cls(k=k, trainable=tuple(sorted(HEAD_TENSORS)), lr=1e-4, max_epochs=60,
                       replay_size=replay_size, use_replay=use_replay, dropout=dropout,
                       replay_targets=replay_targets)
        return cls(k=k, trainable=tuple(sorted(BLOCK3_AND_HEAD_TENSORS)), lr=5e-5, max_epochs=80,
                   replay_size=replay_size, use_replay=use_replay, dropout=dropout,
                   replay_targets=replay_targets)


@dataclass
class ShotSelection:
    seed: int
    adapt_idx: List[int]
    eval_idx: List[int]


@dataclass
class FinetuneOutcome:
    params: RnaParams
    epochs_run: int
    best_epoch: int
    best_loss: float


@dataclass
class FewShotRun:
    '''One (K, seed) cell'''
    k: int
    seed: int
    kl: float
    tv: float
    epochs_run: int
    replay: bool
    source_val_kl: Optional[float] = None
    source_val_tv: Optional[float] = None

    def to_record(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "seed": self.seed,
            "kl": self.kl,
            "tv": self.tv,
            "epochs_run": self.epochs_run,
            "replay": self.replay,
            "source_val_kl": self.source_val_kl,
            "source_val_tv": self.source_val_tv,
        }


@dataclass
class FewShotResult:
    '''Per-seed metrics for one K and their mean / sample std'''
    k: int
    runs: List[FewShotRun] = field(default_factory=list)

    @property
    def seeds(self) -> List[int]:
        return [r.seed for r in self.runs]

    @property
    def kl(self) -> Tuple[float, float]:
        return mean_std([r.kl for r in self.runs])

    @property
    def tv(self) -> Tuple[float, float]:
        return mean_std([r.tv for r in self.runs])


@dataclass
class FewShotGrid:
    results: Dict[int, FewShotResult]
    zero_shot: MetricPair
    in_domain: Optional[MetricPair] = None


def select_shots(target_samples: Sequence[Sample], k: int, seed: int) -> ShotSelection:
    '''Seeded shuffle of the target indices: the first K adapt, the rest evaluate'''
    n = len(target_samples)
    if not 0 < k < n:
        raise ParameterError(f"K must be in [1, {n - 1}] for {n} target samples, got {k}")
    order = derive_rng(seed, "shot-selection").permutation(n)
    return ShotSelection(seed, sorted(int(i) for i in order[:k]), sorted(int(i) for i in order[k:]))


def build_replay(source_train: Sequence[Sample], size: int = REPLAY_SIZE, seed: int = 0) -> List[Sample]:
    '''`size` distinct source-train samples, fixed for one fine-tuning run'''
    if len(source_train) < size:
        raise InsufficientDataError(f"replay needs {size} source samples, only {len(source_train)} available")
    if size == 0:
        return []
    idx = derive_rng(seed, "replay").choice(len(source_train), size=size, replace=False)
    return [source_train[i] for i in sorted(int(i) for i in idx)]


def finetune(
    best_params: RnaParams,
    target_samples: Sequence[Sample],
    shots: ShotSelection,
    replay: Sequence[Sample],
    cfg: AdaptConfig,
) -> FinetuneOutcome:
    """Full-batch AdamW on the pooled K target shots and replay samples.

    Every sample in the pool carries the same weight. With
    cfg.replay_targets == "source_model" the replay samples are fitted to the
    source model's own eval-mode predictions, so their loss starts at zero
    and only pulls back against drift; with "labels" they keep their ideal
    distributions. Early stopping monitors the pooled training loss
    (patience cfg.patience, tolerance cfg.tol); the parameters that achieved
    the best loss are returned. Tensors outside cfg.trainable are never
    touched.
    """
    if not cfg.trainable:
        raise ConfigError("fine-tuning needs at least one trainable tensor")
    shot_samples = [target_samples[i] for i in shots.adapt_idx]
    x_shots, y_shots = stack_features(shot_samples), stack_targets(shot_samples)
    x_replay = y_replay = None
    replay_dropout = 0.0
    if replay:
        x_replay = stack_features(replay)
        if cfg.replay_targets == "source_model":
            y_replay = predict(best_params, x_replay)
        else:
            y_replay = stack_targets(replay)
            replay_dropout = cfg.dropout
    n_shots, n_replay = len(x_shots), 0 if x_replay is None else len(x_replay)
    n_pool = n_shots + n_replay

    params = best_params.copy()
    state = AdamWState.zeros(params)
    stopper = EarlyStopping(cfg.patience, cfg.tol)
    rng = derive_rng(shots.seed, f"finetune-dropout-k{cfg.k}")
    best = params.copy()
    epoch = 0
    for epoch in range(1, cfg.max_epochs + 1):
        yhat, trace = forward(params, x_shots, mode="train", rng=rng, dropout_rate=cfg.dropout)
        loss = kl_batchmean_loss(y_shots, yhat) * n_shots
        replay_trace = None
        if x_replay is not None:
            yhat_replay, replay_trace = forward(params, x_replay, mode="train", rng=rng, dropout_rate=replay_dropout)
            loss += kl_batchmean_loss(y_replay, yhat_replay) * n_replay
        loss /= n_pool
        if stopper.update(loss, epoch):
            best = params.copy()
        if stopper.should_stop:
            break
        grads = backward(trace, y_shots, trainable=cfg.trainable)
        if replay_trace is not None:
            replay_grads = backward(replay_trace, y_replay, trainable=cfg.trainable)
            # per-part batch means back to one mean over the whole pool
            grads = {
                name: (n_shots * g + n_replay * replay_grads[name]) / n_pool
                for name, g in grads.items()
            }
        adamw_step(params, grads, state, cfg.lr, cfg.weight_decay, trainable=cfg.trainable)
    logger.debug(f"K={cfg.k} seed={shots.seed}: {epoch} epochs, best pooled loss {stopper.best:.6f} at {stopper.best_epoch}")
    return FinetuneOutcome(best, epoch, stopper.best_epoch, stopper.best)


def run_fewshot(
    params: RnaParams,
    target_samples: Sequence[Sample],
    source_train: Sequence[Sample],
    source_val: Sequence[Sample] = (),
    k_values: Sequence[int] = DEFAULT_K_VALUES,
    seeds: Sequence[int] = DEFAULT_SEEDS,
    replay_size: int = REPLAY_SIZE,
    use_replay: bool = True,
    dropout_during_finetune: bool = True,
    replay_targets: ReplayTargets = "source_model",
    on_run: Optional[Callable[[FewShotRun], None]] = None,
) -> FewShotGrid:
    """Fine-tune and evaluate every (K, seed) cell sequentially.

    Each cell works on its own copy of `params`. When `source_val` is given
    every run also records the adapted model's in-domain KL/TV.
    """
    zero_shot = evaluate_set(params, target_samples)
    in_domain = evaluate_set(params, source_val) if source_val else None
    results: Dict[int, FewShotResult] = {}
    for k in k_values:
        cfg = AdaptConfig.for_k(k, replay_size, use_replay, dropout_during_finetune, replay_targets)
        result = FewShotResult(k)
        for seed in seeds:
            shots = select_shots(target_samples, k, seed)
            replay = build_replay(source_train, replay_size, seed) if use_replay else []
            outcome = finetune(params, target_samples, shots, replay, cfg)
            metrics = evaluate_set(outcome.params, [target_samples[i] for i in shots.eval_idx])
            retention = evaluate_set(outcome.params, source_val) if source_val else None
            run = FewShotRun(
                k=k,
                seed=seed,
                kl=metrics.kl,
                tv=metrics.tv,
                epochs_run=outcome.epochs_run,
                replay=use_replay,
                source_val_kl=retention.kl if retention else None,
                source_val_tv=retention.tv if retention else None,
            )
            result.runs.append(run)
            if on_run is not None:
                on_run(run)
        mean_kl, std_kl = result.kl
        logger.info(f"K={k} ({'replay' if use_replay else 'no replay'}): KL {mean_kl:.4f} +/- {std_kl:.4f} over {len(seeds)} seeds")
        results[k] = result
    return FewShotGrid(results, zero_shot, in_domain)
