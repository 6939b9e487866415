from .config import TrainConfig
from .loop import TrainLog, evaluate_set, per_sample_metrics, train_source, write_train_log
from .optim import AdamWState, EarlyStopping, PlateauScheduler, adamw_step, plateau_step

__all__ = [
    'TrainConfig',
    'TrainLog',
    'evaluate_set',
    'per_sample_metrics',
    'train_source',
    'write_train_log',
    'AdamWState',
    'EarlyStopping',
    'PlateauScheduler',
    'adamw_step',
    'plateau_step',
]
