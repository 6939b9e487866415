from pydantic import BaseModel, ConfigDict, Field


class TrainConfig(BaseModel):
    '''Source-training hyperparameters'''
    model_config = ConfigDict(frozen=True, extra="forbid")

    lr: float = Field(default=1e-3, gt=0)
    weight_decay: float = Field(default=1e-4, ge=0)
    batch_train: int = Field(default=16, gt=0)
    batch_val: int = Field(default=32, gt=0)
    max_epochs: int = Field(default=250, gt=0)
    early_stop_patience: int = Field(default=25, gt=0)
    early_stop_tol: float = Field(default=1e-6, gt=0)
    plateau_factor: float = Field(default=0.5, gt=0, lt=1)
    plateau_patience: int = Field(default=12, gt=0)
    plateau_threshold: float = Field(default=1e-4, gt=0)
    dropout: float = Field(default=0.10, ge=0, lt=1)
