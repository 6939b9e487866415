"""Run configuration: YAML file + environment overrides, hashed for provenance."""
import hashlib
import json
import logging
import os
from pathlib import Path
from typing import Dict, List, Optional, Union

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from noise_adapter.adapt import ReplayTargets
from noise_adapter.dataset import STANDARDIZE_MODES
from noise_adapter.device import PRESETS, DeviceProfile
from noise_adapter.errors import ConfigError
from noise_adapter.qsim import GateDurations
from noise_adapter.train import TrainConfig

logger = logging.getLogger(__name__)

RUNS_ROOT_ENV = "NOISE_ADAPTER_RUNS_ROOT"
LOG_LEVEL_ENV = "LOG_LEVEL"
DEFAULT_CONFIG_PATH = Path(__file__).with_name("default.yaml")


class AdaptSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    k_values: List[int] = Field(default_factory=lambda: [5, 10, 20])
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])
    replay_size: int = Field(default=24, ge=0)
    dropout_during_finetune: bool = True
    replay_targets: ReplayTargets = "source_model"
    compare_without_replay: bool = True

    @model_validator(mode="after")
    def _check_grid(self) -> "AdaptSettings":
        if not self.k_values or any(k < 1 for k in self.k_values):
            raise ValueError("k_values must be a non-empty list of positive integers")
        if not self.seeds:
            raise ValueError("seeds must not be empty")
        return self


def _preset_devices() -> Dict[str, DeviceProfile]:
    return dict(PRESETS)


class RunConfig(BaseModel):
    '''Every protocol constant with its default'''
    model_config = ConfigDict(extra="forbid")

    suite_seed: int = 42
    shots: int = Field(default=8192, gt=0)
    shots_seed: int = 42
    split_seed: int = 42
    train_seed: int = 42
    source: str = "SourceA"
    target: str = "TargetB"
    devices: Dict[str, DeviceProfile] = Field(default_factory=_preset_devices)
    gate_durations: GateDurations = Field(default_factory=GateDurations)
    profile_jitter: float = Field(default=0.0, ge=0)
    standardize: str = "all"
    train: TrainConfig = Field(default_factory=TrainConfig)
    adapt: AdaptSettings = Field(default_factory=AdaptSettings)
    runs_root: str = "runs"

    @model_validator(mode="before")
    @classmethod
    def _name_devices(cls, data):
        # device entries in YAML omit the name; it is the mapping key
        if isinstance(data, dict) and isinstance(data.get("devices"), dict):
            devices = dict(_preset_devices())
            for name, profile in data["devices"].items():
                devices[name] = {"name": name, **profile} if isinstance(profile, dict) else profile
            data = {**data, "devices": devices}
        return data

    @model_validator(mode="after")
    def _check_references(self) -> "RunConfig":
        for role in ("source", "target"):
            if getattr(self, role) not in self.devices:
                raise ValueError(f"{role} device {getattr(self, role)!r} is not defined under devices")
        if self.standardize not in STANDARDIZE_MODES:
            raise ValueError(f"standardize must be one of {STANDARDIZE_MODES}")
        return self

    def device(self, name: str) -> DeviceProfile:
        try:
            return self.devices[name]
        except KeyError:
            raise ConfigError(f"device {name!r} is not configured; known: {sorted(self.devices)}") from None

    @property
    def backends(self) -> List[str]:
        return [self.source, self.target]


def config_hash(cfg: RunConfig) -> str:
    '''First 12 hex chars of SHA-256 over the sorted-key JSON dump; runs_root is excluded'''
    canonical = json.dumps(cfg.model_dump(mode="json", exclude={"runs_root"}), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


def load_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    """Read a YAML config (default: config/default.yaml); missing keys take defaults.

    `.env` is loaded first so NOISE_ADAPTER_RUNS_ROOT can override runs_root.
    """
    load_dotenv()
    path = Path(path) if path is not None else DEFAULT_CONFIG_PATH
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as e:
        raise ConfigError(f"cannot parse {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    if os.getenv(RUNS_ROOT_ENV):
        data["runs_root"] = os.environ[RUNS_ROOT_ENV]
    try:
        cfg = RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid config {path}: {e}") from e
    logger.debug(f"Loaded config {path} (hash {config_hash(cfg)})")
    return cfg
