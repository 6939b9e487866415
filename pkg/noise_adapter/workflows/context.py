"""Run directory layout, result-record I/O and per-stage metrics."""
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Union

from prometheus_client import CollectorRegistry, Gauge, write_to_textfile

from config.settings import RunConfig, config_hash

from .. import __version__
from ..errors import DataIntegrityError

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class RunContext:
    '''A run directory bound to one configuration'''

    def __init__(self, config: RunConfig, run_dir: Union[str, Path]):
        self.config = config
        self.config_hash = config_hash(config)
        self.run_dir = Path(run_dir)
        self._registry = CollectorRegistry()
        self._durations = Gauge(
            "noise_adapter_stage_duration_seconds",
            "Wall-clock duration of the last execution of a pipeline stage",
            ["stage", "status"],
            registry=self._registry,
        )

    @classmethod
    def create(cls, config: RunConfig, runs_root: Optional[Union[str, Path]] = None) -> "RunContext":
        '''New directory runs/<timestamp>-<hash>/ with a manifest'''
        root = Path(runs_root or config.runs_root)
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        context = cls(config, root / f"{stamp}-{config_hash(config)}")
        context.run_dir.mkdir(parents=True, exist_ok=True)
        context.write_manifest()
        logger.info(f"Created run directory {context.run_dir}")
        return context

    @classmethod
    def open(cls, config: RunConfig, run_dir: Union[str, Path]) -> "RunContext":
        '''Existing run directory; its manifest must match the configuration'''
        context = cls(config, run_dir)
        if not context.manifest_path.exists():
            context.run_dir.mkdir(parents=True, exist_ok=True)
            context.write_manifest()
            return context
        manifest = context.read_json(context.manifest_path)
        if manifest.get("config_hash") != context.config_hash:
            raise DataIntegrityError(
                f"run was created with config {manifest.get('config_hash')}, current config is {context.config_hash}",
                location=str(context.manifest_path),
            )
        return context

    # paths

    @property
    def manifest_path(self) -> Path:
        return self.run_dir / MANIFEST_NAME

    @property
    def circuits_path(self) -> Path:
        return self.run_dir / "circuits.json"

    def dataset_path(self, backend: str) -> Path:
        return self.run_dir / "data" / f"{backend}.jsonl"

    @property
    def model_dir(self) -> Path:
        return self.run_dir / "model"

    @property
    def checkpoint_path(self) -> Path:
        return self.model_dir / "checkpoint.json"

    @property
    def scaler_path(self) -> Path:
        return self.model_dir / "scaler.json"

    @property
    def split_path(self) -> Path:
        return self.model_dir / "split.json"

    @property
    def train_log_path(self) -> Path:
        return self.model_dir / "train_log.csv"

    @property
    def records_dir(self) -> Path:
        return self.run_dir / "records"

    @property
    def eval_records_path(self) -> Path:
        return self.records_dir / "eval.jsonl"

    @property
    def fewshot_records_path(self) -> Path:
        return self.records_dir / "fewshot.jsonl"

    @property
    def ablation_records_path(self) -> Path:
        return self.records_dir / "ablation.jsonl"

    @property
    def example_path(self) -> Path:
        return self.records_dir / "example.json"

    @property
    def report_dir(self) -> Path:
        return self.run_dir / "report"

    @property
    def log_dir(self) -> Path:
        return self.run_dir / "logs"

    @property
    def log_file(self) -> Path:
        return self.log_dir / "pipeline.log"

    @property
    def metrics_path(self) -> Path:
        return self.log_dir / "metrics.prom"

    # files

    def write_manifest(self) -> None:
        self.write_json(self.manifest_path, {
            "config_hash": self.config_hash,
            "package_version": __version__,
            "config": self.config.model_dump(mode="json"),
        })

    def stamp(self, record: Dict[str, Any]) -> Dict[str, Any]:
        return {**record, "config_hash": self.config_hash}

    @staticmethod
    def write_json(path: Path, data: Any) -> Path:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        return path

    @staticmethod
    def read_json(path: Path) -> Any:
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise DataIntegrityError("file not found; run the producing stage first", location=str(path)) from None
        except json.JSONDecodeError as e:
            raise DataIntegrityError(f"invalid JSON: {e.msg}", location=f"{path}:{e.lineno}") from e

    def write_records(self, path: Path, records: Iterable[Dict[str, Any]]) -> Path:
        '''Replace a JSONL record file; every record gets the config hash'''
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as f:
            for record in records:
                f.write(json.dumps(self.stamp(record), sort_keys=True, separators=(",", ":")) + "\n")
        return path

    @staticmethod
    def read_records(path: Path, required: bool = True) -> List[Dict[str, Any]]:
        if not path.exists():
            if required:
                raise DataIntegrityError("file not found; run the producing stage first", location=str(path))
            return []
        records = []
        with path.open("r", encoding="utf-8") as f:
            for lineno, line in enumerate(f, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError as e:
                    raise DataIntegrityError(f"invalid JSON: {e.msg}", location=f"{path}:{lineno}") from e
                if not isinstance(record, dict):
                    raise DataIntegrityError("record is not an object", location=f"{path}:{lineno}")
                records.append(record)
        return records

    # metrics

    def record_duration(self, stage: str, seconds: float, success: bool) -> None:
        self._durations.labels(stage=stage, status="ok" if success else "failed").set(seconds)

    def write_metrics(self) -> Path:
        self.log_dir.mkdir(parents=True, exist_ok=True)
        write_to_textfile(str(self.metrics_path), self._registry)
        return self.metrics_path
