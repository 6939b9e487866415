"""Pipeline stages. Each stage reads its inputs from the run directory and
writes its artifacts back, so any stage can be rerun on its own."""
import logging
from typing import Any, Dict, List, Optional, Sequence

from ..adapt import AdaptConfig, FewShotGrid, build_replay, finetune, run_fewshot, select_shots
from ..circuits import generate_suite, load_suite, save_suite
from ..dataset import (
    Sample,
    Scaler,
    SplitSpec,
    build_dataset,
    encode_samples,
    fit_scaler,
    read_jsonl,
    split_train_val,
    stack_features,
    write_jsonl,
)
from ..device import calibration_drift
from ..errors import ParameterError
from ..evalrep.ablation import run_ablation
from ..evalrep.report import IN_DOMAIN, ZERO_SHOT, build_example_record, build_report, emit_report, select_worst_example
from ..nn import RnaParams, load_checkpoint, predict, save_checkpoint
from ..seeding import derive_rng
from ..train import evaluate_set, train_source, write_train_log
from .base import BaseStage, Pipeline, PipelineStep, StageCollection, StageResult
from .context import RunContext

logger = logging.getLogger(__name__)


class EncodedData:
    '''Source and target samples standardized with the stored source scaler'''

    def __init__(self, context: RunContext):
        cfg = context.config
        self.scaler = Scaler.from_dict(context.read_json(context.scaler_path))
        self.split = SplitSpec.from_dict(context.read_json(context.split_path))
        self.source = encode_samples(read_jsonl(context.dataset_path(cfg.source)), self.scaler)
        self.target = encode_samples(read_jsonl(context.dataset_path(cfg.target)), self.scaler)

    @property
    def source_train(self) -> List[Sample]:
        return [self.source[i] for i in self.split.train_idx]

    @property
    def source_val(self) -> List[Sample]:
        return [self.source[i] for i in self.split.val_idx]


def _load_params(context: RunContext) -> RnaParams:
    params, _ = load_checkpoint(context.checkpoint_path)
    return params


def _merge_records(existing: Sequence[Dict[str, Any]], new: Sequence[Dict[str, Any]], key) -> List[Dict[str, Any]]:
    '''Existing records whose key is not produced again, followed by the new ones'''
    fresh = {key(r) for r in new}
    return [r for r in existing if key(r) not in fresh] + list(new)


class GenerateStage(BaseStage):
    name = "gen"
    description = "Generate the benchmark circuit suite"

    def run(self, context: RunContext, **kwargs) -> StageResult:
        suite = generate_suite(context.config.suite_seed)
        save_suite(suite, context.circuits_path)
        counts = {family.value: len(circuits) for family, circuits in suite.by_family().items()}
        logger.info(f"Generated {len(suite)} circuits {counts}")
        return StageResult(output=str(context.circuits_path), metadata={"n_circuits": len(suite), "families": counts})


class SimulateStage(BaseStage):
    name = "simulate"
    description = "Simulate the suite on a device and write its dataset"

    def run(self, context: RunContext, backend: Optional[str] = None, **kwargs) -> StageResult:
        cfg = context.config
        backends = [backend] if backend else cfg.backends
        suite = load_suite(context.circuits_path)
        written = {}
        for name in backends:
            profile = cfg.device(name)
            rng = derive_rng(cfg.shots_seed, f"shots-{name}")
            samples = build_dataset(suite, profile, cfg.shots, rng, cfg.gate_durations, cfg.profile_jitter)
            path = context.dataset_path(name)
            write_jsonl(path, samples)
            written[name] = str(path)
        return StageResult(output=written, metadata={"n_samples": len(suite)})


class TrainStage(BaseStage):
    name = "train"
    description = "Fit the source scaler and train on the source device"

    def run(self, context: RunContext, **kwargs) -> StageResult:
        cfg = context.config
        raw = read_jsonl(context.dataset_path(cfg.source))
        split = split_train_val(len(raw), cfg.split_seed)
        scaler = fit_scaler([raw[i] for i in split.train_idx], cfg.standardize)
        source = encode_samples(raw, scaler)
        best, log = train_source(source, split, cfg.train, cfg.train_seed)

        context.write_json(context.scaler_path, context.stamp(scaler.to_dict()))
        context.write_json(context.split_path, context.stamp(split.to_dict()))
        save_checkpoint(best, context.checkpoint_path, metadata={
            "config_hash": context.config_hash,
            "best_epoch": log.best_epoch,
            "best_val_kl": log.best_val_kl,
            "initial_val_kl": log.initial_val_kl,
            "stopped_epoch": log.stopped_epoch,
            "stop_reason": log.stop_reason,
        })
        write_train_log(log, context.train_log_path)
        return StageResult(
            output=str(context.checkpoint_path),
            metadata={"best_epoch": log.best_epoch, "best_val_kl": log.best_val_kl, "epochs": log.stopped_epoch},
        )


class EvaluateStage(BaseStage):
    name = "eval"
    description = "Evaluate the source model in-domain and zero-shot"

    def run(self, context: RunContext, condition: Optional[str] = None, **kwargs) -> StageResult:
        if condition not in (None, IN_DOMAIN, ZERO_SHOT):
            raise ParameterError(f"condition must be {IN_DOMAIN!r} or {ZERO_SHOT!r}, got {condition!r}")
        model = _load_params(context)
        data = EncodedData(context)
        sets = {IN_DOMAIN: data.source_val, ZERO_SHOT: data.target}
        records = []
        for name in [condition] if condition else [IN_DOMAIN, ZERO_SHOT]:
            metrics = evaluate_set(model, sets[name])
            logger.info(f"{name}: KL {metrics.kl:.4f}, TV {metrics.tv:.4f} over {len(sets[name])} samples")
            records.append({"condition": name, "kl": metrics.kl, "tv": metrics.tv, "n_samples": len(sets[name])})
        existing = context.read_records(context.eval_records_path, required=False)
        context.write_records(context.eval_records_path, _merge_records(existing, records, lambda r: r["condition"]))
        return StageResult(output={r["condition"]: r["kl"] for r in records})


class AdaptStage(BaseStage):
    name = "adapt"
    description = "Few-shot adaptation grid on the target device"

    def run(
        self,
        context: RunContext,
        k_values: Optional[Sequence[int]] = None,
        seeds: Optional[Sequence[int]] = None,
        replay: Optional[bool] = None,
        **kwargs,
    ) -> StageResult:
        """replay=None runs with replay and, if configured, the no-replay comparison;
        True/False runs only that variant."""
        settings = context.config.adapt
        k_values = list(k_values or settings.k_values)
        seeds = list(seeds or settings.seeds)
        if replay is None:
            variants = [True] + ([False] if settings.compare_without_replay else [])
        else:
            variants = [replay]

        model = _load_params(context)
        data = EncodedData(context)
        records = []
        grids: Dict[bool, FewShotGrid] = {}
        for use_replay in variants:
            grids[use_replay] = run_fewshot(
                model,
                data.target,
                data.source_train,
                data.source_val,
                k_values=k_values,
                seeds=seeds,
                replay_size=settings.replay_size,
                use_replay=use_replay,
                dropout_during_finetune=settings.dropout_during_finetune,
                replay_targets=settings.replay_targets,
                on_run=lambda run: records.append(run.to_record()),
            )
        existing = context.read_records(context.fewshot_records_path, required=False)
        key = lambda r: (int(r["k"]), int(r["seed"]), bool(r["replay"]))  # noqa: E731
        context.write_records(context.fewshot_records_path, _merge_records(existing, records, key))

        if True in grids:
            adapt_cfg = AdaptConfig.for_k(
                max(k_values), settings.replay_size, True, settings.dropout_during_finetune, settings.replay_targets
            )
            example = self._example(model, data, adapt_cfg, seeds[0])
            context.write_json(context.example_path, context.stamp(example))
        summary = {
            f"K={k}{'' if use_replay else ' (no replay)'}": result.kl[0]
            for use_replay, grid in grids.items()
            for k, result in grid.results.items()
        }
        return StageResult(output=summary, metadata={"n_runs": len(records)})

    def _example(self, params: RnaParams, data: EncodedData, adapt_cfg: AdaptConfig, seed: int) -> Dict[str, Any]:
        '''Worst noisy-vs-ideal target circuit held out from the (k, seed) selection'''
        shots = select_shots(data.target, adapt_cfg.k, seed)
        replay = build_replay(data.source_train, adapt_cfg.replay_size, seed)
        adapted = finetune(params, data.target, shots, replay, adapt_cfg).params
        held_out = [data.target[i] for i in shots.eval_idx]
        sample = held_out[select_worst_example(held_out)]
        x = stack_features([sample])
        record = build_example_record(sample, predict(params, x)[0], predict(adapted, x)[0], k=adapt_cfg.k, seed=seed)
        return record


class AblateStage(BaseStage):
    name = "ablate"
    description = "Leave-one-out ablation of the calibration features"

    def run(self, context: RunContext, **kwargs) -> StageResult:
        model = _load_params(context)
        rows = run_ablation(model, EncodedData(context).target)
        context.write_records(context.ablation_records_path, [row.to_record() for row in rows])
        return StageResult(output={row.feature_name: row.delta for row in rows})


class ReportStage(BaseStage):
    name = "report"
    description = "Aggregate stored records into the report"

    def run(self, context: RunContext, **kwargs) -> StageResult:
        cfg = context.config
        example = context.read_json(context.example_path) if context.example_path.exists() else None
        report = build_report(
            eval_records=context.read_records(context.eval_records_path, required=False),
            fewshot_records=context.read_records(context.fewshot_records_path, required=False),
            ablation_records=context.read_records(context.ablation_records_path, required=False),
            drift=calibration_drift(cfg.device(cfg.source), cfg.device(cfg.target)),
            example=example,
        )
        if report.config_hash and report.config_hash != context.config_hash:
            return StageResult(
                success=False,
                errors=[f"records were produced by config {report.config_hash}, not {context.config_hash}"],
            )
        written = emit_report(report, context.report_dir)
        return StageResult(output=[str(p) for p in written], metadata={"warnings": report.warnings})


def default_stages() -> StageCollection:
    return StageCollection(
        GenerateStage(),
        SimulateStage(),
        TrainStage(),
        EvaluateStage(),
        AdaptStage(),
        AblateStage(),
        ReportStage(),
    )


def full_pipeline(stages: Optional[StageCollection] = None) -> Pipeline:
    '''gen -> simulate -> train -> eval -> adapt -> ablate -> report'''
    steps = [
        PipelineStep("gen", "gen"),
        PipelineStep("simulate", "simulate", depends_on=["gen"]),
        PipelineStep("train", "train", depends_on=["simulate"]),
        PipelineStep("eval", "eval", depends_on=["train"]),
        PipelineStep("adapt", "adapt", depends_on=["train"]),
        PipelineStep("ablate", "ablate", depends_on=["train"]),
        PipelineStep("report", "report", depends_on=["eval", "adapt", "ablate"]),
    ]
    return Pipeline(stages or default_stages(), steps)
