import json

import pytest

from config.settings import AdaptSettings, RunConfig
from noise_adapter.errors import DataIntegrityError, ParameterError
from noise_adapter.train import TrainConfig
from noise_adapter.workflows import (
    BaseStage,
    Pipeline,
    PipelineStep,
    RunContext,
    StageCollection,
    StageResult,
    default_stages,
    full_pipeline,
)


def _small_config(**overrides):
    defaults = dict(
        shots=256,
        train=TrainConfig(max_epochs=3, early_stop_patience=2),
        adapt=AdaptSettings(k_values=[5], seeds=[0], replay_size=8, compare_without_replay=False),
    )
    return RunConfig(**{**defaults, **overrides})


@pytest.fixture
def context(tmp_path):
    return RunContext.create(_small_config(), tmp_path)


class Echo(BaseStage):
    name = "echo"
    description = "Return its parameters"

    def run(self, context, **params):
        return StageResult(output=params)


class Broken(BaseStage):
    name = "broken"
    description = "Raise a library error"

    def run(self, context, **params):
        raise ParameterError("bad value")


class TestRunContext:
    def test_create_names_the_run_by_hash(self, context):
        assert context.run_dir.name.endswith(f"-{context.config_hash}")
        manifest = json.loads(context.manifest_path.read_text())
        assert manifest["config_hash"] == context.config_hash

    def test_open_with_the_same_config(self, context):
        assert RunContext.open(_small_config(), context.run_dir).config_hash == context.config_hash

    def test_open_with_another_config(self, context):
        with pytest.raises(DataIntegrityError) as excinfo:
            RunContext.open(_small_config(shots=512), context.run_dir)
        assert excinfo.value.location.endswith("manifest.json")

    def test_records_are_stamped(self, context):
        context.write_records(context.eval_records_path, [{"condition": "in-domain", "kl": 0.3}])
        (record,) = context.read_records(context.eval_records_path)
        assert record["config_hash"] == context.config_hash

    def test_required_records_must_exist(self, context):
        with pytest.raises(DataIntegrityError):
            context.read_records(context.fewshot_records_path)
        assert context.read_records(context.fewshot_records_path, required=False) == []

    def test_malformed_record_line(self, context):
        context.records_dir.mkdir(parents=True)
        context.eval_records_path.write_text('{"kl": 1}\n[1, 2]\n')
        with pytest.raises(DataIntegrityError) as excinfo:
            context.read_records(context.eval_records_path)
        assert excinfo.value.location.endswith("eval.jsonl:2")


class TestStages:
    def test_unknown_stage(self, context):
        result = StageCollection(Echo()).execute("nope", context)
        assert not result.success
        assert result.errors == ["Stage nope not found"]

    def test_library_errors_become_failed_results(self, context):
        result = StageCollection(Broken()).execute("broken", context)
        assert not result.success
        assert "bad value" in result.errors[0]
        assert isinstance(result.exception, ParameterError)

    def test_missing_inputs_are_reported_with_their_path(self, context):
        result = default_stages().execute("train", context)
        assert not result.success
        assert "SourceA.jsonl" in result.errors[0]

    def test_bad_condition(self, context):
        result = default_stages().execute("eval", context, condition="bogus")
        assert not result.success

    def test_default_stage_names(self):
        assert default_stages().names() == ["gen", "simulate", "train", "eval", "adapt", "ablate", "report"]


class TestPipeline:
    def test_dependencies_and_params(self, context):
        pipeline = Pipeline(StageCollection(Echo()), [
            PipelineStep("a", "echo", params={"x": 1}),
            PipelineStep("b", "echo", depends_on=["a"]),
        ])
        result = pipeline.execute(context)
        assert result.success
        assert result.results["a"].output == {"x": 1}

    def test_stops_after_a_failure(self, context):
        pipeline = Pipeline(StageCollection(Echo(), Broken()), [
            PipelineStep("a", "broken"),
            PipelineStep("b", "echo"),
        ])
        result = pipeline.execute(context)
        assert not result.success
        assert list(result.results) == ["a"]
        assert result.failed_result is result.results["a"]

    def test_unmet_dependency_is_skipped(self, context):
        pipeline = Pipeline(StageCollection(Echo()), [PipelineStep("b", "echo", depends_on=["a"])])
        result = pipeline.execute(context)
        assert not result.success
        assert "skipped" in result.errors[0]
        assert result.results == {}

    def test_stage_durations_are_exported(self, context):
        Pipeline(StageCollection(Echo(), Broken()), [PipelineStep("a", "echo"), PipelineStep("b", "broken")]).execute(context)
        text = context.metrics_path.read_text()
        assert 'noise_adapter_stage_duration_seconds{stage="echo",status="ok"}' in text
        assert 'stage="broken",status="failed"' in text


@pytest.mark.slow
def test_full_pipeline_writes_every_artifact(context):
    result = full_pipeline().execute(context)
    assert result.success, result.errors
    for path in (
        context.circuits_path,
        context.dataset_path("SourceA"),
        context.dataset_path("TargetB"),
        context.checkpoint_path,
        context.train_log_path,
        context.example_path,
        context.report_dir / "results.md",
        context.report_dir / "ablation.csv",
    ):
        assert path.exists(), path
    conditions = [r["condition"] for r in context.read_records(context.eval_records_path)]
    assert conditions == ["in-domain", "zero-shot"]
    assert len(context.read_records(context.fewshot_records_path)) == 1
    assert len(context.read_records(context.ablation_records_path)) == 4
