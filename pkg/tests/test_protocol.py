"""End-to-end checks of the default protocol: presets SourceA/TargetB, suite seed 42,
8192 shots, training seed 42, K in {5, 10, 20} over seeds 0-4, with and without replay."""
import math

import pytest

from config.settings import RunConfig
from noise_adapter.evalrep.metrics import mean_std
from noise_adapter.nn import load_checkpoint
from noise_adapter.workflows import RunContext, full_pipeline

pytestmark = pytest.mark.slow


@pytest.fixture(scope="module")
def default_run(tmp_path_factory):
    context = RunContext.create(RunConfig(), tmp_path_factory.mktemp("protocol"))
    result = full_pipeline().execute(context)
    assert result.success, result.errors
    return context


@pytest.fixture(scope="module")
def eval_kl(default_run):
    return {r["condition"]: r["kl"] for r in default_run.read_records(default_run.eval_records_path)}


@pytest.fixture(scope="module")
def fewshot(default_run):
    return default_run.read_records(default_run.fewshot_records_path)


def _cells(records, k, replay, field="kl"):
    values = [r[field] for r in records if r["k"] == k and r["replay"] is replay]
    assert len(values) == 5
    return values


def test_training_lowers_validation_loss_fivefold(default_run, eval_kl):
    _, metadata = load_checkpoint(default_run.checkpoint_path)
    assert metadata["best_val_kl"] == pytest.approx(eval_kl["in-domain"], rel=1e-9)
    assert metadata["initial_val_kl"] >= 5.0 * eval_kl["in-domain"]


def test_zero_shot_is_worse_than_in_domain(eval_kl):
    assert eval_kl["zero-shot"] >= 1.2 * eval_kl["in-domain"]


def test_few_shot_recovers_with_k(fewshot, eval_kl):
    stats = {k: mean_std(_cells(fewshot, k, True)) for k in (5, 10, 20)}
    assert stats[20][0] < eval_kl["zero-shot"]
    for small, large in ((5, 10), (10, 20)):
        pooled = math.sqrt((stats[small][1] ** 2 + stats[large][1] ** 2) / 2)
        assert stats[large][0] <= stats[small][0] + pooled


def test_replay_limits_forgetting(fewshot):
    with_replay = _cells(fewshot, 20, True, "source_val_kl")
    without_replay = _cells(fewshot, 20, False, "source_val_kl")
    assert sum(with_replay) / 5 <= sum(without_replay) / 5
