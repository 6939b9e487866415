import numpy as np
import pytest

from noise_adapter.adapt import (
    AdaptConfig,
    build_replay,
    finetune,
    run_fewshot,
    select_shots,
)
from noise_adapter.dataset import stack_features, stack_targets
from noise_adapter.errors import ConfigError, InsufficientDataError, ParameterError
from noise_adapter.nn import BLOCK3_AND_HEAD_TENSORS, HEAD_TENSORS, TENSOR_NAMES, kl_batchmean_loss, predict


class TestAdaptConfig:
    @pytest.mark.parametrize("k", [5, 10])
    def test_small_k_trains_the_head(self, k):
        cfg = AdaptConfig.for_k(k)
        assert set(cfg.trainable) == HEAD_TENSORS
        assert (cfg.lr, cfg.max_epochs, cfg.patience) == (1e-4, 60, 12)

    def test_large_k_also_trains_block3(self):
        cfg = AdaptConfig.for_k(20)
        assert set(cfg.trainable) == BLOCK3_AND_HEAD_TENSORS
        assert (cfg.lr, cfg.max_epochs) == (5e-5, 80)

    def test_finetune_dropout_switch(self):
        assert AdaptConfig.for_k(5).dropout == pytest.approx(0.1)
        assert AdaptConfig.for_k(5, dropout_during_finetune=False).dropout == 0.0

    def test_non_positive_k(self):
        with pytest.raises(ParameterError):
            AdaptConfig.for_k(0)


class TestShots:
    def test_partition(self, target):
        shots = select_shots(target, 20, 0)
        assert len(shots.adapt_idx) == 20
        assert len(shots.eval_idx) == 65
        assert sorted(shots.adapt_idx + shots.eval_idx) == list(range(85))

    def test_seeded(self, target):
        assert select_shots(target, 5, 3) == select_shots(target, 5, 3)
        assert select_shots(target, 5, 3).adapt_idx != select_shots(target, 5, 4).adapt_idx

    @pytest.mark.parametrize("k", [0, 85, 100])
    def test_k_out_of_range(self, target, k):
        with pytest.raises(ParameterError):
            select_shots(target, k, 0)


class TestReplay:
    def test_distinct_source_samples(self, source_train):
        replay = build_replay(source_train, 24, seed=1)
        assert len(replay) == 24
        assert len({s.circuit_id for s in replay}) == 24
        assert all(s.backend == "SourceA" for s in replay)

    def test_seeded(self, source_train):
        a = [s.circuit_id for s in build_replay(source_train, 24, seed=2)]
        b = [s.circuit_id for s in build_replay(source_train, 24, seed=2)]
        assert a == b

    def test_not_enough_source_samples(self, source_train):
        with pytest.raises(InsufficientDataError):
            build_replay(source_train[:10], 24)


class TestFinetune:
    @pytest.mark.parametrize("k,trainable", [(5, HEAD_TENSORS), (20, BLOCK3_AND_HEAD_TENSORS)])
    def test_frozen_tensors_are_bit_identical(self, trained, target, source_train, k, trainable):
        params, _ = trained
        frozen = [n for n in TENSOR_NAMES if n not in trainable]
        cfg = AdaptConfig.for_k(k)
        shots = select_shots(target, k, 0)
        outcome = finetune(params, target, shots, build_replay(source_train, 24, 0), cfg)
        assert outcome.params.checksum(frozen) == params.checksum(frozen)
        assert 1 <= outcome.best_epoch <= outcome.epochs_run <= cfg.max_epochs

    def test_source_model_is_not_modified(self, trained, target):
        params, _ = trained
        before = params.checksum()
        finetune(params, target, select_shots(target, 5, 1), [], AdaptConfig.for_k(5, use_replay=False))
        assert params.checksum() == before

    def test_needs_a_trainable_tensor(self, trained, target):
        params, _ = trained
        cfg = AdaptConfig(k=5, trainable=(), lr=1e-4, max_epochs=5)
        with pytest.raises(ConfigError):
            finetune(params, target, select_shots(target, 5, 0), [], cfg)


class TestReplayTargets:
    def _first_loss(self, params, target, replay, replay_targets):
        cfg = AdaptConfig(
            k=5, trainable=tuple(sorted(HEAD_TENSORS)), lr=1e-4, max_epochs=1,
            dropout=0.0, replay_targets=replay_targets,
        )
        return finetune(params, target, select_shots(target, 5, 0), replay, cfg).best_loss

    def _kl(self, params, samples):
        return kl_batchmean_loss(stack_targets(samples), predict(params, stack_features(samples)))

    def test_replay_fitted_to_the_source_model_starts_at_zero(self, trained, target, source_train):
        params, _ = trained
        shots = [target[i] for i in select_shots(target, 5, 0).adapt_idx]
        replay = build_replay(source_train, 24, 0)
        loss = self._first_loss(params, target, replay, "source_model")
        assert loss == pytest.approx(self._kl(params, shots) * 5 / 29, rel=1e-9)

    def test_replay_fitted_to_labels(self, trained, target, source_train):
        params, _ = trained
        shots = [target[i] for i in select_shots(target, 5, 0).adapt_idx]
        replay = build_replay(source_train, 24, 0)
        loss = self._first_loss(params, target, replay, "labels")
        expected = (5 * self._kl(params, shots) + 24 * self._kl(params, replay)) / 29
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_every_pooled_sample_weighs_the_same(self, trained, target):
        params, _ = trained
        shots = [target[i] for i in select_shots(target, 5, 0).adapt_idx]
        assert self._first_loss(params, target, [], "source_model") == pytest.approx(self._kl(params, shots), rel=1e-9)

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            AdaptConfig(k=5, trainable=("head.W",), lr=1e-4, max_epochs=5, replay_targets="teacher")

    def test_config_switch(self):
        assert AdaptConfig.for_k(20).replay_targets == "source_model"
        assert AdaptConfig.for_k(20, replay_targets="labels").replay_targets == "labels"


class TestFewShotGrid:
    @pytest.fixture(scope="class")
    def grid_and_runs(self, trained, target, source_train, source_val):
        params, _ = trained
        runs = []
        grid = run_fewshot(
            params, target, source_train, source_val,
            k_values=[5], seeds=[0, 1, 2], on_run=runs.append,
        )
        return grid, runs

    def test_cells(self, grid_and_runs):
        grid, runs = grid_and_runs
        assert list(grid.results) == [5]
        assert grid.results[5].seeds == [0, 1, 2]
        assert [(r.k, r.seed) for r in runs] == [(5, 0), (5, 1), (5, 2)]

    def test_sample_standard_deviation(self, grid_and_runs):
        grid, _ = grid_and_runs
        kls = [r.kl for r in grid.results[5].runs]
        mean, std = grid.results[5].kl
        assert mean == pytest.approx(np.mean(kls))
        assert std == pytest.approx(np.std(kls, ddof=1))

    def test_retention_is_recorded(self, grid_and_runs):
        grid, runs = grid_and_runs
        assert grid.in_domain is not None
        assert all(r.replay and r.source_val_kl is not None for r in runs)
        record = runs[0].to_record()
        assert set(record) == {"k", "seed", "kl", "tv", "epochs_run", "replay", "source_val_kl", "source_val_tv"}

    def test_repeatable(self, grid_and_runs, trained, target, source_train, source_val):
        grid, _ = grid_and_runs
        params, _ = trained
        again = run_fewshot(params, target, source_train, source_val, k_values=[5], seeds=[0])
        assert again.results[5].runs[0].kl == grid.results[5].runs[0].kl

    def test_without_replay(self, trained, target, source_train):
        params, _ = trained
        grid = run_fewshot(params, target, source_train, k_values=[5], seeds=[0], use_replay=False)
        run = grid.results[5].runs[0]
        assert not run.replay
        assert run.source_val_kl is None
        assert grid.in_domain is None
