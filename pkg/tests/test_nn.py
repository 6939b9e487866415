import numpy as np
import pytest

from noise_adapter.errors import DataIntegrityError, DomainError, NumericError, ParameterError, UsageError
from noise_adapter.nn import (
    HEAD_TENSORS,
    RnaParams,
    TENSOR_NAMES,
    backward,
    forward,
    grad_check,
    init_params,
    kl_batchmean_loss,
    load_checkpoint,
    predict,
    save_checkpoint,
)
from noise_adapter.nn.gradcheck import relative_error
from noise_adapter.nn.model import softmax


def _batch(rng, size=4):
    x = np.empty((size, 41))
    x[:, :9] = rng.normal(size=(size, 9))
    x[:, 9:] = rng.dirichlet(np.ones(32), size=size)
    y = rng.dirichlet(np.ones(32), size=size)
    return x, y


def _perturbed_params(seed):
    '''Fresh init with LayerNorm affine parameters moved off 1 / 0'''
    params = init_params(seed)
    rng = np.random.default_rng(seed + 100)
    for block in ("block1", "block2", "block3"):
        params[f"{block}.ln_gamma"][:] += rng.normal(0, 0.1, size=params[f"{block}.ln_gamma"].shape)
        params[f"{block}.ln_beta"][:] += rng.normal(0, 0.1, size=params[f"{block}.ln_beta"].shape)
    return params


class TestInit:
    def test_seeded(self):
        assert init_params(3).checksum() == init_params(3).checksum()
        assert init_params(3).checksum() != init_params(4).checksum()

    def test_uniform_bounds_and_layernorm_identity(self):
        params = init_params(0)
        assert np.abs(params["block1.W"]).max() <= 1 / np.sqrt(41)
        assert np.abs(params["head.W"]).max() <= 1 / np.sqrt(64)
        assert np.all(params["block2.ln_gamma"] == 1.0)
        assert not params["block3.ln_beta"].any()

    def test_parameter_count(self):
        assert init_params(0).n_parameters() == 32864

    def test_wrong_shape(self):
        tensors = dict(init_params(0).items())
        tensors["head.b"] = np.zeros(31)
        with pytest.raises(ParameterError):
            RnaParams(tensors)


class TestForward:
    def test_output_is_a_distribution(self, rng):
        x, _ = _batch(rng, 8)
        yhat = predict(init_params(1), x)
        assert yhat.shape == (8, 32)
        assert np.all(yhat > 0)
        np.testing.assert_allclose(yhat.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_head_returns_softmax_of_noisy_input(self, rng):
        params = init_params(2)
        params["head.W"][:] = 0.0
        params["head.b"][:] = 0.0
        x, _ = _batch(rng, 3)
        np.testing.assert_array_equal(predict(params, x), softmax(x[:, 9:]))

    def test_eval_is_deterministic(self, rng):
        x, _ = _batch(rng)
        params = init_params(0)
        np.testing.assert_array_equal(predict(params, x), predict(params, x))

    def test_single_vector(self, rng):
        x, _ = _batch(rng, 1)
        yhat, trace = forward(init_params(0), x[0])
        assert yhat.shape == (32,)
        assert trace is None

    def test_non_finite_input(self):
        x = np.zeros(41)
        x[3] = np.nan
        with pytest.raises(NumericError):
            forward(init_params(0), x)

    def test_wrong_width(self):
        with pytest.raises(ParameterError):
            forward(init_params(0), np.zeros(40))

    def test_train_mode_dropout_needs_rng(self, rng):
        x, _ = _batch(rng)
        with pytest.raises(UsageError):
            forward(init_params(0), x, mode="train")

    def test_dropout_masks_follow_the_rng(self, rng):
        x, _ = _batch(rng)
        params = init_params(0)
        a, _ = forward(params, x, mode="train", rng=np.random.default_rng(5))
        b, _ = forward(params, x, mode="train", rng=np.random.default_rng(5))
        c, _ = forward(params, x, mode="train", rng=np.random.default_rng(6))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_permutation_equivariance(self, rng):
        params = init_params(7)
        x, _ = _batch(rng, 2)
        perm = rng.permutation(32)
        permuted = params.copy()
        permuted["block1.W"][:, 9:] = params["block1.W"][:, 9:][:, perm]
        permuted["head.W"][:] = params["head.W"][perm]
        permuted["head.b"][:] = params["head.b"][perm]
        x_perm = x.copy()
        x_perm[:, 9:] = x[:, 9:][:, perm]
        np.testing.assert_allclose(predict(permuted, x_perm), predict(params, x)[:, perm], atol=1e-12)


class TestLoss:
    def test_zero_for_identical_distributions(self, rng):
        y = rng.dirichlet(np.ones(32), size=3)
        assert kl_batchmean_loss(y, y) == pytest.approx(0.0, abs=1e-15)

    def test_point_mass_against_half(self):
        y = np.zeros(32)
        y[0] = 1.0
        q = np.full(32, 0.5 / 31)
        q[0] = 0.5
        assert kl_batchmean_loss(y, q) == pytest.approx(np.log(2))
        assert kl_batchmean_loss(np.stack([y, y]), np.stack([q, q])) == pytest.approx(np.log(2))

    def test_rejects_non_positive_prediction(self):
        with pytest.raises(DomainError):
            kl_batchmean_loss(np.full(32, 1 / 32), np.r_[0.0, np.full(31, 1 / 31)])


class TestBackward:
    def test_perfect_prediction_has_zero_head_bias_gradient(self, rng):
        x, _ = _batch(rng)
        params = init_params(0)
        yhat, trace = forward(params, x, mode="train", dropout_rate=0.0)
        grads = backward(trace, yhat)
        np.testing.assert_allclose(grads["head.b"], 0.0, atol=1e-15)

    def test_missing_trace(self):
        with pytest.raises(UsageError):
            backward(None, np.full(32, 1 / 32))

    def test_stale_trace(self, rng):
        x, y = _batch(rng)
        params = init_params(0)
        _, trace = forward(params, x, mode="train", dropout_rate=0.0)
        params.bump()
        with pytest.raises(UsageError):
            backward(trace, y)

    def test_frozen_tensors_get_zero_gradients(self, rng):
        x, y = _batch(rng)
        _, trace = forward(init_params(0), x, mode="train", dropout_rate=0.0)
        grads = backward(trace, y, trainable=HEAD_TENSORS)
        assert list(grads) == list(TENSOR_NAMES)
        for name in TENSOR_NAMES:
            if name in HEAD_TENSORS:
                assert grads[name].any()
            else:
                assert not grads[name].any()

    def test_unknown_trainable_name(self, rng):
        x, y = _batch(rng)
        _, trace = forward(init_params(0), x, mode="train", dropout_rate=0.0)
        with pytest.raises(ParameterError):
            backward(trace, y, trainable=["head.W", "block9.W"])


class TestGradCheck:
    @pytest.mark.parametrize("instance", range(10))
    def test_analytic_matches_finite_differences(self, instance):
        rng = np.random.default_rng(instance)
        x, y = _batch(rng)
        report = grad_check(_perturbed_params(instance), x, y, seed=instance)
        assert report.passed, report.summary()
        assert report.n_checked == 200

    def test_detects_a_scaled_gradient(self):
        rng = np.random.default_rng(0)
        x, y = _batch(rng)
        params = _perturbed_params(0)
        _, trace = forward(params, x, mode="train", dropout_rate=0.0)
        grads = backward(trace, y)
        grads["block2.W"] = grads["block2.W"] * 1.01
        report = grad_check(params, x, y, analytic=grads)
        assert not report.passed
        assert report.worst[0].name == "block2.W"

    def test_tiny_disagreements_still_count(self):
        assert relative_error(0.0, 0.0) == 0.0
        assert relative_error(3e-10, 0.0) == pytest.approx(0.03)
        assert relative_error(2e-10, -2e-10) == pytest.approx(0.04)
        assert relative_error(1.0, 1.0 + 2e-5) == pytest.approx(1e-5, rel=1e-4)

    def test_seeded_coordinates(self):
        rng = np.random.default_rng(1)
        x, y = _batch(rng)
        params = _perturbed_params(1)
        a = grad_check(params, x, y, seed=3)
        b = grad_check(params, x, y, seed=3)
        assert a.max_rel_error == b.max_rel_error
        assert [e.index for e in a.worst] == [e.index for e in b.worst]

    def test_does_not_modify_parameters(self):
        rng = np.random.default_rng(2)
        x, y = _batch(rng)
        params = _perturbed_params(2)
        before = params.checksum()
        grad_check(params, x, y, n_coords=20)
        assert params.checksum() == before


class TestCheckpoint:
    def test_load_restores_every_tensor(self, tmp_path):
        params = _perturbed_params(4)
        path = save_checkpoint(params, tmp_path / "ckpt.json", metadata={"best_epoch": 7})
        loaded, metadata = load_checkpoint(path)
        assert loaded.checksum() == params.checksum()
        assert metadata == {"best_epoch": 7}

    def test_resave_is_byte_identical(self, tmp_path):
        save_checkpoint(_perturbed_params(5), tmp_path / "a.json")
        loaded, _ = load_checkpoint(tmp_path / "a.json")
        save_checkpoint(loaded, tmp_path / "b.json")
        assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()

    def test_predictions_survive_reload(self, rng, tmp_path):
        params = _perturbed_params(6)
        x, _ = _batch(rng)
        loaded, _ = load_checkpoint(save_checkpoint(params, tmp_path / "c.json"))
        np.testing.assert_array_equal(predict(loaded, x), predict(params, x))

    def test_unsupported_version(self, tmp_path):
        path = save_checkpoint(init_params(0), tmp_path / "v.json")
        path.write_text(path.read_text().replace('"format_version":1', '"format_version":2'))
        with pytest.raises(DataIntegrityError) as exc:
            load_checkpoint(path)
        assert exc.value.location == str(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataIntegrityError):
            load_checkpoint(tmp_path / "absent.json")
