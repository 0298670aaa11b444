"""Classifier internals: forward pass, loss/gradients, Adam, early stopping,
and bit-exact model serialization."""

import numpy as np
import pytest

from clozecheck.core import LABEL_ORDER, Claim, VerificationLabel
from clozecheck.features import FeatureSource, FeatureVector, PlantedFeatureBackend
from clozecheck.mlp import (
    AdamState,
    MlpParams,
    TrainConfig,
    TrainedModel,
    TrainingError,
    adam_step,
    fresh_adam_state,
    init_params,
    load_model,
    loss_and_grad,
    mlp_forward,
    model_from_json,
    model_to_json,
    predict,
    save_model,
    train,
)

S, R, N = LABEL_ORDER


def _fv(values) -> FeatureVector:
    return FeatureVector(values=np.asarray(values, dtype=float), source=FeatureSource.ENTAILMENT)


def _random_batch(rng, d, n):
    return [
        (_fv(rng.standard_normal(d)), LABEL_ORDER[int(rng.integers(0, 3))])
        for _ in range(n)
    ]


def _zero_params(d=4, h=3) -> MlpParams:
    return MlpParams(
        W1=np.zeros((d, h)), b1=np.zeros(h), W2=np.zeros((h, 3)), b2=np.zeros(3)
    )


class TestForward:
    def test_zero_params_uniform(self):
        probs = mlp_forward(_fv([1.0, -2.0, 3.0, 0.5]), _zero_params())
        np.testing.assert_allclose(probs, (1 / 3, 1 / 3, 1 / 3))

    def test_dominant_logit(self):
        params = MlpParams(
            W1=np.zeros((2, 3)),
            b1=np.zeros(3),
            W2=np.zeros((3, 3)),
            b2=np.array([10.0, 0.0, 0.0]),
        )
        probs = mlp_forward(_fv([0.0, 0.0]), params)
        assert probs[0] > 0.9999
        assert np.argmax(probs) == 0

    def test_probabilities_sum_to_one(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            params = MlpParams(
                W1=rng.standard_normal((5, 4)),
                b1=rng.standard_normal(4),
                W2=rng.standard_normal((4, 3)),
                b2=rng.standard_normal(3),
            )
            probs = mlp_forward(_fv(rng.standard_normal(5)), params)
            assert abs(sum(probs) - 1.0) < 1e-6
            assert all(0.0 < p < 1.0 for p in probs)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(TrainingError):
            mlp_forward(_fv([1.0, 2.0]), _zero_params(d=4))

    def test_non_finite_params_rejected(self):
        with pytest.raises(TrainingError):
            MlpParams(
                W1=np.full((2, 2), np.inf),
                b1=np.zeros(2),
                W2=np.zeros((2, 3)),
                b2=np.zeros(3),
            )


class TestLossAndGrad:
    def test_zero_params_loss_is_ln3(self):
        rng = np.random.default_rng(3)
        batch = _random_batch(rng, 4, 6)
        loss, _ = loss_and_grad(batch, _zero_params())
        np.testing.assert_allclose(loss, np.log(3.0), rtol=1e-12)

    def test_duplicating_batch_leaves_loss_and_grads_unchanged(self):
        rng = np.random.default_rng(4)
        batch = _random_batch(rng, 4, 5)
        params = init_params(4, 3, np.random.default_rng(0))
        loss1, g1 = loss_and_grad(batch, params)
        loss2, g2 = loss_and_grad(batch + batch, params)
        np.testing.assert_allclose(loss1, loss2, rtol=1e-12)
        for name in ("W1", "b1", "W2", "b2"):
            np.testing.assert_allclose(
                getattr(g1, name), getattr(g2, name), rtol=1e-9, atol=1e-12
            )

    def test_empty_batch_rejected(self):
        with pytest.raises(TrainingError):
            loss_and_grad([], _zero_params())

    def test_gradients_match_finite_differences(self):
        # random small instances, central differences with step 1e-5
        step = 1e-5
        rng = np.random.default_rng(123)
        for _ in range(5):
            d, h = 5, 4
            params = init_params(d, h, rng)
            batch = _random_batch(rng, d, int(rng.integers(1, 9)))
            _, grads = loss_and_grad(batch, params)
            max_rel = 0.0
            for name in ("W1", "b1", "W2", "b2"):
                base = {k: getattr(params, k).copy() for k in ("W1", "b1", "W2", "b2")}
                analytic = getattr(grads, name)
                it = np.nditer(base[name], flags=["multi_index"])
                for _val in it:
                    idx = it.multi_index
                    plus = {k: v.copy() for k, v in base.items()}
                    minus = {k: v.copy() for k, v in base.items()}
                    plus[name][idx] += step
                    minus[name][idx] -= step
                    f_plus, _ = loss_and_grad(batch, MlpParams(**plus))
                    f_minus, _ = loss_and_grad(batch, MlpParams(**minus))
                    fd = (f_plus - f_minus) / (2 * step)
                    rel = abs(analytic[idx] - fd) / max(abs(analytic[idx]), abs(fd), 1e-3)
                    max_rel = max(max_rel, rel)
            assert max_rel < 1e-4


class TestAdam:
    def test_zero_gradient_no_update(self):
        params = init_params(3, 2, np.random.default_rng(0))
        zero_grads = MlpParams(
            W1=np.zeros_like(params.W1),
            b1=np.zeros_like(params.b1),
            W2=np.zeros_like(params.W2),
            b2=np.zeros_like(params.b2),
        )
        new_params, state = adam_step(params, zero_grads, fresh_adam_state(params), TrainConfig())
        np.testing.assert_array_equal(new_params.W1, params.W1)
        assert state.t == 1

    def test_first_step_hand_value(self):
        # scalar parameter 1.0, gradient 1.0, defaults: bias-corrected
        # moment ratio is 1, so the step is almost exactly the learning rate
        params = MlpParams(
            W1=np.ones((1, 1)), b1=np.zeros(1), W2=np.zeros((1, 3)), b2=np.zeros(3)
        )
        grads = MlpParams(
            W1=np.ones((1, 1)), b1=np.zeros(1), W2=np.zeros((1, 3)), b2=np.zeros(3)
        )
        new_params, _ = adam_step(params, grads, fresh_adam_state(params), TrainConfig())
        np.testing.assert_allclose(new_params.W1[0, 0], 1.0 - 0.001, atol=1e-9)

    def test_deterministic(self):
        rng = np.random.default_rng(5)
        params = init_params(4, 3, np.random.default_rng(1))
        grads = MlpParams(
            W1=rng.standard_normal((4, 3)),
            b1=rng.standard_normal(3),
            W2=rng.standard_normal((3, 3)),
            b2=rng.standard_normal(3),
        )
        state = fresh_adam_state(params)
        a_params, a_state = adam_step(params, grads, state, TrainConfig())
        b_params, b_state = adam_step(params, grads, state, TrainConfig())
        np.testing.assert_array_equal(a_params.W1, b_params.W1)
        np.testing.assert_array_equal(a_state.v.W2, b_state.v.W2)


def _cluster_data(rng, d, per_class, noise=0.5):
    data = []
    third = d // 3
    for ci, label in enumerate(LABEL_ORDER):
        mean = np.zeros(d)
        mean[ci * third : (ci + 1) * third] = 1.0
        for _ in range(per_class):
            data.append((_fv(mean + noise * rng.standard_normal(d)), label))
    return data


class TestTrain:
    def test_config_validation(self):
        with pytest.raises(TrainingError):
            TrainConfig(learning_rate=-1)
        with pytest.raises(TrainingError):
            TrainConfig(patience=300, max_epochs=200)

    def test_separable_clusters_reach_high_accuracy(self):
        rng = np.random.default_rng(21)
        data = _cluster_data(rng, 30, 40)
        dev = _cluster_data(rng, 30, 10)
        model = train(data, dev, TrainConfig(seed=2, max_epochs=50, patience=10), hidden_dim=16)
        from clozecheck.mlp import _accuracy, _stack

        X, y = _stack(data, None)
        assert _accuracy(X, y, model.params) >= 0.95

    def test_early_stopping_halts_before_max_epochs(self):
        # clusters are trivially separable, so dev accuracy saturates at 1.0
        # and stays constant: training must stop after patience stalls
        rng = np.random.default_rng(22)
        data = _cluster_data(rng, 12, 30, noise=0.05)
        dev = _cluster_data(rng, 12, 10, noise=0.05)
        cfg = TrainConfig(seed=1, max_epochs=200, patience=5)
        model = train(data, dev, cfg, hidden_dim=8)
        assert len(model.dev_accuracy_history) < cfg.max_epochs
        assert len(model.dev_accuracy_history) <= model.best_epoch + 1 + cfg.patience

    def test_best_epoch_is_first_maximum(self):
        rng = np.random.default_rng(23)
        data = _cluster_data(rng, 12, 30)
        dev = _cluster_data(rng, 12, 10)
        model = train(data, dev, TrainConfig(seed=3, max_epochs=30, patience=30), hidden_dim=8)
        history = model.dev_accuracy_history
        assert history.index(max(history)) == model.best_epoch

    def test_same_seed_byte_identical(self):
        rng = np.random.default_rng(24)
        data = _cluster_data(rng, 12, 20)
        dev = _cluster_data(rng, 12, 8)
        cfg = TrainConfig(seed=9, max_epochs=10, patience=10)
        a = train(data, dev, cfg, hidden_dim=8)
        b = train(data, dev, cfg, hidden_dim=8)
        assert model_to_json(a) == model_to_json(b)

    def test_different_seeds_differ(self):
        rng = np.random.default_rng(25)
        data = _cluster_data(rng, 12, 20)
        dev = _cluster_data(rng, 12, 8)
        a = train(data, dev, TrainConfig(seed=1, max_epochs=5, patience=5), hidden_dim=8)
        b = train(data, dev, TrainConfig(seed=2, max_epochs=5, patience=5), hidden_dim=8)
        assert model_to_json(a) != model_to_json(b)

    def test_empty_inputs_rejected(self):
        with pytest.raises(TrainingError):
            train([], [], TrainConfig())


class TestPredictAndSerialization:
    def _model(self):
        rng = np.random.default_rng(31)
        data = _cluster_data(rng, 12, 30, noise=0.1)
        dev = _cluster_data(rng, 12, 10, noise=0.1)
        return train(data, dev, TrainConfig(seed=4, max_epochs=20, patience=20), hidden_dim=8)

    def test_forced_verdict_by_bias(self):
        params = MlpParams(
            W1=np.zeros((4, 2)),
            b1=np.zeros(2),
            W2=np.zeros((2, 3)),
            b2=np.array([0.0, 10.0, 0.0]),
        )
        model = TrainedModel(
            params=params,
            config=TrainConfig(),
            best_epoch=0,
            dev_accuracy_history=(1.0,),
            feature_source=FeatureSource.ENCODER,
        )
        backend = PlantedFeatureBackend(class_lookup=lambda t: 0, dimension=4, seed=0)
        verdict = predict(Claim(id=1, text="anything here"), None, model, backend)
        assert verdict.predicted is VerificationLabel.REFUTES
        assert abs(sum(verdict.class_probabilities) - 1.0) < 1e-6

    def test_planted_signal_recovered_on_held_out_claims(self):
        labels = [S, R, N]
        texts = {}
        claims = []
        for i in range(120):
            label = labels[i % 3]
            claim = Claim(id=i, text=f"sample claim number {i}", gold_label=label)
            claims.append(claim)
            texts[claim.text] = i % 3
        backend = PlantedFeatureBackend(
            class_lookup=lambda t: texts[t], dimension=30, noise_scale=0.1, seed=6
        )
        data = [
            (
                FeatureVector(values=backend.encode(c.text), source=FeatureSource.ENCODER),
                c.gold_label,
            )
            for c in claims
        ]
        model = train(
            data[:90],
            data[90:105],
            TrainConfig(seed=5, max_epochs=60, patience=60),
            hidden_dim=8,
            feature_source=FeatureSource.ENCODER,
        )
        held_out = claims[105:]
        correct = sum(
            1
            for c in held_out
            if predict(c, None, model, backend).predicted is c.gold_label
        )
        assert correct / len(held_out) >= 0.95

    def test_round_trip_bit_exact(self, tmp_path):
        model = self._model()
        path = tmp_path / "model.json"
        save_model(model, path)
        loaded = load_model(path)
        for name in ("W1", "b1", "W2", "b2"):
            original = getattr(model.params, name)
            restored = getattr(loaded.params, name)
            assert original.tobytes() == restored.tobytes()
        assert loaded.config == model.config
        assert loaded.best_epoch == model.best_epoch
        assert loaded.dev_accuracy_history == model.dev_accuracy_history
        assert model_to_json(loaded) == model_to_json(model)

    def test_unsupported_version_rejected(self):
        model = self._model()
        text = model_to_json(model).replace('"format_version":1', '"format_version":99')
        with pytest.raises(TrainingError):
            model_from_json(text)

    def test_best_epoch_validated(self):
        with pytest.raises(TrainingError):
            TrainedModel(
                params=_zero_params(),
                config=TrainConfig(),
                best_epoch=1,
                dev_accuracy_history=(0.9, 0.5),
                feature_source=FeatureSource.ENTAILMENT,
            )

    def test_adam_state_type(self):
        params = _zero_params()
        state = fresh_adam_state(params)
        assert isinstance(state, AdamState)
        assert state.t == 0
