"""From-scratch MLP verdict classifier: one relu hidden layer, softmax over
the three labels, mean cross-entropy loss, Adam with bias correction, and
dev-accuracy early stopping.

Everything is float64 and seeded: (features, config, seed) fully determine
the trained model, byte for byte.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass, fields
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    LABEL_ORDER,
    Claim,
    Evidence,
    Verdict,
    VerificationLabel,
    VerifierKind,
    argmax_label,
)
from .features import (
    FeatureBackend,
    FeatureSource,
    FeatureVector,
    extract_encoder_features,
    extract_features,
)

N_CLASSES = 3

_LABEL_INDEX = {label: i for i, label in enumerate(LABEL_ORDER)}

MODEL_FORMAT_VERSION = 1


class TrainingError(ValueError):
    """Raised for invalid training inputs or configuration."""


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    max_epochs: int = 200
    patience: int = 30
    seed: int = 0
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8

    def __post_init__(self) -> None:
        positives = {
            "learning_rate": self.learning_rate,
            "batch_size": self.batch_size,
            "max_epochs": self.max_epochs,
            "patience": self.patience,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_epsilon": self.adam_epsilon,
        }
        for name, value in positives.items():
            if value <= 0:
                raise TrainingError(f"{name} must be positive, got {value}")
        if self.patience > self.max_epochs:
            raise TrainingError(
                f"patience {self.patience} exceeds max_epochs {self.max_epochs}"
            )


@dataclass(frozen=True)
class MlpParams:
    """Network parameters; also reused as the container for gradients and
    Adam moment accumulators (identical shapes)."""

    W1: np.ndarray
    b1: np.ndarray
    W2: np.ndarray
    b2: np.ndarray

    def __post_init__(self) -> None:
        W1 = np.asarray(self.W1, dtype=np.float64)
        b1 = np.asarray(self.b1, dtype=np.float64)
        W2 = np.asarray(self.W2, dtype=np.float64)
        b2 = np.asarray(self.b2, dtype=np.float64)
        if W1.ndim != 2:
            raise TrainingError(f"W1 must be 2-d, got shape {W1.shape}")
        d, h = W1.shape
        if b1.shape != (h,):
            raise TrainingError(f"b1 shape {b1.shape} inconsistent with W1 {W1.shape}")
        if W2.shape != (h, N_CLASSES):
            raise TrainingError(f"W2 shape {W2.shape} inconsistent with W1 {W1.shape}")
        if b2.shape != (N_CLASSES,):
            raise TrainingError(f"b2 shape {b2.shape} must be ({N_CLASSES},)")
        for name, arr in (("W1", W1), ("b1", b1), ("W2", W2), ("b2", b2)):
            if not np.all(np.isfinite(arr)):
                raise TrainingError(f"{name} contains non-finite values")
            arr.setflags(write=False)
        object.__setattr__(self, "W1", W1)
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "W2", W2)
        object.__setattr__(self, "b2", b2)

    @property
    def input_dim(self) -> int:
        return int(self.W1.shape[0])

    @property
    def hidden_dim(self) -> int:
        return int(self.W1.shape[1])


@dataclass(frozen=True)
class AdamState:
    m: MlpParams
    v: MlpParams
    t: int


@dataclass(frozen=True)
class TrainedModel:
    params: MlpParams
    config: TrainConfig
    best_epoch: int
    dev_accuracy_history: Tuple[float, ...]
    feature_source: FeatureSource

    def __post_init__(self) -> None:
        if not self.dev_accuracy_history:
            raise TrainingError("dev accuracy history is empty")
        first_best = self.dev_accuracy_history.index(
            max(self.dev_accuracy_history)
        )
        if self.best_epoch != first_best:
            raise TrainingError(
                f"best_epoch {self.best_epoch} is not the first maximum of "
                f"the dev accuracy history (expected {first_best})"
            )


def init_params(input_dim: int, hidden_dim: int, rng: np.random.Generator) -> MlpParams:
    """Symmetric-uniform fan-in initialization; biases start at zero."""
    bound1 = 1.0 / np.sqrt(input_dim)
    bound2 = 1.0 / np.sqrt(hidden_dim)
    return MlpParams(
        W1=rng.uniform(-bound1, bound1, size=(input_dim, hidden_dim)),
        b1=np.zeros(hidden_dim),
        W2=rng.uniform(-bound2, bound2, size=(hidden_dim, N_CLASSES)),
        b2=np.zeros(N_CLASSES),
    )


def zeros_like_params(params: MlpParams) -> MlpParams:
    return MlpParams(
        W1=np.zeros_like(params.W1),
        b1=np.zeros_like(params.b1),
        W2=np.zeros_like(params.W2),
        b2=np.zeros_like(params.b2),
    )


def _forward_batch(
    X: np.ndarray, params: MlpParams
) -> Tuple[np.ndarray, np.ndarray]:
    """Hidden activations and class probabilities for a batch of rows."""
    hidden = np.maximum(X @ params.W1 + params.b1, 0.0)
    logits = hidden @ params.W2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    exp = np.exp(shifted)
    probs = exp / exp.sum(axis=1, keepdims=True)
    return hidden, probs


def mlp_forward(x: FeatureVector, params: MlpParams) -> Tuple[float, float, float]:
    """Class probabilities (SUPPORTS, REFUTES, NEI) for one feature vector."""
    if x.dim != params.input_dim:
        raise TrainingError(
            f"feature dimension {x.dim} does not match model input "
            f"{params.input_dim}"
        )
    _, probs = _forward_batch(x.values[None, :], params)
    return (float(probs[0, 0]), float(probs[0, 1]), float(probs[0, 2]))


def _stack(
    data: Sequence[Tuple[FeatureVector, VerificationLabel]], input_dim: Optional[int]
) -> Tuple[np.ndarray, np.ndarray]:
    if not data:
        raise TrainingError("empty dataset")
    dims = {fv.dim for fv, _ in data}
    if len(dims) != 1:
        raise TrainingError(f"inconsistent feature dimensions: {sorted(dims)}")
    dim = dims.pop()
    if input_dim is not None and dim != input_dim:
        raise TrainingError(
            f"feature dimension {dim} does not match configured {input_dim}"
        )
    X = np.stack([fv.values for fv, _ in data])
    y = np.array([_LABEL_INDEX[label] for _, label in data], dtype=np.int64)
    return X, y


def _loss_and_grad_arrays(
    X: np.ndarray, y: np.ndarray, params: MlpParams
) -> Tuple[float, MlpParams]:
    n = X.shape[0]
    hidden = np.maximum(X @ params.W1 + params.b1, 0.0)
    logits = hidden @ params.W2 + params.b2
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    loss = float(-log_probs[np.arange(n), y].mean())
    dlogits = np.exp(log_probs)
    dlogits[np.arange(n), y] -= 1.0
    dlogits /= n
    gW2 = hidden.T @ dlogits
    gb2 = dlogits.sum(axis=0)
    dhidden = dlogits @ params.W2.T
    dhidden[hidden <= 0.0] = 0.0
    gW1 = X.T @ dhidden
    gb1 = dhidden.sum(axis=0)
    return loss, MlpParams(W1=gW1, b1=gb1, W2=gW2, b2=gb2)


def loss_and_grad(
    batch: Sequence[Tuple[FeatureVector, VerificationLabel]], params: MlpParams
) -> Tuple[float, MlpParams]:
    """Mean cross-entropy over the batch and its gradients via
    backpropagation; gradient container has the parameter shapes."""
    X, y = _stack(batch, params.input_dim)
    return _loss_and_grad_arrays(X, y, params)


def fresh_adam_state(params: MlpParams) -> AdamState:
    return AdamState(
        m=zeros_like_params(params), v=zeros_like_params(params), t=0
    )


def adam_step(
    params: MlpParams, grads: MlpParams, state: AdamState, cfg: TrainConfig
) -> Tuple[MlpParams, AdamState]:
    """One bias-corrected Adam update; purely functional."""
    t = state.t + 1
    new_params = {}
    new_m = {}
    new_v = {}
    for field in fields(MlpParams):
        name = field.name
        p = getattr(params, name)
        g = getattr(grads, name)
        m = cfg.adam_beta1 * getattr(state.m, name) + (1 - cfg.adam_beta1) * g
        v = cfg.adam_beta2 * getattr(state.v, name) + (1 - cfg.adam_beta2) * (
            g * g
        )
        m_hat = m / (1 - cfg.adam_beta1**t)
        v_hat = v / (1 - cfg.adam_beta2**t)
        new_params[name] = p - cfg.learning_rate * m_hat / (
            np.sqrt(v_hat) + cfg.adam_epsilon
        )
        new_m[name] = m
        new_v[name] = v
    return (
        MlpParams(**new_params),
        AdamState(m=MlpParams(**new_m), v=MlpParams(**new_v), t=t),
    )


def _accuracy(X: np.ndarray, y: np.ndarray, params: MlpParams) -> float:
    _, probs = _forward_batch(X, params)
    return float((probs.argmax(axis=1) == y).mean())


def train(
    train_data: Sequence[Tuple[FeatureVector, VerificationLabel]],
    dev_data: Sequence[Tuple[FeatureVector, VerificationLabel]],
    cfg: TrainConfig,
    hidden_dim: int = 100,
    feature_source: FeatureSource = FeatureSource.ENTAILMENT,
) -> TrainedModel:
    """Mini-batch Adam with per-epoch reshuffles; stops when dev accuracy
    has not strictly improved for ``patience`` consecutive epochs or at
    ``max_epochs``; returns the parameters from the best dev epoch."""
    X_train, y_train = _stack(train_data, None)
    X_dev, y_dev = _stack(dev_data, X_train.shape[1])
    rng = np.random.default_rng(cfg.seed)
    params = init_params(X_train.shape[1], hidden_dim=hidden_dim, rng=rng)
    state = fresh_adam_state(params)
    n = X_train.shape[0]
    history: List[float] = []
    best_accuracy = -1.0
    best_epoch = 0
    best_params = params
    epochs_since_best = 0
    for _epoch in range(cfg.max_epochs):
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            rows = order[start : start + cfg.batch_size]
            _, grads = _loss_and_grad_arrays(X_train[rows], y_train[rows], params)
            params, state = adam_step(params, grads, state, cfg)
        accuracy = _accuracy(X_dev, y_dev, params)
        history.append(accuracy)
        if accuracy > best_accuracy:
            best_accuracy = accuracy
            best_epoch = len(history) - 1
            best_params = params
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= cfg.patience:
                break
    return TrainedModel(
        params=best_params,
        config=cfg,
        best_epoch=best_epoch,
        dev_accuracy_history=tuple(history),
        feature_source=feature_source,
    )


def predict(
    claim: Claim,
    evidence: Optional[Evidence],
    model: TrainedModel,
    backend: FeatureBackend,
    feature: Optional[FeatureVector] = None,
) -> Verdict:
    """Classify one claim with a trained model; evidence is required for the
    sentence-pair feature source and ignored by the encoder source. A
    precomputed vector (for example from a cache) skips extraction."""
    if feature is not None:
        if feature.source is not model.feature_source:
            raise TrainingError(
                f"feature source {feature.source.value} does not match "
                f"model source {model.feature_source.value}"
            )
        if feature.values.shape != (model.params.input_dim,):
            raise TrainingError(
                f"feature width {feature.values.shape} does not match "
                f"model input {model.params.input_dim}"
            )
        fv = feature
    elif model.feature_source is FeatureSource.ENTAILMENT:
        if evidence is None:
            raise TrainingError(
                "sentence-pair features require an evidence sentence"
            )
        fv = extract_features(
            claim, evidence, backend, expected_dim=model.params.input_dim
        )
    else:
        fv = extract_encoder_features(
            claim, backend, expected_dim=model.params.input_dim
        )
    probs = mlp_forward(fv, model.params)
    return Verdict(
        claim_id=claim.id,
        predicted=argmax_label(probs),
        verifier=VerifierKind.ENTAILMENT_MLP,
        class_probabilities=probs,
        evidence=evidence,
    )


def _encode_array(arr: np.ndarray) -> str:
    return base64.b64encode(arr.astype("<f8").tobytes(order="C")).decode("ascii")


def _decode_array(text: str, shape: Sequence[int]) -> np.ndarray:
    data = np.frombuffer(base64.b64decode(text), dtype="<f8")
    return data.reshape(tuple(shape)).copy()


def model_to_json(model: TrainedModel) -> str:
    """Versioned, byte-stable serialization: identical models give identical
    strings; arrays stored row-major little-endian float64 in base64."""
    cfg = model.config
    payload = {
        "format_version": MODEL_FORMAT_VERSION,
        "config": {
            "learning_rate": cfg.learning_rate,
            "batch_size": cfg.batch_size,
            "max_epochs": cfg.max_epochs,
            "patience": cfg.patience,
            "seed": cfg.seed,
            "adam_beta1": cfg.adam_beta1,
            "adam_beta2": cfg.adam_beta2,
            "adam_epsilon": cfg.adam_epsilon,
        },
        "best_epoch": model.best_epoch,
        "dev_accuracy_history": list(model.dev_accuracy_history),
        "feature_source": model.feature_source.value,
        "shapes": {
            "W1": list(model.params.W1.shape),
            "b1": list(model.params.b1.shape),
            "W2": list(model.params.W2.shape),
            "b2": list(model.params.b2.shape),
        },
        "arrays": {
            "W1": _encode_array(model.params.W1),
            "b1": _encode_array(model.params.b1),
            "W2": _encode_array(model.params.W2),
            "b2": _encode_array(model.params.b2),
        },
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def model_from_json(text: str) -> TrainedModel:
    payload = json.loads(text)
    version = payload.get("format_version")
    if version != MODEL_FORMAT_VERSION:
        raise TrainingError(f"unsupported model format version: {version}")
    shapes = payload["shapes"]
    params = MlpParams(
        W1=_decode_array(payload["arrays"]["W1"], shapes["W1"]),
        b1=_decode_array(payload["arrays"]["b1"], shapes["b1"]),
        W2=_decode_array(payload["arrays"]["W2"], shapes["W2"]),
        b2=_decode_array(payload["arrays"]["b2"], shapes["b2"]),
    )
    return TrainedModel(
        params=params,
        config=TrainConfig(**payload["config"]),
        best_epoch=payload["best_epoch"],
        dev_accuracy_history=tuple(payload["dev_accuracy_history"]),
        feature_source=FeatureSource(payload["feature_source"]),
    )


def save_model(model: TrainedModel, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(model_to_json(model))
        handle.write("\n")


def load_model(path: Path | str) -> TrainedModel:
    with open(path, encoding="utf-8") as handle:
        return model_from_json(handle.read())
