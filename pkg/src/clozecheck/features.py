"""Feature extraction for the trained verifier: the abstract backend
contract, two deterministic mock backends for offline testing, and a disk
cache so expensive backends run once per claim.

The entailment orientation is premise = evidence sentence, hypothesis =
claim sentence; pass ``reverse=True`` for the flipped ablation. The
encoder variant embeds the claim sentence alone (frozen-encoder baseline).
"""

from __future__ import annotations

import hashlib
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Callable, Dict, Optional, Tuple

import numpy as np

from .core import Claim, Evidence

DEFAULT_FEATURE_DIM = 400


class FeatureBackendError(RuntimeError):
    """Raised when a backend cannot produce features for an input."""


class FeatureConfigError(ValueError):
    """Raised when backend dimensions disagree with the run configuration."""


class FeatureSource(Enum):
    ENTAILMENT = "entailment"
    ENCODER = "encoder"


@dataclass(frozen=True)
class FeatureVector:
    """Fixed-width real feature vector; values are finite float64."""

    values: np.ndarray
    source: FeatureSource

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise FeatureConfigError(
                f"feature vector must be 1-d, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise FeatureConfigError("feature vector contains non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def dim(self) -> int:
        return int(self.values.shape[0])


class FeatureBackend(ABC):
    """Contract for feature extractors; deterministic by requirement.

    Implementations provide sentence-pair features (entail_features) or
    single-sentence embeddings (encode) or both; unimplemented variants
    raise.
    """

    concurrency_safe: bool = True

    @property
    @abstractmethod
    def dimension(self) -> int:
        """Width of every vector this backend produces."""

    @property
    @abstractmethod
    def backend_id(self) -> str:
        """Stable identifier used in cache keys and run configs."""

    def entail_features(self, premise: str, hypothesis: str) -> np.ndarray:
        raise FeatureBackendError(
            f"backend {self.backend_id} has no sentence-pair features"
        )

    def encode(self, sentence: str) -> np.ndarray:
        raise FeatureBackendError(
            f"backend {self.backend_id} has no single-sentence encoder"
        )


def _checked(backend: FeatureBackend, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    if values.shape != (backend.dimension,):
        raise FeatureConfigError(
            f"backend {backend.backend_id} returned shape {values.shape}, "
            f"expected ({backend.dimension},)"
        )
    return values


def extract_features(
    claim: Claim,
    evidence: Evidence,
    backend: FeatureBackend,
    expected_dim: Optional[int] = None,
    reverse: bool = False,
) -> FeatureVector:
    """Sentence-pair features for (evidence as premise, claim as hypothesis)."""
    if expected_dim is not None and backend.dimension != expected_dim:
        raise FeatureConfigError(
            f"backend {backend.backend_id} has dimension {backend.dimension}, "
            f"run configured {expected_dim}"
        )
    premise, hypothesis = evidence.text, claim.text
    if reverse:
        premise, hypothesis = hypothesis, premise
    values = _checked(backend, backend.entail_features(premise, hypothesis))
    return FeatureVector(values=values, source=FeatureSource.ENTAILMENT)


def extract_encoder_features(
    claim: Claim, backend: FeatureBackend, expected_dim: Optional[int] = None
) -> FeatureVector:
    """Single-sentence embedding of the claim (frozen-encoder baseline)."""
    if expected_dim is not None and backend.dimension != expected_dim:
        raise FeatureConfigError(
            f"backend {backend.backend_id} has dimension {backend.dimension}, "
            f"run configured {expected_dim}"
        )
    values = _checked(backend, backend.encode(claim.text))
    return FeatureVector(values=values, source=FeatureSource.ENCODER)


def _text_seed(*parts: str) -> int:
    digest = hashlib.sha256("\x1f".join(parts).encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class HashFeatureBackend(FeatureBackend):
    """Deterministic pseudo-random features derived from input text hashes.

    Carries no signal; useful for shape, determinism, and cache tests.
    """

    concurrency_safe = True

    def __init__(self, dimension: int = DEFAULT_FEATURE_DIM):
        self._dimension = dimension
        # extraction counter, test instrumentation only
        self.calls = 0

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def backend_id(self) -> str:
        return f"hash-{self._dimension}"

    def entail_features(self, premise: str, hypothesis: str) -> np.ndarray:
        self.calls += 1
        rng = np.random.default_rng(_text_seed("pair", premise, hypothesis))
        return rng.standard_normal(self._dimension)

    def encode(self, sentence: str) -> np.ndarray:
        self.calls += 1
        rng = np.random.default_rng(_text_seed("single", sentence))
        return rng.standard_normal(self._dimension)


class PlantedFeatureBackend(FeatureBackend):
    """Features carrying a recoverable class signal: a class-coded mean
    (one of three orthogonal block directions chosen by ``class_lookup``
    on the hypothesis sentence) plus seeded Gaussian noise."""

    concurrency_safe = True

    def __init__(
        self,
        class_lookup: Callable[[str], int],
        dimension: int = DEFAULT_FEATURE_DIM,
        noise_scale: float = 0.1,
        seed: int = 0,
    ):
        if dimension < 3:
            raise FeatureConfigError("planted backend needs dimension >= 3")
        self._dimension = dimension
        self._class_lookup = class_lookup
        self._noise_scale = noise_scale
        self._seed = seed
        self.calls = 0

    @property
    def dimension(self) -> int:
        return self._dimension

    @property
    def backend_id(self) -> str:
        return f"planted-{self._dimension}-{self._seed}"

    def _vector_for(self, key_text: str) -> np.ndarray:
        label_index = self._class_lookup(key_text)
        if label_index not in (0, 1, 2):
            raise FeatureBackendError(
                f"class_lookup returned {label_index}, expected 0, 1, or 2"
            )
        third = self._dimension // 3
        mean = np.zeros(self._dimension)
        start = label_index * third
        mean[start : start + third] = 1.0
        rng = np.random.default_rng(
            _text_seed(f"planted-{self._seed}", key_text)
        )
        return mean + self._noise_scale * rng.standard_normal(self._dimension)

    def entail_features(self, premise: str, hypothesis: str) -> np.ndarray:
        self.calls += 1
        return self._vector_for(hypothesis)

    def encode(self, sentence: str) -> np.ndarray:
        self.calls += 1
        return self._vector_for(sentence)


class FeatureCache:
    """Append-only JSONL cache keyed by (claim id, backend id, dimension).

    Values round-trip exactly: JSON float serialization preserves float64.
    """

    def __init__(self, path: Path | str):
        self._path = Path(path)
        self._entries: Dict[Tuple[int, str, int], np.ndarray] = {}
        if self._path.exists():
            with open(self._path, encoding="utf-8") as handle:
                for line_no, line in enumerate(handle, start=1):
                    if not line.strip():
                        continue
                    try:
                        record = json.loads(line)
                        key = (
                            record["claim_id"],
                            record["backend_id"],
                            record["dim"],
                        )
                        values = np.array(record["values"], dtype=np.float64)
                    except (json.JSONDecodeError, KeyError, TypeError) as exc:
                        raise ValueError(
                            f"{path}:{line_no}: bad cache record: {exc}"
                        ) from exc
                    self._entries[key] = values

    def __len__(self) -> int:
        return len(self._entries)

    def get(
        self, claim_id: int, backend_id: str, dim: int
    ) -> Optional[np.ndarray]:
        values = self._entries.get((claim_id, backend_id, dim))
        return None if values is None else values.copy()

    def put(
        self, claim_id: int, backend_id: str, dim: int, values: np.ndarray
    ) -> None:
        values = np.asarray(values, dtype=np.float64)
        key = (claim_id, backend_id, dim)
        if key in self._entries:
            return
        self._entries[key] = values.copy()
        record = {
            "claim_id": claim_id,
            "backend_id": backend_id,
            "dim": dim,
            "values": values.tolist(),
        }
        with open(self._path, "a", encoding="utf-8") as handle:
            handle.write(json.dumps(record, sort_keys=True))
            handle.write("\n")
