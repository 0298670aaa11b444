"""Cloze language-model backends: the abstract contract, evidence synthesis,
a table-driven mock for offline testing, and an HTTP adapter for remote
models.

Scores are backend-relative; never compare them across backends.
"""

from __future__ import annotations

import json
from abc import ABC, abstractmethod
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import httpx

from .core import (
    MASK_PLACEHOLDER,
    ClozePrediction,
    Evidence,
    MaskedClaim,
    normalize_token,
)


class ClozeBackendError(RuntimeError):
    """Raised when a backend cannot serve a query at all."""


class NoPredictionError(ClozeBackendError):
    """Raised when a backend has no prediction for a masked sentence."""

    def __init__(self, masked_text: str):
        super().__init__(f"backend has no prediction for: {masked_text!r}")
        self.masked_text = masked_text


class ClozeBackend(ABC):
    """Contract every cloze model adapter implements.

    query_topk returns at most k predictions, rank 1..n with no gaps and
    scores non-increasing; every returned token must pass vocab_contains.
    """

    concurrency_safe: bool = True

    @abstractmethod
    def query_topk(self, masked_text: str, k: int) -> List[ClozePrediction]:
        """Top-k filler candidates for a sentence containing one placeholder."""

    @abstractmethod
    def vocab_contains(self, token: str) -> bool:
        """Whether a (normalized) token is in the backend's vocabulary."""


def query_top1(backend: ClozeBackend, mc: MaskedClaim) -> ClozePrediction:
    """Rank-1 prediction for a masked claim; error when the backend has none."""
    predictions = backend.query_topk(mc.masked_text, 1)
    if not predictions:
        raise NoPredictionError(mc.masked_text)
    return predictions[0]


def fill_mask(mc: MaskedClaim, prediction: ClozePrediction) -> Evidence:
    """Substitute the predicted token for the placeholder, yielding the
    generated evidence sentence."""
    if not prediction.token:
        raise ValueError("cannot fill the mask with an empty token")
    text = mc.masked_text.replace(MASK_PLACEHOLDER, prediction.token, 1)
    return Evidence(text=text, filler=prediction, origin=mc)


def _validate_entries(
    masked_text: str, entries: Sequence[Tuple[str, float]]
) -> List[Tuple[str, float]]:
    previous = None
    for token, score in entries:
        if not token:
            raise ValueError(f"empty prediction token for {masked_text!r}")
        if previous is not None and score > previous:
            raise ValueError(
                f"scores increase with rank for {masked_text!r}: "
                f"{score} after {previous}"
            )
        previous = score
    return [(token, float(score)) for token, score in entries]


class MockTableBackend(ClozeBackend):
    """Deterministic backend answering from an exact-match sentence table.

    With no explicit vocabulary the backend is open (vocab_contains is
    always true). An explicit vocabulary is stored normalized, extended
    with every prediction token so the contract invariant holds.
    """

    concurrency_safe = True

    def __init__(
        self,
        table: Dict[str, Sequence[Tuple[str, float]]],
        vocab: Optional[Iterable[str]] = None,
    ):
        self._table = {
            masked_text: _validate_entries(masked_text, entries)
            for masked_text, entries in table.items()
        }
        self._vocab: Optional[set] = None
        if vocab is not None:
            self._vocab = {normalize_token(t) for t in vocab}
            for entries in self._table.values():
                self._vocab.update(normalize_token(t) for t, _ in entries)
        # query counter, test instrumentation only
        self.calls = 0
        self.duplicate_key_warnings = 0

    def query_topk(self, masked_text: str, k: int) -> List[ClozePrediction]:
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        self.calls += 1
        entries = self._table.get(masked_text, [])
        return [
            ClozePrediction(token=token, score=score, rank=rank)
            for rank, (token, score) in enumerate(entries[:k], start=1)
        ]

    def vocab_contains(self, token: str) -> bool:
        if self._vocab is None:
            return True
        return normalize_token(token) in self._vocab

    def __len__(self) -> int:
        return len(self._table)


def load_mock_table(
    path: Path | str, vocab: Optional[Iterable[str]] = None
) -> MockTableBackend:
    """Load a mock backend from line-delimited records
    ``{"masked_text": ..., "predictions": [{"token", "score"}, ...]}``.
    Duplicate keys keep the last record and are counted as warnings."""
    table: Dict[str, List[Tuple[str, float]]] = {}
    duplicates = 0
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                masked_text = record["masked_text"]
                entries = [
                    (p["token"], float(p["score"]))
                    for p in record["predictions"]
                ]
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise ValueError(
                    f"{path}:{line_no}: bad mock table record: {exc}"
                ) from exc
            try:
                _validate_entries(masked_text, entries)
            except ValueError as exc:
                raise ValueError(f"{path}:{line_no}: {exc}") from exc
            if masked_text in table:
                duplicates += 1
            table[masked_text] = entries
    backend = MockTableBackend(table, vocab=vocab)
    backend.duplicate_key_warnings = duplicates
    return backend


class HttpClozeBackend(ClozeBackend):
    """Adapter for a remote model speaking the service protocol:
    POST ``{base}/v1/predict`` with ``{"masked_text", "k"}``, response
    ``{"predictions": [{"token", "score"}, ...]}``.

    The protocol has no vocabulary endpoint, so vocab_contains is always
    true; apply vocabulary filtering on the serving side if needed.
    """

    concurrency_safe = False

    def __init__(self, base_url: str, timeout: float = 30.0):
        self._url = base_url.rstrip("/") + "/v1/predict"
        self._client = httpx.Client(timeout=timeout)

    def query_topk(self, masked_text: str, k: int) -> List[ClozePrediction]:
        if k < 1:
            raise ValueError(f"k must be positive, got {k}")
        try:
            response = self._client.post(
                self._url, json={"masked_text": masked_text, "k": k}
            )
            response.raise_for_status()
            payload = response.json()
        except httpx.HTTPError as exc:
            raise ClozeBackendError(f"cloze service call failed: {exc}") from exc
        predictions = [
            ClozePrediction(
                token=p["token"], score=float(p["score"]), rank=rank
            )
            for rank, p in enumerate(payload.get("predictions", [])[:k], start=1)
        ]
        for earlier, later in zip(predictions, predictions[1:]):
            if later.score > earlier.score:
                raise ClozeBackendError(
                    f"service returned scores increasing with rank for "
                    f"{masked_text!r}"
                )
        return predictions

    def vocab_contains(self, token: str) -> bool:
        return True

    def close(self) -> None:
        self._client.close()
