"""Turn a claim into a masked claim: last token, last named entity, or manual.

The surface tokenizer is deliberately simple (whitespace plus sentence
punctuation). Subword handling belongs to the cloze backend, not here.
"""

from __future__ import annotations

import json
import re
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, List, Sequence, Tuple

from .core import MASK_PLACEHOLDER, Claim, MaskedClaim, MaskStrategy

SENTENCE_PUNCTUATION = ".,!?;:"

_CHUNK_RE = re.compile(r"\S+")


class MaskingError(ValueError):
    """Raised when a claim cannot be masked as requested."""


class UnmaskableClaimError(MaskingError):
    """Raised when a claim has no maskable token at all."""


@dataclass(frozen=True)
class SurfaceToken:
    text: str
    start: int
    end: int


@dataclass(frozen=True)
class EntitySpan:
    """A named entity found in a claim; label categories are backend-defined."""

    text: str
    label: str
    start: int
    end: int


class NerBackend(ABC):
    """Contract for named-entity recognizers pluggable into the pipeline."""

    concurrency_safe: bool = True

    @abstractmethod
    def entities(self, text: str) -> List[EntitySpan]:
        """Return entity spans, non-overlapping and sorted by start offset."""


def tokenize_surface(text: str) -> List[SurfaceToken]:
    """Split on whitespace, peeling leading/trailing sentence punctuation
    (. , ! ? ; :) into separate single-character tokens."""
    if not text.strip():
        raise MaskingError("cannot tokenize empty text")
    tokens: List[SurfaceToken] = []
    for chunk in _CHUNK_RE.finditer(text):
        start, end = chunk.start(), chunk.end()
        left, right = start, end
        leading: List[SurfaceToken] = []
        while left < right and text[left] in SENTENCE_PUNCTUATION:
            leading.append(SurfaceToken(text[left], left, left + 1))
            left += 1
        trailing: List[SurfaceToken] = []
        while right > left and text[right - 1] in SENTENCE_PUNCTUATION:
            trailing.append(SurfaceToken(text[right - 1], right - 1, right))
            right -= 1
        tokens.extend(leading)
        if right > left:
            tokens.append(SurfaceToken(text[left:right], left, right))
        tokens.extend(reversed(trailing))
    return tokens


def is_punctuation_token(token: str) -> bool:
    return all(c in SENTENCE_PUNCTUATION for c in token)


def _mask_token(
    claim: Claim, token: SurfaceToken, strategy: MaskStrategy
) -> MaskedClaim:
    masked = (
        claim.text[: token.start] + MASK_PLACEHOLDER + claim.text[token.end :]
    )
    return MaskedClaim(
        source=claim,
        masked_text=masked,
        gold_token=token.text,
        mask_char_span=(token.start, token.end),
        strategy=strategy,
    )


def mask_last_token(claim: Claim) -> MaskedClaim:
    """Mask the final non-punctuation surface token."""
    tokens = tokenize_surface(claim.text)
    for token in reversed(tokens):
        if not is_punctuation_token(token.text):
            return _mask_token(claim, token, MaskStrategy.LAST_TOKEN)
    raise UnmaskableClaimError(
        f"claim {claim.id} has no non-punctuation token: {claim.text!r}"
    )


def apply_manual_mask(claim: Claim, token_index: int) -> MaskedClaim:
    """Mask the surface token at ``token_index`` (0-based)."""
    tokens = tokenize_surface(claim.text)
    if not 0 <= token_index < len(tokens):
        raise MaskingError(
            f"token index {token_index} out of range for {len(tokens)} tokens"
        )
    return _mask_token(claim, tokens[token_index], MaskStrategy.MANUAL)


def mask_last_entity(claim: Claim, ner: NerBackend) -> MaskedClaim:
    """Mask the final surface token of the entity with the greatest end offset.

    Falls back to last-token masking (with ``fallback_used=True``) when the
    recognizer finds no entities; the placeholder always covers one token.
    """
    spans = ner.entities(claim.text)
    if not spans:
        return replace(mask_last_token(claim), fallback_used=True)
    entity = max(spans, key=lambda s: s.end)
    tokens = tokenize_surface(claim.text)
    inside = [
        t
        for t in tokens
        if t.start < entity.end and t.end > entity.start
        and not is_punctuation_token(t.text)
    ]
    if not inside:
        return replace(mask_last_token(claim), fallback_used=True)
    return _mask_token(claim, inside[-1], MaskStrategy.LAST_ENTITY)


def _validate_spans(text: str, spans: Sequence[EntitySpan]) -> None:
    previous_end = -1
    for span in spans:
        if not 0 <= span.start < span.end <= len(text):
            raise ValueError(f"entity span {span} outside text bounds")
        if text[span.start : span.end] != span.text:
            raise ValueError(
                f"entity span {span} does not match text "
                f"{text[span.start:span.end]!r}"
            )
        if span.start < previous_end:
            raise ValueError(f"entity spans overlap or are unsorted at {span}")
        previous_end = span.end


class StaticNerBackend(NerBackend):
    """Table-driven recognizer: exact sentence string to a fixed entity list."""

    concurrency_safe = True

    def __init__(self, table: Dict[str, List[EntitySpan]]):
        for text, spans in table.items():
            _validate_spans(text, sorted(spans, key=lambda s: s.start))
        self._table = {
            text: sorted(spans, key=lambda s: s.start)
            for text, spans in table.items()
        }

    def entities(self, text: str) -> List[EntitySpan]:
        return list(self._table.get(text, []))


_YEAR_RE = re.compile(r"^[12]\d{3}$")


class RuleNerBackend(NerBackend):
    """Heuristic recognizer: capitalized-token runs (NAME) and 4-digit years
    (DATE). A stand-in for a trained model; swap in a real adapter for
    quality work."""

    concurrency_safe = True

    def entities(self, text: str) -> List[EntitySpan]:
        tokens = tokenize_surface(text)
        spans: List[EntitySpan] = []
        run: List[SurfaceToken] = []

        def flush() -> None:
            if run:
                start, end = run[0].start, run[-1].end
                spans.append(EntitySpan(text[start:end], "NAME", start, end))
                run.clear()

        for token in tokens:
            if _YEAR_RE.match(token.text):
                flush()
                spans.append(
                    EntitySpan(token.text, "DATE", token.start, token.end)
                )
            elif token.text[0].isupper():
                run.append(token)
            else:
                flush()
        flush()
        return spans


def load_ner_table(path: Path | str) -> StaticNerBackend:
    """Load a static NER table from line-delimited records
    ``{"text": ..., "entities": [{"text", "label", "start", "end"}, ...]}``."""
    table: Dict[str, List[EntitySpan]] = {}
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                text = record["text"]
                spans = [
                    EntitySpan(e["text"], e["label"], e["start"], e["end"])
                    for e in record.get("entities", [])
                ]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValueError(f"{path}:{line_no}: bad NER record: {exc}") from exc
            table[text] = spans
    return StaticNerBackend(table)


def token_category(ner: NerBackend, token: str) -> str | None:
    """Entity label assigned to a bare token, or None when unrecognized."""
    spans = ner.entities(token)
    return spans[0].label if spans else None
