"""Shared domain types for the claim verification pipeline.

Everything here is an immutable value object: construct, validate once,
share freely across threads.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

MASK_PLACEHOLDER = "[MASK]"

_WHITESPACE_RE = re.compile(r"\s+")


class CoreError(ValueError):
    """Raised when a core value object would violate its invariants."""


class LabelParseError(CoreError):
    """Raised for a string outside the closed label set."""


class VerificationLabel(Enum):
    """Three-way verdict for a claim, in fixed order (used for argmax ties)."""

    SUPPORTS = "SUPPORTS"
    REFUTES = "REFUTES"
    NEI = "NOT ENOUGH INFO"

    def serialize(self) -> str:
        return self.value


# Fixed label order shared by probability vectors, confusion matrices, reports.
LABEL_ORDER: Tuple[VerificationLabel, ...] = (
    VerificationLabel.SUPPORTS,
    VerificationLabel.REFUTES,
    VerificationLabel.NEI,
)

_LABEL_ALIASES = {
    "SUPPORTS": VerificationLabel.SUPPORTS,
    "REFUTES": VerificationLabel.REFUTES,
    "NOT ENOUGH INFO": VerificationLabel.NEI,
    "NEI": VerificationLabel.NEI,
}


def parse_label(text: str) -> VerificationLabel:
    """Parse a label string; case-insensitive, "NEI" aliases to NOT ENOUGH INFO."""
    key = text.strip().upper()
    try:
        return _LABEL_ALIASES[key]
    except KeyError:
        raise LabelParseError(f"unrecognized verification label: {text!r}") from None


def normalize_whitespace(text: str) -> str:
    """Collapse whitespace runs to single spaces and strip the ends."""
    return _WHITESPACE_RE.sub(" ", text).strip()


def normalize_token(token: str) -> str:
    """Canonical token form for matching and vocabulary tests: Unicode NFC,
    leading/trailing punctuation stripped, lowercased. Internal characters
    are untouched. Idempotent."""
    token = unicodedata.normalize("NFC", token)
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end].lower()


class MaskStrategy(Enum):
    LAST_TOKEN = "last_token"
    LAST_ENTITY = "last_entity"
    MANUAL = "manual"


class VerifierKind(Enum):
    ZERO_SHOT = "zero_shot"
    ENTAILMENT_MLP = "entailment_mlp"


@dataclass(frozen=True)
class Claim:
    """One claim sentence, optionally carrying its gold label."""

    id: int
    text: str
    gold_label: Optional[VerificationLabel] = None

    def __post_init__(self) -> None:
        if not isinstance(self.id, int) or isinstance(self.id, bool):
            raise CoreError(f"claim id must be an integer, got {self.id!r}")
        if not self.text.strip():
            raise CoreError(f"claim {self.id}: text is empty")


@dataclass(frozen=True)
class MaskedClaim:
    """A claim with exactly one surface token replaced by the mask placeholder."""

    source: Claim
    masked_text: str
    gold_token: str
    mask_char_span: Tuple[int, int]
    strategy: MaskStrategy
    fallback_used: bool = False

    def __post_init__(self) -> None:
        if self.masked_text.count(MASK_PLACEHOLDER) != 1:
            raise CoreError(
                f"masked_text must contain {MASK_PLACEHOLDER} exactly once: "
                f"{self.masked_text!r}"
            )
        start, end = self.mask_char_span
        if self.source.text[start:end] != self.gold_token:
            raise CoreError(
                f"mask_char_span {self.mask_char_span} does not cover gold token "
                f"{self.gold_token!r} in {self.source.text!r}"
            )
        restored = self.masked_text.replace(MASK_PLACEHOLDER, self.gold_token, 1)
        if normalize_whitespace(restored) != normalize_whitespace(self.source.text):
            raise CoreError(
                f"filling the placeholder with {self.gold_token!r} does not "
                f"reproduce the source text"
            )


@dataclass(frozen=True)
class ClozePrediction:
    """One candidate filler token from a cloze backend."""

    token: str
    score: float
    rank: int

    def __post_init__(self) -> None:
        if self.rank < 1:
            raise CoreError(f"rank must be a positive integer, got {self.rank}")


@dataclass(frozen=True)
class Evidence:
    """The masked claim with the backend's filler substituted in."""

    text: str
    filler: ClozePrediction
    origin: MaskedClaim

    def __post_init__(self) -> None:
        expected = self.origin.masked_text.replace(
            MASK_PLACEHOLDER, self.filler.token, 1
        )
        if self.text != expected:
            raise CoreError(
                f"evidence text {self.text!r} is not the origin with "
                f"{self.filler.token!r} filled in"
            )


def argmax_label(probabilities: Tuple[float, float, float]) -> VerificationLabel:
    """Argmax over (SUPPORTS, REFUTES, NEI); ties go to the earlier label."""
    best = 0
    for i in (1, 2):
        if probabilities[i] > probabilities[best]:
            best = i
    return LABEL_ORDER[best]


@dataclass(frozen=True)
class Verdict:
    """Final prediction for one claim, from either verifier path."""

    claim_id: int
    predicted: VerificationLabel
    verifier: VerifierKind
    class_probabilities: Optional[Tuple[float, float, float]] = None
    evidence: Optional[Evidence] = None

    def __post_init__(self) -> None:
        probs = self.class_probabilities
        if probs is None:
            return
        if len(probs) != 3:
            raise CoreError(f"expected 3 class probabilities, got {len(probs)}")
        if any(p < 0.0 or p > 1.0 for p in probs):
            raise CoreError(f"class probabilities outside [0, 1]: {probs}")
        if abs(sum(probs) - 1.0) > 1e-6:
            raise CoreError(f"class probabilities sum to {sum(probs)}, not 1")
        if self.predicted is not argmax_label(probs):
            raise CoreError(
                f"predicted {self.predicted} is not the argmax of {probs}"
            )
