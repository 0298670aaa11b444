"""Fact verification with a cloze language model as the only knowledge source."""

from .core import (
    MASK_PLACEHOLDER,
    Claim,
    ClozePrediction,
    Evidence,
    MaskedClaim,
    MaskStrategy,
    Verdict,
    VerificationLabel,
    VerifierKind,
)

__all__ = [
    "MASK_PLACEHOLDER",
    "Claim",
    "ClozePrediction",
    "Evidence",
    "MaskedClaim",
    "MaskStrategy",
    "Verdict",
    "VerificationLabel",
    "VerifierKind",
]

__version__ = "0.1.0"
