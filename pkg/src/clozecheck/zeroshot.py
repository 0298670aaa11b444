"""Zero-shot verification rule: the claim is SUPPORTS exactly when the top-1
predicted token matches the held-out gold token, otherwise REFUTES.

This path never emits NEI and attaches no class probabilities. Synonyms of
the gold token count as mismatches by design; the entailment verifier is
the path that handles them.
"""

from __future__ import annotations

from .cloze import fill_mask
from .core import (
    ClozePrediction,
    MaskedClaim,
    Verdict,
    VerificationLabel,
    VerifierKind,
    normalize_token,
)

__all__ = ["normalize_token", "tokens_match", "verify_zero_shot"]


def tokens_match(predicted: str, gold: str, strict: bool = False) -> bool:
    """Token equality after normalization; ``strict`` compares raw strings
    (ablation variant)."""
    if strict:
        return predicted == gold
    return normalize_token(predicted) == normalize_token(gold)


def verify_zero_shot(
    mc: MaskedClaim, prediction: ClozePrediction, strict: bool = False
) -> Verdict:
    """Token-match rule over a masked claim and its top-1 prediction."""
    matched = tokens_match(prediction.token, mc.gold_token, strict=strict)
    label = VerificationLabel.SUPPORTS if matched else VerificationLabel.REFUTES
    return Verdict(
        claim_id=mc.source.id,
        predicted=label,
        verifier=VerifierKind.ZERO_SHOT,
        evidence=fill_mask(mc, prediction),
    )
