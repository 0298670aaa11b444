"""Load, validate, filter, and split claim files.

Input format: UTF-8 line-delimited JSON, one claim per line, fields
``id`` (integer), ``claim`` (string), ``label`` (string, optional).
Unknown fields (for example evidence annotations) are ignored. Bad lines
are skipped and counted rather than aborting the load; real dumps contain
irregularities and reproducibility is preserved by reporting the counts.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple

from .core import Claim, LabelParseError, MaskedClaim, normalize_token, parse_label
from .masking import MaskingError

MaskerFn = Callable[[Claim], MaskedClaim]


class DatasetError(ValueError):
    """Raised for malformed claim records or unloadable files."""


@dataclass(frozen=True)
class ClaimSet:
    """An ordered, duplicate-free collection of claims from one split."""

    claims: Tuple[Claim, ...]
    split_name: str

    def __post_init__(self) -> None:
        seen = set()
        for claim in self.claims:
            if claim.id in seen:
                raise DatasetError(f"duplicate claim id {claim.id}")
            seen.add(claim.id)

    def __len__(self) -> int:
        return len(self.claims)

    def __iter__(self):
        return iter(self.claims)

    def by_id(self, claim_id: int) -> Optional[Claim]:
        for claim in self.claims:
            if claim.id == claim_id:
                return claim
        return None


@dataclass(frozen=True)
class LoadSummary:
    loaded: int
    skipped: int
    skipped_line_numbers: Tuple[int, ...] = ()


@dataclass(frozen=True)
class FilterResult:
    kept: ClaimSet
    removed_vocab: int
    removed_unmaskable: int


def parse_claim_record(line: str) -> Claim:
    """One JSON record to a Claim; gold label absent when the field is."""
    try:
        record = json.loads(line)
    except json.JSONDecodeError as exc:
        raise DatasetError(f"invalid JSON: {exc}") from exc
    if not isinstance(record, dict):
        raise DatasetError(f"expected an object, got {type(record).__name__}")
    if "id" not in record:
        raise DatasetError("record has no id field")
    if "claim" not in record:
        raise DatasetError("record has no claim field")
    claim_id = record["id"]
    if not isinstance(claim_id, int) or isinstance(claim_id, bool):
        raise DatasetError(f"id must be an integer, got {claim_id!r}")
    text = record["claim"]
    if not isinstance(text, str):
        raise DatasetError(f"claim must be a string, got {type(text).__name__}")
    gold = None
    if record.get("label") is not None:
        try:
            gold = parse_label(record["label"])
        except LabelParseError as exc:
            raise DatasetError(str(exc)) from exc
    return Claim(id=claim_id, text=text, gold_label=gold)


def claim_to_record(claim: Claim) -> Dict:
    record: Dict = {"id": claim.id, "claim": claim.text}
    if claim.gold_label is not None:
        record["label"] = claim.gold_label.serialize()
    return record


def load_claimset(
    path: Path | str, split_name: str
) -> Tuple[ClaimSet, LoadSummary]:
    """Load every parseable record in file order; skip and count bad lines
    and duplicate ids."""
    claims: List[Claim] = []
    seen_ids = set()
    skipped: List[int] = []
    with open(path, encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                claim = parse_claim_record(line)
            except (DatasetError, ValueError):
                skipped.append(line_no)
                continue
            if claim.id in seen_ids:
                skipped.append(line_no)
                continue
            seen_ids.add(claim.id)
            claims.append(claim)
    summary = LoadSummary(
        loaded=len(claims),
        skipped=len(skipped),
        skipped_line_numbers=tuple(skipped),
    )
    return ClaimSet(claims=tuple(claims), split_name=split_name), summary


def save_claimset(claimset: ClaimSet, path: Path | str) -> None:
    with open(path, "w", encoding="utf-8") as handle:
        for claim in claimset:
            handle.write(json.dumps(claim_to_record(claim), sort_keys=True))
            handle.write("\n")


def filter_by_vocab(
    claimset: ClaimSet,
    masker: MaskerFn,
    vocab_contains: Callable[[str], bool],
) -> FilterResult:
    """Keep claims whose masked-out gold token is in the backend vocabulary
    (after token normalization); unmaskable claims are removed and counted
    separately. Idempotent; order preserved."""
    kept: List[Claim] = []
    removed_vocab = 0
    removed_unmaskable = 0
    for claim in claimset:
        try:
            masked = masker(claim)
        except MaskingError:
            removed_unmaskable += 1
            continue
        if vocab_contains(normalize_token(masked.gold_token)):
            kept.append(claim)
        else:
            removed_vocab += 1
    return FilterResult(
        kept=ClaimSet(claims=tuple(kept), split_name=claimset.split_name),
        removed_vocab=removed_vocab,
        removed_unmaskable=removed_unmaskable,
    )


def split_holdout(
    claimset: ClaimSet, dev_fraction: float, seed: int
) -> Tuple[ClaimSet, ClaimSet]:
    """Deterministically split off a dev subset (at least one claim when the
    set is non-empty); both halves preserve original claim order."""
    if not 0.0 < dev_fraction < 1.0:
        raise DatasetError(f"dev_fraction must be in (0, 1), got {dev_fraction}")
    total = len(claimset)
    if total < 2:
        raise DatasetError("need at least 2 claims to split off a dev set")
    dev_count = max(1, round(total * dev_fraction))
    if dev_count >= total:
        dev_count = total - 1
    rng = random.Random(seed)
    dev_indices = set(rng.sample(range(total), dev_count))
    train = [c for i, c in enumerate(claimset.claims) if i not in dev_indices]
    dev = [c for i, c in enumerate(claimset.claims) if i in dev_indices]
    return (
        ClaimSet(claims=tuple(train), split_name=f"{claimset.split_name}-train"),
        ClaimSet(claims=tuple(dev), split_name=f"{claimset.split_name}-dev"),
    )
