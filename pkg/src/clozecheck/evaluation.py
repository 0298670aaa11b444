"""Confusion-matrix metrics (per-class precision/recall/F1, accuracy, macro
averages) and the error-category analyzer for misclassified claims.

Zero-denominator convention: precision, recall, and F1 are defined as 0
when their denominator is 0. Macro values are unweighted means over the
three labels. Metrics are computed in pure Python floats so independent
recounts agree bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

from .core import (
    LABEL_ORDER,
    Claim,
    ClozePrediction,
    MaskedClaim,
    Verdict,
    VerificationLabel,
)
from .masking import NerBackend, token_category, tokenize_surface


class EvaluationError(ValueError):
    """Raised for unscorable inputs (missing gold, empty matrix)."""


DEFAULT_GENERIC_PREFIXES: Tuple[str, ...] = ("is a", "was a", "is an", "was an")

SHORT_CLAIM_TOKEN_LIMIT = 5


class ErrorCategory(Enum):
    ENTITY_TYPE_BIAS = "ENTITY_TYPE_BIAS"
    GENERIC_PREFIX = "GENERIC_PREFIX"
    SHORT_CLAIM = "SHORT_CLAIM"
    OTHER = "OTHER"


_LABEL_INDEX = {label: i for i, label in enumerate(LABEL_ORDER)}


@dataclass(frozen=True)
class ConfusionMatrix:
    """3x3 counts, rows = gold, columns = predicted, order
    (SUPPORTS, REFUTES, NEI)."""

    counts: Tuple[Tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        if len(self.counts) != 3 or any(len(row) != 3 for row in self.counts):
            raise EvaluationError("confusion matrix must be 3x3")
        if any(c < 0 for row in self.counts for c in row):
            raise EvaluationError("confusion matrix counts must be nonnegative")

    @property
    def total(self) -> int:
        return sum(c for row in self.counts for c in row)

    def row_sum(self, i: int) -> int:
        return sum(self.counts[i])

    def col_sum(self, j: int) -> int:
        return sum(self.counts[i][j] for i in range(3))


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float


@dataclass(frozen=True)
class MetricsReport:
    """Per-class and macro metrics in label order, plus accuracy."""

    per_class: Tuple[ClassMetrics, ClassMetrics, ClassMetrics]
    accuracy: float
    macro_precision: float
    macro_recall: float
    macro_f1: float

    def for_label(self, label: VerificationLabel) -> ClassMetrics:
        return self.per_class[_LABEL_INDEX[label]]


@dataclass(frozen=True)
class PerClaimOutcome:
    claim_id: int
    gold: VerificationLabel
    predicted: VerificationLabel
    category: Optional[ErrorCategory]


@dataclass(frozen=True)
class EvaluationReport:
    matrix: ConfusionMatrix
    metrics: MetricsReport
    error_counts: Dict[ErrorCategory, int]
    per_claim: Tuple[PerClaimOutcome, ...]


def build_confusion(
    pairs: Sequence[Tuple[Verdict, Optional[VerificationLabel]]]
) -> ConfusionMatrix:
    """Accumulate (verdict, gold) pairs; order-independent."""
    counts = [[0, 0, 0], [0, 0, 0], [0, 0, 0]]
    for verdict, gold in pairs:
        if gold is None:
            raise EvaluationError(
                f"claim {verdict.claim_id} has no gold label; cannot score"
            )
        counts[_LABEL_INDEX[gold]][_LABEL_INDEX[verdict.predicted]] += 1
    return ConfusionMatrix(counts=tuple(tuple(row) for row in counts))


def f1_score(precision: float, recall: float) -> float:
    """Harmonic mean; 0 when precision + recall is 0."""
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def compute_metrics(matrix: ConfusionMatrix) -> MetricsReport:
    """Per-class precision/recall/F1 with the 0 convention, accuracy, and
    unweighted macro averages."""
    if matrix.total == 0:
        raise EvaluationError("cannot compute metrics for an empty matrix")
    per_class: List[ClassMetrics] = []
    for i in range(3):
        tp = matrix.counts[i][i]
        predicted = matrix.col_sum(i)
        gold = matrix.row_sum(i)
        precision = tp / predicted if predicted > 0 else 0.0
        recall = tp / gold if gold > 0 else 0.0
        per_class.append(
            ClassMetrics(
                precision=precision,
                recall=recall,
                f1=f1_score(precision, recall),
            )
        )
    accuracy = sum(matrix.counts[i][i] for i in range(3)) / matrix.total
    return MetricsReport(
        per_class=tuple(per_class),
        accuracy=accuracy,
        macro_precision=(
            per_class[0].precision + per_class[1].precision + per_class[2].precision
        )
        / 3,
        macro_recall=(
            per_class[0].recall + per_class[1].recall + per_class[2].recall
        )
        / 3,
        macro_f1=(per_class[0].f1 + per_class[1].f1 + per_class[2].f1) / 3,
    )


def classify_error(
    claim: Claim,
    mc: MaskedClaim,
    prediction: ClozePrediction,
    gold: VerificationLabel,
    predicted: VerificationLabel,
    ner: Optional[NerBackend] = None,
    generic_prefixes: Sequence[str] = DEFAULT_GENERIC_PREFIXES,
) -> ErrorCategory:
    """Assign a misclassified claim to one error category.

    Fixed precedence, first match wins: SHORT_CLAIM (claim shorter than 5
    surface tokens, punctuation included) -> ENTITY_TYPE_BIAS (gold and
    predicted tokens both recognized as entities, with different categories)
    -> GENERIC_PREFIX (the two tokens before the mask form a configured
    generic phrase) -> OTHER.
    """
    if predicted is gold:
        raise EvaluationError(
            f"claim {claim.id} was classified correctly; nothing to categorize"
        )
    tokens = tokenize_surface(claim.text)
    if len(tokens) < SHORT_CLAIM_TOKEN_LIMIT:
        return ErrorCategory.SHORT_CLAIM
    if ner is not None:
        gold_category = token_category(ner, mc.gold_token)
        predicted_category = token_category(ner, prediction.token)
        if (
            gold_category is not None
            and predicted_category is not None
            and gold_category != predicted_category
        ):
            return ErrorCategory.ENTITY_TYPE_BIAS
    mask_index = next(
        (
            i
            for i, t in enumerate(tokens)
            if (t.start, t.end) == mc.mask_char_span
        ),
        None,
    )
    if mask_index is not None and mask_index >= 2:
        prefix = f"{tokens[mask_index - 2].text} {tokens[mask_index - 1].text}"
        if prefix.lower() in {p.lower() for p in generic_prefixes}:
            return ErrorCategory.GENERIC_PREFIX
    return ErrorCategory.OTHER


def build_report(
    pairs: Sequence[Tuple[Verdict, Optional[VerificationLabel]]],
    ner: Optional[NerBackend] = None,
    generic_prefixes: Sequence[str] = DEFAULT_GENERIC_PREFIXES,
) -> EvaluationReport:
    """Score verdicts against gold labels and categorize every error.

    Verdicts carrying evidence are categorized from their masked claim and
    filler token; verdicts without evidence fall into OTHER.
    """
    matrix = build_confusion(pairs)
    metrics = compute_metrics(matrix)
    error_counts: Dict[ErrorCategory, int] = {}
    per_claim: List[PerClaimOutcome] = []
    for verdict, gold in pairs:
        assert gold is not None  # build_confusion already rejected None
        category: Optional[ErrorCategory] = None
        if verdict.predicted is not gold:
            if verdict.evidence is not None:
                origin = verdict.evidence.origin
                category = classify_error(
                    origin.source,
                    origin,
                    verdict.evidence.filler,
                    gold,
                    verdict.predicted,
                    ner=ner,
                    generic_prefixes=generic_prefixes,
                )
            else:
                category = ErrorCategory.OTHER
            error_counts[category] = error_counts.get(category, 0) + 1
        per_claim.append(
            PerClaimOutcome(
                claim_id=verdict.claim_id,
                gold=gold,
                predicted=verdict.predicted,
                category=category,
            )
        )
    return EvaluationReport(
        matrix=matrix,
        metrics=metrics,
        error_counts=error_counts,
        per_claim=tuple(per_claim),
    )


def report_to_json(report: EvaluationReport) -> str:
    """Serialize a report; round-trips through report_from_json."""
    payload = {
        "matrix": [list(row) for row in report.matrix.counts],
        "metrics": {
            "per_class": {
                label.serialize(): {
                    "precision": cm.precision,
                    "recall": cm.recall,
                    "f1": cm.f1,
                }
                for label, cm in zip(LABEL_ORDER, report.metrics.per_class)
            },
            "accuracy": report.metrics.accuracy,
            "macro_precision": report.metrics.macro_precision,
            "macro_recall": report.metrics.macro_recall,
            "macro_f1": report.metrics.macro_f1,
        },
        "error_counts": {
            category.value: count
            for category, count in sorted(
                report.error_counts.items(), key=lambda kv: kv[0].value
            )
        },
        "per_claim": [
            {
                "claim_id": o.claim_id,
                "gold": o.gold.serialize(),
                "predicted": o.predicted.serialize(),
                "category": o.category.value if o.category else None,
            }
            for o in report.per_claim
        ],
        "conventions": "zero-denominator precision/recall/F1 are 0",
    }
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def report_from_json(text: str) -> EvaluationReport:
    payload = json.loads(text)
    matrix = ConfusionMatrix(
        counts=tuple(tuple(row) for row in payload["matrix"])
    )
    per_class = tuple(
        ClassMetrics(
            precision=payload["metrics"]["per_class"][label.serialize()]["precision"],
            recall=payload["metrics"]["per_class"][label.serialize()]["recall"],
            f1=payload["metrics"]["per_class"][label.serialize()]["f1"],
        )
        for label in LABEL_ORDER
    )
    metrics = MetricsReport(
        per_class=per_class,
        accuracy=payload["metrics"]["accuracy"],
        macro_precision=payload["metrics"]["macro_precision"],
        macro_recall=payload["metrics"]["macro_recall"],
        macro_f1=payload["metrics"]["macro_f1"],
    )
    from .core import parse_label

    per_claim = tuple(
        PerClaimOutcome(
            claim_id=o["claim_id"],
            gold=parse_label(o["gold"]),
            predicted=parse_label(o["predicted"]),
            category=ErrorCategory(o["category"]) if o["category"] else None,
        )
        for o in payload["per_claim"]
    )
    error_counts = {
        ErrorCategory(name): count
        for name, count in payload["error_counts"].items()
    }
    return EvaluationReport(
        matrix=matrix,
        metrics=metrics,
        error_counts=error_counts,
        per_claim=per_claim,
    )


def render_table(report: EvaluationReport) -> str:
    """Plain-text table of per-class and macro metrics."""
    lines = [
        f"{'label':<20} {'prec':>6} {'recall':>6} {'f1':>6}",
    ]
    for label, cm in zip(LABEL_ORDER, report.metrics.per_class):
        lines.append(
            f"{label.serialize():<20} {cm.precision:>6.2f} "
            f"{cm.recall:>6.2f} {cm.f1:>6.2f}"
        )
    m = report.metrics
    lines.append(
        f"{'macro':<20} {m.macro_precision:>6.2f} "
        f"{m.macro_recall:>6.2f} {m.macro_f1:>6.2f}"
    )
    lines.append(f"accuracy {m.accuracy:.2f} over {report.matrix.total} claims")
    if report.error_counts:
        parts = ", ".join(
            f"{category.value}={count}"
            for category, count in sorted(
                report.error_counts.items(), key=lambda kv: kv[0].value
            )
        )
        lines.append(f"errors: {parts}")
    lines.append("note: zero-denominator precision/recall/F1 reported as 0")
    return "\n".join(lines)


def render_csv(report: EvaluationReport) -> str:
    """Delimiter-separated per-class metrics for spreadsheets."""
    lines = ["label,precision,recall,f1"]
    for label, cm in zip(LABEL_ORDER, report.metrics.per_class):
        lines.append(
            f"{label.serialize()},{cm.precision},{cm.recall},{cm.f1}"
        )
    m = report.metrics
    lines.append(f"macro,{m.macro_precision},{m.macro_recall},{m.macro_f1}")
    lines.append(f"accuracy,{m.accuracy},,")
    return "\n".join(lines) + "\n"
