"""End-to-end pipeline runs: mask, query the cloze backend, verify, score,
and persist artifacts. Every run writes its config beside its outputs so it
can be reproduced exactly.

Artifacts are deterministic for a fixed config: no timestamps, sorted JSON
keys, stable ordering.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple

from .cloze import (
    ClozeBackend,
    HttpClozeBackend,
    NoPredictionError,
    fill_mask,
    load_mock_table,
    query_top1,
)
from .core import (
    Claim,
    ClozePrediction,
    Evidence,
    MaskedClaim,
    MaskStrategy,
    Verdict,
    VerificationLabel,
    VerifierKind,
    parse_label,
)
from .dataset import ClaimSet, FilterResult, filter_by_vocab, load_claimset, split_holdout
from .evaluation import (
    DEFAULT_GENERIC_PREFIXES,
    EvaluationReport,
    build_report,
    render_csv,
    render_table,
    report_to_json,
)
from .features import (
    DEFAULT_FEATURE_DIM,
    FeatureBackend,
    FeatureCache,
    FeatureSource,
    FeatureVector,
    HashFeatureBackend,
    PlantedFeatureBackend,
    extract_features,
)
from .masking import (
    MaskingError,
    NerBackend,
    RuleNerBackend,
    apply_manual_mask,
    load_ner_table,
    mask_last_entity,
    mask_last_token,
)
from .mlp import TrainConfig, TrainedModel, load_model, predict, save_model, train
from .zeroshot import verify_zero_shot


class PipelineError(RuntimeError):
    """Raised when a run cannot proceed (no claims, bad config)."""


@dataclass(frozen=True)
class PipelineConfig:
    """Everything needed to reproduce a run. ``backend`` is a mock table
    path or an http(s) service URL; ``ner`` is "rule", a static-table path,
    or absent; ``feature_backend`` is "hash" or "planted" (test oracle that
    encodes gold labels)."""

    dataset_path: str
    output_dir: str
    split: str = "dev"
    strategy: MaskStrategy = MaskStrategy.LAST_TOKEN
    backend: str = ""
    ner: Optional[str] = None
    verifier: VerifierKind = VerifierKind.ZERO_SHOT
    train_config: TrainConfig = field(default_factory=TrainConfig)
    feature_backend: str = "hash"
    feature_dim: int = DEFAULT_FEATURE_DIM
    hidden_dim: int = 100
    dev_dataset_path: Optional[str] = None
    dev_fraction: float = 0.1
    strict_match: bool = False
    manual_token_index: Optional[int] = None
    generic_prefixes: Tuple[str, ...] = DEFAULT_GENERIC_PREFIXES
    seed: int = 0


def config_to_json(cfg: PipelineConfig) -> str:
    payload = {
        "dataset_path": cfg.dataset_path,
        "output_dir": cfg.output_dir,
        "split": cfg.split,
        "strategy": cfg.strategy.value,
        "backend": cfg.backend,
        "ner": cfg.ner,
        "verifier": cfg.verifier.value,
        "train_config": {
            "learning_rate": cfg.train_config.learning_rate,
            "batch_size": cfg.train_config.batch_size,
            "max_epochs": cfg.train_config.max_epochs,
            "patience": cfg.train_config.patience,
            "seed": cfg.train_config.seed,
            "adam_beta1": cfg.train_config.adam_beta1,
            "adam_beta2": cfg.train_config.adam_beta2,
            "adam_epsilon": cfg.train_config.adam_epsilon,
        },
        "feature_backend": cfg.feature_backend,
        "feature_dim": cfg.feature_dim,
        "hidden_dim": cfg.hidden_dim,
        "dev_dataset_path": cfg.dev_dataset_path,
        "dev_fraction": cfg.dev_fraction,
        "strict_match": cfg.strict_match,
        "manual_token_index": cfg.manual_token_index,
        "generic_prefixes": list(cfg.generic_prefixes),
        "seed": cfg.seed,
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def config_from_json(text: str) -> PipelineConfig:
    payload = json.loads(text)
    return PipelineConfig(
        dataset_path=payload["dataset_path"],
        output_dir=payload["output_dir"],
        split=payload["split"],
        strategy=MaskStrategy(payload["strategy"]),
        backend=payload["backend"],
        ner=payload["ner"],
        verifier=VerifierKind(payload["verifier"]),
        train_config=TrainConfig(**payload["train_config"]),
        feature_backend=payload["feature_backend"],
        feature_dim=payload["feature_dim"],
        hidden_dim=payload["hidden_dim"],
        dev_dataset_path=payload["dev_dataset_path"],
        dev_fraction=payload["dev_fraction"],
        strict_match=payload["strict_match"],
        manual_token_index=payload["manual_token_index"],
        generic_prefixes=tuple(payload["generic_prefixes"]),
        seed=payload["seed"],
    )


def make_cloze_backend(spec: str) -> ClozeBackend:
    """Mock table path, or http(s) URL for a remote adapter."""
    if not spec:
        raise PipelineError("no cloze backend configured")
    if spec.startswith("http://") or spec.startswith("https://"):
        return HttpClozeBackend(spec)
    return load_mock_table(spec)


def make_ner_backend(spec: Optional[str]) -> Optional[NerBackend]:
    """"rule" for the heuristic recognizer, a path for a static table,
    None for no recognizer."""
    if spec is None or spec == "":
        return None
    if spec == "rule":
        return RuleNerBackend()
    return load_ner_table(spec)


def make_masker(
    cfg: PipelineConfig, ner: Optional[NerBackend]
) -> Callable[[Claim], MaskedClaim]:
    if cfg.strategy is MaskStrategy.LAST_TOKEN:
        return mask_last_token
    if cfg.strategy is MaskStrategy.LAST_ENTITY:
        if ner is None:
            raise PipelineError(
                "last-entity masking needs a NER backend; set ner to 'rule' "
                "or a static table path"
            )
        return lambda claim: mask_last_entity(claim, ner)
    if cfg.manual_token_index is None:
        raise PipelineError("manual masking needs manual_token_index")
    return lambda claim: apply_manual_mask(claim, cfg.manual_token_index)


def verdict_to_record(
    verdict: Verdict, gold: Optional[VerificationLabel]
) -> Dict:
    """Flat, self-contained record for one scored claim; reconstructible."""
    record: Dict = {
        "claim_id": verdict.claim_id,
        "predicted": verdict.predicted.serialize(),
        "verifier": verdict.verifier.value,
        "gold": gold.serialize() if gold else None,
    }
    if verdict.class_probabilities is not None:
        record["class_probabilities"] = list(verdict.class_probabilities)
    if verdict.evidence is not None:
        origin = verdict.evidence.origin
        record["claim_text"] = origin.source.text
        record["masked_text"] = origin.masked_text
        record["gold_token"] = origin.gold_token
        record["mask_char_span"] = list(origin.mask_char_span)
        record["strategy"] = origin.strategy.value
        record["fallback_used"] = origin.fallback_used
        record["prediction"] = {
            "token": verdict.evidence.filler.token,
            "score": verdict.evidence.filler.score,
            "rank": verdict.evidence.filler.rank,
        }
        record["evidence_text"] = verdict.evidence.text
    return record


def verdict_from_record(record: Dict) -> Tuple[Verdict, Optional[VerificationLabel]]:
    gold = parse_label(record["gold"]) if record.get("gold") else None
    evidence = None
    if "evidence_text" in record:
        claim = Claim(
            id=record["claim_id"],
            text=record["claim_text"],
            gold_label=gold,
        )
        masked = MaskedClaim(
            source=claim,
            masked_text=record["masked_text"],
            gold_token=record["gold_token"],
            mask_char_span=tuple(record["mask_char_span"]),
            strategy=MaskStrategy(record["strategy"]),
            fallback_used=record["fallback_used"],
        )
        prediction = ClozePrediction(
            token=record["prediction"]["token"],
            score=record["prediction"]["score"],
            rank=record["prediction"]["rank"],
        )
        evidence = Evidence(
            text=record["evidence_text"], filler=prediction, origin=masked
        )
    probs = record.get("class_probabilities")
    verdict = Verdict(
        claim_id=record["claim_id"],
        predicted=parse_label(record["predicted"]),
        verifier=VerifierKind(record["verifier"]),
        class_probabilities=tuple(probs) if probs else None,
        evidence=evidence,
    )
    return verdict, gold


@dataclass(frozen=True)
class ZeroShotResult:
    report: EvaluationReport
    binary_report: Optional[EvaluationReport]
    filter_result: FilterResult
    no_prediction_count: int
    unlabeled_count: int
    pairs: Tuple[Tuple[Verdict, VerificationLabel], ...]


def _write_reports(
    output_dir: Path,
    report: EvaluationReport,
    binary_report: Optional[EvaluationReport],
    pairs: Sequence[Tuple[Verdict, Optional[VerificationLabel]]],
    cfg: PipelineConfig,
) -> None:
    output_dir.mkdir(parents=True, exist_ok=True)
    (output_dir / "config.json").write_text(config_to_json(cfg), encoding="utf-8")
    (output_dir / "report.json").write_text(
        report_to_json(report) + "\n", encoding="utf-8"
    )
    (output_dir / "report.txt").write_text(
        render_table(report) + "\n", encoding="utf-8"
    )
    (output_dir / "report.csv").write_text(render_csv(report), encoding="utf-8")
    if binary_report is not None:
        (output_dir / "report_binary_golds.json").write_text(
            report_to_json(binary_report) + "\n", encoding="utf-8"
        )
    with open(output_dir / "verdicts.jsonl", "w", encoding="utf-8") as handle:
        for verdict, gold in pairs:
            handle.write(json.dumps(verdict_to_record(verdict, gold), sort_keys=True))
            handle.write("\n")


def run_zero_shot(
    cfg: PipelineConfig,
    backend: Optional[ClozeBackend] = None,
    ner: Optional[NerBackend] = None,
) -> ZeroShotResult:
    """Mask every claim, query top-1, apply the token-match rule, score, and
    write artifacts. Vocabulary filtering runs first; claims the backend
    cannot answer are counted, not fatal."""
    if backend is None:
        backend = make_cloze_backend(cfg.backend)
    if ner is None:
        ner = make_ner_backend(cfg.ner)
    claimset, _summary = load_claimset(cfg.dataset_path, cfg.split)
    masker = make_masker(cfg, ner)
    filtered = filter_by_vocab(claimset, masker, backend.vocab_contains)
    if len(filtered.kept) == 0:
        raise PipelineError("no claims after filtering")
    pairs: List[Tuple[Verdict, VerificationLabel]] = []
    no_prediction = 0
    unlabeled = 0
    for claim in filtered.kept:
        masked = masker(claim)
        try:
            prediction = query_top1(backend, masked)
        except NoPredictionError:
            no_prediction += 1
            continue
        verdict = verify_zero_shot(masked, prediction, strict=cfg.strict_match)
        if claim.gold_label is None:
            unlabeled += 1
            continue
        pairs.append((verdict, claim.gold_label))
    if not pairs:
        raise PipelineError("no scorable claims (missing labels or predictions)")
    report = build_report(pairs, ner=ner, generic_prefixes=cfg.generic_prefixes)
    binary_pairs = [
        (v, g) for v, g in pairs if g is not VerificationLabel.NEI
    ]
    binary_report = (
        build_report(binary_pairs, ner=ner, generic_prefixes=cfg.generic_prefixes)
        if binary_pairs
        else None
    )
    _write_reports(Path(cfg.output_dir), report, binary_report, pairs, cfg)
    return ZeroShotResult(
        report=report,
        binary_report=binary_report,
        filter_result=filtered,
        no_prediction_count=no_prediction,
        unlabeled_count=unlabeled,
        pairs=tuple(pairs),
    )


def make_feature_backend(
    cfg: PipelineConfig, claimsets: Sequence[ClaimSet]
) -> FeatureBackend:
    if cfg.feature_backend == "hash":
        return HashFeatureBackend(cfg.feature_dim)
    if cfg.feature_backend == "planted":
        lookup: Dict[str, int] = {}
        label_index = {
            VerificationLabel.SUPPORTS: 0,
            VerificationLabel.REFUTES: 1,
            VerificationLabel.NEI: 2,
        }
        for claimset in claimsets:
            for claim in claimset:
                if claim.gold_label is not None:
                    lookup[claim.text] = label_index[claim.gold_label]
        return PlantedFeatureBackend(
            class_lookup=lambda text: lookup.get(text, 0),
            dimension=cfg.feature_dim,
            seed=cfg.seed,
        )
    raise PipelineError(f"unknown feature backend: {cfg.feature_backend!r}")


@dataclass(frozen=True)
class FeaturizedClaim:
    claim: Claim
    evidence: Evidence
    feature: FeatureVector


def featurize_claimset(
    claimset: ClaimSet,
    masker: Callable[[Claim], MaskedClaim],
    backend: ClozeBackend,
    feature_backend: FeatureBackend,
    cache: Optional[FeatureCache] = None,
) -> Tuple[List[FeaturizedClaim], int]:
    """Evidence synthesis plus feature extraction for every maskable,
    answerable claim; returns the survivors and the skip count."""
    out: List[FeaturizedClaim] = []
    skipped = 0
    for claim in claimset:
        try:
            masked = masker(claim)
            prediction = query_top1(backend, masked)
        except (MaskingError, NoPredictionError):
            skipped += 1
            continue
        evidence = fill_mask(masked, prediction)
        cached = None
        if cache is not None:
            cached = cache.get(
                claim.id, feature_backend.backend_id, feature_backend.dimension
            )
        if cached is not None:
            feature = FeatureVector(values=cached, source=FeatureSource.ENTAILMENT)
        else:
            feature = extract_features(claim, evidence, feature_backend)
            if cache is not None:
                cache.put(
                    claim.id,
                    feature_backend.backend_id,
                    feature_backend.dimension,
                    feature.values,
                )
        out.append(FeaturizedClaim(claim=claim, evidence=evidence, feature=feature))
    return out, skipped


@dataclass(frozen=True)
class TrainResult:
    model: TrainedModel
    model_path: str
    train_size: int
    dev_size: int
    skipped: int


def run_train(
    cfg: PipelineConfig,
    backend: Optional[ClozeBackend] = None,
    ner: Optional[NerBackend] = None,
    feature_backend: Optional[FeatureBackend] = None,
) -> TrainResult:
    """Featurize the train and dev splits (with an on-disk cache), train the
    classifier with early stopping, and persist the model and config."""
    if backend is None:
        backend = make_cloze_backend(cfg.backend)
    if ner is None:
        ner = make_ner_backend(cfg.ner)
    claimset, _ = load_claimset(cfg.dataset_path, cfg.split)
    if cfg.dev_dataset_path:
        dev_set, _ = load_claimset(cfg.dev_dataset_path, f"{cfg.split}-dev")
        train_set = claimset
    else:
        train_set, dev_set = split_holdout(claimset, cfg.dev_fraction, cfg.seed)
    if feature_backend is None:
        feature_backend = make_feature_backend(cfg, [train_set, dev_set])
    if feature_backend.dimension != cfg.feature_dim:
        raise PipelineError(
            f"feature backend dimension {feature_backend.dimension} does not "
            f"match configured {cfg.feature_dim}"
        )
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    cache = FeatureCache(output_dir / "features.jsonl")
    masker = make_masker(cfg, ner)
    skipped = 0
    labeled: Dict[str, List[Tuple[FeatureVector, VerificationLabel]]] = {
        "train": [],
        "dev": [],
    }
    for name, claims in (("train", train_set), ("dev", dev_set)):
        featurized, claims_skipped = featurize_claimset(
            claims, masker, backend, feature_backend, cache
        )
        skipped += claims_skipped
        for item in featurized:
            if item.claim.gold_label is None:
                skipped += 1
                continue
            labeled[name].append((item.feature, item.claim.gold_label))
    if not labeled["train"] or not labeled["dev"]:
        raise PipelineError("not enough labeled claims to train")
    model = train(
        labeled["train"],
        labeled["dev"],
        cfg.train_config,
        hidden_dim=cfg.hidden_dim,
    )
    model_path = output_dir / "model.json"
    save_model(model, model_path)
    (output_dir / "config.json").write_text(config_to_json(cfg), encoding="utf-8")
    return TrainResult(
        model=model,
        model_path=str(model_path),
        train_size=len(labeled["train"]),
        dev_size=len(labeled["dev"]),
        skipped=skipped,
    )


@dataclass(frozen=True)
class EvalResult:
    report: EvaluationReport
    skipped: int
    pairs: Tuple[Tuple[Verdict, VerificationLabel], ...]


def run_eval(
    cfg: PipelineConfig,
    model_path: str,
    backend: Optional[ClozeBackend] = None,
    ner: Optional[NerBackend] = None,
    feature_backend: Optional[FeatureBackend] = None,
) -> EvalResult:
    """Score a trained model on the configured split and write reports."""
    model = load_model(model_path)
    if backend is None:
        backend = make_cloze_backend(cfg.backend)
    if ner is None:
        ner = make_ner_backend(cfg.ner)
    claimset, _ = load_claimset(cfg.dataset_path, cfg.split)
    if feature_backend is None:
        feature_backend = make_feature_backend(cfg, [claimset])
    if feature_backend.dimension != model.params.input_dim:
        raise PipelineError(
            f"feature backend dimension {feature_backend.dimension} does not "
            f"match model input {model.params.input_dim}"
        )
    output_dir = Path(cfg.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    cache = FeatureCache(output_dir / "features.jsonl")
    masker = make_masker(cfg, ner)
    featurized, skipped = featurize_claimset(
        claimset, masker, backend, feature_backend, cache
    )
    pairs: List[Tuple[Verdict, VerificationLabel]] = []
    for item in featurized:
        if item.claim.gold_label is None:
            skipped += 1
            continue
        verdict = predict(
            item.claim, item.evidence, model, feature_backend, feature=item.feature
        )
        pairs.append((verdict, item.claim.gold_label))
    if not pairs:
        raise PipelineError("no scorable claims (missing labels or predictions)")
    report = build_report(pairs, ner=ner, generic_prefixes=cfg.generic_prefixes)
    _write_reports(output_dir, report, None, pairs, cfg)
    return EvalResult(report=report, skipped=skipped, pairs=tuple(pairs))


def analyze_verdicts(
    verdicts_path: Path | str,
    ner: Optional[NerBackend] = None,
    generic_prefixes: Sequence[str] = DEFAULT_GENERIC_PREFIXES,
) -> EvaluationReport:
    """Rebuild an evaluation report (including error categories) from a
    persisted verdicts file."""
    pairs: List[Tuple[Verdict, VerificationLabel]] = []
    with open(verdicts_path, encoding="utf-8") as handle:
        for line in handle:
            if not line.strip():
                continue
            verdict, gold = verdict_from_record(json.loads(line))
            if gold is None:
                continue
            pairs.append((verdict, gold))
    if not pairs:
        raise PipelineError(f"no gold-labeled verdicts in {verdicts_path}")
    return build_report(pairs, ner=ner, generic_prefixes=generic_prefixes)
