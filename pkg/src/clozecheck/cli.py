"""Command-line entry points for every pipeline stage.

Each stage persists its artifacts (plus the run config) to an output
directory, so later stages can consume earlier results and partial reruns
stay reproducible. The cloze backend and NER choices honor the
CLOZECHECK_BACKEND and CLOZECHECK_NER environment variables when the
corresponding flags are not given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path
from typing import List, Optional

from . import __version__
from .core import MaskStrategy, VerifierKind
from .dataset import load_claimset
from .features import FeatureCache
from .masking import MaskingError
from .mlp import TrainConfig
from .pipeline import (
    PipelineConfig,
    PipelineError,
    analyze_verdicts,
    config_to_json,
    featurize_claimset,
    make_cloze_backend,
    make_feature_backend,
    make_masker,
    make_ner_backend,
    run_eval,
    run_train,
    run_zero_shot,
)
from .evaluation import render_table


def _add_dataset_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--dataset", required=True, help="claim file (JSONL)")
    parser.add_argument("--split", default="dev", help="split name label")


def _add_backend_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--backend",
        default=os.environ.get("CLOZECHECK_BACKEND", ""),
        help="mock table path or http(s) service URL "
        "(default: $CLOZECHECK_BACKEND)",
    )
    parser.add_argument(
        "--ner",
        default=os.environ.get("CLOZECHECK_NER") or None,
        help="'rule', a static NER table path, or unset (default: $CLOZECHECK_NER)",
    )


def _add_masking_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--strategy",
        choices=[s.value for s in MaskStrategy],
        default=MaskStrategy.LAST_TOKEN.value,
    )
    parser.add_argument("--token-index", type=int, default=None)


def _add_train_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--learning-rate", type=float, default=0.001)
    parser.add_argument("--batch-size", type=int, default=32)
    parser.add_argument("--max-epochs", type=int, default=200)
    parser.add_argument("--patience", type=int, default=30)
    parser.add_argument("--feature-backend", choices=["hash", "planted"], default="hash")
    parser.add_argument("--feature-dim", type=int, default=400)
    parser.add_argument("--hidden-dim", type=int, default=100)
    parser.add_argument("--dev-dataset", default=None)
    parser.add_argument("--dev-fraction", type=float, default=0.1)


def _config_from_args(args: argparse.Namespace) -> PipelineConfig:
    train_config = TrainConfig(
        learning_rate=getattr(args, "learning_rate", 0.001),
        batch_size=getattr(args, "batch_size", 32),
        max_epochs=getattr(args, "max_epochs", 200),
        patience=getattr(args, "patience", 30),
        seed=args.seed,
    )
    return PipelineConfig(
        dataset_path=args.dataset,
        output_dir=getattr(args, "out", "") or "",
        split=args.split,
        strategy=MaskStrategy(getattr(args, "strategy", MaskStrategy.LAST_TOKEN.value)),
        backend=getattr(args, "backend", ""),
        ner=getattr(args, "ner", None),
        verifier=VerifierKind.ZERO_SHOT,
        train_config=train_config,
        feature_backend=getattr(args, "feature_backend", "hash"),
        feature_dim=getattr(args, "feature_dim", 400),
        hidden_dim=getattr(args, "hidden_dim", 100),
        dev_dataset_path=getattr(args, "dev_dataset", None),
        dev_fraction=getattr(args, "dev_fraction", 0.1),
        strict_match=getattr(args, "strict", False),
        manual_token_index=getattr(args, "token_index", None),
        seed=args.seed,
    )


def _cmd_ingest(args: argparse.Namespace) -> int:
    claimset, summary = load_claimset(args.dataset, args.split)
    labeled = sum(1 for c in claimset if c.gold_label is not None)
    print(
        json.dumps(
            {
                "split": claimset.split_name,
                "loaded": summary.loaded,
                "skipped": summary.skipped,
                "skipped_line_numbers": list(summary.skipped_line_numbers),
                "labeled": labeled,
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_mask(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    ner = make_ner_backend(cfg.ner)
    masker = make_masker(cfg, ner)
    claimset, _ = load_claimset(args.dataset, args.split)
    claims = list(claimset)
    if args.claim_id is not None:
        claims = [c for c in claims if c.id == args.claim_id]
        if not claims:
            print(f"error: no claim {args.claim_id}", file=sys.stderr)
            return 2
    for claim in claims:
        try:
            masked = masker(claim)
        except MaskingError as exc:
            print(
                json.dumps(
                    {"id": claim.id, "error": str(exc)}, sort_keys=True
                )
            )
            continue
        print(
            json.dumps(
                {
                    "id": claim.id,
                    "masked_text": masked.masked_text,
                    "gold_token": masked.gold_token,
                    "mask_char_span": list(masked.mask_char_span),
                    "strategy": masked.strategy.value,
                    "fallback_used": masked.fallback_used,
                },
                sort_keys=True,
            )
        )
    return 0


def _cmd_zeroshot(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    result = run_zero_shot(cfg)
    print(render_table(result.report))
    print(
        f"filtered: kept={len(result.filter_result.kept)} "
        f"removed_vocab={result.filter_result.removed_vocab} "
        f"removed_unmaskable={result.filter_result.removed_unmaskable} "
        f"no_prediction={result.no_prediction_count} "
        f"unlabeled={result.unlabeled_count}"
    )
    print(f"artifacts written to {cfg.output_dir}")
    return 0


def _cmd_extract_features(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    backend = make_cloze_backend(cfg.backend)
    ner = make_ner_backend(cfg.ner)
    masker = make_masker(cfg, ner)
    claimset, _ = load_claimset(args.dataset, args.split)
    feature_backend = make_feature_backend(cfg, [claimset])
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    cache = FeatureCache(out / "features.jsonl")
    featurized, skipped = featurize_claimset(
        claimset, masker, backend, feature_backend, cache
    )
    (out / "config.json").write_text(config_to_json(cfg), encoding="utf-8")
    print(
        json.dumps(
            {
                "featurized": len(featurized),
                "skipped": skipped,
                "cache_entries": len(cache),
                "backend_calls": getattr(feature_backend, "calls", None),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    result = run_train(cfg)
    print(
        json.dumps(
            {
                "model_path": result.model_path,
                "train_size": result.train_size,
                "dev_size": result.dev_size,
                "skipped": result.skipped,
                "best_epoch": result.model.best_epoch,
                "best_dev_accuracy": max(result.model.dev_accuracy_history),
                "epochs_run": len(result.model.dev_accuracy_history),
            },
            sort_keys=True,
        )
    )
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg = _config_from_args(args)
    result = run_eval(cfg, args.model)
    print(render_table(result.report))
    print(f"skipped={result.skipped}")
    print(f"artifacts written to {cfg.output_dir}")
    return 0


def _cmd_analyze(args: argparse.Namespace) -> int:
    ner = make_ner_backend(args.ner)
    report = analyze_verdicts(args.verdicts, ner=ner)
    print(render_table(report))
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    import uvicorn

    from .service import create_app

    claimset, _ = load_claimset(args.dataset, args.split)
    backend = make_cloze_backend(
        args.backend or os.environ.get("CLOZECHECK_BACKEND", "")
    )
    ner = make_ner_backend(args.ner)
    app = create_app(
        claimsets={args.split: claimset},
        backend=backend,
        session_dir=args.session_dir,
        ner=ner,
        default_split=args.split,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="clozecheck",
        description="Fact verification with a cloze language model "
        "as the only knowledge source.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load and validate a claim file")
    _add_dataset_args(p)
    p.set_defaults(func=_cmd_ingest)

    p = sub.add_parser("mask", help="mask claims under a strategy")
    _add_dataset_args(p)
    _add_masking_args(p)
    p.add_argument("--ner", default=os.environ.get("CLOZECHECK_NER") or None)
    p.add_argument("--claim-id", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_mask)

    p = sub.add_parser("zeroshot", help="run the token-match verifier")
    _add_dataset_args(p)
    _add_backend_args(p)
    _add_masking_args(p)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--strict", action="store_true", help="exact token match")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_zeroshot)

    p = sub.add_parser("extract-features", help="featurize claims into a cache")
    _add_dataset_args(p)
    _add_backend_args(p)
    _add_masking_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_extract_features)

    p = sub.add_parser("train", help="train the verdict classifier")
    _add_dataset_args(p)
    _add_backend_args(p)
    _add_masking_args(p)
    _add_train_args(p)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="evaluate a trained model")
    _add_dataset_args(p)
    _add_backend_args(p)
    _add_masking_args(p)
    _add_train_args(p)
    p.add_argument("--model", required=True, help="model file from train")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("analyze", help="rebuild a report from saved verdicts")
    p.add_argument("--verdicts", required=True, help="verdicts.jsonl path")
    p.add_argument("--ner", default=os.environ.get("CLOZECHECK_NER") or None)
    p.set_defaults(func=_cmd_analyze)

    p = sub.add_parser("serve", help="run the probe HTTP service")
    _add_dataset_args(p)
    _add_backend_args(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8137)
    p.add_argument("--session-dir", default="sessions")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PipelineError, MaskingError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
