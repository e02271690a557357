"""Standalone prediction exporter for canonical dialogue corpora."""

from __future__ import annotations

import argparse
import sys

from .adapter import AdapterConfig, AdapterError, export_predictions
from .corpus_io import CorpusFormatError


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dialnoise-adapter", description=__doc__)
    parser.add_argument("--in", dest="corpus", required=True, help="canonical corpus JSON")
    parser.add_argument("--model", required=True, help="model identifier or local path")
    parser.add_argument("--task", choices=["classification", "dst"], required=True)
    parser.add_argument("--out", required=True, help="prediction JSONL path")
    parser.add_argument("--batch-size", type=int, default=16)
    parser.add_argument("--device", default="cpu")
    parser.add_argument("--schema", help="slot schema for dst constrained scoring")
    parser.add_argument("--predictor-id", default=None,
                        help="override the exported predictor identity")
    parser.add_argument("--max-new-tokens", type=int, default=8)
    parser.add_argument("--enumerated-only", action="store_true",
                        help="dst: skip open slots instead of decoding a value")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    config = AdapterConfig(
        model=args.model,
        task=args.task,
        output=args.out,
        batch_size=args.batch_size,
        device=args.device,
        schema=args.schema,
        predictor_id=args.predictor_id,
        max_new_tokens=args.max_new_tokens,
        enumerated_only=args.enumerated_only,
    )
    try:
        path = export_predictions(args.corpus, config)
    except FileNotFoundError as exc:
        print(f"dialnoise-adapter: I/O error: {exc}", file=sys.stderr)
        return 2
    except (AdapterError, CorpusFormatError) as exc:
        print(f"dialnoise-adapter: error: {exc}", file=sys.stderr)
        return 1
    print(f"predictions -> {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
