"""Command line for the store exporter.

Flags mirror the extraction pipeline's manifest conventions; a TOML or JSON
config may supply any value, with flags taking precedence.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .corpus_reader import ReaderError
from .encoders import EncoderError
from .export import ExportConfig, ExportError, export_store


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(raw.decode("utf-8"))
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(raw.decode("utf-8"))


def build_parser() -> _Parser:
    parser = _Parser(prog="embed-export", description=__doc__)
    parser.add_argument("--config", help="TOML or JSON manifest")
    parser.add_argument("--corpus", nargs="+", help="CoNLL-U or lemma-line input files")
    parser.add_argument("--out", help="output store path")
    parser.add_argument("--kind", choices=["domain", "general"])
    parser.add_argument("--encoder", help="'fake[:dim]' or 'elmo:<options>,<weights>'")
    parser.add_argument("--fake-encoder", action="store_true",
                        help="shorthand for --encoder fake")
    parser.add_argument("--layer", type=int, help="contextual layer to read (default 1)")
    parser.add_argument("--top-k", type=int, help="lemma cap for general stores")
    parser.add_argument("--lemma-list", help="keep exactly these lemmas")
    return parser


def config_from_args(args: argparse.Namespace) -> ExportConfig:
    doc = _load_config(args.config) if args.config else {}
    base = Path(args.config).resolve().parent if args.config else Path.cwd()

    def resolve(rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else base / p

    corpora = args.corpus or doc.get("corpus") or []
    if isinstance(corpora, str):
        corpora = [corpora]
    out = args.out or doc.get("out")
    encoder = args.encoder or ("fake" if args.fake_encoder else None) or doc.get("encoder")
    if not corpora:
        raise UsageError("no input corpus given (--corpus or config 'corpus')")
    if not out:
        raise UsageError("no output path given (--out or config 'out')")
    if not encoder:
        raise UsageError("no encoder given (--encoder, --fake-encoder or config 'encoder')")
    lemma_list = args.lemma_list or doc.get("lemma_list")
    return ExportConfig(
        encoder=encoder,
        corpus_paths=tuple(resolve(c) if args.corpus is None else Path(c) for c in corpora),
        output_path=Path(out) if args.out else resolve(out),
        kind=args.kind or doc.get("kind", "domain"),
        layer=args.layer if args.layer is not None else int(doc.get("layer", 1)),
        top_k=args.top_k if args.top_k is not None else int(doc.get("top_k", 200_000)),
        lemma_list_path=Path(lemma_list) if lemma_list else None,
    )


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        config = config_from_args(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 1
    try:
        path = export_store(config)
    except (ExportError, EncoderError, ReaderError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(f"wrote {config.kind} store -> {path}")
    return 0


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
