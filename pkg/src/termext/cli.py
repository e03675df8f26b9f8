"""Command-line entry point.

Subcommands cover the pipeline stages (stats, candidates, featurize, train,
predict) and the experiment drivers (eval, ablate, run-all). A TOML or JSON
manifest describes the domain inputs for the experiment drivers; every output
table embeds the resolved run manifest as comment lines and is written
atomically under the output directory.

Exit codes: 0 success, 1 usage error, 2 data error.
"""

from __future__ import annotations

import argparse
import io
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .candidates import (
    FilterConfig,
    SOURCE_PATTERN,
    SOURCE_SHALLOW,
    candidates_from_rows,
    candidates_to_rows,
    generate_candidates,
    generate_candidates_by_pattern,
    label_candidates,
    max_recall,
    mine_patterns,
)
from .corpus import (
    CorpusError,
    analyze,
    frequency_from_corpus,
    load_freq_list,
    load_gold_terms,
    parse_conllu,
    stats_tables,
)
from .embedstore import Stoplist, StoreError, load_store, load_text_store
from .evaluate import (
    DomainConfig,
    EvalReport,
    ExperimentConfig,
    ExperimentError,
    ablate,
    run_all,
    run_experiment,
)
from .features import FeatureError, assemble, concat_matrices, load_matrix, matrix_debug_rows, save_matrix
from .model import ModelFormatError, TrainingError, load_model, predict, save_model, train

USAGE_ERROR = 1
DATA_ERROR = 2

_DATA_ERRORS = (
    CorpusError,
    StoreError,
    FeatureError,
    TrainingError,
    ModelFormatError,
    ExperimentError,
    FileNotFoundError,
    IsADirectoryError,
    PermissionError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse variant that reports usage problems via exit code 1."""

    def error(self, message: str) -> None:  # type: ignore[override]
        raise UsageError(message)


@dataclass
class RunManifest:
    tool_version: str
    seed: int
    config_path: str | None
    inputs: dict[str, str] = field(default_factory=dict)

    def add_input(self, role: str, path: Path | str) -> None:
        self.inputs[role] = str(Path(path).resolve())

    def comment_lines(self) -> list[str]:
        lines = [
            f"# termext {self.tool_version}",
            f"# seed\t{self.seed}",
            f"# config\t{self.config_path or '-'}",
        ]
        lines.extend(f"# input:{role}\t{path}" for role, path in sorted(self.inputs.items()))
        return lines

    def as_dict(self) -> dict:
        return {
            "tool_version": self.tool_version,
            "seed": self.seed,
            "config": self.config_path,
            "inputs": dict(sorted(self.inputs.items())),
        }


def _write_atomic(path: Path, payload: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(payload)
    os.replace(tmp, path)


def _write_tsv(path: Path, manifest: RunManifest, header: list[str], rows: list[tuple]) -> None:
    lines = manifest.comment_lines()
    lines.append("\t".join(header))
    lines.extend("\t".join(str(cell) for cell in row) for row in rows)
    _write_atomic(path, ("\n".join(lines) + "\n").encode("utf-8"))


def _write_json(path: Path, manifest: RunManifest, payload: dict) -> None:
    body = {"manifest": manifest.as_dict(), **payload}
    _write_atomic(path, (json.dumps(body, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _read_tsv_rows(path: Path) -> list[tuple[str, ...]]:
    rows: list[tuple[str, ...]] = []
    with open(path, "r", encoding="utf-8") as fh:
        header_seen = False
        for line in fh:
            line = line.rstrip("\n")
            if not line or line.startswith("#"):
                continue
            if not header_seen:
                header_seen = True
                continue
            rows.append(tuple(line.split("\t")))
    return rows


def _load_stoplist(path: str | None) -> Stoplist:
    if path is None:
        return Stoplist()
    with open(path, "r", encoding="utf-8") as fh:
        lemmas = {line.strip().lower() for line in fh if line.strip()}
    return Stoplist(lemmas=frozenset(lemmas))


def _load_config(path: str) -> dict:
    raw = Path(path).read_bytes()
    if path.endswith(".json"):
        return json.loads(raw.decode("utf-8"))
    try:
        import tomllib  # py311+
    except ModuleNotFoundError:
        import tomli as tomllib
    return tomllib.loads(raw.decode("utf-8"))


def _experiment_config(args: argparse.Namespace, require_test: bool) -> tuple[ExperimentConfig, RunManifest]:
    if not args.config:
        raise UsageError("this subcommand requires --config with a domain manifest")
    doc = _load_config(args.config)
    base = Path(args.config).resolve().parent

    def resolve(rel: str) -> Path:
        p = Path(rel)
        return p if p.is_absolute() else base / p

    try:
        domains = tuple(
            DomainConfig(
                name=d["name"],
                corpus_path=resolve(d["corpus"]),
                gold_path=resolve(d["gold"]),
                # convention: the domain name doubles as the seed term
                seed_term=d.get("seed_term", d["name"]),
                store_path=resolve(d["store"]),
            )
            for d in doc["domains"]
        )
        general_store = resolve(doc["general"]["store"])
        general_freq = resolve(doc["general"]["freq"])
    except KeyError as exc:
        raise UsageError(f"config {args.config}: missing key {exc}") from exc

    filter_doc = doc.get("filter", {})
    filter_cfg = FilterConfig(
        max_len=int(getattr(args, "max_len", None) or filter_doc.get("max_len", 11)),
        min_chars=int(filter_doc.get("min_chars", 3)),
        exclude_adp_adv_internal=not (
            getattr(args, "permissive_adv_adp", False) or filter_doc.get("permissive_adv_adp", False)
        ),
    )
    model_doc = doc.get("model", {})
    seed = int(doc.get("seed", 0) if getattr(args, "seed", None) is None else args.seed)
    groups = getattr(args, "groups", None) or model_doc.get("groups", "C,P,S")
    test_domain = getattr(args, "test_domain", None) or domains[0].name
    if require_test and not getattr(args, "test_domain", None):
        raise UsageError("this subcommand requires --test-domain")

    stop_path = getattr(args, "stoplist", None) or doc.get("stoplist", {}).get("file")
    stoplist = _load_stoplist(str(resolve(stop_path)) if stop_path else None)

    cfg = ExperimentConfig(
        domains=domains,
        general_store_path=general_store,
        general_freq_path=general_freq,
        test_domain=test_domain,
        feature_groups=_parse_groups(groups),
        candidate_source=getattr(args, "source", None) or doc.get("source", SOURCE_SHALLOW),
        filter_config=filter_cfg,
        c=float(getattr(args, "c", None) or model_doc.get("c", 1.0)),
        loss=getattr(args, "loss", None) or model_doc.get("loss", "hinge"),
        seed=seed,
        balanced=bool(getattr(args, "balanced", False) or model_doc.get("balanced", False)),
        text_stores=args.text_store,
        stoplist=stoplist,
    )
    manifest = RunManifest(tool_version=__version__, seed=cfg.seed, config_path=str(Path(args.config).resolve()))
    for dom in domains:
        manifest.add_input(f"corpus:{dom.name}", dom.corpus_path)
        manifest.add_input(f"gold:{dom.name}", dom.gold_path)
        manifest.add_input(f"store:{dom.name}", dom.store_path)
    manifest.add_input("general_store", general_store)
    manifest.add_input("general_freq", general_freq)
    return cfg, manifest


def _parse_groups(spec: str) -> frozenset[str]:
    groups = frozenset(g.strip().upper() for g in spec.replace("&", ",").split(",") if g.strip())
    unknown = groups - {"C", "P", "S"}
    if unknown:
        raise UsageError(f"unknown feature groups {sorted(unknown)} (expected C, P, S)")
    if not groups:
        raise UsageError("at least one feature group is required")
    return groups


def _manifest_for(args: argparse.Namespace, seed: int = 0) -> RunManifest:
    return RunManifest(
        tool_version=__version__,
        seed=seed,
        config_path=str(Path(args.config).resolve()) if getattr(args, "config", None) else None,
    )


def _report_rows(reports: list[EvalReport]) -> list[tuple]:
    return [
        (
            r.test_domain,
            f"{r.precision:.6f}",
            f"{r.recall:.6f}",
            f"{r.f1:.6f}",
            r.tp,
            r.fp,
            r.fn,
            f"{r.max_recall:.6f}",
            r.predicted_count,
            r.candidate_count,
            r.gold_count,
        )
        for r in reports
    ]

_REPORT_HEADER = [
    "test_domain", "precision", "recall", "f1", "tp", "fp", "fn",
    "max_recall", "predicted", "candidates", "gold",
]


def _cmd_stats(args: argparse.Namespace) -> int:
    manifest = _manifest_for(args)
    manifest.add_input("corpus", args.corpus)
    manifest.add_input("gold", args.gold)
    with open(args.corpus, "rb") as fh:
        corpus = parse_conllu(fh, args.domain or Path(args.corpus).stem)
    with open(args.gold, "rb") as fh:
        gold = load_gold_terms(fh, corpus.domain_name)
    report = analyze(corpus, gold)
    out_dir = Path(args.out_dir)
    for name, rows in stats_tables(report).items():
        _write_tsv(out_dir / f"stats_{name}.tsv", manifest, [name, "count"], rows)
    if args.json:
        payload = {name: dict(getattr(report, name)) for name in report.HISTOGRAMS}
        _write_json(out_dir / "stats.json", manifest, {"domain": report.domain_name, "histograms": payload})
    print(f"wrote 6 histogram tables for {corpus.domain_name!r} to {out_dir}")
    return 0


def _cmd_candidates(args: argparse.Namespace) -> int:
    manifest = _manifest_for(args)
    manifest.add_input("corpus", args.corpus)
    with open(args.corpus, "rb") as fh:
        corpus = parse_conllu(fh, args.domain or Path(args.corpus).stem)
    gold = None
    if args.gold:
        manifest.add_input("gold", args.gold)
        with open(args.gold, "rb") as fh:
            gold = load_gold_terms(fh, corpus.domain_name)
    if args.source == SOURCE_PATTERN:
        if gold is None:
            raise UsageError("--source pattern requires --gold to mine patterns from")
        cands = generate_candidates_by_pattern(corpus, mine_patterns(corpus, gold))
    else:
        cfg = FilterConfig(
            max_len=args.max_len,
            min_chars=args.min_chars,
            exclude_adp_adv_internal=not args.permissive_adv_adp,
        )
        cands = generate_candidates(corpus, cfg)
    if gold is not None:
        cands = label_candidates(cands, gold)
    out = Path(args.out_dir) / "candidates.tsv"
    _write_tsv(out, manifest, ["lemmas", "pos", "occurrences", "label"], candidates_to_rows(cands))
    line = f"{len(cands)} candidates"
    if gold is not None:
        line += f", max recall {max_recall(cands, gold):.4f} over {len(gold.terms)} gold terms"
    print(line + f" -> {out}")
    return 0


def _cmd_featurize(args: argparse.Namespace) -> int:
    manifest = _manifest_for(args)
    for role, path in (
        ("corpus", args.corpus), ("candidates", args.candidates),
        ("domain_store", args.domain_store), ("general_store", args.general_store),
        ("general_freq", args.general_freq),
    ):
        manifest.add_input(role, path)
    with open(args.corpus, "rb") as fh:
        corpus = parse_conllu(fh, args.domain or Path(args.corpus).stem)
    cands = candidates_from_rows(
        _read_tsv_rows(Path(args.candidates)), corpus.domain_name, SOURCE_SHALLOW
    )
    read_store = load_text_store if args.text_store else load_store
    with open(args.domain_store, "rb") as fh:
        dom_store = read_store(fh)
    with open(args.general_store, "rb") as fh:
        gen_store = read_store(fh)
    with open(args.general_freq, "rb") as fh:
        gen_freq = load_freq_list(fh)
    matrix = assemble(
        cands,
        general_freq=gen_freq,
        domain_freq=frequency_from_corpus(corpus),
        domain_store=dom_store,
        general_store=gen_store,
        seed_term=args.seed_term,
        stop=_load_stoplist(args.stoplist),
    )
    out = Path(args.out_dir) / "features.fmat"
    buf = io.BytesIO()
    save_matrix(matrix, buf)
    _write_atomic(out, buf.getvalue())
    if args.debug_tsv:
        header = ["lemmas", "domain", "label", *matrix.schema.names]
        _write_tsv(Path(args.out_dir) / "features.tsv", manifest, header, matrix_debug_rows(matrix))
    print(f"{len(matrix)} rows x {len(matrix.schema)} features -> {out}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    manifest = _manifest_for(args, seed=args.seed)
    parts = []
    for i, path in enumerate(args.features):
        manifest.add_input(f"features:{i}", path)
        with open(path, "rb") as fh:
            parts.append(load_matrix(fh))
    matrix = concat_matrices(parts).select_groups(_parse_groups(args.groups))
    model = train(matrix, c=args.c, loss=args.loss, seed=args.seed, balanced=args.balanced)
    out = Path(args.out_dir) / args.model_out
    buf = io.BytesIO()
    save_model(model, buf, manifest=manifest.as_dict())
    _write_atomic(out, buf.getvalue())
    if args.log:
        rows = [(i, repr(v)) for i, v in enumerate(model.history)]
        _write_tsv(Path(args.out_dir) / "training_log.tsv", manifest, ["epoch", "objective"], rows)
    print(f"trained {model.loss} model on {len(matrix)} rows, objective {model.objective:.6f} -> {out}")
    return 0


def _cmd_predict(args: argparse.Namespace) -> int:
    manifest = _manifest_for(args)
    manifest.add_input("model", args.model)
    manifest.add_input("features", args.features)
    with open(args.model, "rb") as fh:
        model = load_model(fh)
    with open(args.features, "rb") as fh:
        matrix = load_matrix(fh)
    if len(model.weights) != len(matrix.schema):
        matrix = _match_model_columns(matrix, model)
    labels, margins = predict(model, matrix)
    order = np.argsort(-margins, kind="stable")
    rows = [
        (" ".join(matrix.keys[i][0]), matrix.keys[i][1], labels[i], f"{margins[i]:.6f}")
        for i in order
    ]
    out = Path(args.out_dir) / "predictions.tsv"
    _write_tsv(out, manifest, ["lemmas", "domain", "label", "margin"], rows)
    positive = sum(1 for label in labels if label == "term")
    print(f"{positive} of {len(labels)} rows predicted as terms -> {out}")
    return 0


def _match_model_columns(matrix, model):
    """Project a full matrix onto the feature subset a model was trained on."""
    for letters in ({"C", "P", "S"}, {"C", "P"}, {"C", "S"}, {"S", "P"}, {"C"}, {"S"}, {"P"}):
        sub = matrix.select_groups(letters)
        if sub.schema.fingerprint == model.schema_fingerprint:
            return sub
    raise FeatureError(
        "feature matrix does not match the model's schema fingerprint "
        f"{model.schema_fingerprint}"
    )


def _cmd_eval(args: argparse.Namespace) -> int:
    cfg, manifest = _experiment_config(args, require_test=True)
    report = run_experiment(cfg)
    out = Path(args.out_dir) / f"eval_{cfg.test_domain}.tsv"
    _write_tsv(out, manifest, _REPORT_HEADER, _report_rows([report]))
    if args.json:
        _write_json(Path(args.out_dir) / f"eval_{cfg.test_domain}.json", manifest, {"report": report.as_dict()})
    print(
        f"test={report.test_domain} P={report.precision:.3f} R={report.recall:.3f} "
        f"F1={report.f1:.3f} -> {out}"
    )
    return 0


def _cmd_ablate(args: argparse.Namespace) -> int:
    cfg, manifest = _experiment_config(args, require_test=True)
    rows = []
    reports = ablate(cfg)
    for label, report in reports:
        rows.append((label,) + _report_rows([report])[0])
    out = Path(args.out_dir) / f"ablation_{cfg.test_domain}.tsv"
    _write_tsv(out, manifest, ["features"] + _REPORT_HEADER, rows)
    if args.json:
        payload = {"rows": [{"features": label, **r.as_dict()} for label, r in reports]}
        _write_json(Path(args.out_dir) / f"ablation_{cfg.test_domain}.json", manifest, payload)
    print(f"7 ablation rows for test={cfg.test_domain} -> {out}")
    return 0


def _cmd_run_all(args: argparse.Namespace) -> int:
    cfg, manifest = _experiment_config(args, require_test=False)
    reports = run_all(cfg)
    out = Path(args.out_dir) / "results.tsv"
    _write_tsv(out, manifest, _REPORT_HEADER, _report_rows(reports))
    if args.json:
        _write_json(Path(args.out_dir) / "results.json", manifest, {"reports": [r.as_dict() for r in reports]})
    for report in reports:
        print(
            f"test={report.test_domain} P={report.precision:.3f} R={report.recall:.3f} "
            f"F1={report.f1:.3f}"
        )
    print(f"4-way results -> {out}")
    return 0


def build_parser() -> _Parser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="TOML or JSON manifest of domain inputs")
    common.add_argument("--out-dir", default=".", help="directory for output files")
    common.add_argument("--text-store", action="store_true", help="read stores in the debug TSV form")
    common.add_argument("--json", action="store_true", help="also write JSON outputs")

    parser = _Parser(prog="termext", description=__doc__)
    parser.add_argument("--version", action="version", version=f"termext {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", parents=[common], help="gold-term histograms for one corpus")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gold", required=True)
    p.add_argument("--domain")
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("candidates", parents=[common], help="generate term candidates")
    p.add_argument("--corpus", required=True)
    p.add_argument("--gold")
    p.add_argument("--domain")
    p.add_argument("--max-len", type=int, default=11)
    p.add_argument("--min-chars", type=int, default=3)
    p.add_argument("--source", choices=[SOURCE_SHALLOW, "shallow", SOURCE_PATTERN], default=SOURCE_SHALLOW)
    p.add_argument("--permissive-adv-adp", action="store_true",
                   help="allow adpositions and non-initial adverbs")
    p.set_defaults(func=_cmd_candidates)

    p = sub.add_parser("featurize", parents=[common], help="build the feature matrix")
    p.add_argument("--corpus", required=True)
    p.add_argument("--candidates", required=True)
    p.add_argument("--domain")
    p.add_argument("--domain-store", required=True)
    p.add_argument("--general-store", required=True)
    p.add_argument("--general-freq", required=True)
    p.add_argument("--seed-term", required=True)
    p.add_argument("--stoplist")
    p.add_argument("--debug-tsv", action="store_true")
    p.set_defaults(func=_cmd_featurize)

    p = sub.add_parser("train", parents=[common], help="train the linear classifier")
    p.add_argument("--features", nargs="+", required=True)
    p.add_argument("--c", type=float, default=1.0)
    p.add_argument("--loss", choices=["hinge", "logistic"], default="hinge")
    p.add_argument("--groups", default="C,P,S")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--model-out", default="model.texm")
    p.add_argument("--log", action="store_true", help="write the objective-per-epoch table")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("predict", parents=[common], help="classify candidate rows")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.set_defaults(func=_cmd_predict)

    p = sub.add_parser("eval", parents=[common], help="held-out-domain evaluation")
    p.add_argument("--test-domain", required=True)
    p.add_argument("--groups")
    p.add_argument("--source", choices=[SOURCE_SHALLOW, SOURCE_PATTERN])
    p.add_argument("--c", type=float)
    p.add_argument("--loss", choices=["hinge", "logistic"])
    p.add_argument("--seed", type=int)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--max-len", type=int)
    p.add_argument("--permissive-adv-adp", action="store_true")
    p.add_argument("--stoplist")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("ablate", parents=[common], help="feature-family ablation table")
    p.add_argument("--test-domain", required=True)
    p.add_argument("--source", choices=[SOURCE_SHALLOW, SOURCE_PATTERN])
    p.add_argument("--c", type=float)
    p.add_argument("--loss", choices=["hinge", "logistic"])
    p.add_argument("--seed", type=int)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--max-len", type=int)
    p.add_argument("--permissive-adv-adp", action="store_true")
    p.add_argument("--stoplist")
    p.set_defaults(func=_cmd_ablate)

    p = sub.add_parser("run-all", parents=[common], help="rotate the held-out domain")
    p.add_argument("--groups")
    p.add_argument("--source", choices=[SOURCE_SHALLOW, SOURCE_PATTERN])
    p.add_argument("--c", type=float)
    p.add_argument("--loss", choices=["hinge", "logistic"])
    p.add_argument("--seed", type=int)
    p.add_argument("--balanced", action="store_true")
    p.add_argument("--max-len", type=int)
    p.add_argument("--permissive-adv-adp", action="store_true")
    p.add_argument("--stoplist")
    p.set_defaults(func=_cmd_run_all)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    try:
        if getattr(args, "source", None) == "shallow":
            args.source = SOURCE_SHALLOW
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except _DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


def console_main() -> None:
    sys.exit(main())


if __name__ == "__main__":
    console_main()
