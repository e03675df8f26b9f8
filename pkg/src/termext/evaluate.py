"""Cross-domain experiment harness.

Trains on all domains but one, predicts on the held-out domain and scores the
predicted lemma sequences against that domain's full gold standard. Precision
counts predictions, recall counts gold terms, so gold terms lost during
candidate generation stay in the denominator as misses. The ablation driver
reruns the held-out experiment for every nonempty feature-family subset.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable

from .candidates import (
    CandidateSet,
    FilterConfig,
    LABEL_TERM,
    PatternSet,
    SOURCE_PATTERN,
    SOURCE_SHALLOW,
    generate_candidates,
    generate_candidates_by_pattern,
    label_candidates,
    max_recall,
    mine_patterns,
)
from .corpus import Corpus, FrequencyTable, GoldTermSet, LemmaSeq, frequency_from_corpus, load_freq_list, load_gold_terms, parse_conllu
from .embedstore import EmbeddingStore, Stoplist, load_store, load_text_store
from .features import FeatureMatrix, assemble, concat_matrices
from .model import LOSS_HINGE, predict, train

ABLATION_ORDER: tuple[tuple[str, frozenset[str]], ...] = (
    ("C&P&S", frozenset({"C", "P", "S"})),
    ("C&P", frozenset({"C", "P"})),
    ("C&S", frozenset({"C", "S"})),
    ("S&P", frozenset({"S", "P"})),
    ("C", frozenset({"C"})),
    ("S", frozenset({"S"})),
    ("P", frozenset({"P"})),
)


class ExperimentError(ValueError):
    """Raised on unusable experiment configurations."""


@dataclass(frozen=True)
class DomainConfig:
    name: str
    corpus_path: Path
    gold_path: Path
    seed_term: str
    store_path: Path


@dataclass(frozen=True)
class ExperimentConfig:
    domains: tuple[DomainConfig, ...]
    general_store_path: Path
    general_freq_path: Path
    test_domain: str
    feature_groups: frozenset[str] = frozenset({"C", "P", "S"})
    candidate_source: str = SOURCE_SHALLOW
    filter_config: FilterConfig = field(default_factory=FilterConfig)
    c: float = 1.0
    loss: str = LOSS_HINGE
    seed: int = 0
    balanced: bool = False
    text_stores: bool = False
    stoplist: Stoplist = field(default_factory=Stoplist)

    def __post_init__(self) -> None:
        names = [d.name for d in self.domains]
        if len(set(names)) != len(names):
            raise ExperimentError("duplicate domain names in experiment config")
        if self.test_domain not in names:
            raise ExperimentError(f"test domain {self.test_domain!r} is not configured")
        if not self.feature_groups:
            raise ExperimentError("at least one feature group is required")


@dataclass
class EvalReport:
    test_domain: str
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    max_recall: float
    predicted_count: int
    candidate_count: int
    gold_count: int
    config: dict

    def as_dict(self) -> dict:
        return {
            "test_domain": self.test_domain,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "tp": self.tp,
            "fp": self.fp,
            "fn": self.fn,
            "max_recall": self.max_recall,
            "predicted_count": self.predicted_count,
            "candidate_count": self.candidate_count,
            "gold_count": self.gold_count,
            "config": self.config,
        }


def score(predicted: Iterable[LemmaSeq], gold: GoldTermSet) -> tuple[int, int, int, float, float, float]:
    """Set-level counts and precision/recall/F1 against the full gold set."""
    predicted = set(predicted)
    tp = len(predicted & gold.terms)
    fp = len(predicted) - tp
    fn = len(gold.terms) - tp
    precision = tp / len(predicted) if predicted else 0.0
    recall = tp / len(gold.terms) if gold.terms else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return tp, fp, fn, precision, recall, f1


@dataclass
class DomainData:
    config: DomainConfig
    corpus: Corpus
    gold: GoldTermSet
    store: EmbeddingStore
    domain_freq: FrequencyTable


@dataclass
class ExperimentData:
    domains: dict[str, DomainData]
    general_store: EmbeddingStore
    general_freq: FrequencyTable


def load_experiment_data(cfg: ExperimentConfig) -> ExperimentData:
    """Load corpora, gold lists, stores and frequency tables once per run set."""
    read_store = load_text_store if cfg.text_stores else load_store
    domains: dict[str, DomainData] = {}
    for dom in cfg.domains:
        with open(dom.corpus_path, "rb") as fh:
            corpus = parse_conllu(fh, dom.name)
        with open(dom.gold_path, "rb") as fh:
            gold = load_gold_terms(fh, dom.name)
        with open(dom.store_path, "rb") as fh:
            store = read_store(fh)
        domains[dom.name] = DomainData(
            config=dom,
            corpus=corpus,
            gold=gold,
            store=store,
            domain_freq=frequency_from_corpus(corpus),
        )
    with open(cfg.general_store_path, "rb") as fh:
        general_store = read_store(fh)
    with open(cfg.general_freq_path, "rb") as fh:
        general_freq = load_freq_list(fh)
    return ExperimentData(domains=domains, general_store=general_store, general_freq=general_freq)


@dataclass
class PreparedRun:
    """Candidates and full feature matrices for one train/test split."""

    test_domain: str
    candidates: dict[str, CandidateSet]
    matrices: dict[str, FeatureMatrix]


def prepare_run(data: ExperimentData, cfg: ExperimentConfig) -> PreparedRun:
    """Generate labeled candidates and full feature matrices for every domain.

    With the pattern source, patterns are mined from the training domains
    only, so the held-out gold standard never shapes candidate generation.
    """
    training = [name for name in data.domains if name != cfg.test_domain]
    if cfg.candidate_source == SOURCE_PATTERN:
        mined: set[tuple[str, ...]] = set()
        for name in training:
            dom = data.domains[name]
            mined |= mine_patterns(dom.corpus, dom.gold).patterns
        patterns = PatternSet(patterns=frozenset(mined))
    elif cfg.candidate_source != SOURCE_SHALLOW:
        raise ExperimentError(f"unknown candidate source {cfg.candidate_source!r}")

    candidates: dict[str, CandidateSet] = {}
    matrices: dict[str, FeatureMatrix] = {}
    for name, dom in data.domains.items():
        if cfg.candidate_source == SOURCE_SHALLOW:
            cands = generate_candidates(dom.corpus, cfg.filter_config)
        else:
            cands = generate_candidates_by_pattern(dom.corpus, patterns)
        cands = label_candidates(cands, dom.gold)
        candidates[name] = cands
        matrices[name] = assemble(
            cands,
            general_freq=data.general_freq,
            domain_freq=dom.domain_freq,
            domain_store=dom.store,
            general_store=data.general_store,
            seed_term=dom.config.seed_term,
            stop=cfg.stoplist,
        )
    return PreparedRun(test_domain=cfg.test_domain, candidates=candidates, matrices=matrices)


def _config_echo(cfg: ExperimentConfig) -> dict:
    return {
        "test_domain": cfg.test_domain,
        "feature_groups": "".join(sorted(cfg.feature_groups)),
        "candidate_source": cfg.candidate_source,
        "c": cfg.c,
        "loss": cfg.loss,
        "seed": cfg.seed,
        "balanced": cfg.balanced,
        "max_len": cfg.filter_config.max_len,
    }


def run_prepared(prep: PreparedRun, data: ExperimentData, cfg: ExperimentConfig) -> EvalReport:
    if prep.test_domain != cfg.test_domain:
        raise ExperimentError("prepared run does not match the requested test domain")
    training = [name for name in data.domains if name != cfg.test_domain]
    train_matrix = concat_matrices([prep.matrices[name] for name in training])
    train_matrix = train_matrix.select_groups(set(cfg.feature_groups))
    test_matrix = prep.matrices[cfg.test_domain].select_groups(set(cfg.feature_groups))

    model = train(train_matrix, c=cfg.c, loss=cfg.loss, seed=cfg.seed, balanced=cfg.balanced)
    labels, _ = predict(model, test_matrix)
    predicted = {lemmas for (lemmas, _), label in zip(test_matrix.keys, labels) if label == LABEL_TERM}

    test_dom = data.domains[cfg.test_domain]
    tp, fp, fn, precision, recall, f1 = score(predicted, test_dom.gold)
    ceiling = max_recall(prep.candidates[cfg.test_domain], test_dom.gold)
    assert recall <= ceiling + 1e-12, "recall exceeded the candidate-generation ceiling"
    return EvalReport(
        test_domain=cfg.test_domain,
        precision=precision,
        recall=recall,
        f1=f1,
        tp=tp,
        fp=fp,
        fn=fn,
        max_recall=ceiling,
        predicted_count=len(predicted),
        candidate_count=len(prep.candidates[cfg.test_domain]),
        gold_count=len(test_dom.gold.terms),
        config=_config_echo(cfg),
    )


def run_experiment(cfg: ExperimentConfig, data: ExperimentData | None = None) -> EvalReport:
    """Single held-out-domain run: prepare, train, predict, score."""
    data = data or load_experiment_data(cfg)
    return run_prepared(prepare_run(data, cfg), data, cfg)


def ablate(cfg: ExperimentConfig, data: ExperimentData | None = None) -> list[tuple[str, EvalReport]]:
    """Rerun the held-out experiment for all 7 feature-family subsets."""
    data = data or load_experiment_data(cfg)
    prep = prepare_run(data, cfg)
    out: list[tuple[str, EvalReport]] = []
    for label, groups in ABLATION_ORDER:
        sub_cfg = replace(cfg, feature_groups=groups)
        out.append((label, run_prepared(prep, data, sub_cfg)))
    return out


def run_all(cfg: ExperimentConfig, data: ExperimentData | None = None) -> list[EvalReport]:
    """Rotate the held-out domain over every configured domain."""
    data = data or load_experiment_data(cfg)
    reports = []
    for dom in cfg.domains:
        run_cfg = replace(cfg, test_domain=dom.name)
        reports.append(run_experiment(run_cfg, data))
    return reports
