"""Term-candidate generation.

Enumerates contiguous n-grams per sentence, admits them either through the
six-rule shallow POS filter or through a mined set of exact POS patterns,
deduplicates by lemma sequence and labels against a gold standard.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Mapping

from .corpus import Corpus, GoldTermSet, LemmaSeq, UD_TAG_SET, find_occurrences

LABEL_TERM = "term"
LABEL_NON_TERM = "non-term"
LABEL_UNLABELED = "unlabeled"

SOURCE_SHALLOW = "shallow_filter"
SOURCE_PATTERN = "pattern"

DEFAULT_FORBIDDEN = frozenset(
    {"VERB", "SYM", "SCONJ", "PUNCT", "PRON", "PART", "INTJ", "DET", "CCONJ", "AUX", "X"}
)


@dataclass(frozen=True)
class FilterConfig:
    max_len: int = 11
    min_chars: int = 3
    forbidden_anywhere: frozenset[str] = DEFAULT_FORBIDDEN
    allowed_first: frozenset[str] = frozenset({"ADJ", "ADV", "NOUN", "PROPN"})
    allowed_last: frozenset[str] = frozenset({"NOUN", "PROPN"})
    allowed_unigram: frozenset[str] = frozenset({"NOUN", "PROPN"})
    exclude_adp_adv_internal: bool = True
    forbidden_chars: frozenset[str] = frozenset({",", "_"})

    def __post_init__(self) -> None:
        if self.max_len < 1:
            raise ValueError("max_len must be >= 1")
        for name in ("forbidden_anywhere", "allowed_first", "allowed_last", "allowed_unigram"):
            unknown = set(getattr(self, name)) - UD_TAG_SET
            if unknown:
                raise ValueError(f"{name} contains unknown UD tags: {sorted(unknown)}")


@dataclass(frozen=True)
class Candidate:
    lemmas: LemmaSeq
    canonical_pos: tuple[str, ...]
    occurrence_count: int
    domain_name: str
    label: str = LABEL_UNLABELED

    @property
    def lemma_string(self) -> str:
        return " ".join(self.lemmas)


@dataclass(frozen=True)
class CandidateSet:
    candidates: Mapping[LemmaSeq, Candidate]
    source: str

    def __len__(self) -> int:
        return len(self.candidates)

    def __iter__(self) -> Iterator[Candidate]:
        return iter(self.candidates.values())


@dataclass(frozen=True)
class PatternSet:
    patterns: frozenset[tuple[str, ...]]

    def __len__(self) -> int:
        return len(self.patterns)


def passes_filter(pos_seq: tuple[str, ...], lemma_string: str, cfg: FilterConfig) -> bool:
    """Shallow admissibility test for one n-gram occurrence.

    All rules must hold: the space-joined lemma string is longer than
    min_chars and free of forbidden characters; a unigram tag must be in
    allowed_unigram; longer sequences must start in allowed_first and end in
    allowed_last; no tag may be in forbidden_anywhere; and, unless disabled,
    no ADP anywhere and no ADV after the first position.
    """
    n = len(pos_seq)
    if n == 1:
        if pos_seq[0] not in cfg.allowed_unigram:
            return False
    else:
        if pos_seq[0] not in cfg.allowed_first:
            return False
        if pos_seq[-1] not in cfg.allowed_last:
            return False
    for i, tag in enumerate(pos_seq):
        if tag in cfg.forbidden_anywhere:
            return False
        if cfg.exclude_adp_adv_internal:
            if tag == "ADP":
                return False
            if tag == "ADV" and i > 0:
                return False
    if len(lemma_string) <= cfg.min_chars:
        return False
    for ch in cfg.forbidden_chars:
        if ch in lemma_string:
            return False
    return True


class _Builder:
    """Accumulates per-occurrence admissions into deduplicated candidates."""

    def __init__(self, domain_name: str, source: str) -> None:
        self.domain_name = domain_name
        self.source = source
        self._counts: dict[LemmaSeq, int] = {}
        # per key: pos variant -> (count, first-seen order)
        self._variants: dict[LemmaSeq, dict[tuple[str, ...], list[int]]] = {}
        self._order = 0

    def add(self, lemmas: LemmaSeq, pos: tuple[str, ...]) -> None:
        self._counts[lemmas] = self._counts.get(lemmas, 0) + 1
        variants = self._variants.setdefault(lemmas, {})
        entry = variants.get(pos)
        if entry is None:
            variants[pos] = [1, self._order]
        else:
            entry[0] += 1
        self._order += 1

    def build(self) -> CandidateSet:
        out: dict[LemmaSeq, Candidate] = {}
        for lemmas in sorted(self._counts):
            variants = self._variants[lemmas]
            # majority vote, ties broken by first appearance in corpus order
            pos = min(variants, key=lambda p: (-variants[p][0], variants[p][1]))
            out[lemmas] = Candidate(
                lemmas=lemmas,
                canonical_pos=pos,
                occurrence_count=self._counts[lemmas],
                domain_name=self.domain_name,
            )
        return CandidateSet(candidates=out, source=self.source)


def _ngrams(corpus: Corpus, max_len: int):
    for sent in corpus.sentences:
        lemmas = sent.lemmas()
        tags = sent.pos_tags()
        n = len(lemmas)
        for start in range(n):
            top = min(max_len, n - start)
            for length in range(1, top + 1):
                yield lemmas[start:start + length], tags[start:start + length]


def generate_candidates(corpus: Corpus, cfg: FilterConfig | None = None) -> CandidateSet:
    """Run every n-gram occurrence (n <= max_len) through the shallow filter.

    A lemma sequence becomes a candidate if any occurrence passes; the
    occurrence count tallies passing occurrences only, and the canonical POS
    sequence is the most frequent passing variant.
    """
    cfg = cfg or FilterConfig()
    builder = _Builder(corpus.domain_name, SOURCE_SHALLOW)
    for lemmas, tags in _ngrams(corpus, cfg.max_len):
        if passes_filter(tags, " ".join(lemmas), cfg):
            builder.add(lemmas, tags)
    return builder.build()


def mine_patterns(corpus: Corpus, gold: GoldTermSet) -> PatternSet:
    """Collect the distinct POS-tag sequences of gold-term occurrences."""
    patterns = {tags for _, tags in find_occurrences(corpus, gold.terms)}
    return PatternSet(patterns=frozenset(patterns))


def generate_candidates_by_pattern(corpus: Corpus, patterns: PatternSet) -> CandidateSet:
    """Admit n-gram occurrences whose POS sequence matches a mined pattern."""
    builder = _Builder(corpus.domain_name, SOURCE_PATTERN)
    if patterns.patterns:
        max_len = max(len(p) for p in patterns.patterns)
        wanted = patterns.patterns
        for lemmas, tags in _ngrams(corpus, max_len):
            if tags in wanted:
                builder.add(lemmas, tags)
    return builder.build()


def label_candidates(cands: CandidateSet, gold: GoldTermSet) -> CandidateSet:
    """Mark each candidate as a term iff its lemma sequence is in the gold set."""
    labeled = {
        key: replace(c, label=LABEL_TERM if key in gold.terms else LABEL_NON_TERM)
        for key, c in cands.candidates.items()
    }
    return CandidateSet(candidates=labeled, source=cands.source)


def max_recall(cands: CandidateSet, gold: GoldTermSet) -> float:
    """Fraction of gold terms that survived candidate generation."""
    if not gold.terms:
        return 0.0
    reachable = sum(1 for term in gold.terms if term in cands.candidates)
    return reachable / len(gold.terms)


def candidates_to_rows(cands: CandidateSet) -> list[tuple[str, str, str, str]]:
    """Tabular form: lemma sequence, POS sequence, occurrence count, label."""
    return [
        (c.lemma_string, " ".join(c.canonical_pos), str(c.occurrence_count), c.label)
        for c in cands
    ]


def candidates_from_rows(
    rows: list[tuple[str, str, str, str]], domain_name: str, source: str
) -> CandidateSet:
    out: dict[LemmaSeq, Candidate] = {}
    for lemma_string, pos_string, count, label in rows:
        lemmas = tuple(lemma_string.split(" "))
        pos = tuple(pos_string.split(" "))
        if len(lemmas) != len(pos):
            raise ValueError(f"candidate row {lemma_string!r}: lemma/POS length mismatch")
        if label not in (LABEL_TERM, LABEL_NON_TERM, LABEL_UNLABELED):
            raise ValueError(f"candidate row {lemma_string!r}: bad label {label!r}")
        out[lemmas] = Candidate(
            lemmas=lemmas,
            canonical_pos=pos,
            occurrence_count=int(count),
            domain_name=domain_name,
            label=label,
        )
    return CandidateSet(candidates=out, source=source)
