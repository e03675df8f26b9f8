"""Annotated-corpus ingestion and descriptive term statistics.

Reads CoNLL-U corpora, gold term lists and background frequency tables into
immutable in-memory structures, and tallies the token-length, character-length
and POS-tag distributions of gold terms against a corpus.
"""

from __future__ import annotations

import io
from collections import Counter
from dataclasses import dataclass, field
from typing import BinaryIO, Iterable, Mapping

UD_TAGS: tuple[str, ...] = (
    "ADJ", "ADP", "ADV", "AUX", "CCONJ", "DET", "INTJ", "NOUN", "NUM",
    "PART", "PRON", "PROPN", "PUNCT", "SCONJ", "SYM", "VERB", "X",
)
UD_TAG_SET = frozenset(UD_TAGS)
UD_TAG_INDEX = {tag: i for i, tag in enumerate(UD_TAGS)}

LemmaSeq = tuple[str, ...]


class CorpusError(ValueError):
    """Raised on malformed corpus, gold-list or frequency-list input."""


@dataclass(frozen=True)
class Token:
    surface: str
    lemma: str
    upos: str


@dataclass(frozen=True)
class Sentence:
    tokens: tuple[Token, ...]

    def lemmas(self) -> tuple[str, ...]:
        return tuple(t.lemma for t in self.tokens)

    def pos_tags(self) -> tuple[str, ...]:
        return tuple(t.upos for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    domain_name: str
    sentences: tuple[Sentence, ...]

    @property
    def token_count(self) -> int:
        return sum(len(s) for s in self.sentences)


@dataclass(frozen=True)
class GoldTermSet:
    domain_name: str
    terms: frozenset[LemmaSeq]


@dataclass(frozen=True)
class FrequencyTable:
    counts: Mapping[str, int]
    total: int


@dataclass
class StatsReport:
    """Histograms over a domain's gold terms.

    Token and character lengths are tallied once per unique lemmatized term;
    the POS histograms are tallied once per corpus occurrence of a term.
    """

    domain_name: str
    token_lengths: Counter = field(default_factory=Counter)
    char_lengths: Counter = field(default_factory=Counter)
    unigram_pos: Counter = field(default_factory=Counter)
    first_pos: Counter = field(default_factory=Counter)
    last_pos: Counter = field(default_factory=Counter)
    pos_occurrences: Counter = field(default_factory=Counter)

    HISTOGRAMS = (
        "token_lengths", "char_lengths", "unigram_pos",
        "first_pos", "last_pos", "pos_occurrences",
    )


def _as_text_lines(data: bytes | BinaryIO, what: str) -> list[str]:
    if isinstance(data, bytes):
        raw = data
    else:
        raw = data.read()
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise CorpusError(f"{what}: not valid UTF-8 ({exc})") from exc
    return text.splitlines()


def _is_range_id(token_id: str) -> bool:
    left, sep, right = token_id.partition("-")
    return bool(sep) and left.isdigit() and right.isdigit()


def _is_empty_node_id(token_id: str) -> bool:
    left, sep, right = token_id.partition(".")
    return bool(sep) and left.isdigit() and right.isdigit()


def parse_conllu(data: bytes | BinaryIO, domain_name: str) -> Corpus:
    """Parse a CoNLL-U stream, keeping FORM, LEMMA and UPOS.

    Multiword-token ranges (ID "1-2") and empty nodes (ID "1.1") are skipped;
    lemmas are lowercased. Raises CorpusError with the offending line number
    on a wrong column count, an unknown UPOS tag or an empty file.
    """
    lines = _as_text_lines(data, "CoNLL-U input")
    sentences: list[Sentence] = []
    current: list[Token] = []

    def flush() -> None:
        if current:
            sentences.append(Sentence(tokens=tuple(current)))
            current.clear()

    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise CorpusError(
                f"CoNLL-U line {lineno}: expected 10 tab-separated columns, got {len(cols)}"
            )
        token_id = cols[0]
        if _is_range_id(token_id) or _is_empty_node_id(token_id):
            continue
        surface, lemma, upos = cols[1], cols[2], cols[3]
        if upos not in UD_TAG_SET:
            raise CorpusError(f"CoNLL-U line {lineno}: unknown UPOS tag {upos!r}")
        if not lemma:
            raise CorpusError(f"CoNLL-U line {lineno}: empty lemma")
        current.append(Token(surface=surface, lemma=lemma.lower(), upos=upos))
    flush()

    if not sentences:
        raise CorpusError("CoNLL-U input: no sentences found (empty file?)")
    return Corpus(domain_name=domain_name, sentences=tuple(sentences))


def serialize_conllu(corpus: Corpus) -> bytes:
    """Write a corpus back out as CoNLL-U (consumed columns only)."""
    out = io.StringIO()
    for sent in corpus.sentences:
        for i, tok in enumerate(sent.tokens, start=1):
            cols = [str(i), tok.surface, tok.lemma, tok.upos] + ["_"] * 6
            out.write("\t".join(cols) + "\n")
        out.write("\n")
    return out.getvalue().encode("utf-8")


def load_gold_terms(data: bytes | BinaryIO, domain_name: str) -> GoldTermSet:
    """Read one lemmatized term per line; lowercased and deduplicated."""
    terms: set[LemmaSeq] = set()
    for line in _as_text_lines(data, "gold term list"):
        parts = line.strip().lower().split()
        if parts:
            terms.add(tuple(parts))
    return GoldTermSet(domain_name=domain_name, terms=frozenset(terms))


def load_freq_list(data: bytes | BinaryIO) -> FrequencyTable:
    """Read a lemma<TAB>count table, with an optional "#total<TAB>N" header."""
    counts: dict[str, int] = {}
    total: int | None = None
    for lineno, line in enumerate(_as_text_lines(data, "frequency list"), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise CorpusError(f"frequency list line {lineno}: expected lemma<TAB>count")
        key, value = parts
        if key == "#total":
            if total is not None:
                raise CorpusError(f"frequency list line {lineno}: duplicate #total header")
            total = int(value)
            continue
        lemma = key.lower()
        try:
            count = int(value)
        except ValueError as exc:
            raise CorpusError(f"frequency list line {lineno}: bad count {value!r}") from exc
        if count <= 0:
            raise CorpusError(f"frequency list line {lineno}: nonpositive count for {lemma!r}")
        if lemma in counts:
            raise CorpusError(f"frequency list line {lineno}: duplicate lemma {lemma!r}")
        counts[lemma] = count
    if total is None:
        total = sum(counts.values())
    if total <= 0:
        raise CorpusError("frequency list: corpus size must be positive")
    if counts and total < max(counts.values()):
        raise CorpusError("frequency list: total smaller than the largest count")
    return FrequencyTable(counts=counts, total=total)


def frequency_from_corpus(corpus: Corpus) -> FrequencyTable:
    """Lemma frequency table of a domain corpus; total is its token count."""
    counts: Counter = Counter()
    for sent in corpus.sentences:
        counts.update(sent.lemmas())
    return FrequencyTable(counts=dict(counts), total=corpus.token_count)


def find_occurrences(corpus: Corpus, terms: Iterable[LemmaSeq]):
    """Yield (term, pos_sequence) for every in-sentence occurrence of a term."""
    by_first: dict[str, list[LemmaSeq]] = {}
    for term in terms:
        by_first.setdefault(term[0], []).append(term)
    for sent in corpus.sentences:
        lemmas = sent.lemmas()
        tags = sent.pos_tags()
        n = len(lemmas)
        for start in range(n):
            for term in by_first.get(lemmas[start], ()):
                end = start + len(term)
                if end <= n and lemmas[start:end] == term:
                    yield term, tags[start:end]


def analyze(corpus: Corpus, gold: GoldTermSet) -> StatsReport:
    """Tally the six gold-term histograms against a corpus.

    Terms never seen in the corpus still contribute to the two lemma-based
    length histograms; POS histograms count every corpus occurrence, so the
    same term can contribute several (possibly different) tag sequences.
    """
    report = StatsReport(domain_name=corpus.domain_name)
    for term in gold.terms:
        report.token_lengths[len(term)] += 1
        report.char_lengths[len(" ".join(term))] += 1
    for term, tags in find_occurrences(corpus, gold.terms):
        report.first_pos[tags[0]] += 1
        if len(tags) == 1:
            report.unigram_pos[tags[0]] += 1
        else:
            report.last_pos[tags[-1]] += 1
        for tag in tags:
            report.pos_occurrences[tag] += 1
    return report


def stats_tables(report: StatsReport) -> dict[str, list[tuple[str, int]]]:
    """Render a StatsReport as one (key, count) table per histogram."""
    tables: dict[str, list[tuple[str, int]]] = {}
    for name in ("token_lengths", "char_lengths"):
        hist = getattr(report, name)
        tables[name] = [(str(k), hist[k]) for k in sorted(hist)]
    for name in ("unigram_pos", "first_pos", "last_pos", "pos_occurrences"):
        hist = getattr(report, name)
        tables[name] = [(tag, hist.get(tag, 0)) for tag in UD_TAGS]
    return tables
