"""Sentence readers for the export pipeline.

Two input shapes are supported: CoNLL-U (surface and lemma taken from the
FORM and LEMMA columns, multiword ranges and empty nodes skipped) and plain
text with one sentence of space-separated lemmas per line.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterator


class ReaderError(ValueError):
    pass


@dataclass(frozen=True)
class SentenceTokens:
    surfaces: tuple[str, ...]
    lemmas: tuple[str, ...]


def _is_skippable_id(token_id: str) -> bool:
    for sep in ("-", "."):
        left, found, right = token_id.partition(sep)
        if found and left.isdigit() and right.isdigit():
            return True
    return False


def read_conllu(path: Path) -> Iterator[SentenceTokens]:
    surfaces: list[str] = []
    lemmas: list[str] = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                if surfaces:
                    yield SentenceTokens(tuple(surfaces), tuple(lemmas))
                    surfaces, lemmas = [], []
                continue
            if line.startswith("#"):
                continue
            cols = line.split("\t")
            if len(cols) != 10:
                raise ReaderError(f"{path}:{lineno}: expected 10 columns, got {len(cols)}")
            if _is_skippable_id(cols[0]):
                continue
            if not cols[2]:
                raise ReaderError(f"{path}:{lineno}: empty lemma")
            surfaces.append(cols[1])
            lemmas.append(cols[2].lower())
    if surfaces:
        yield SentenceTokens(tuple(surfaces), tuple(lemmas))


def read_lemma_lines(path: Path) -> Iterator[SentenceTokens]:
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            lemmas = tuple(line.strip().lower().split())
            if lemmas:
                yield SentenceTokens(surfaces=lemmas, lemmas=lemmas)


def read_sentences(path: Path) -> Iterator[SentenceTokens]:
    if str(path).endswith(".conllu"):
        return read_conllu(path)
    return read_lemma_lines(path)
