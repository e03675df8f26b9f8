"""Averaging exporter: per-lemma mean vectors and context-variability scalars.

Every token occurrence contributes its context vector to its lemma's running
sum; the store keeps the mean per lemma. Domain stores also keep a scalar
spread per lemma: the per-dimension standard deviation over that lemma's
occurrence vectors, averaged across dimensions. General stores are capped to
the most frequent lemmas. The writer emits the EMBS1 binary layout consumed
by the extraction pipeline.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .corpus_reader import SentenceTokens, read_sentences
from .encoders import EncoderError, FakeEncoder, make_encoder

MAGIC = b"EMBS1"
KIND_BYTES = {"general": 0, "domain": 1}


class ExportError(ValueError):
    pass


@dataclass
class ExportConfig:
    encoder: str
    corpus_paths: tuple[Path, ...]
    output_path: Path
    kind: str = "domain"
    layer: int = 1
    top_k: int = 200_000
    lemma_list_path: Path | None = None

    def __post_init__(self) -> None:
        if self.kind not in KIND_BYTES:
            raise ExportError(f"kind must be 'general' or 'domain', not {self.kind!r}")
        if self.top_k <= 0:
            raise ExportError("top_k must be positive")
        if not self.corpus_paths:
            raise ExportError("at least one corpus path is required")


@dataclass
class _Accumulator:
    count: int = 0
    total: np.ndarray | None = None
    total_sq: np.ndarray | None = None

    def add(self, vector: np.ndarray) -> None:
        vec = vector.astype(np.float64)
        if self.total is None:
            self.total = vec.copy()
            self.total_sq = vec * vec
        else:
            self.total += vec
            self.total_sq += vec * vec
        self.count += 1

    def mean(self) -> np.ndarray:
        return self.total / self.count

    def spread(self) -> float:
        mean = self.mean()
        variance = np.maximum(self.total_sq / self.count - mean * mean, 0.0)
        return float(np.sqrt(variance).mean())


def accumulate(config: ExportConfig, encoder=None) -> dict[str, _Accumulator]:
    """Encode every sentence and fold token vectors into per-lemma sums."""
    encoder = encoder or make_encoder(config.encoder, layer=config.layer)
    sums: dict[str, _Accumulator] = {}
    sentence_count = 0
    for path in config.corpus_paths:
        for sentence in read_sentences(Path(path)):
            sentence_count += 1
            tokens = sentence.lemmas if getattr(encoder, "uses_lemmas", False) else sentence.surfaces
            vectors = np.asarray(encoder.encode(tokens))
            if vectors.shape != (len(tokens), encoder.dim):
                raise ExportError(
                    f"encoder returned shape {vectors.shape} for a "
                    f"{len(tokens)}-token sentence (dim {encoder.dim})"
                )
            for lemma, vector in zip(sentence.lemmas, vectors):
                sums.setdefault(lemma, _Accumulator()).add(vector)
    if sentence_count == 0:
        raise ExportError("no sentences found in the input corpora")
    return sums


def select_lemmas(sums: dict[str, _Accumulator], config: ExportConfig) -> list[str]:
    """General stores keep the top_k most frequent lemmas (or an explicit list)."""
    if config.lemma_list_path is not None:
        wanted = {
            line.strip().lower()
            for line in Path(config.lemma_list_path).read_text(encoding="utf-8").splitlines()
            if line.strip()
        }
        return sorted(l for l in sums if l in wanted)
    lemmas = sorted(sums, key=lambda l: (-sums[l].count, l))
    if config.kind == "general":
        lemmas = lemmas[: config.top_k]
    return sorted(lemmas)


def write_store(path: Path, kind: str, dim: int, records) -> None:
    """records: iterable of (lemma, float32 vector, spread or None)."""
    records = list(records)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<BII", KIND_BYTES[kind], dim, len(records)))
        for lemma, vector, spread in records:
            encoded = lemma.encode("utf-8")
            fh.write(struct.pack("<I", len(encoded)))
            fh.write(encoded)
            fh.write(np.asarray(vector, dtype="<f4").tobytes())
            if kind == "domain":
                fh.write(struct.pack("<f", 0.0 if spread is None else spread))


def export_store(config: ExportConfig, encoder=None) -> Path:
    """Run the full export and return the written store path."""
    encoder = encoder or make_encoder(config.encoder, layer=config.layer)
    sums = accumulate(config, encoder)
    lemmas = select_lemmas(sums, config)
    records = []
    for lemma in lemmas:
        acc = sums[lemma]
        spread = acc.spread() if config.kind == "domain" else None
        records.append((lemma, acc.mean().astype(np.float32), spread))
    write_store(Path(config.output_path), config.kind, encoder.dim, records)
    return Path(config.output_path)
