"""Per-lemma averaged context-vector stores.

A store maps each lemma to one fixed-dimension vector (the mean of its
contextual occurrence vectors, computed offline); domain stores additionally
carry a per-lemma context-variability scalar. Stores are immutable after
loading and queried to build term-level vectors.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import BinaryIO

import numpy as np

from .corpus import LemmaSeq

MAGIC = b"EMBS1"
KIND_GENERAL = "general"
KIND_DOMAIN = "domain"
_KIND_BYTES = {KIND_GENERAL: 0, KIND_DOMAIN: 1}
_KIND_NAMES = {0: KIND_GENERAL, 1: KIND_DOMAIN}

# deduplicated list of Slovenian adpositions excluded from frequency and
# embedding averages
DEFAULT_STOPLIST = frozenset(
    {
        "brez", "do", "iz", "z", "s", "za", "h", "k", "proti", "kljub", "čez",
        "skozi", "zoper", "po", "o", "pri", "na", "ob", "v", "med", "nad",
        "pod", "pred",
    }
)


class StoreError(ValueError):
    """Raised on malformed store files or misuse of a loaded store."""


@dataclass(frozen=True)
class Stoplist:
    lemmas: frozenset[str] = DEFAULT_STOPLIST

    def __contains__(self, lemma: str) -> bool:
        return lemma in self.lemmas


@dataclass
class EmbeddingStore:
    kind: str
    dim: int
    vectors: dict[str, np.ndarray]
    stdevs: dict[str, float] | None = None

    def __post_init__(self) -> None:
        if self.dim <= 0:
            raise StoreError("store dimension must be positive")
        if self.kind not in _KIND_BYTES:
            raise StoreError(f"unknown store kind {self.kind!r}")
        if self.kind == KIND_DOMAIN and self.stdevs is None:
            self.stdevs = {}


def _read_exactly(stream: BinaryIO, size: int, offset: int, what: str) -> bytes:
    data = stream.read(size)
    if len(data) != size:
        raise StoreError(f"truncated store: {what} at byte offset {offset}")
    return data


def load_store(stream: BinaryIO) -> EmbeddingStore:
    """Read an EMBS1 binary store; errors report the failing byte offset."""
    offset = 0
    magic = stream.read(len(MAGIC))
    if magic != MAGIC:
        raise StoreError(f"bad magic {magic!r} at byte offset 0 (expected {MAGIC!r})")
    offset += len(MAGIC)

    header = _read_exactly(stream, 9, offset, "header")
    kind_byte, dim, count = struct.unpack("<BII", header)
    offset += 9
    if kind_byte not in _KIND_NAMES:
        raise StoreError(f"unknown kind byte {kind_byte} at byte offset {len(MAGIC)}")
    kind = _KIND_NAMES[kind_byte]
    if dim == 0:
        raise StoreError(f"zero dimension at byte offset {len(MAGIC) + 1}")

    vectors: dict[str, np.ndarray] = {}
    stdevs: dict[str, float] = {}
    vec_bytes = 4 * dim
    for _ in range(count):
        raw = _read_exactly(stream, 4, offset, "lemma length")
        (lemma_len,) = struct.unpack("<I", raw)
        offset += 4
        lemma = _read_exactly(stream, lemma_len, offset, "lemma").decode("utf-8")
        offset += lemma_len
        vec = np.frombuffer(
            _read_exactly(stream, vec_bytes, offset, f"vector for {lemma!r}"),
            dtype="<f4",
        ).copy()
        offset += vec_bytes
        vectors[lemma] = vec
        if kind == KIND_DOMAIN:
            raw = _read_exactly(stream, 4, offset, f"stddev for {lemma!r}")
            (sd,) = struct.unpack("<f", raw)
            offset += 4
            stdevs[lemma] = float(sd)
    return EmbeddingStore(
        kind=kind, dim=int(dim), vectors=vectors,
        stdevs=stdevs if kind == KIND_DOMAIN else None,
    )


def save_store(store: EmbeddingStore, stream: BinaryIO) -> None:
    """Write the EMBS1 binary form; float payload round-trips bit-exactly."""
    stream.write(MAGIC)
    stream.write(struct.pack("<BII", _KIND_BYTES[store.kind], store.dim, len(store.vectors)))
    for lemma, vec in store.vectors.items():
        if len(vec) != store.dim:
            raise StoreError(f"vector for {lemma!r} has length {len(vec)}, store dim {store.dim}")
        encoded = lemma.encode("utf-8")
        stream.write(struct.pack("<I", len(encoded)))
        stream.write(encoded)
        stream.write(np.asarray(vec, dtype="<f4").tobytes())
        if store.kind == KIND_DOMAIN:
            sd = (store.stdevs or {}).get(lemma, 0.0)
            stream.write(struct.pack("<f", sd))


def load_text_store(stream: BinaryIO) -> EmbeddingStore:
    """Read the debug TSV form: kind/dim header, then lemma, floats[, stddev]."""
    lines = stream.read().decode("utf-8").splitlines()
    header = [ln for ln in lines if ln.startswith("#kind\t")]
    if not header:
        raise StoreError("text store: missing '#kind<TAB>general|domain' header")
    kind = header[0].split("\t")[1]
    if kind not in _KIND_BYTES:
        raise StoreError(f"text store: unknown kind {kind!r}")
    vectors: dict[str, np.ndarray] = {}
    stdevs: dict[str, float] = {}
    dim: int | None = None
    for lineno, line in enumerate(lines, start=1):
        if not line.strip() or line.startswith("#"):
            continue
        parts = line.split("\t")
        expected = 3 if kind == KIND_DOMAIN else 2
        if len(parts) != expected:
            raise StoreError(f"text store line {lineno}: expected {expected} columns")
        lemma = parts[0]
        vec = np.array([float(x) for x in parts[1].split(" ")], dtype=np.float32)
        if dim is None:
            dim = len(vec)
        elif len(vec) != dim:
            raise StoreError(f"text store line {lineno}: dimension {len(vec)} != {dim}")
        vectors[lemma] = vec
        if kind == KIND_DOMAIN:
            stdevs[lemma] = float(parts[2])
    if dim is None:
        raise StoreError("text store: no records")
    return EmbeddingStore(
        kind=kind, dim=dim, vectors=vectors,
        stdevs=stdevs if kind == KIND_DOMAIN else None,
    )


def save_text_store(store: EmbeddingStore, stream: BinaryIO) -> None:
    out = [f"#kind\t{store.kind}"]
    for lemma, vec in store.vectors.items():
        floats = " ".join(repr(float(x)) for x in vec)
        if store.kind == KIND_DOMAIN:
            out.append(f"{lemma}\t{floats}\t{(store.stdevs or {}).get(lemma, 0.0)!r}")
        else:
            out.append(f"{lemma}\t{floats}")
    stream.write(("\n".join(out) + "\n").encode("utf-8"))


def term_vector(
    lemmas: LemmaSeq, store: EmbeddingStore, stop: Stoplist | None = None
) -> tuple[np.ndarray, float]:
    """Average the stored vectors of a term's non-stoplist lemmas.

    Returns the mean vector and the covered fraction of non-stoplist lemmas;
    a term with no contributing lemma yields the zero vector with coverage 0.
    """
    stop = stop or Stoplist()
    kept = [l for l in lemmas if l not in stop]
    present = [l for l in kept if l in store.vectors]
    if not present:
        return np.zeros(store.dim, dtype=np.float64), 0.0
    acc = np.zeros(store.dim, dtype=np.float64)
    for lemma in present:
        acc += store.vectors[lemma]
    return acc / len(present), len(present) / len(kept)


def term_stdev(
    lemmas: LemmaSeq, store: EmbeddingStore, stop: Stoplist | None = None
) -> float:
    """Average context-variability of a term's non-stoplist lemmas."""
    if store.kind != KIND_DOMAIN:
        raise StoreError("context variability requires a domain store")
    stop = stop or Stoplist()
    stdevs = store.stdevs or {}
    values = [stdevs[l] for l in lemmas if l not in stop and l in stdevs]
    if not values:
        return 0.0
    return float(sum(values) / len(values))
