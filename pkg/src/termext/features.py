"""Feature construction for term candidates.

Three families are computed per candidate: POS-shape features over the
canonical tag sequence, relative log-frequency sums against a general and a
domain corpus, and context-vector features from the embedding stores. Rows
are assembled into a matrix with a named schema and per-family masks so
feature families can be ablated by column selection.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from typing import BinaryIO, Sequence

import numpy as np

from .candidates import Candidate, CandidateSet
from .corpus import FrequencyTable, LemmaSeq, UD_TAGS, UD_TAG_INDEX
from .embedstore import EmbeddingStore, KIND_DOMAIN, KIND_GENERAL, Stoplist, term_stdev, term_vector

GROUP_LINGUISTIC = "linguistic"
GROUP_STATISTICAL = "statistical"
GROUP_CONTEXTUAL = "contextual"

# ablation letters used on the command line
GROUP_CODES = {"P": GROUP_LINGUISTIC, "S": GROUP_STATISTICAL, "C": GROUP_CONTEXTUAL}

N_LINGUISTIC = 4 * len(UD_TAGS) + 1  # 69
N_STATISTICAL = 3

FMAT_MAGIC = b"FMAT1"
_LABEL_BYTES = {"term": 1, "non-term": 0, "unlabeled": 2}
_LABEL_NAMES = {v: k for k, v in _LABEL_BYTES.items()}


class FeatureError(ValueError):
    """Raised on schema mismatches and malformed matrix files."""


@dataclass(frozen=True)
class FeatureSchema:
    names: tuple[str, ...]
    groups: tuple[str, ...]
    embedding_dim: int

    def __post_init__(self) -> None:
        if len(self.names) != len(self.groups):
            raise FeatureError("schema names and groups differ in length")

    @property
    def fingerprint(self) -> str:
        digest = hashlib.sha256()
        for name, group in zip(self.names, self.groups):
            digest.update(f"{name}:{group}\n".encode("utf-8"))
        return digest.hexdigest()[:16]

    def __len__(self) -> int:
        return len(self.names)

    def group_mask(self, groups: set[str]) -> np.ndarray:
        """Boolean column mask for a set of group names or C/P/S letters."""
        wanted = {GROUP_CODES.get(g, g) for g in groups}
        unknown = wanted - {GROUP_LINGUISTIC, GROUP_STATISTICAL, GROUP_CONTEXTUAL}
        if unknown:
            raise FeatureError(f"unknown feature groups: {sorted(unknown)}")
        return np.array([g in wanted for g in self.groups], dtype=bool)


def build_schema(embedding_dim: int = 1024) -> FeatureSchema:
    """Canonical column order: POS-shape block, frequency block, context block."""
    names: list[str] = []
    groups: list[str] = []
    for prefix in ("start", "end", "anywhere", "count"):
        names.extend(f"{prefix}_{tag}" for tag in UD_TAGS)
    names.append("unique_pos_count")
    groups.extend([GROUP_LINGUISTIC] * N_LINGUISTIC)

    names.extend(["log_freq_general", "log_freq_domain", "token_count"])
    groups.extend([GROUP_STATISTICAL] * N_STATISTICAL)

    names.extend(f"ctx_domain_{i:04d}" for i in range(embedding_dim))
    names.extend(f"ctx_general_{i:04d}" for i in range(embedding_dim))
    names.extend(["ctx_sim_general", "ctx_sim_seed", "ctx_spread"])
    groups.extend([GROUP_CONTEXTUAL] * (2 * embedding_dim + 3))

    return FeatureSchema(names=tuple(names), groups=tuple(groups), embedding_dim=embedding_dim)


def linguistic_features(candidate: Candidate) -> np.ndarray:
    """POS-shape vector: start/end one-hots, interior tags, tag counts, variety.

    The interior block marks tags that occur strictly between the first and
    last position, so it is all zeros for unigrams and bigrams; the count
    block tallies every position.
    """
    pos = candidate.canonical_pos
    if not pos:
        raise FeatureError(f"candidate {candidate.lemma_string!r} has no POS sequence")
    k = len(UD_TAGS)
    out = np.zeros(N_LINGUISTIC, dtype=np.float64)
    out[UD_TAG_INDEX[pos[0]]] = 1.0
    out[k + UD_TAG_INDEX[pos[-1]]] = 1.0
    for tag in pos[1:-1]:
        out[2 * k + UD_TAG_INDEX[tag]] = 1.0
    for tag in pos:
        out[3 * k + UD_TAG_INDEX[tag]] += 1.0
    out[4 * k] = len(set(pos))
    return out


def rel_log_freq_sum(
    lemmas: LemmaSeq, table: FrequencyTable, stop: Stoplist | None = None
) -> float:
    """Sum of ln(count/total) over non-stoplist lemmas; unseen lemmas count as 1."""
    stop = stop or Stoplist()
    total = float(table.total)
    acc = 0.0
    for lemma in lemmas:
        if lemma in stop:
            continue
        acc += float(np.log(table.counts.get(lemma, 1) / total))
    return acc


def statistical_features(
    candidate: Candidate,
    general: FrequencyTable,
    domain: FrequencyTable,
    stop: Stoplist | None = None,
) -> np.ndarray:
    """General and domain relative log-frequency sums plus raw token count."""
    return np.array(
        [
            rel_log_freq_sum(candidate.lemmas, general, stop),
            rel_log_freq_sum(candidate.lemmas, domain, stop),
            float(len(candidate.lemmas)),
        ],
        dtype=np.float64,
    )


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    """Cosine similarity, defined as 0 when either vector is zero."""
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(np.dot(u, v) / (nu * nv))


def contextual_features(
    candidate: Candidate,
    domain_store: EmbeddingStore,
    general_store: EmbeddingStore,
    seed_vector: np.ndarray,
    stop: Stoplist | None = None,
) -> np.ndarray:
    """Domain and general term vectors plus three similarity/spread scalars."""
    if domain_store.kind != KIND_DOMAIN:
        raise FeatureError("domain_store must be a domain store")
    if general_store.kind != KIND_GENERAL:
        raise FeatureError("general_store must be a general store")
    if domain_store.dim != general_store.dim:
        raise FeatureError(
            f"store dimension mismatch: domain {domain_store.dim} vs general {general_store.dim}"
        )
    if len(seed_vector) != domain_store.dim:
        raise FeatureError("seed vector dimension does not match the stores")
    dom_vec, _ = term_vector(candidate.lemmas, domain_store, stop)
    gen_vec, _ = term_vector(candidate.lemmas, general_store, stop)
    scalars = np.array(
        [
            cosine(dom_vec, gen_vec),
            cosine(dom_vec, seed_vector),
            term_stdev(candidate.lemmas, domain_store, stop),
        ],
        dtype=np.float64,
    )
    return np.concatenate([dom_vec, gen_vec, scalars])


@dataclass
class FeatureMatrix:
    schema: FeatureSchema
    rows: np.ndarray
    labels: tuple[str, ...]
    keys: tuple[tuple[LemmaSeq, str], ...]

    def __post_init__(self) -> None:
        self.rows = np.asarray(self.rows, dtype=np.float64)
        if self.rows.ndim != 2 or self.rows.shape[1] != len(self.schema):
            raise FeatureError(
                f"rows have shape {self.rows.shape}, schema expects {len(self.schema)} columns"
            )
        if not (len(self.labels) == len(self.keys) == self.rows.shape[0]):
            raise FeatureError("rows, labels and keys are misaligned")

    def __len__(self) -> int:
        return self.rows.shape[0]

    def select_groups(self, groups: set[str]) -> "FeatureMatrix":
        """Column-select one or more feature families into a new matrix."""
        mask = self.schema.group_mask(groups)
        sub = FeatureSchema(
            names=tuple(np.array(self.schema.names)[mask]),
            groups=tuple(np.array(self.schema.groups)[mask]),
            embedding_dim=self.schema.embedding_dim,
        )
        return FeatureMatrix(
            schema=sub, rows=self.rows[:, mask], labels=self.labels, keys=self.keys
        )


def assemble(
    cands: CandidateSet,
    general_freq: FrequencyTable,
    domain_freq: FrequencyTable,
    domain_store: EmbeddingStore,
    general_store: EmbeddingStore,
    seed_term: str,
    stop: Stoplist | None = None,
) -> FeatureMatrix:
    """Build the full feature matrix, one row per candidate in key order."""
    stop = stop or Stoplist()
    schema = build_schema(domain_store.dim)
    seed_vector, _ = term_vector(tuple(seed_term.lower().split()), domain_store, stop)
    keys = sorted(cands.candidates)
    rows = np.zeros((len(keys), len(schema)), dtype=np.float64)
    labels: list[str] = []
    out_keys: list[tuple[LemmaSeq, str]] = []
    for i, key in enumerate(keys):
        cand = cands.candidates[key]
        rows[i, :N_LINGUISTIC] = linguistic_features(cand)
        rows[i, N_LINGUISTIC:N_LINGUISTIC + N_STATISTICAL] = statistical_features(
            cand, general_freq, domain_freq, stop
        )
        rows[i, N_LINGUISTIC + N_STATISTICAL:] = contextual_features(
            cand, domain_store, general_store, seed_vector, stop
        )
        labels.append(cand.label)
        out_keys.append((cand.lemmas, cand.domain_name))
    return FeatureMatrix(schema=schema, rows=rows, labels=tuple(labels), keys=tuple(out_keys))


def concat_matrices(parts: Sequence[FeatureMatrix]) -> FeatureMatrix:
    """Stack matrices row-wise; all parts must share one schema fingerprint."""
    if not parts:
        raise FeatureError("nothing to concatenate")
    first = parts[0]
    for other in parts[1:]:
        if other.schema.fingerprint != first.schema.fingerprint:
            raise FeatureError(
                "feature schema mismatch: "
                f"{other.schema.fingerprint} vs {first.schema.fingerprint}"
            )
    return FeatureMatrix(
        schema=first.schema,
        rows=np.vstack([p.rows for p in parts]),
        labels=tuple(l for p in parts for l in p.labels),
        keys=tuple(k for p in parts for k in p.keys),
    )


def save_matrix(matrix: FeatureMatrix, stream: BinaryIO) -> None:
    """Binary matrix file: schema fingerprint, keys, labels, row-major f32."""
    stream.write(FMAT_MAGIC)
    fp = matrix.schema.fingerprint.encode("ascii")
    stream.write(struct.pack("<I", len(fp)))
    stream.write(fp)
    stream.write(struct.pack("<III", matrix.schema.embedding_dim, len(matrix), len(matrix.schema)))
    for (lemmas, domain), label in zip(matrix.keys, matrix.labels):
        for text in (" ".join(lemmas), domain):
            enc = text.encode("utf-8")
            stream.write(struct.pack("<I", len(enc)))
            stream.write(enc)
        stream.write(struct.pack("<B", _LABEL_BYTES[label]))
    stream.write(np.asarray(matrix.rows, dtype="<f4").tobytes())


def load_matrix(stream: BinaryIO) -> FeatureMatrix:
    magic = stream.read(len(FMAT_MAGIC))
    if magic != FMAT_MAGIC:
        raise FeatureError(f"bad feature-matrix magic {magic!r}")
    (fp_len,) = struct.unpack("<I", stream.read(4))
    fingerprint = stream.read(fp_len).decode("ascii")
    embedding_dim, n_rows, n_cols = struct.unpack("<III", stream.read(12))
    schema = build_schema(embedding_dim)
    if len(schema) != n_cols or schema.fingerprint != fingerprint:
        raise FeatureError(
            "feature-matrix schema does not match this build "
            f"(file fingerprint {fingerprint}, expected {schema.fingerprint})"
        )
    keys: list[tuple[LemmaSeq, str]] = []
    labels: list[str] = []
    for _ in range(n_rows):
        (lemma_len,) = struct.unpack("<I", stream.read(4))
        lemmas = tuple(stream.read(lemma_len).decode("utf-8").split(" "))
        (dom_len,) = struct.unpack("<I", stream.read(4))
        domain = stream.read(dom_len).decode("utf-8")
        (label_byte,) = struct.unpack("<B", stream.read(1))
        if label_byte not in _LABEL_NAMES:
            raise FeatureError(f"bad label byte {label_byte}")
        keys.append((lemmas, domain))
        labels.append(_LABEL_NAMES[label_byte])
    payload = stream.read(4 * n_rows * n_cols)
    if len(payload) != 4 * n_rows * n_cols:
        raise FeatureError("truncated feature-matrix payload")
    rows = np.frombuffer(payload, dtype="<f4").reshape(n_rows, n_cols).astype(np.float64)
    return FeatureMatrix(schema=schema, rows=rows, labels=tuple(labels), keys=tuple(keys))


def matrix_debug_rows(matrix: FeatureMatrix) -> list[tuple[str, ...]]:
    """TSV-friendly rows: lemma sequence, domain, label, then all features."""
    out = []
    for (lemmas, domain), label, row in zip(matrix.keys, matrix.labels, matrix.rows):
        out.append((" ".join(lemmas), domain, label) + tuple(repr(float(x)) for x in row))
    return out
