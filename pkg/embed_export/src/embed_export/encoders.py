"""Token encoders: a pretrained contextual model, or a deterministic fake.

An encoder turns one sentence into one vector per token. The fake encoder
derives each vector from the token's hash, so exports are reproducible with
no model runtime installed; the contextual path wraps an ELMo checkpoint and
reads out a single LSTM layer.
"""

from __future__ import annotations

import hashlib

import numpy as np


class EncoderError(ValueError):
    pass


class FakeEncoder:
    """Deterministic pseudo-random vectors keyed by token hash."""

    uses_lemmas = True

    def __init__(self, dim: int = 1024):
        if dim <= 0:
            raise EncoderError("encoder dimension must be positive")
        self.dim = dim

    def encode(self, tokens: tuple[str, ...]) -> np.ndarray:
        out = np.empty((len(tokens), self.dim), dtype=np.float32)
        for row, token in enumerate(tokens):
            seed = int.from_bytes(
                hashlib.sha256(token.encode("utf-8")).digest()[:8], "little"
            )
            rng = np.random.default_rng(seed)
            out[row] = rng.standard_normal(self.dim).astype(np.float32)
        return out


class ElmoEncoder:
    """Contextual vectors from a pretrained ELMo checkpoint (one LSTM layer)."""

    uses_lemmas = False

    def __init__(self, options_file: str, weight_file: str, layer: int = 1, dim: int = 1024):
        try:
            from allennlp.modules.elmo import Elmo, batch_to_ids
        except ImportError as exc:
            raise EncoderError(
                "the contextual encoder needs the optional 'allennlp' dependency "
                "(pip install embed-export[elmo]); use --encoder fake for tests"
            ) from exc
        self._batch_to_ids = batch_to_ids
        self._elmo = Elmo(
            options_file, weight_file, num_output_representations=3, dropout=0.0
        )
        self.layer = layer
        self.dim = dim

    def encode(self, tokens: tuple[str, ...]) -> np.ndarray:
        import torch

        with torch.no_grad():
            ids = self._batch_to_ids([list(tokens)])
            layers = self._elmo(ids)["elmo_representations"]
            vectors = layers[self.layer][0, : len(tokens)].cpu().numpy()
        if vectors.shape[1] != self.dim:
            raise EncoderError(
                f"encoder produced dimension {vectors.shape[1]}, expected {self.dim}"
            )
        return vectors.astype(np.float32)


def make_encoder(spec: str, layer: int = 1):
    """Build an encoder from a spec string: "fake[:dim]" or "elmo:opts,weights"."""
    kind, _, rest = spec.partition(":")
    if kind == "fake":
        return FakeEncoder(dim=int(rest) if rest else 1024)
    if kind == "elmo":
        parts = rest.split(",")
        if len(parts) != 2:
            raise EncoderError("elmo encoder spec must be 'elmo:<options.json>,<weights.hdf5>'")
        return ElmoEncoder(parts[0], parts[1], layer=layer)
    raise EncoderError(f"unknown encoder spec {spec!r}")
