"""Exporter tests, checked through the extraction pipeline's store loader."""

import numpy as np
import pytest

from termext.embedstore import load_store

from embed_export.cli import main
from embed_export.encoders import EncoderError, FakeEncoder, make_encoder
from embed_export.export import ExportConfig, ExportError, export_store


def write_conllu(path, sentences):
    lines = []
    for sent in sentences:
        for i, (form, lemma) in enumerate(sent, start=1):
            lines.append("\t".join([str(i), form, lemma] + ["NOUN"] + ["_"] * 6))
        lines.append("")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


@pytest.fixture
def small_corpus(tmp_path):
    path = tmp_path / "small.conllu"
    write_conllu(
        path,
        [
            [("Sile", "sila"), ("telesa", "telo")],
            [("sila", "sila"), ("vrtenje", "vrtenje")],
            [("Premik", "premik")],
        ],
    )
    return path


class ScriptedEncoder:
    """Returns prescribed vectors in token order, independent of the token."""

    uses_lemmas = True

    def __init__(self, vectors):
        self.vectors = [np.asarray(v, dtype=np.float32) for v in vectors]
        self.dim = len(self.vectors[0])
        self._cursor = 0

    def encode(self, tokens):
        out = np.stack(self.vectors[self._cursor: self._cursor + len(tokens)])
        self._cursor += len(tokens)
        return out


def test_fake_export_loads_and_round_trips(tmp_path, small_corpus):
    out = tmp_path / "dom.embs"
    config = ExportConfig(
        encoder="fake:8", corpus_paths=(small_corpus,), output_path=out, kind="domain"
    )
    export_store(config)
    with open(out, "rb") as fh:
        store = load_store(fh)
    assert store.kind == "domain"
    assert store.dim == 8
    assert set(store.vectors) == {"sila", "telo", "vrtenje", "premik"}
    # single-occurrence lemmas keep their encoder vector bit-exactly
    encoder = FakeEncoder(dim=8)
    for lemma in ("telo", "vrtenje", "premik"):
        expected = encoder.encode((lemma,))[0]
        assert store.vectors[lemma].tobytes() == expected.tobytes()
        assert store.stdevs[lemma] == 0.0
    # the fake encoder repeats vectors per lemma, so means collapse too
    assert store.vectors["sila"].tobytes() == encoder.encode(("sila",))[0].tobytes()
    assert store.stdevs["sila"] == 0.0


def test_mean_and_spread_over_occurrences(tmp_path):
    corpus = tmp_path / "two.conllu"
    write_conllu(corpus, [[("sila", "sila")], [("sila", "sila")]])
    encoder = ScriptedEncoder([[0.0, 2.0], [2.0, 4.0]])
    out = tmp_path / "dom.embs"
    config = ExportConfig(
        encoder="unused", corpus_paths=(corpus,), output_path=out, kind="domain"
    )
    export_store(config, encoder=encoder)
    with open(out, "rb") as fh:
        store = load_store(fh)
    assert np.allclose(store.vectors["sila"], [1.0, 3.0])
    # per-dimension population stddev is (1, 1); averaged over dimensions -> 1
    assert store.stdevs["sila"] == pytest.approx(1.0)


def test_general_store_top_k_cap(tmp_path):
    corpus = tmp_path / "five.conllu"
    write_conllu(
        corpus,
        [
            [("a", "ena"), ("a", "ena"), ("a", "ena")],
            [("b", "dva"), ("b", "dva"), ("c", "tri"), ("c", "tri")],
            [("d", "štiri"), ("e", "pet")],
        ],
    )
    out = tmp_path / "gen.embs"
    config = ExportConfig(
        encoder="fake:4", corpus_paths=(corpus,), output_path=out, kind="general", top_k=3
    )
    export_store(config)
    with open(out, "rb") as fh:
        store = load_store(fh)
    assert store.kind == "general"
    assert store.stdevs is None
    assert set(store.vectors) == {"ena", "dva", "tri"}


def test_domain_store_is_not_capped(tmp_path, small_corpus):
    out = tmp_path / "dom.embs"
    config = ExportConfig(
        encoder="fake:4", corpus_paths=(small_corpus,), output_path=out, kind="domain", top_k=2
    )
    export_store(config)
    with open(out, "rb") as fh:
        store = load_store(fh)
    assert len(store.vectors) == 4


def test_explicit_lemma_list(tmp_path, small_corpus):
    keep = tmp_path / "keep.txt"
    keep.write_text("sila\npremik\nneznan\n", encoding="utf-8")
    out = tmp_path / "gen.embs"
    config = ExportConfig(
        encoder="fake:4", corpus_paths=(small_corpus,), output_path=out,
        kind="general", lemma_list_path=keep,
    )
    export_store(config)
    with open(out, "rb") as fh:
        store = load_store(fh)
    assert set(store.vectors) == {"sila", "premik"}


def test_sentence_order_invariance(tmp_path):
    sentences = [
        [("sila", "sila"), ("telo", "telo")],
        [("sila", "sila")],
        [("telo", "telo"), ("sila", "sila")],
    ]
    a_path, b_path = tmp_path / "a.conllu", tmp_path / "b.conllu"
    write_conllu(a_path, sentences)
    write_conllu(b_path, list(reversed(sentences)))

    rng = np.random.default_rng(3)
    vectors = [rng.standard_normal(6).astype(np.float32) for _ in range(5)]
    by_occurrence = {"a": vectors, "b": [vectors[i] for i in (3, 4, 2, 0, 1)]}
    stores = {}
    for tag, path in (("a", a_path), ("b", b_path)):
        out = tmp_path / f"{tag}.embs"
        export_store(
            ExportConfig(encoder="u", corpus_paths=(path,), output_path=out, kind="domain"),
            encoder=ScriptedEncoder(by_occurrence[tag]),
        )
        with open(out, "rb") as fh:
            stores[tag] = load_store(fh)
    for lemma in stores["a"].vectors:
        assert np.allclose(stores["a"].vectors[lemma], stores["b"].vectors[lemma], atol=1e-5)
        assert stores["a"].stdevs[lemma] == pytest.approx(stores["b"].stdevs[lemma], abs=1e-5)


def test_encoder_shape_mismatch(tmp_path, small_corpus):
    class Wrong:
        uses_lemmas = True
        dim = 4

        def encode(self, tokens):
            return np.zeros((len(tokens), 3), dtype=np.float32)

    config = ExportConfig(
        encoder="u", corpus_paths=(small_corpus,), output_path=tmp_path / "x.embs"
    )
    with pytest.raises(ExportError, match="shape"):
        export_store(config, encoder=Wrong())


def test_empty_corpus_rejected(tmp_path):
    empty = tmp_path / "empty.conllu"
    empty.write_text("", encoding="utf-8")
    config = ExportConfig(
        encoder="fake:4", corpus_paths=(empty,), output_path=tmp_path / "x.embs"
    )
    with pytest.raises(ExportError, match="no sentences"):
        export_store(config)


def test_make_encoder_specs():
    assert make_encoder("fake").dim == 1024
    assert make_encoder("fake:16").dim == 16
    with pytest.raises(EncoderError, match="unknown encoder"):
        make_encoder("bert:whatever")


def test_exported_stores_drive_the_extraction_pipeline(tmp_path, small_corpus):
    """Exported stores must slot straight into the consumer's featurize step."""
    from termext.cli import main as termext_main

    dom_store = tmp_path / "dom.embs"
    gen_store = tmp_path / "gen.embs"
    for kind, out in (("domain", dom_store), ("general", gen_store)):
        assert main([
            "--corpus", str(small_corpus), "--out", str(out),
            "--kind", kind, "--encoder", "fake:8",
        ]) == 0
    freq = tmp_path / "freq.tsv"
    freq.write_text("#total\t1000\nsila\t20\ntelo\t10\n", encoding="utf-8")
    assert termext_main([
        "candidates", "--corpus", str(small_corpus), "--out-dir", str(tmp_path),
    ]) == 0
    assert termext_main([
        "featurize", "--corpus", str(small_corpus),
        "--candidates", str(tmp_path / "candidates.tsv"),
        "--domain-store", str(dom_store), "--general-store", str(gen_store),
        "--general-freq", str(freq), "--seed-term", "sila",
        "--out-dir", str(tmp_path),
    ]) == 0
    from termext.features import load_matrix

    with open(tmp_path / "features.fmat", "rb") as fh:
        matrix = load_matrix(fh)
    assert len(matrix) > 0
    assert len(matrix.schema) == 69 + 3 + 2 * 8 + 3


class TestCli:
    def test_export_via_cli(self, tmp_path, small_corpus, capsys):
        out = tmp_path / "dom.embs"
        code = main([
            "--corpus", str(small_corpus), "--out", str(out),
            "--kind", "domain", "--encoder", "fake:8",
        ])
        assert code == 0
        with open(out, "rb") as fh:
            assert load_store(fh).dim == 8

    def test_fake_encoder_shorthand(self, tmp_path, small_corpus):
        out = tmp_path / "dom.embs"
        assert main(["--corpus", str(small_corpus), "--out", str(out), "--fake-encoder"]) == 0
        with open(out, "rb") as fh:
            assert load_store(fh).dim == 1024

    def test_usage_error(self, capsys):
        assert main(["--out", "x.embs"]) == 1
        assert "usage error" in capsys.readouterr().err

    def test_missing_corpus_is_data_error(self, tmp_path, capsys):
        code = main([
            "--corpus", str(tmp_path / "missing.conllu"),
            "--out", str(tmp_path / "x.embs"), "--fake-encoder",
        ])
        assert code == 2

    def test_config_file(self, tmp_path, small_corpus):
        config = tmp_path / "export.json"
        config.write_text(
            '{"corpus": ["%s"], "out": "store.embs", "kind": "domain", "encoder": "fake:8"}'
            % small_corpus,
            encoding="utf-8",
        )
        assert main(["--config", str(config)]) == 0
        with open(tmp_path / "store.embs", "rb") as fh:
            assert load_store(fh).kind == "domain"
