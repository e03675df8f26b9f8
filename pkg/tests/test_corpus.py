import numpy as np
import pytest

from termext.corpus import (
    Corpus,
    CorpusError,
    Sentence,
    Token,
    analyze,
    frequency_from_corpus,
    load_freq_list,
    load_gold_terms,
    parse_conllu,
    serialize_conllu,
    stats_tables,
)

from synth import random_corpus


def conllu_line(idx, form, lemma, upos):
    return "\t".join([str(idx), form, lemma, upos] + ["_"] * 6)


def make_conllu(*sentences):
    blocks = []
    for sent in sentences:
        blocks.append(
            "\n".join(conllu_line(i + 1, f, l, u) for i, (f, l, u) in enumerate(sent))
        )
    return ("\n\n".join(blocks) + "\n").encode("utf-8")


TWO_SENTENCES = make_conllu(
    [("Velika", "velik", "ADJ"), ("modra", "moder", "ADJ"), ("riba", "riba", "NOUN"),
     ("plava", "plavati", "VERB"), (".", ".", "PUNCT")],
    [("Sila", "sila", "NOUN"), ("deluje", "delovati", "VERB"), (".", ".", "PUNCT")],
)


class TestParseConllu:
    def test_token_count(self):
        corpus = parse_conllu(TWO_SENTENCES, "demo")
        assert len(corpus.sentences) == 2
        assert corpus.token_count == 8

    def test_upos_kept(self):
        corpus = parse_conllu(TWO_SENTENCES, "demo")
        assert corpus.sentences[0].tokens[2].upos == "NOUN"

    def test_lemma_lowercased(self):
        corpus = parse_conllu(make_conllu([("EU", "EU", "PROPN")]), "demo")
        assert corpus.sentences[0].tokens[0].lemma == "eu"

    def test_unknown_upos_names_line(self):
        bad = make_conllu([("a", "a", "NOUN"), ("b", "b", "FOO")])
        with pytest.raises(CorpusError, match="line 2.*FOO"):
            parse_conllu(bad, "demo")

    def test_wrong_column_count(self):
        with pytest.raises(CorpusError, match="line 1"):
            parse_conllu(b"1\tx\tx\n", "demo")

    def test_empty_file(self):
        with pytest.raises(CorpusError, match="empty"):
            parse_conllu(b"", "demo")

    def test_comments_ranges_and_empty_nodes_skipped(self):
        text = (
            "# sent_id = 1\n"
            "1-2\tdela\t_\t_\t_\t_\t_\t_\t_\t_\n"
            "1\tdel\tdel\tNOUN\t_\t_\t_\t_\t_\t_\n"
            "2\ta\ta\tADP\t_\t_\t_\t_\t_\t_\n"
            "2.1\tnull\tnull\tPRON\t_\t_\t_\t_\t_\t_\n\n"
        ).encode("utf-8")
        corpus = parse_conllu(text, "demo")
        assert [t.lemma for t in corpus.sentences[0].tokens] == ["del", "a"]

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        corpus = random_corpus(rng, "demo", n_sentences=15)
        assert parse_conllu(serialize_conllu(corpus), "demo") == corpus


class TestGoldTerms:
    def test_dedup(self):
        data = "živčni končič\nupogibalka\nživčni končič\n".encode("utf-8")
        gold = load_gold_terms(data, "demo")
        assert gold.terms == {("živčni", "končič"), ("upogibalka",)}

    def test_empty(self):
        assert load_gold_terms(b"", "demo").terms == frozenset()

    def test_lowercased(self):
        gold = load_gold_terms("Newtonov zakon\n".encode("utf-8"), "demo")
        assert gold.terms == {("newtonov", "zakon")}


class TestFreqList:
    def test_header_total(self):
        table = load_freq_list(b"#total\t1000\nsila\t10\n")
        assert table.counts == {"sila": 10}
        assert table.total == 1000

    def test_duplicate_lemma(self):
        with pytest.raises(CorpusError, match="duplicate"):
            load_freq_list(b"sila\t10\nsila\t3\n")

    def test_total_defaults_to_sum(self):
        table = load_freq_list(b"a\t40\nb\t2\n")
        assert table.total == 42

    def test_nonpositive_count(self):
        with pytest.raises(CorpusError, match="nonpositive"):
            load_freq_list(b"sila\t0\n")

    def test_from_corpus(self):
        corpus = parse_conllu(TWO_SENTENCES, "demo")
        table = frequency_from_corpus(corpus)
        assert table.total == 8
        assert table.counts["."] == 2


class TestAnalyze:
    def make_corpus(self):
        return parse_conllu(
            make_conllu(
                [("strojno", "strojno", "ADJ"), ("učenje", "učenje", "NOUN")],
                [("strojno", "strojno", "ADJ"), ("učenje", "učenje", "NOUN"),
                 ("in", "in", "CCONJ"), ("sila", "sila", "NOUN")],
                [("strojno", "strojno", "ADJ"), ("učenje", "učenje", "NOUN")],
            ),
            "demo",
        )

    def test_occurrence_tallies(self):
        gold = load_gold_terms("strojno učenje\nsila\n".encode("utf-8"), "demo")
        report = analyze(self.make_corpus(), gold)
        assert report.first_pos["ADJ"] == 3
        assert report.last_pos["NOUN"] == 3
        assert report.unigram_pos["NOUN"] == 1
        assert report.pos_occurrences["ADJ"] == 3
        assert report.pos_occurrences["NOUN"] == 4

    def test_unseen_term_counts_only_lengths(self):
        gold = load_gold_terms("neznan pojem\n".encode("utf-8"), "demo")
        report = analyze(self.make_corpus(), gold)
        assert report.token_lengths[2] == 1
        assert report.char_lengths[len("neznan pojem")] == 1
        assert sum(report.first_pos.values()) == 0

    def test_token_length_sums_to_gold_size(self):
        rng = np.random.default_rng(11)
        corpus = random_corpus(rng, "demo", n_sentences=30)
        lemmas = sorted({t.lemma for s in corpus.sentences for t in s.tokens})
        gold_text = "\n".join([lemmas[0], f"{lemmas[1]} {lemmas[2]}", "nikjer"])
        gold = load_gold_terms(gold_text.encode("utf-8"), "demo")
        report = analyze(corpus, gold)
        assert sum(report.token_lengths.values()) == len(gold.terms)

    def test_char_length_includes_spaces(self):
        gold = load_gold_terms(b"ab cd\n", "demo")
        report = analyze(self.make_corpus(), gold)
        assert report.char_lengths[5] == 1

    def test_sentence_order_invariance(self):
        rng = np.random.default_rng(5)
        corpus = random_corpus(rng, "demo", n_sentences=25)
        lemmas = sorted({t.lemma for s in corpus.sentences for t in s.tokens})
        gold = load_gold_terms("\n".join(lemmas[:6]).encode("utf-8"), "demo")
        report = analyze(corpus, gold)
        shuffled = Corpus(
            domain_name="demo",
            sentences=tuple(corpus.sentences[i] for i in rng.permutation(len(corpus.sentences))),
        )
        other = analyze(shuffled, gold)
        for name in report.HISTOGRAMS:
            assert getattr(report, name) == getattr(other, name)

    def test_stats_tables_shape(self):
        gold = load_gold_terms("strojno učenje\nsila\n".encode("utf-8"), "demo")
        tables = stats_tables(analyze(self.make_corpus(), gold))
        assert set(tables) == set(
            ["token_lengths", "char_lengths", "unigram_pos", "first_pos", "last_pos", "pos_occurrences"]
        )
        assert len(tables["first_pos"]) == 17
