"""Synthetic corpus generator: labels consistent, deterministic, balanced."""

import numpy as np

from pkengine.engine import hard_label
from pkengine.synthetic import generate_corpus, lexicon_sentiment, write_corpus


class TestGenerateCorpus:
    def test_labels_match_condition_truths(self, cssrs_pk):
        for post, truths in generate_corpus(cssrs_pk, 40, seed=1):
            assert hard_label(cssrs_pk, truths) == post.gold_label

    def test_every_rule_label_represented(self, cssrs_pk, phq9_pk):
        for pk in (cssrs_pk, phq9_pk):
            labels = {post.gold_label for post, _ in generate_corpus(pk, 40, seed=0)}
            assert labels == set(pk.label_set)

    def test_deterministic_for_seed(self, phq9_pk):
        a = generate_corpus(phq9_pk, 10, seed=5)
        b = generate_corpus(phq9_pk, 10, seed=5)
        assert [(p.text, p.gold_label) for p, _ in a] == [(p.text, p.gold_label) for p, _ in b]

    def test_condition_text_embedded_in_post(self, cssrs_pk):
        for post, truths in generate_corpus(cssrs_pk, 12, seed=2):
            for cond in cssrs_pk.conditions:
                if truths[cond.id]:
                    assert cond.text.lower() in post.text.lower()

    def test_unique_ids(self, phq9_pk):
        corpus = generate_corpus(phq9_pk, 30, seed=0)
        ids = [p.id for p, _ in corpus]
        assert len(set(ids)) == len(ids)

    def test_write_corpus_is_valid_jsonl(self, cssrs_pk, tmp_path):
        import json

        path = tmp_path / "corpus.jsonl"
        write_corpus(generate_corpus(cssrs_pk, 8, seed=0), path)
        lines = path.read_text().splitlines()
        assert len(lines) == 8
        rec = json.loads(lines[0])
        assert {"id", "text", "label", "conditions"} <= set(rec)


class TestLexiconSentiment:
    def test_positive_words_detected(self):
        assert lexicon_sentiment("I enjoyed a lovely walk in the park.")

    def test_neutral_text_negative(self):
        assert not lexicon_sentiment("The printer at work jammed twice.")
