import pytest

from kwtopics.cli import planted_ground_truth
from kwtopics.corpus import Corpus, RawDocument, build_vocabulary, encode_corpus
from kwtopics.mathcore import RngStream
from kwtopics.synth import generate_corpus


@pytest.fixture
def tiny_corpus():
    raw = [
        RawDocument("d0", 1, ["horse", "race", "track", "horse"]),
        RawDocument("d1", 1, ["stream", "game", "live"]),
        RawDocument("d2", 2, ["horse", "derby", "race"]),
        RawDocument("d3", 2, ["game", "stream", "playing"]),
    ]
    vocab = build_vocabulary([d.tokens for d in raw], min_count=1)
    cps, _ = encode_corpus(raw, vocab, ["horse", "game"])
    return cps


def make_planted_corpus(n_keywords=3, n_topics=2, vocab_size=60, n_docs=200,
                        words_per_doc=12, seed=0, n_weeks=4, penalty=2.0):
    gt = planted_ground_truth(n_keywords, n_topics, vocab_size, n_docs,
                              words_per_doc, penalty=penalty, n_weeks=n_weeks)
    cps, draws = generate_corpus(gt, RngStream(seed, 100))
    return gt, cps, draws


@pytest.fixture
def planted_small():
    return make_planted_corpus()


def subcorpus(cps, docs):
    return Corpus(documents=docs, vocabulary=cps.vocabulary,
                  candidate_keywords=cps.candidate_keywords)
