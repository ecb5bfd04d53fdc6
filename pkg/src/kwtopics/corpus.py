"""Corpus ingestion: vocabulary building, encoding, keyword masks, persistence.

Raw input is token lists (one record per document with an id and a week
index).  Text normalization (lowercasing, stopword removal, crude suffix
stemming) is applied by the ingest CLI before any of this machinery runs,
so the numerical core only ever sees tokens.
"""

import json
from dataclasses import dataclass, field

import numpy as np

PLACEHOLDER = "<unk>"

CORPUS_MAGIC = "kwtopics-corpus"
CORPUS_VERSION = 1

# Compact English stopword list for the ingest pass.
STOPWORDS = frozenset("""
a about above after again against all am an and any are aren't as at be
because been before being below between both but by can't cannot could
couldn't did didn't do does doesn't doing don't down during each few for
from further had hadn't has hasn't have haven't having he her here hers
herself him himself his how i i'm i've if in into is isn't it it's its
itself let's me more most mustn't my myself no nor not of off on once only
or other ought our ours ourselves out over own rt same shan't she should
shouldn't so some such than that that's the their theirs them themselves
then there these they this those through to too under until up very was
wasn't we were weren't what when where which while who whom why with won't
would wouldn't you your yours yourself yourselves
""".split())


class CorpusFormatError(ValueError):
    """Raised when a corpus file cannot be parsed."""


@dataclass
class Vocabulary:
    tokens: list
    index: dict
    placeholder_id: int

    @property
    def size(self):
        return len(self.tokens)


@dataclass
class RawDocument:
    doc_id: str
    week: int
    tokens: list


@dataclass
class Document:
    word_ids: np.ndarray
    week: int
    doc_id: str

    @property
    def n_words(self):
        return len(self.word_ids)


@dataclass
class Corpus:
    documents: list
    vocabulary: Vocabulary
    candidate_keywords: list = field(default_factory=list)  # vocab ids, ordered

    @property
    def n_docs(self):
        return len(self.documents)

    @property
    def n_keywords(self):
        return len(self.candidate_keywords)

    def keyword_tokens(self):
        return [self.vocabulary.tokens[i] for i in self.candidate_keywords]

    def week_slice(self, weeks):
        """Documents whose week index is in `weeks` (int or iterable)."""
        if isinstance(weeks, int):
            weeks = {weeks}
        else:
            weeks = set(weeks)
        return [d for d in self.documents if d.week in weeks]


def simple_stem(token):
    """Crude suffix stripper; deliberately conservative."""
    for suffix in ("ing", "ed", "es", "ly", "s"):
        if token.endswith(suffix) and len(token) - len(suffix) >= 3:
            return token[: -len(suffix)]
    return token


def normalize_tokens(tokens, stem=True, drop_stopwords=True):
    out = []
    for t in tokens:
        t = t.lower().strip()
        if not t:
            continue
        if drop_stopwords and t in STOPWORDS:
            continue
        if stem:
            t = simple_stem(t)
        out.append(t)
    return out


def build_vocabulary(raw_docs, min_count=1):
    """Vocabulary over tokens with corpus frequency >= min_count.

    Rare tokens are represented by a single placeholder entry, which always
    exists and is counted once in the vocabulary size.
    """
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    docs = list(raw_docs)
    if not docs:
        raise ValueError("empty corpus")
    counts = {}
    order = []
    for tokens in docs:
        for t in tokens:
            if t not in counts:
                counts[t] = 0
                order.append(t)
            counts[t] += 1
    tokens = [t for t in order if counts[t] >= min_count and t != PLACEHOLDER]
    tokens.append(PLACEHOLDER)
    index = {t: i for i, t in enumerate(tokens)}
    return Vocabulary(tokens=tokens, index=index, placeholder_id=len(tokens) - 1)


def encode_corpus(raw_docs, vocabulary, candidate_keywords, keep_keywordless=False):
    """Encode raw documents against a vocabulary.

    Out-of-vocabulary tokens become the placeholder id.  Documents without
    any candidate keyword are dropped unless keep_keywordless is set.
    Documents are stably ordered by week at ingest.

    Returns (corpus, dropped_count).
    """
    kw_ids = []
    seen = set()
    for token in candidate_keywords:
        if token not in vocabulary.index:
            raise ValueError(f"candidate keyword not in vocabulary: {token!r}")
        i = vocabulary.index[token]
        if i in seen:
            continue
        seen.add(i)
        kw_ids.append(i)
    if not kw_ids:
        raise ValueError("no candidate keywords given")
    kw_set = set(kw_ids)

    docs = []
    dropped = 0
    for rd in raw_docs:
        ids = np.array(
            [vocabulary.index.get(t, vocabulary.placeholder_id) for t in rd.tokens],
            dtype=np.int64,
        )
        if len(ids) == 0:
            dropped += 1
            continue
        if not keep_keywordless and not (set(ids.tolist()) & kw_set):
            dropped += 1
            continue
        docs.append(Document(word_ids=ids, week=int(rd.week), doc_id=str(rd.doc_id)))
    docs.sort(key=lambda d: d.week)  # stable: arrival order kept within a week
    return Corpus(documents=docs, vocabulary=vocabulary, candidate_keywords=kw_ids), dropped


def keyword_mask(doc, corpus):
    """Binary vector over candidate keywords: 1 where the keyword occurs in doc."""
    present = set(doc.word_ids.tolist())
    return np.array(
        [1.0 if k in present else 0.0 for k in corpus.candidate_keywords], dtype=float
    )


def keyword_mask_matrix(corpus):
    """Stacked keyword_mask for every document, shape (D, Q)."""
    return np.stack([keyword_mask(d, corpus) for d in corpus.documents])


def save_corpus(corpus, path):
    """Line-delimited JSON container: header, vocabulary, keywords, documents."""
    with open(path, "w", encoding="utf-8") as fh:
        header = {
            "magic": CORPUS_MAGIC,
            "version": CORPUS_VERSION,
            "V": corpus.vocabulary.size,
            "D": corpus.n_docs,
            "Q": corpus.n_keywords,
        }
        fh.write(json.dumps(header) + "\n")
        fh.write(json.dumps({
            "tokens": corpus.vocabulary.tokens,
            "placeholder_id": corpus.vocabulary.placeholder_id,
        }) + "\n")
        fh.write(json.dumps({"keyword_ids": list(corpus.candidate_keywords)}) + "\n")
        for d in corpus.documents:
            fh.write(json.dumps({
                "doc_id": d.doc_id,
                "week": d.week,
                "word_ids": d.word_ids.tolist(),
            }) + "\n")


def _parse_json_line(line, lineno, what):
    try:
        return json.loads(line)
    except json.JSONDecodeError as exc:
        raise CorpusFormatError(f"line {lineno}: malformed {what}: {exc}") from exc


def load_corpus(path):
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if len(lines) < 3:
        raise CorpusFormatError(f"line {len(lines) + 1}: unexpected end of file")
    header = _parse_json_line(lines[0], 1, "header")
    if header.get("magic") != CORPUS_MAGIC:
        raise CorpusFormatError("line 1: not a corpus file (bad magic)")
    if header.get("version") != CORPUS_VERSION:
        raise CorpusFormatError(
            f"line 1: unsupported corpus version {header.get('version')}")
    vocab_rec = _parse_json_line(lines[1], 2, "vocabulary")
    kw_rec = _parse_json_line(lines[2], 3, "keyword list")
    tokens = vocab_rec["tokens"]
    vocab = Vocabulary(
        tokens=tokens,
        index={t: i for i, t in enumerate(tokens)},
        placeholder_id=int(vocab_rec["placeholder_id"]),
    )
    if vocab.size != header["V"]:
        raise CorpusFormatError("line 2: vocabulary size disagrees with header")
    n_docs = int(header["D"])
    if len(lines) != 3 + n_docs:
        raise CorpusFormatError(
            f"line {len(lines) + 1}: expected {n_docs} document records, "
            f"found {len(lines) - 3}")
    docs = []
    prev_week = None
    for i, line in enumerate(lines[3:], start=4):
        rec = _parse_json_line(line, i, "document")
        ids = np.asarray(rec["word_ids"], dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= vocab.size):
            raise CorpusFormatError(f"line {i}: word id out of range")
        week = int(rec["week"])
        if prev_week is not None and week < prev_week:
            raise CorpusFormatError(f"line {i}: weeks out of order")
        prev_week = week
        docs.append(Document(word_ids=ids, week=week, doc_id=str(rec["doc_id"])))
    kw_ids = [int(k) for k in kw_rec["keyword_ids"]]
    if len(kw_ids) != header["Q"]:
        raise CorpusFormatError("line 3: keyword count disagrees with header")
    if len(set(kw_ids)) != len(kw_ids) or any(
            k < 0 or k >= vocab.size for k in kw_ids):
        raise CorpusFormatError("line 3: keyword ids must be distinct and in range")
    return Corpus(documents=docs, vocabulary=vocab, candidate_keywords=kw_ids)


def read_raw_documents(path):
    """Line-delimited JSON records {id, week, tokens} -> list of RawDocument."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            rec = _parse_json_line(line, i, "raw document")
            for key in ("id", "week", "tokens"):
                if key not in rec:
                    raise CorpusFormatError(f"line {i}: missing field {key!r}")
            out.append(RawDocument(doc_id=str(rec["id"]), week=int(rec["week"]),
                                   tokens=list(rec["tokens"])))
    return out


def read_keyword_file(path):
    """Plain text, one candidate keyword per line."""
    with open(path, "r", encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]
