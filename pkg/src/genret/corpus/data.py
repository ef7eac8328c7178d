"""Corpus, query, and qrels structures plus their file formats.

Formats (all UTF-8):
  corpus TSV        doc_id<TAB>text
  queries TSV       query_id<TAB>text
  qrels (TREC)      query_id 0 doc_id relevance   (space-separated)
  pseudo queries    doc_id<TAB>pseudo_query_text

Tokenization is whitespace split + lowercase; the integer vocabulary is built
from the corpus, and query tokens outside it are dropped. All structures are
immutable after load and safe for concurrent reads. Loaders reject
structurally invalid input rather than repairing it.
"""

from dataclasses import dataclass, field

from genret.errors import DataFormatError


def tokenize(text: str) -> list:
    return text.lower().split()


@dataclass(frozen=True)
class Document:
    doc_id: str
    tokens: tuple  # integer token ids
    raw: str


@dataclass(frozen=True)
class Query:
    query_id: str
    tokens: tuple
    raw: str


@dataclass
class Corpus:
    docs: list = field(default_factory=list)
    vocab: dict = field(default_factory=dict)  # token string -> id
    _by_id: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._by_id = {d.doc_id: d for d in self.docs}

    def __len__(self):
        return len(self.docs)

    def __contains__(self, doc_id):
        return doc_id in self._by_id

    def get(self, doc_id) -> Document:
        return self._by_id[doc_id]

    @property
    def doc_ids(self):
        return [d.doc_id for d in self.docs]

    def map_tokens(self, words) -> tuple:
        """Map word strings to vocabulary ids, dropping out-of-vocabulary."""
        return tuple(self.vocab[w] for w in words if w in self.vocab)

    @classmethod
    def from_raw(cls, items) -> "Corpus":
        """items: iterable of (doc_id, raw_text). Builds the vocabulary in
        first-appearance order."""
        vocab = {}
        docs = []
        seen = set()
        for doc_id, raw in items:
            if doc_id in seen:
                raise DataFormatError(f"duplicate doc_id {doc_id!r}")
            seen.add(doc_id)
            words = tokenize(raw)
            if not words:
                raise DataFormatError(f"document {doc_id!r} has empty text")
            for w in words:
                if w not in vocab:
                    vocab[w] = len(vocab)
            docs.append(Document(doc_id, tuple(vocab[w] for w in words), raw))
        return cls(docs=docs, vocab=vocab)


def load_corpus(path) -> Corpus:
    items = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise DataFormatError(f"{path}:{lineno}: malformed corpus line")
            if parts[0] in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate doc_id {parts[0]!r}")
            seen.add(parts[0])
            items.append((parts[0], parts[1]))
    return Corpus.from_raw(items)


def write_corpus(path, corpus: Corpus) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in corpus.docs:
            f.write(f"{d.doc_id}\t{d.raw}\n")


def load_queries(path, corpus: Corpus) -> list:
    """Parse a queries TSV; tokens are mapped through the corpus vocabulary."""
    queries = []
    seen = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise DataFormatError(f"{path}:{lineno}: malformed query line")
            if parts[0] in seen:
                raise DataFormatError(f"{path}:{lineno}: duplicate query_id {parts[0]!r}")
            seen.add(parts[0])
            queries.append(Query(parts[0], corpus.map_tokens(tokenize(parts[1])), parts[1]))
    return queries


def write_queries(path, queries) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for q in queries:
            f.write(f"{q.query_id}\t{q.raw}\n")


def load_qrels(path, valid_doc_ids=None) -> dict:
    """TREC qrels -> {query_id: {doc_id: relevance >= 1}}. Judgments with
    relevance 0 are parsed but not stored. When ``valid_doc_ids`` is given,
    dangling doc_ids are an error."""
    qrels = {}
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 4:
                raise DataFormatError(f"{path}:{lineno}: expected 4 fields, got {len(parts)}")
            qid, _, did, rel_s = parts
            try:
                rel = int(rel_s)
            except ValueError:
                raise DataFormatError(f"{path}:{lineno}: non-integer relevance {rel_s!r}")
            if rel < 0:
                raise DataFormatError(f"{path}:{lineno}: negative relevance")
            if valid_doc_ids is not None and did not in valid_doc_ids:
                raise DataFormatError(f"{path}:{lineno}: doc_id {did!r} not in corpus")
            if rel >= 1:
                if did in qrels.get(qid, {}):
                    raise DataFormatError(f"{path}:{lineno}: duplicate judgment for ({qid}, {did})")
                qrels.setdefault(qid, {})[did] = rel
    return qrels


def write_qrels(path, qrels: dict) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for qid in qrels:
            for did, rel in qrels[qid].items():
                f.write(f"{qid} 0 {did} {rel}\n")


def load_pseudo_queries(path) -> list:
    """Pseudo-query TSV -> list of (doc_id, text)."""
    pairs = []
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2 or not parts[0] or not parts[1].strip():
                raise DataFormatError(f"{path}:{lineno}: malformed pseudo-query line")
            pairs.append((parts[0], parts[1]))
    return pairs


def write_pseudo_queries(path, pairs) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for doc_id, text in pairs:
            f.write(f"{doc_id}\t{text}\n")
