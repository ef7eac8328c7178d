from genret.corpus.data import (
    Corpus,
    Document,
    Query,
    load_corpus,
    load_pseudo_queries,
    load_qrels,
    load_queries,
    tokenize,
    write_corpus,
    write_pseudo_queries,
    write_qrels,
    write_queries,
)
from genret.corpus.bm25 import BM25Index
from genret.corpus.pseudo import generate_pseudo_queries
from genret.corpus.synth import OracleTeacher, generate_synthetic_corpus, load_teacher, save_teacher

__all__ = [
    "Corpus",
    "Document",
    "Query",
    "tokenize",
    "load_corpus",
    "write_corpus",
    "load_queries",
    "write_queries",
    "load_qrels",
    "write_qrels",
    "load_pseudo_queries",
    "write_pseudo_queries",
    "BM25Index",
    "generate_pseudo_queries",
    "OracleTeacher",
    "generate_synthetic_corpus",
    "save_teacher",
    "load_teacher",
]
