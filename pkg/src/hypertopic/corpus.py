"""Bag-of-words corpus ingestion, validation, and mini-batch serving.

File formats:
  vocab file  - UTF-8 text, one token per line; index = 0-based line number.
  docs file   - UTF-8 text, one document per line:
                ``<label>\\t<idx>:<count> <idx>:<count> ...``
                with label ``-1`` when absent.
  split file  - optional; one of ``train``/``test`` per line, aligned with
                the docs file.

Documents are stored sparse; dense matrices are materialized per batch only.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataValidationError

__all__ = [
    "Vocabulary",
    "BowDocument",
    "BowCorpus",
    "load_corpus",
    "save_corpus",
    "batches",
    "corpus_stats",
]


class Vocabulary:
    """Ordered list of unique tokens with a token-to-index map."""

    def __init__(self, tokens):
        tokens = list(tokens)
        self._tokens = tokens
        self._index = {}
        for i, tok in enumerate(tokens):
            if not tok:
                raise DataValidationError(f"empty token at vocabulary index {i}")
            if tok in self._index:
                raise DataValidationError(f"duplicate token {tok!r} at index {i}")
            self._index[tok] = i

    def __len__(self) -> int:
        return len(self._tokens)

    def __getitem__(self, index: int) -> str:
        return self._tokens[index]

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def index_of(self, token: str) -> int:
        return self._index[token]

    def tokens(self) -> list[str]:
        return list(self._tokens)


@dataclass(frozen=True)
class BowDocument:
    """Sparse word-count vector: strictly increasing indices, positive counts."""

    term_indices: np.ndarray
    term_counts: np.ndarray
    label: int = -1

    def __post_init__(self):
        idx = np.asarray(self.term_indices, dtype=np.int64)
        cnt = np.asarray(self.term_counts, dtype=np.int64)
        if idx.shape != cnt.shape or idx.ndim != 1:
            raise DataValidationError("term indices/counts must be aligned 1-d arrays")
        if idx.size and np.any(np.diff(idx) <= 0):
            raise DataValidationError("term indices must be strictly increasing")
        if np.any(cnt <= 0):
            raise DataValidationError("term counts must be positive")
        object.__setattr__(self, "term_indices", idx)
        object.__setattr__(self, "term_counts", cnt)

    @property
    def total_count(self) -> int:
        return int(self.term_counts.sum())

    def dense(self, vocab_size: int) -> np.ndarray:
        out = np.zeros(vocab_size, dtype=np.float64)
        out[self.term_indices] = self.term_counts
        return out


@dataclass
class BowCorpus:
    """Immutable-after-load collection of documents plus vocabulary and splits."""

    vocabulary: Vocabulary
    documents: list[BowDocument]
    splits: list[str]
    label_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        v = len(self.vocabulary)
        if len(self.splits) != len(self.documents):
            raise DataValidationError("split tags must align with documents")
        for i, (doc, split) in enumerate(zip(self.documents, self.splits)):
            if split not in ("train", "test"):
                raise DataValidationError(f"document {i}: bad split tag {split!r}")
            if doc.term_indices.size and int(doc.term_indices[-1]) >= v:
                raise DataValidationError(
                    f"document {i}: term index {int(doc.term_indices[-1])} out of range for vocab size {v}"
                )
            if self.label_names and doc.label >= len(self.label_names):
                raise DataValidationError(f"document {i}: label id {doc.label} out of range")
        if not any(s == "train" for s in self.splits):
            raise DataValidationError("corpus must contain at least one train document")

    def train_indices(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.splits) if s == "train"], dtype=np.int64)

    def test_indices(self) -> np.ndarray:
        return np.array([i for i, s in enumerate(self.splits) if s == "test"], dtype=np.int64)

    def labels(self) -> np.ndarray:
        return np.array([d.label for d in self.documents], dtype=np.int64)

    def has_labels(self) -> bool:
        return any(d.label >= 0 for d in self.documents)

    def dense_matrix(self, doc_indices) -> np.ndarray:
        """Materialize the requested documents as a dense count matrix."""
        doc_indices = np.asarray(doc_indices, dtype=np.int64)
        out = np.zeros((doc_indices.size, len(self.vocabulary)), dtype=np.float64)
        for row, i in enumerate(doc_indices):
            doc = self.documents[i]
            out[row, doc.term_indices] = doc.term_counts
        return out


def _parse_doc_line(line: str, lineno: int) -> BowDocument:
    label_text, _, body = line.rstrip("\n").partition("\t")
    try:
        label = int(label_text)
    except ValueError:
        raise DataValidationError(f"docs line {lineno}: bad label {label_text!r}") from None
    indices: list[int] = []
    counts: list[int] = []
    for piece in body.split():
        try:
            idx_text, cnt_text = piece.split(":")
            indices.append(int(idx_text))
            counts.append(int(cnt_text))
        except ValueError:
            raise DataValidationError(f"docs line {lineno}: bad term entry {piece!r}") from None
    try:
        return BowDocument(np.array(indices, dtype=np.int64), np.array(counts, dtype=np.int64), label)
    except DataValidationError as exc:
        raise DataValidationError(f"docs line {lineno}: {exc}") from None


def load_corpus(
    vocab_path,
    docs_path,
    split_path=None,
    label_names: list[str] | None = None,
) -> BowCorpus:
    """Load a corpus from the text formats documented in the module docstring.

    Without a split file every document is tagged ``train``.
    """
    with open(vocab_path, encoding="utf-8") as fh:
        tokens = [line.rstrip("\n") for line in fh]
    vocabulary = Vocabulary(tokens)

    documents: list[BowDocument] = []
    with open(docs_path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            documents.append(_parse_doc_line(line, lineno))

    if split_path is None:
        splits = ["train"] * len(documents)
    else:
        with open(split_path, encoding="utf-8") as fh:
            splits = [line.strip() for line in fh]
        if len(splits) != len(documents):
            raise DataValidationError(
                f"split file has {len(splits)} lines for {len(documents)} documents"
            )
    return BowCorpus(vocabulary, documents, splits, label_names or [])


def save_corpus(corpus: BowCorpus, vocab_path, docs_path, split_path=None) -> None:
    """Write a corpus back out; load(save(c)) reproduces c exactly."""
    with open(vocab_path, "w", encoding="utf-8") as fh:
        for tok in corpus.vocabulary.tokens():
            fh.write(tok + "\n")
    with open(docs_path, "w", encoding="utf-8") as fh:
        for doc in corpus.documents:
            body = " ".join(
                f"{int(i)}:{int(c)}" for i, c in zip(doc.term_indices, doc.term_counts)
            )
            fh.write(f"{doc.label}\t{body}\n")
    if split_path is not None:
        with open(split_path, "w", encoding="utf-8") as fh:
            for s in corpus.splits:
                fh.write(s + "\n")


def batches(corpus: BowCorpus, batch_size: int = 200, seed: int = 0, epochs: int = 1):
    """Yield train-document index arrays, one seeded permutation per epoch.

    The final short batch is emitted; each epoch covers the train set exactly
    once.  The default batch size of 200 matches the trainer's.
    """
    if batch_size < 1:
        raise DataValidationError(f"batch_size must be >= 1, got {batch_size}")
    train = corpus.train_indices()
    rng = np.random.default_rng(seed)
    for _ in range(epochs):
        order = train[rng.permutation(train.size)]
        for start in range(0, order.size, batch_size):
            yield order[start : start + batch_size]


def corpus_stats(corpus: BowCorpus) -> dict:
    """Document/vocabulary/word/label counts plus split sizes."""
    labels = {d.label for d in corpus.documents if d.label >= 0}
    return {
        "documents": len(corpus.documents),
        "vocab_size": len(corpus.vocabulary),
        "total_words": int(sum(d.total_count for d in corpus.documents)),
        "labels": len(labels),
        "train_documents": int(corpus.train_indices().size),
        "test_documents": int(corpus.test_indices().size),
        "empty_documents": int(sum(1 for d in corpus.documents if d.term_indices.size == 0)),
    }
