"""Word-embedding tables: loading, saving, alignment, and queries.

The text format is the common one: an optional first line "count dim", then
one line per word — the word token (any non-whitespace bytes, terminated by
the first whitespace) followed by ``dim`` decimal floats.  Duplicate words
keep their first occurrence; the number dropped is reported on the table.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AlignmentError,
    DataError,
    ParseError,
    ShapeError,
    VocabularyError,
)
from .models import map_in_batches
from .tensor_math import row_l2_normalize


@dataclass
class EmbeddingTable:
    """An ordered vocabulary with one fixed-width vector per word."""

    words: list
    vectors: np.ndarray
    normalized: bool = False
    dropped_duplicates: int = 0
    _index: dict = field(init=False, repr=False)

    def __post_init__(self):
        self.vectors = np.asarray(self.vectors, dtype=np.float64)
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.words):
            raise ShapeError(
                f"{len(self.words)} words but vector block of shape {self.vectors.shape}"
            )
        self._index = {w: i for i, w in enumerate(self.words)}
        if len(self._index) != len(self.words):
            raise DataError("vocabulary contains duplicate words")
        if not np.isfinite(self.vectors).all():
            raise DataError("vectors contain non-finite values")

    @property
    def dim(self):
        return self.vectors.shape[1]

    def __len__(self):
        return len(self.words)

    def __contains__(self, word):
        return word in self._index

    def vector(self, word):
        try:
            return self.vectors[self._index[word]]
        except KeyError:
            raise VocabularyError(f"word {word!r} not in table") from None

    def subset(self, words):
        """New table restricted to the given words, in the given order."""
        rows = [self._index[w] for w in words if w in self._index]
        kept = [self.words[i] for i in rows]
        return EmbeddingTable(kept, self.vectors[rows].copy(), normalized=self.normalized)


def load_table(path, expected_dim=None):
    """Parse an embedding text file into a table."""
    words, rows = [], []
    seen = {}
    dropped = 0
    dim = expected_dim
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()

    start = 0
    if lines:
        head = lines[0].split()
        if len(head) == 2:
            try:
                declared_count, declared_dim = int(head[0]), int(head[1])
            except ValueError:
                pass
            else:
                start = 1
                if dim is None:
                    dim = declared_dim
                elif dim != declared_dim:
                    raise ParseError(
                        f"header declares dim {declared_dim}, expected {dim}",
                        line_number=1,
                    )
                del declared_count  # advisory only; dedup may change the real count

    for lineno, line in enumerate(lines[start:], start=start + 1):
        if not line.strip():
            continue
        parts = line.split()
        word, values = parts[0], parts[1:]
        if dim is None:
            dim = len(values)
        if len(values) != dim:
            raise ParseError(
                f"line has {len(values)} values, expected {dim}", line_number=lineno
            )
        if dim == 0:
            raise ParseError("line has no vector values", line_number=lineno)
        try:
            vec = np.array([float(v) for v in values], dtype=np.float64)
        except ValueError as exc:
            raise ParseError(f"bad float: {exc}", line_number=lineno) from None
        if not np.isfinite(vec).all():
            raise ParseError("non-finite vector value", line_number=lineno)
        if word in seen:
            dropped += 1
            continue
        seen[word] = True
        words.append(word)
        rows.append(vec)

    if not words:
        raise DataError(f"no embedding rows found in {path}")
    table = EmbeddingTable(words, np.vstack(rows))
    table.dropped_duplicates = dropped
    return table


def save_table(table, path, header=True):
    """Write the text format back out at full float64 precision (17 digits)."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(f"{len(table)} {table.dim}\n")
        for word, row in zip(table.words, table.vectors):
            fh.write(word + " " + " ".join(f"{v:.17g}" for v in row) + "\n")


def preprocess(table):
    """Row-L2-normalized copy of the table; no other transformation."""
    vectors = row_l2_normalize(table.vectors, words=table.words)
    out = EmbeddingTable(list(table.words), vectors, normalized=True)
    out.dropped_duplicates = table.dropped_duplicates
    return out


@dataclass
class PairedCorpus:
    """Row-aligned vectors for the words two tables share."""

    words: list
    x_vectors: np.ndarray
    y_vectors: np.ndarray
    dropped_x: int = 0
    dropped_y: int = 0

    def __len__(self):
        return len(self.words)

    def subset(self, words):
        index = {w: i for i, w in enumerate(self.words)}
        rows = [index[w] for w in words if w in index]
        kept = [self.words[i] for i in rows]
        return PairedCorpus(kept, self.x_vectors[rows].copy(), self.y_vectors[rows].copy())


def align_pairs(x_table, y_table):
    """Pair up the two tables on their shared vocabulary (sorted order)."""
    if x_table.dim != y_table.dim:
        raise ShapeError(f"tables differ in dim: {x_table.dim} vs {y_table.dim}")
    shared = sorted(set(x_table.words) & set(y_table.words))
    if not shared:
        raise AlignmentError("tables share no vocabulary")
    x = np.vstack([x_table.vector(w) for w in shared])
    y = np.vstack([y_table.vector(w) for w in shared])
    return PairedCorpus(
        words=shared,
        x_vectors=x,
        y_vectors=y,
        dropped_x=len(x_table) - len(shared),
        dropped_y=len(y_table) - len(shared),
    )


def post_specialize(table, model, batch_size=512):
    """Map every vector through the X->Y generator; vocabulary order preserved."""
    if table.dim != model.arch.dim:
        raise ShapeError(f"table dim {table.dim} != model dim {model.arch.dim}")
    mapped = map_in_batches(model.gen_xy, table.vectors, batch_size=batch_size)
    return EmbeddingTable(list(table.words), mapped, normalized=False)


def nearest_neighbors(table, query_word, k=10):
    """Top-k vocabulary words by cosine similarity to the query, descending.

    The query word itself is eligible (and lands first at cosine 1 for a
    normalized table); ties break by vocabulary order.
    """
    if k < 1 or k > len(table):
        raise VocabularyError(f"k must lie in [1, {len(table)}], got {k}")
    q = table.vector(query_word)
    qn = np.sqrt(q @ q)
    norms = np.sqrt((table.vectors * table.vectors).sum(axis=1))
    if qn < 1e-12 or (norms < 1e-12).any():
        raise DataError("cosine undefined for zero vectors in table")
    sims = (table.vectors @ q) / (norms * qn)
    order = np.argsort(-sims, kind="stable")[:k]
    return [(table.words[i], float(sims[i])) for i in order]
